/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "config.hpp"
#include "deanonymizer.hpp"
#include "error.hpp"
#include "gossip_sim.hpp"
#include "observation.hpp"
#include "protocol.hpp"
#include "records.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "verifier.hpp"
