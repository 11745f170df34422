/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>

#include "config.hpp"
#include "protocol.hpp"

namespace attnet {

  /// One attestation copy as seen by an observer. The origin node is not
  /// part of the record.
  struct ReceiptRecord {
    uint64_t tick = 0;
    NodeId sender;
    ValidatorId validator;
    SlotRef slot;
    SubnetId subnet;

    bool operator==(const ReceiptRecord &) const = default;
  };

  enum class SubscriptionKind { kStatic, kDynamic };

  struct SubscriptionEvent {
    NodeId node;
    SubnetId subnet;
    uint64_t start_tick = 0;
    uint64_t end_tick = 0;
    SubscriptionKind kind = SubscriptionKind::kStatic;

    bool operator==(const SubscriptionEvent &) const = default;
  };

  struct ConnectionEvent {
    NodeId peer;
    uint64_t start_tick = 0;
    uint64_t end_tick = 0;

    bool operator==(const ConnectionEvent &) const = default;
  };

}  // namespace attnet
