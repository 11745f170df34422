/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "protocol.hpp"

namespace attnet {

  struct NodeId {
    uint32_t value = 0;
    auto operator<=>(const NodeId &) const = default;
  };

  /// Synthetic "address:port" endpoint; a peer is identified by this pair.
  inline std::string endpoint_of(NodeId id) {
    const uint32_t v = id.value;
    return "10." + std::to_string((v >> 16) & 0xff) + "." + std::to_string((v >> 8) & 0xff) + "."
         + std::to_string(v & 0xff) + ":" + std::to_string(9000 + (v >> 24));
  }

  /// Heuristic and observer-side parameters of the analysis stage.
  struct AnalysisParams {
    double c1_slack = 0.9;
    double c3_divisor = 10.0;
    double c4_sigma = 2.0;
    uint32_t c4_min_population = 10;
    // slots between a subscription change and the observer knowing about it
    uint32_t knowledge_delay_slots = 1;
    uint32_t ticks_per_slot = 12;

    uint64_t ticks_per_epoch() const {
      return uint64_t{ticks_per_slot} * kSlotsPerEpoch;
    }
  };

  /// Settings of the consistency battery that are not label data.
  struct VerifyParams {
    std::set<std::string> i1_exception_classes{"ens", "rocketpool"};
    // entity names in one group count as the same label
    std::vector<std::set<std::string>> operator_allow_list;
    uint32_t service_provider_min_size = 20;
  };

  struct LabelSpec {
    double coverage = 1.0;
    double noise = 0.0;
    double deposit_coverage = 0.0;
    double fee_coverage = 0.0;
    // place default-hosted validators at random ids instead of consecutive blocks
    bool shuffle = false;
  };

  struct NodeOverride {
    NodeId node;
    std::optional<uint32_t> hosted;
    std::optional<std::vector<ValidatorId>> validators;
    std::optional<uint32_t> static_subnet_count;
    std::optional<bool> subscribes_all;
    std::vector<NodeId> relay_clients;
    // [start, end) in epochs; empty means online for the whole run
    std::vector<std::pair<double, double>> online;
    std::optional<std::string> entity;
    std::optional<std::string> entity_class;

    bool sets_hosting() const {
      return hosted.has_value() || validators.has_value();
    }
  };

  struct ScenarioConfig {
    uint32_t node_count = 0;
    uint32_t validator_count = 0;
    uint32_t epochs = 0;
    uint64_t seed = 0;

    uint32_t observers = 1;
    uint32_t observer_peer_cap = 1000;
    // nodes every observer connects to regardless of the cap
    std::vector<NodeId> observer_pinned_peers;
    uint32_t mesh_degree = 8;
    std::optional<uint32_t> fanout_size;
    uint32_t ticks_per_slot = 12;
    uint32_t committees_per_slot = kMaxCommitteesPerSlot;
    double aggregator_target = kTargetAggregatorsPerCommittee;

    uint32_t default_static_subnets = 2;
    double subscribes_all_fraction = 0.0;
    double hosting_fraction = 0.5;
    // ratio between the largest and smallest default hosting weight
    double hosting_spread = 50.0;
    bool dynamic_subscriptions = true;

    double edge_drop = 0.0;
    double observer_in_fanout = 0.9;
    double origin_first = 1.0;

    AnalysisParams analysis;
    LabelSpec labels;
    VerifyParams verify;
    std::vector<NodeOverride> nodes;

    uint32_t effective_fanout() const {
      return fanout_size.value_or(mesh_degree);
    }
    uint64_t ticks_per_epoch() const {
      return uint64_t{ticks_per_slot} * kSlotsPerEpoch;
    }
  };

}  // namespace attnet
