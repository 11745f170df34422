/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "config.hpp"
#include "error.hpp"
#include "protocol.hpp"
#include "records.hpp"
#include "rng.hpp"

namespace attnet {

  using SubnetMask = uint64_t;

  inline bool mask_has(SubnetMask mask, SubnetId s) {
    return (mask >> s.value) & 1U;
  }

  inline uint32_t mask_count(SubnetMask mask) {
    return static_cast<uint32_t>(__builtin_popcountll(mask));
  }

  /// Per-node settings after defaults and overrides have been resolved.
  struct NodeConfig {
    std::vector<ValidatorId> hosted_validators;
    uint32_t static_subnet_count = 2;
    bool subscribes_all = false;
    std::vector<NodeId> relay_clients;
    // [start_tick, end_tick), sorted and disjoint
    std::vector<std::pair<uint64_t, uint64_t>> online;
    std::string entity;
    std::string entity_class = "pool";
  };

  /// Uniform seeded choice of static subnets; all 64 when subscribes_all.
  inline std::vector<SubnetId> assign_static_subscriptions(const NodeConfig &node, uint64_t seed) {
    if (node.subscribes_all) {
      std::vector<SubnetId> all(kSubnetCount);
      for (uint32_t s = 0; s < kSubnetCount; ++s) {
        all[s] = SubnetId{s};
      }
      return all;
    }
    if (node.static_subnet_count > kSubnetCount) {
      throw Error("too-many-subnets", std::to_string(node.static_subnet_count));
    }
    std::array<uint32_t, kSubnetCount> pool{};
    for (uint32_t s = 0; s < kSubnetCount; ++s) {
      pool[s] = s;
    }
    Rng rng(seed, Stream::kStaticSubnets);
    std::vector<SubnetId> chosen;
    for (uint32_t i = 0; i < node.static_subnet_count; ++i) {
      const auto j = i + rng.below(kSubnetCount - i);
      std::swap(pool[i], pool[j]);
      chosen.push_back(SubnetId{pool[i]});
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  /// One dynamic subscription per aggregation duty of the given validators,
  /// open from one slot before the duty slot until one slot after it.
  inline std::vector<SubscriptionEvent> schedule_dynamic_subscriptions(
      NodeId node, std::span<const ValidatorId> validators, const DutySchedule &schedule,
      uint32_t ticks_per_slot) {
    std::vector<SubscriptionEvent> events;
    for (auto v : validators) {
      if (!schedule.is_aggregator(v)) {
        continue;
      }
      const auto &duty = schedule.attestation_duty.at(v);
      const uint64_t abs = duty.slot.absolute();
      const uint64_t first = abs == 0 ? 0 : abs - 1;
      events.push_back(SubscriptionEvent{node, duty.subnet, first * ticks_per_slot,
                                         (abs + 2) * ticks_per_slot,
                                         SubscriptionKind::kDynamic});
    }
    std::sort(events.begin(), events.end(), [](const auto &a, const auto &b) {
      return std::tie(a.start_tick, a.subnet, a.end_tick) < std::tie(b.start_tick, b.subnet, b.end_tick);
    });
    return events;
  }

  /// Closed-form message-count estimate of subnet-partitioned gossip.
  inline double estimate_message_complexity(double nodes, double validators, double mesh_peers,
                                            double avg_subscribed_subnets) {
    return nodes * validators * mesh_peers * (avg_subscribed_subnets / kSubnetCount);
  }

  inline double estimate_message_complexity(const ScenarioConfig &config) {
    double total_subnets = 0.0;
    uint32_t overridden = 0;
    for (const auto &o : config.nodes) {
      if (!o.static_subnet_count && !o.subscribes_all) {
        continue;
      }
      ++overridden;
      total_subnets += o.subscribes_all.value_or(false)
                         ? kSubnetCount
                         : o.static_subnet_count.value_or(config.default_static_subnets);
    }
    const double rest = config.node_count - overridden;
    total_subnets += rest
                   * ((1.0 - config.subscribes_all_fraction) * config.default_static_subnets
                      + config.subscribes_all_fraction * kSubnetCount);
    const double avg = config.node_count == 0 ? 0.0 : total_subnets / config.node_count;
    return estimate_message_complexity(config.node_count, config.validator_count,
                                       config.mesh_degree, avg);
  }

  struct ObserverNode {
    NodeId id;
    std::vector<uint32_t> peers;     // sorted node indices
    std::vector<uint8_t> connected;  // indexed by node
  };

  /// Built topology: nodes, per-subnet static meshes, observers and who
  /// publishes each validator's attestations.
  struct Network {
    ScenarioConfig config;
    std::vector<NodeConfig> nodes;
    std::vector<SubnetMask> static_subnets;
    // mesh[subnet][node] -> sorted neighbour indices
    std::array<std::vector<std::vector<uint32_t>>, kSubnetCount> mesh;
    std::array<std::vector<uint32_t>, kSubnetCount> members;
    std::vector<ObserverNode> observers;
    // publishers[validator] -> nodes that publish its attestations
    std::vector<std::vector<uint32_t>> publishers;
    uint64_t end_tick = 0;

    uint32_t node_count() const {
      return static_cast<uint32_t>(nodes.size());
    }

    bool online_at(uint32_t node, uint64_t tick) const {
      for (const auto &[a, b] : nodes[node].online) {
        if (tick >= a && tick < b) {
          return true;
        }
      }
      return false;
    }

    std::vector<ValidatorId> published_by(uint32_t node) const {
      std::vector<ValidatorId> out;
      for (uint32_t v = 0; v < publishers.size(); ++v) {
        if (std::find(publishers[v].begin(), publishers[v].end(), node) != publishers[v].end()) {
          out.push_back(ValidatorId{v});
        }
      }
      return out;
    }

    /// Ground truth: node -> validators whose attestations it originates.
    std::map<NodeId, std::vector<ValidatorId>> ground_truth() const {
      std::map<NodeId, std::vector<ValidatorId>> truth;
      for (uint32_t v = 0; v < publishers.size(); ++v) {
        for (auto n : publishers[v]) {
          truth[NodeId{n}].push_back(ValidatorId{v});
        }
      }
      return truth;
    }
  };

  /// Returns one message per problem; empty when the config is usable.
  inline std::vector<std::string> validate_config(const ScenarioConfig &c) {
    std::vector<std::string> problems;
    auto prob = [&](double p, const char *name) {
      if (!(p >= 0.0 && p <= 1.0)) {
        problems.push_back(std::string(name) + " must be in [0,1]");
      }
    };
    if (c.node_count < 2) {
      problems.push_back("node_count must be >= 2");
    }
    if (c.validator_count < 1) {
      problems.push_back("validator_count must be >= 1");
    }
    if (c.epochs < 1) {
      problems.push_back("epochs must be >= 1");
    }
    if (c.mesh_degree < 1) {
      problems.push_back("mesh_degree must be >= 1");
    }
    if (c.observers < 1) {
      problems.push_back("observers must be >= 1");
    }
    if (c.ticks_per_slot < 1) {
      problems.push_back("ticks_per_slot must be >= 1");
    }
    if (c.committees_per_slot < 1 || c.committees_per_slot > kMaxCommitteesPerSlot) {
      problems.push_back("committees_per_slot must be in [1,64]");
    }
    if (c.default_static_subnets > kSubnetCount) {
      problems.push_back("default_static_subnets must be <= 64");
    }
    if (!(c.hosting_spread >= 1.0)) {
      problems.push_back("hosting_spread must be >= 1");
    }
    prob(c.subscribes_all_fraction, "subscribes_all_fraction");
    prob(c.hosting_fraction, "hosting_fraction");
    prob(c.edge_drop, "edge_drop");
    prob(c.observer_in_fanout, "observer_in_fanout");
    prob(c.origin_first, "origin_first");
    prob(c.labels.coverage, "labels.coverage");
    prob(c.labels.noise, "labels.noise");
    prob(c.labels.deposit_coverage, "labels.deposit_coverage");
    prob(c.labels.fee_coverage, "labels.fee_coverage");
    if (!(c.analysis.c1_slack >= 0.0)) {
      problems.push_back("c1_slack must be >= 0");
    }
    if (!(c.analysis.c3_divisor > 0.0)) {
      problems.push_back("c3_divisor must be > 0");
    }
    if (!(c.analysis.c4_sigma >= 0.0)) {
      problems.push_back("c4_sigma must be >= 0");
    }
    for (auto p : c.observer_pinned_peers) {
      if (p.value >= c.node_count) {
        problems.push_back("observer_pinned_peers: node " + std::to_string(p.value) + " out of range");
      }
    }
    std::vector<uint8_t> seen_node(c.node_count, 0);
    std::vector<uint8_t> seen_validator(c.validator_count, 0);
    for (const auto &o : c.nodes) {
      const std::string where = "nodes[" + std::to_string(o.node.value) + "]";
      if (o.node.value >= c.node_count) {
        problems.push_back(where + ": node id out of range");
        continue;
      }
      if (seen_node[o.node.value]++) {
        problems.push_back(where + ": duplicate override");
      }
      if (o.hosted && o.validators) {
        problems.push_back(where + ": set either hosted or validators, not both");
      }
      if (o.static_subnet_count && *o.static_subnet_count > kSubnetCount) {
        problems.push_back(where + ": static_subnet_count must be <= 64");
      }
      if (o.validators) {
        for (auto v : *o.validators) {
          if (v.value >= c.validator_count) {
            problems.push_back(where + ": validator " + std::to_string(v.value) + " out of range");
          } else if (seen_validator[v.value]++) {
            problems.push_back(where + ": validator " + std::to_string(v.value) + " assigned twice");
          }
        }
      }
      for (auto r : o.relay_clients) {
        if (r.value >= c.node_count || r == o.node) {
          problems.push_back(where + ": invalid relay client " + std::to_string(r.value));
        }
      }
      for (const auto &[a, b] : o.online) {
        if (!(a >= 0.0 && b > a)) {
          problems.push_back(where + ": online interval must satisfy 0 <= start < end");
        }
      }
    }
    return problems;
  }

  namespace detail {

    inline std::vector<std::pair<uint64_t, uint64_t>> online_ticks(
        const NodeOverride *o, const ScenarioConfig &c, uint64_t end_tick) {
      std::vector<std::pair<uint64_t, uint64_t>> out;
      if (o == nullptr || o->online.empty()) {
        out.emplace_back(0, end_tick);
        return out;
      }
      const double tpe = static_cast<double>(c.ticks_per_epoch());
      for (const auto &[a, b] : o->online) {
        const auto s = std::min<uint64_t>(static_cast<uint64_t>(std::llround(a * tpe)), end_tick);
        const auto e = std::min<uint64_t>(static_cast<uint64_t>(std::llround(b * tpe)), end_tick);
        if (s < e) {
          out.emplace_back(s, e);
        }
      }
      std::sort(out.begin(), out.end());
      std::vector<std::pair<uint64_t, uint64_t>> merged;
      for (const auto &iv : out) {
        if (!merged.empty() && iv.first <= merged.back().second) {
          merged.back().second = std::max(merged.back().second, iv.second);
        } else {
          merged.push_back(iv);
        }
      }
      return merged;
    }

    // Connected graph over `members` with degree <= degree, or false.
    inline bool build_subnet_mesh(std::vector<uint32_t> members, uint32_t degree, Rng &rng,
                                  std::vector<std::vector<uint32_t>> &adj) {
      const size_t m = members.size();
      if (m <= 1) {
        return true;
      }
      auto link = [&](uint32_t a, uint32_t b) {
        adj[a].push_back(b);
        adj[b].push_back(a);
      };
      if (m <= size_t{degree} + 1) {
        for (size_t i = 0; i < m; ++i) {
          for (size_t j = i + 1; j < m; ++j) {
            link(members[i], members[j]);
          }
        }
        return true;
      }
      if (degree < 2) {
        return false;
      }
      rng.shuffle(std::span<uint32_t>(members));
      for (size_t i = 0; i < m; ++i) {
        link(members[i], members[(i + 1) % m]);
      }
      auto adjacent = [&](uint32_t a, uint32_t b) {
        return std::find(adj[a].begin(), adj[a].end(), b) != adj[a].end();
      };
      for (size_t i = 0; i < m; ++i) {
        const uint32_t a = members[i];
        for (int attempt = 0; attempt < 4 * static_cast<int>(degree) && adj[a].size() < degree;
             ++attempt) {
          const uint32_t b = members[rng.below(m)];
          if (b != a && adj[b].size() < degree && !adjacent(a, b)) {
            link(a, b);
          }
        }
      }
      return true;
    }

    // Splits `pool` (ascending) into consecutive blocks, one per host, with
    // log-uniform weights; every host gets at least one validator while
    // validators last.
    inline std::vector<std::vector<ValidatorId>> split_blocks(const std::vector<ValidatorId> &pool,
                                                              size_t hosts, double spread, Rng &rng) {
      std::vector<std::vector<ValidatorId>> blocks(hosts);
      if (hosts == 0 || pool.empty()) {
        return blocks;
      }
      std::vector<double> weights(hosts);
      double total = 0.0;
      for (auto &w : weights) {
        w = std::exp(rng.unit() * std::log(spread));
        total += w;
      }
      const size_t base = pool.size() >= hosts ? 1 : 0;
      const size_t flexible = pool.size() - base * hosts;
      size_t cursor = 0;
      double cumulative = 0.0;
      size_t assigned_flex = 0;
      for (size_t h = 0; h < hosts; ++h) {
        cumulative += weights[h];
        const size_t target =
            h + 1 == hosts ? flexible
                           : static_cast<size_t>(std::floor(flexible * cumulative / total));
        const size_t take = base + (target - assigned_flex);
        assigned_flex = target;
        const size_t end = std::min(pool.size(), cursor + take);
        blocks[h].assign(pool.begin() + static_cast<std::ptrdiff_t>(cursor),
                         pool.begin() + static_cast<std::ptrdiff_t>(end));
        cursor = end;
      }
      return blocks;
    }

  }  // namespace detail

  /// Resolves node settings, validator placement, static meshes and observer
  /// peer sets for a scenario.
  inline Network build_topology(const ScenarioConfig &config, uint64_t seed) {
    if (auto problems = validate_config(config); !problems.empty()) {
      std::string joined;
      for (const auto &p : problems) {
        joined += (joined.empty() ? "" : "; ") + p;
      }
      throw Error("invalid-config", joined);
    }
    Network net;
    net.config = config;
    const uint32_t n = config.node_count;
    net.end_tick = uint64_t{config.epochs} * config.ticks_per_epoch();
    net.nodes.resize(n);
    net.static_subnets.assign(n, 0);

    std::vector<const NodeOverride *> overrides(n, nullptr);
    for (const auto &o : config.nodes) {
      overrides[o.node.value] = &o;
    }

    for (uint32_t i = 0; i < n; ++i) {
      auto &node = net.nodes[i];
      const NodeOverride *o = overrides[i];
      node.static_subnet_count = config.default_static_subnets;
      Rng all_rng(seed, Stream::kStaticSubnets, {i, 1});
      node.subscribes_all = all_rng.chance(config.subscribes_all_fraction);
      node.entity = "entity-" + std::to_string(i);
      if (o != nullptr) {
        node.static_subnet_count = o->static_subnet_count.value_or(node.static_subnet_count);
        node.subscribes_all = o->subscribes_all.value_or(node.subscribes_all);
        node.relay_clients = o->relay_clients;
        node.entity = o->entity.value_or(node.entity);
        node.entity_class = o->entity_class.value_or(node.entity_class);
      }
      node.online = detail::online_ticks(o, config, net.end_tick);
      for (auto s : assign_static_subscriptions(node, derive_seed(seed, {i}))) {
        net.static_subnets[i] |= SubnetMask{1} << s.value;
      }
    }

    // validator placement: explicit lists, then counted blocks, then the
    // default hosts share what is left
    std::vector<uint8_t> taken(config.validator_count, 0);
    for (const auto &o : config.nodes) {
      if (o.validators) {
        auto &hosted = net.nodes[o.node.value].hosted_validators;
        hosted = *o.validators;
        std::sort(hosted.begin(), hosted.end());
        for (auto v : hosted) {
          taken[v.value] = 1;
        }
      }
    }
    std::vector<ValidatorId> pool;
    for (uint32_t v = 0; v < config.validator_count; ++v) {
      if (!taken[v]) {
        pool.push_back(ValidatorId{v});
      }
    }
    size_t cursor = 0;
    for (const auto &o : config.nodes) {
      if (o.hosted) {
        const size_t end = std::min(pool.size(), cursor + *o.hosted);
        net.nodes[o.node.value].hosted_validators.assign(
            pool.begin() + static_cast<std::ptrdiff_t>(cursor),
            pool.begin() + static_cast<std::ptrdiff_t>(end));
        cursor = end;
      }
    }
    pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cursor));
    if (config.labels.shuffle) {
      Rng shuffle_rng(seed, Stream::kHosting, {1});
      shuffle_rng.shuffle(std::span<ValidatorId>(pool));
    }
    std::vector<uint32_t> eligible;
    for (uint32_t i = 0; i < n; ++i) {
      if (overrides[i] == nullptr || !overrides[i]->sets_hosting()) {
        eligible.push_back(i);
      }
    }
    Rng host_rng(seed, Stream::kHosting);
    host_rng.shuffle(std::span<uint32_t>(eligible));
    const auto host_count = static_cast<size_t>(std::llround(config.hosting_fraction * eligible.size()));
    eligible.resize(std::min(eligible.size(), host_count));
    std::sort(eligible.begin(), eligible.end());
    const auto blocks = detail::split_blocks(pool, eligible.size(), config.hosting_spread, host_rng);
    for (size_t h = 0; h < eligible.size(); ++h) {
      net.nodes[eligible[h]].hosted_validators = blocks[h];
    }

    net.publishers.assign(config.validator_count, {});
    for (uint32_t i = 0; i < n; ++i) {
      const auto &node = net.nodes[i];
      for (auto v : node.hosted_validators) {
        if (node.relay_clients.empty()) {
          net.publishers[v.value].push_back(i);
        } else {
          for (auto r : node.relay_clients) {
            net.publishers[v.value].push_back(r.value);
          }
        }
      }
    }
    for (auto &p : net.publishers) {
      std::sort(p.begin(), p.end());
      p.erase(std::unique(p.begin(), p.end()), p.end());
    }

    for (uint32_t s = 0; s < kSubnetCount; ++s) {
      auto &adj = net.mesh[s];
      adj.assign(n, {});
      for (uint32_t i = 0; i < n; ++i) {
        if (mask_has(net.static_subnets[i], SubnetId{s})) {
          net.members[s].push_back(i);
        }
      }
      Rng mesh_rng(seed, Stream::kMesh, {s});
      if (!detail::build_subnet_mesh(net.members[s], config.mesh_degree, mesh_rng, adj)) {
        throw Error("topology-infeasible", "subnet " + std::to_string(s) + " cannot be connected with mesh_degree "
                                               + std::to_string(config.mesh_degree));
      }
      for (auto &nbrs : adj) {
        std::sort(nbrs.begin(), nbrs.end());
      }
    }

    for (uint32_t k = 0; k < config.observers; ++k) {
      ObserverNode obs;
      obs.id = NodeId{n + k};
      std::vector<uint32_t> candidates(n);
      for (uint32_t i = 0; i < n; ++i) {
        candidates[i] = i;
      }
      if (n > config.observer_peer_cap) {
        Rng peer_rng(seed, Stream::kObserverPeers, {k});
        peer_rng.shuffle(std::span<uint32_t>(candidates));
        const auto pinned_end = std::stable_partition(candidates.begin(), candidates.end(), [&](uint32_t i) {
          return std::find(config.observer_pinned_peers.begin(), config.observer_pinned_peers.end(), NodeId{i})
              != config.observer_pinned_peers.end();
        });
        candidates.resize(std::max<size_t>(config.observer_peer_cap, pinned_end - candidates.begin()));
        std::sort(candidates.begin(), candidates.end());
      }
      obs.peers = candidates;
      obs.connected.assign(n, 0);
      for (auto p : obs.peers) {
        obs.connected[p] = 1;
      }
      net.observers.push_back(std::move(obs));
    }
    return net;
  }

  /// Everything one observer logged, plus the hidden origin of each receipt.
  struct ObserverLog {
    NodeId observer;
    std::vector<ReceiptRecord> receipts;
    std::vector<NodeId> receipt_origins;  // ground truth, parallel to receipts
    std::vector<SubscriptionEvent> subscriptions;
    std::vector<ConnectionEvent> connections;
  };

  struct ObservationLogs {
    std::vector<ObserverLog> observers;
    std::map<NodeId, std::vector<ValidatorId>> ground_truth;
  };

  namespace detail {

    struct Message {
      ValidatorId validator;
      SlotRef slot;
      SubnetId subnet;
      uint32_t origin = 0;
    };

    struct Event {
      uint64_t tick;
      uint64_t seq;
      uint32_t message;
      uint32_t from;
      uint32_t to;  // >= node count: observer index offset

      bool operator>(const Event &o) const {
        return std::tie(tick, seq) > std::tie(o.tick, o.seq);
      }
    };

    constexpr uint64_t kOriginLateTicks = 2;

  }  // namespace detail

  /// Tick-driven event loop over `epochs` epochs. Each hop costs one tick;
  /// every observer logs every copy it receives.
  inline ObservationLogs run_epochs(const Network &net, uint32_t epochs, uint64_t seed) {
    if (epochs < 1) {
      throw Error("invalid-epochs", "epochs must be >= 1");
    }
    const auto &cfg = net.config;
    const uint32_t n = net.node_count();
    const uint64_t tps = cfg.ticks_per_slot;
    const uint64_t end_tick = std::min<uint64_t>(net.end_tick, uint64_t{epochs} * cfg.ticks_per_epoch());
    const uint32_t fanout = cfg.effective_fanout();
    const ScheduleParams sched_params{cfg.committees_per_slot, cfg.aggregator_target};

    ObservationLogs logs;
    logs.observers.resize(net.observers.size());
    for (size_t k = 0; k < net.observers.size(); ++k) {
      logs.observers[k].observer = net.observers[k].id;
    }

    std::vector<ValidatorId> active;
    std::vector<std::vector<ValidatorId>> published(n);
    for (uint32_t v = 0; v < net.publishers.size(); ++v) {
      if (!net.publishers[v].empty()) {
        active.push_back(ValidatorId{v});
        for (auto p : net.publishers[v]) {
          published[p].push_back(ValidatorId{v});
        }
      }
    }

    // dynamic subscriptions, generated one epoch ahead so windows that open
    // in the previous epoch are known
    struct DynamicWindow {
      SubscriptionEvent event;
      std::vector<uint32_t> grafts;
    };
    std::vector<DynamicWindow> windows;
    std::vector<SubscriptionEvent> dynamic_log;
    std::vector<DutySchedule> schedules;
    auto make_schedule = [&](uint64_t epoch) {
      if (active.empty()) {
        return DutySchedule{epoch, {}, std::vector<std::vector<std::vector<ValidatorId>>>(kSlotsPerEpoch),
                            std::vector<std::vector<std::vector<ValidatorId>>>(kSlotsPerEpoch)};
      }
      return build_duty_schedule(active, epoch, seed, sched_params);
    };
    auto add_dynamic = [&](const DutySchedule &schedule) {
      if (!cfg.dynamic_subscriptions) {
        return;
      }
      for (uint32_t i = 0; i < n; ++i) {
        if (published[i].empty()) {
          continue;
        }
        for (auto &ev : schedule_dynamic_subscriptions(NodeId{i}, published[i], schedule,
                                                       cfg.ticks_per_slot)) {
          const uint64_t duty_tick = ev.end_tick - 2 * tps;
          if (duty_tick >= end_tick || !net.online_at(i, duty_tick)) {
            continue;
          }
          ev.end_tick = std::min(ev.end_tick, end_tick);
          dynamic_log.push_back(ev);
          DynamicWindow w{ev, {}};
          if (!mask_has(net.static_subnets[i], ev.subnet)) {
            std::vector<uint32_t> cands;
            for (auto m : net.members[ev.subnet.value]) {
              if (m != i) {
                cands.push_back(m);
              }
            }
            Rng graft_rng(seed, Stream::kDynamicGraft, {i, ev.subnet.value, ev.start_tick});
            graft_rng.shuffle(std::span<uint32_t>(cands));
            cands.resize(std::min<size_t>(cands.size(), cfg.mesh_degree));
            std::sort(cands.begin(), cands.end());
            w.grafts = std::move(cands);
          }
          windows.push_back(std::move(w));
        }
      }
    };

    std::vector<detail::Message> messages;
    std::vector<uint64_t> seen;  // n bits per message
    const size_t words = (n + 63) / 64;
    std::priority_queue<detail::Event, std::vector<detail::Event>, std::greater<>> queue;
    uint64_t seq = 0;
    Rng drop_rng(seed, Stream::kDrop);

    // per-slot dynamic membership
    std::unordered_map<uint64_t, std::vector<uint32_t>> extra_adj;
    std::vector<SubnetMask> dynamic_mask(n, 0);
    auto key = [](uint32_t s, uint32_t node) {
      return (uint64_t{s} << 32) | node;
    };
    auto refresh_dynamic = [&](uint64_t slot_start) {
      extra_adj.clear();
      std::fill(dynamic_mask.begin(), dynamic_mask.end(), 0);
      for (const auto &w : windows) {
        if (w.event.start_tick <= slot_start && slot_start < w.event.end_tick) {
          const uint32_t node = w.event.node.value;
          const uint32_t s = w.event.subnet.value;
          dynamic_mask[node] |= SubnetMask{1} << s;
          for (auto g : w.grafts) {
            extra_adj[key(s, node)].push_back(g);
            extra_adj[key(s, g)].push_back(node);
          }
        }
      }
      for (auto &[k, v] : extra_adj) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
      }
    };

    auto subscribed = [&](uint32_t node, SubnetId s) {
      return mask_has(net.static_subnets[node] | dynamic_mask[node], s);
    };

    auto send = [&](uint32_t from, uint32_t to, uint32_t msg, uint64_t tick) {
      if (drop_rng.chance(cfg.edge_drop)) {
        return;
      }
      queue.push(detail::Event{tick, seq++, msg, from, to});
    };

    // static mesh plus grafted neighbours; grafts only join non-members, so
    // the two lists never overlap
    auto mesh_send = [&](uint32_t node, uint32_t except, uint32_t msg, uint64_t tick) {
      const auto s = messages[msg].subnet;
      auto relay_to = [&](uint32_t nb) {
        if (nb != except && net.online_at(nb, tick)) {
          send(node, nb, msg, tick + 1);
        }
      };
      if (mask_has(net.static_subnets[node], s)) {
        for (auto nb : net.mesh[s.value][node]) {
          relay_to(nb);
        }
      }
      if (auto it = extra_adj.find(key(s.value, node)); it != extra_adj.end()) {
        for (auto nb : it->second) {
          relay_to(nb);
        }
      }
    };

    auto flood = [&](uint32_t node, uint32_t except, uint32_t msg, uint64_t tick) {
      mesh_send(node, except, msg, tick);
      for (uint32_t k = 0; k < net.observers.size(); ++k) {
        if (net.observers[k].connected[node]) {
          send(node, n + k, msg, tick + 1);
        }
      }
    };

    auto publish = [&](uint32_t origin, uint32_t msg, uint64_t tick) {
      const auto &m = messages[msg];
      seen[size_t{msg} * words + origin / 64] |= uint64_t{1} << (origin % 64);
      auto to_observers = [&](bool via_fanout) {
        for (uint32_t k = 0; k < net.observers.size(); ++k) {
          if (!net.observers[k].connected[origin]) {
            continue;
          }
          if (via_fanout) {
            Rng f(seed, Stream::kObserverFanout, {origin, m.subnet.value, m.slot.epoch, k});
            if (!f.chance(cfg.observer_in_fanout)) {
              continue;
            }
          }
          Rng late(seed, Stream::kOriginDelay, {m.validator.value, m.slot.epoch, origin, k});
          const uint64_t delay = late.chance(1.0 - cfg.origin_first) ? detail::kOriginLateTicks : 0;
          send(origin, n + k, msg, tick + 1 + delay);
        }
      };
      if (subscribed(origin, m.subnet)) {
        mesh_send(origin, UINT32_MAX, msg, tick);
        to_observers(false);
        return;
      }
      std::vector<uint32_t> cands;
      for (auto mbr : net.members[m.subnet.value]) {
        if (mbr != origin && net.online_at(mbr, tick)) {
          cands.push_back(mbr);
        }
      }
      Rng fan_rng(seed, Stream::kFanout, {origin, m.subnet.value, m.slot.epoch});
      fan_rng.shuffle(std::span<uint32_t>(cands));
      cands.resize(std::min<size_t>(cands.size(), fanout));
      std::sort(cands.begin(), cands.end());
      for (auto c : cands) {
        send(origin, c, msg, tick + 1);
      }
      to_observers(true);
    };

    auto deliver = [&](const detail::Event &ev) {
      const auto &m = messages[ev.message];
      if (ev.to >= n) {
        auto &log = logs.observers[ev.to - n];
        log.receipts.push_back(ReceiptRecord{ev.tick, NodeId{ev.from}, m.validator, m.slot, m.subnet});
        log.receipt_origins.push_back(NodeId{m.origin});
        return;
      }
      uint64_t &word = seen[size_t{ev.message} * words + ev.to / 64];
      const uint64_t bit = uint64_t{1} << (ev.to % 64);
      if (word & bit) {
        return;
      }
      word |= bit;
      if (!net.online_at(ev.to, ev.tick) || !subscribed(ev.to, m.subnet)) {
        return;
      }
      flood(ev.to, ev.from, ev.message, ev.tick);
    };

    auto drain_until = [&](uint64_t limit) {
      while (!queue.empty() && queue.top().tick < limit) {
        const auto ev = queue.top();
        queue.pop();
        deliver(ev);
      }
    };

    schedules.push_back(make_schedule(0));
    add_dynamic(schedules.back());
    const uint64_t total_slots = (end_tick + tps - 1) / tps;
    for (uint64_t abs = 0; abs < total_slots; ++abs) {
      const SlotRef slot = SlotRef::from_absolute(abs);
      if (slot.slot_in_epoch == 0) {
        if (slot.epoch > 0) {
          schedules.erase(schedules.begin());
        }
        schedules.push_back(make_schedule(slot.epoch + 1));
        add_dynamic(schedules.back());
        std::erase_if(windows, [&](const DynamicWindow &w) { return w.event.end_tick <= abs * tps; });
      }
      const uint64_t slot_start = abs * tps;
      // deliveries still in flight from the previous slot see the old membership
      drain_until(slot_start);
      refresh_dynamic(slot_start);
      const auto &schedule = schedules.front();
      for (uint32_t c = 0; c < schedule.committees[slot.slot_in_epoch].size(); ++c) {
        for (auto v : schedule.committees[slot.slot_in_epoch][c]) {
          const auto &pubs = net.publishers[v.value];
          std::vector<uint32_t> order(pubs.begin(), pubs.end());
          if (order.size() > 1) {
            Rng relay_rng(seed, Stream::kRelayOrder, {v.value, slot.epoch});
            relay_rng.shuffle(std::span<uint32_t>(order));
          }
          for (size_t i = 0; i < order.size(); ++i) {
            const uint64_t tick = slot_start + i;
            if (tick >= end_tick || !net.online_at(order[i], tick)) {
              continue;
            }
            const auto msg = static_cast<uint32_t>(messages.size());
            messages.push_back(detail::Message{v, slot, subnet_for(slot, c), order[i]});
            seen.resize(seen.size() + words, 0);
            publish(order[i], msg, tick);
          }
        }
      }
    }
    drain_until(UINT64_MAX);

    for (size_t k = 0; k < net.observers.size(); ++k) {
      auto &log = logs.observers[k];
      const auto &obs = net.observers[k];
      for (auto p : obs.peers) {
        for (const auto &[a, b] : net.nodes[p].online) {
          const uint64_t e = std::min(b, end_tick);
          if (a >= e) {
            continue;
          }
          log.connections.push_back(ConnectionEvent{NodeId{p}, a, e});
          for (uint32_t s = 0; s < kSubnetCount; ++s) {
            if (mask_has(net.static_subnets[p], SubnetId{s})) {
              log.subscriptions.push_back(
                  SubscriptionEvent{NodeId{p}, SubnetId{s}, a, e, SubscriptionKind::kStatic});
            }
          }
        }
      }
    }
    for (size_t k = 0; k < net.observers.size(); ++k) {
      for (const auto &ev : dynamic_log) {
        if (net.observers[k].connected[ev.node.value]) {
          logs.observers[k].subscriptions.push_back(ev);
        }
      }
    }
    for (auto &log : logs.observers) {
      std::sort(log.subscriptions.begin(), log.subscriptions.end(), [](const auto &a, const auto &b) {
        return std::tie(a.node, a.start_tick, a.subnet, a.end_tick, a.kind)
             < std::tie(b.node, b.start_tick, b.subnet, b.end_tick, b.kind);
      });
      std::sort(log.connections.begin(), log.connections.end(), [](const auto &a, const auto &b) {
        return std::tie(a.peer, a.start_tick) < std::tie(b.peer, b.start_tick);
      });
    }
    logs.ground_truth = net.ground_truth();
    return logs;
  }

}  // namespace attnet
