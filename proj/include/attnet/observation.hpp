/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "config.hpp"
#include "csv.hpp"
#include "error.hpp"
#include "protocol.hpp"
#include "records.hpp"
#include "rng.hpp"

namespace attnet {

  /// Retained connection intervals of one peer, in ticks.
  struct QualifiedWindow {
    std::vector<std::pair<uint64_t, uint64_t>> intervals;
    uint64_t ticks_per_epoch = 1;

    uint64_t total_ticks() const {
      uint64_t t = 0;
      for (const auto &[a, b] : intervals) {
        t += b - a;
      }
      return t;
    }

    double total_epochs() const {
      return static_cast<double>(total_ticks()) / static_cast<double>(ticks_per_epoch);
    }

    /// True when epoch `e` overlaps any retained interval.
    bool touches_epoch(uint64_t e) const {
      const uint64_t lo = e * ticks_per_epoch;
      const uint64_t hi = lo + ticks_per_epoch;
      for (const auto &[a, b] : intervals) {
        if (a < hi && lo < b) {
          return true;
        }
      }
      return false;
    }

    /// Epochs lying wholly inside the retained intervals.
    uint64_t complete_epochs() const {
      uint64_t count = 0;
      for (const auto &[a, b] : intervals) {
        const uint64_t first = (a + ticks_per_epoch - 1) / ticks_per_epoch;
        const uint64_t last = b / ticks_per_epoch;
        if (last > first) {
          count += last - first;
        }
      }
      return count;
    }
  };

  struct ValidatorCounts {
    uint64_t backbone = 0;
    uint64_t nonbackbone = 0;
    // non-backbone receipts that fell inside one of the sender's dynamic
    // subscriptions on the same subnet (diagnostics only)
    uint64_t nonbackbone_dynamic = 0;

    uint64_t received() const {
      return backbone + nonbackbone;
    }
  };

  struct PeerProfile {
    NodeId peer;
    std::map<ValidatorId, ValidatorCounts> per_validator;
    double n_sub_avg = 0.0;
    std::optional<QualifiedWindow> qualified_window;
    double total_connection_epochs = 0.0;
  };

  /// Deduplicated first receipts plus per-peer subscription and connection
  /// timelines. Immutable once built.
  class ObservationStore {
   public:
    ObservationStore() = default;

    ObservationStore(std::span<const ReceiptRecord> receipts,
                     std::span<const SubscriptionEvent> subscriptions,
                     std::span<const ConnectionEvent> connections) {
      // first receipt wins; equal ticks are ordered by tie_rank
      std::map<std::pair<ValidatorId, SlotRef>, ReceiptRecord> first;
      for (const auto &r : receipts) {
        if (r.subnet.value >= kSubnetCount || r.slot.slot_in_epoch >= kSlotsPerEpoch) {
          throw Error("schema-violation", "receipt out of range");
        }
        auto [it, inserted] = first.try_emplace({r.validator, r.slot}, r);
        if (!inserted && arrives_before(r, it->second)) {
          it->second = r;
        }
      }
      receipts_.reserve(first.size());
      for (auto &[k, r] : first) {
        receipts_.push_back(r);
      }
      std::sort(receipts_.begin(), receipts_.end(), [](const auto &a, const auto &b) {
        return std::tie(a.tick, a.sender, a.validator) < std::tie(b.tick, b.sender, b.validator);
      });
      for (size_t i = 0; i < receipts_.size(); ++i) {
        by_sender_[receipts_[i].sender].push_back(i);
      }

      for (const auto &s : subscriptions) {
        if (s.subnet.value >= kSubnetCount) {
          throw Error("schema-violation", "subscription subnet out of range");
        }
        if (s.start_tick >= s.end_tick) {
          throw Error("schema-violation", "subscription with start_tick >= end_tick");
        }
        subscriptions_[s.node].push_back(s);
      }
      for (auto &[peer, events] : subscriptions_) {
        std::sort(events.begin(), events.end(), [](const auto &a, const auto &b) {
          return std::tie(a.start_tick, a.subnet, a.end_tick, a.kind)
               < std::tie(b.start_tick, b.subnet, b.end_tick, b.kind);
        });
      }

      std::map<NodeId, std::vector<ConnectionEvent>> raw;
      for (const auto &c : connections) {
        if (c.start_tick >= c.end_tick) {
          throw Error("schema-violation", "connection with start_tick >= end_tick");
        }
        raw[c.peer].push_back(c);
      }
      for (auto &[peer, events] : raw) {
        connections_[peer] = normalize_connections(events);
      }
    }

    /// Order among copies of one attestation received at the same tick: a
    /// hash of (sender, validator, slot), then the sender id. Depends only on
    /// record fields, so re-ingesting a file gives the same store, and no
    /// sender is systematically favoured.
    static uint64_t tie_rank(const ReceiptRecord &r) {
      return splitmix64(splitmix64(r.sender.value) ^ (uint64_t{r.validator.value} << 32 ^ r.slot.absolute()));
    }

    static bool arrives_before(const ReceiptRecord &a, const ReceiptRecord &b) {
      const auto ra = tie_rank(a);
      const auto rb = tie_rank(b);
      return std::tie(a.tick, ra, a.sender) < std::tie(b.tick, rb, b.sender);
    }

    /// Sorts and merges overlapping (not merely touching) intervals.
    static std::vector<ConnectionEvent> normalize_connections(std::vector<ConnectionEvent> events) {
      std::sort(events.begin(), events.end(), [](const auto &a, const auto &b) {
        return std::tie(a.start_tick, a.end_tick) < std::tie(b.start_tick, b.end_tick);
      });
      std::vector<ConnectionEvent> merged;
      for (const auto &e : events) {
        if (!merged.empty() && e.start_tick < merged.back().end_tick) {
          merged.back().end_tick = std::max(merged.back().end_tick, e.end_tick);
        } else {
          merged.push_back(e);
        }
      }
      return merged;
    }

    const std::vector<ReceiptRecord> &receipts() const {
      return receipts_;
    }

    std::vector<NodeId> peers() const {
      std::vector<NodeId> out;
      for (const auto &[peer, events] : connections_) {
        out.push_back(peer);
      }
      return out;
    }

    std::span<const ConnectionEvent> connections(NodeId peer) const {
      auto it = connections_.find(peer);
      return it == connections_.end() ? std::span<const ConnectionEvent>{} : it->second;
    }

    std::span<const SubscriptionEvent> subscriptions(NodeId peer) const {
      auto it = subscriptions_.find(peer);
      return it == subscriptions_.end() ? std::span<const SubscriptionEvent>{} : it->second;
    }

    std::vector<ReceiptRecord> receipts_from(NodeId peer) const {
      std::vector<ReceiptRecord> out;
      if (auto it = by_sender_.find(peer); it != by_sender_.end()) {
        for (auto i : it->second) {
          out.push_back(receipts_[i]);
        }
      }
      return out;
    }

    bool empty() const {
      return receipts_.empty() && subscriptions_.empty() && connections_.empty();
    }

    bool operator==(const ObservationStore &) const = default;

   private:
    std::vector<ReceiptRecord> receipts_;
    std::map<NodeId, std::vector<size_t>> by_sender_;
    std::map<NodeId, std::vector<SubscriptionEvent>> subscriptions_;
    std::map<NodeId, std::vector<ConnectionEvent>> connections_;
  };

  inline ObservationStore ingest_receipts(std::span<const ReceiptRecord> receipts) {
    return ObservationStore(receipts, {}, {});
  }

  /// Drops connections shorter than one epoch; the peer qualifies when what
  /// remains lasts more than `min_epochs` epochs.
  inline std::optional<QualifiedWindow> long_connection_windows(
      std::span<const ConnectionEvent> timeline, uint64_t ticks_per_epoch,
      uint64_t min_epochs = kSlotsPerEpoch) {
    QualifiedWindow w;
    w.ticks_per_epoch = ticks_per_epoch;
    for (const auto &c : timeline) {
      if (c.end_tick - c.start_tick >= ticks_per_epoch) {
        w.intervals.emplace_back(c.start_tick, c.end_tick);
      }
    }
    if (w.total_ticks() > min_epochs * ticks_per_epoch) {
      return w;
    }
    return std::nullopt;
  }

  inline std::optional<QualifiedWindow> long_connection_windows(NodeId peer,
                                                                const ObservationStore &store,
                                                                const AnalysisParams &params) {
    return long_connection_windows(store.connections(peer), params.ticks_per_epoch());
  }

  /// Time-weighted mean number of advertised static subscriptions over the
  /// window. Dynamic subscriptions are never advertised and are ignored.
  inline double average_subscription_count(NodeId peer, const QualifiedWindow &window,
                                           const ObservationStore &store) {
    const auto total = window.total_ticks();
    if (total == 0) {
      return 0.0;
    }
    long double weighted = 0.0L;
    for (const auto &s : store.subscriptions(peer)) {
      if (s.kind != SubscriptionKind::kStatic) {
        continue;
      }
      for (const auto &[a, b] : window.intervals) {
        const uint64_t lo = std::max(a, s.start_tick);
        const uint64_t hi = std::min(b, s.end_tick);
        if (hi > lo) {
          weighted += static_cast<long double>(hi - lo);
        }
      }
    }
    return static_cast<double>(weighted / static_cast<long double>(total));
  }

  /// Splits the peer's in-window first receipts per validator into backbone
  /// and non-backbone, using the static subscriptions the observer knew of
  /// at receipt time.
  inline std::map<ValidatorId, ValidatorCounts> per_validator_counts(NodeId peer,
                                                                     const QualifiedWindow &window,
                                                                     const ObservationStore &store,
                                                                     const AnalysisParams &params) {
    const uint64_t delay = uint64_t{params.knowledge_delay_slots} * params.ticks_per_slot;
    // per-subnet disjoint interval unions: known static, and actual dynamic
    using Intervals = std::vector<std::pair<uint64_t, uint64_t>>;
    std::array<Intervals, kSubnetCount> known_static;
    std::array<Intervals, kSubnetCount> dynamic;
    for (const auto &s : store.subscriptions(peer)) {
      if (s.kind == SubscriptionKind::kStatic) {
        known_static[s.subnet.value].emplace_back(s.start_tick + delay, s.end_tick + delay);
      } else {
        dynamic[s.subnet.value].emplace_back(s.start_tick, s.end_tick);
      }
    }
    auto merge = [](Intervals &iv) {
      std::sort(iv.begin(), iv.end());
      Intervals out;
      for (const auto &x : iv) {
        if (!out.empty() && x.first <= out.back().second) {
          out.back().second = std::max(out.back().second, x.second);
        } else {
          out.push_back(x);
        }
      }
      iv = std::move(out);
    };
    auto covers = [](const Intervals &iv, uint64_t t) {
      auto it = std::upper_bound(iv.begin(), iv.end(), std::pair<uint64_t, uint64_t>{t, UINT64_MAX});
      return it != iv.begin() && t < std::prev(it)->second;
    };
    for (uint32_t s = 0; s < kSubnetCount; ++s) {
      merge(known_static[s]);
      merge(dynamic[s]);
    }
    std::map<ValidatorId, ValidatorCounts> counts;
    for (const auto &r : store.receipts_from(peer)) {
      if (!window.touches_epoch(r.tick / window.ticks_per_epoch)) {
        continue;
      }
      auto &c = counts[r.validator];
      if (covers(known_static[r.subnet.value], r.tick)) {
        ++c.backbone;
      } else {
        ++c.nonbackbone;
        if (covers(dynamic[r.subnet.value], r.tick)) {
          ++c.nonbackbone_dynamic;
        }
      }
    }
    return counts;
  }

  inline PeerProfile build_profile(NodeId peer, const ObservationStore &store,
                                   const AnalysisParams &params) {
    PeerProfile profile;
    profile.peer = peer;
    uint64_t connected = 0;
    for (const auto &c : store.connections(peer)) {
      connected += c.end_tick - c.start_tick;
    }
    profile.total_connection_epochs =
        static_cast<double>(connected) / static_cast<double>(params.ticks_per_epoch());
    profile.qualified_window = long_connection_windows(peer, store, params);
    if (profile.qualified_window) {
      profile.n_sub_avg = average_subscription_count(peer, *profile.qualified_window, store);
      profile.per_validator = per_validator_counts(peer, *profile.qualified_window, store, params);
    }
    return profile;
  }

  // --- line-delimited persistence ------------------------------------------

  inline void write_receipts(std::ostream &out, std::span<const ReceiptRecord> receipts) {
    out << "# tick,sender_node,validator,epoch,slot,subnet\n";
    for (const auto &r : receipts) {
      out << r.tick << ',' << r.sender.value << ',' << r.validator.value << ',' << r.slot.epoch << ','
          << r.slot.slot_in_epoch << ',' << r.subnet.value << '\n';
    }
  }

  inline void write_subscriptions(std::ostream &out, std::span<const SubscriptionEvent> events) {
    out << "# node,subnet,start_tick,end_tick,kind\n";
    for (const auto &e : events) {
      out << e.node.value << ',' << e.subnet.value << ',' << e.start_tick << ',' << e.end_tick << ','
          << (e.kind == SubscriptionKind::kStatic ? "static" : "dynamic") << '\n';
    }
  }

  inline void write_connections(std::ostream &out, std::span<const ConnectionEvent> events) {
    out << "# peer,start_tick,end_tick\n";
    for (const auto &e : events) {
      out << e.peer.value << ',' << e.start_tick << ',' << e.end_tick << '\n';
    }
  }

  inline std::vector<ReceiptRecord> read_receipts(std::istream &in) {
    std::vector<ReceiptRecord> out;
    csv::for_each_row(in, 6, [&](const csv::Row &row) {
      ReceiptRecord r;
      r.tick = row.u64(0);
      r.sender = NodeId{row.u32(1)};
      r.validator = ValidatorId{row.u32(2)};
      r.slot.epoch = row.u64(3);
      r.slot.slot_in_epoch = row.u32(4);
      r.subnet = SubnetId{row.u32(5)};
      if (r.subnet.value >= kSubnetCount || r.slot.slot_in_epoch >= kSlotsPerEpoch) {
        throw Error("schema-violation", "line " + std::to_string(row.line) + ": subnet or slot out of range");
      }
      out.push_back(r);
    });
    return out;
  }

  inline std::vector<SubscriptionEvent> read_subscriptions(std::istream &in) {
    std::vector<SubscriptionEvent> out;
    csv::for_each_row(in, 5, [&](const csv::Row &row) {
      SubscriptionEvent e;
      e.node = NodeId{row.u32(0)};
      e.subnet = SubnetId{row.u32(1)};
      e.start_tick = row.u64(2);
      e.end_tick = row.u64(3);
      const auto &kind = row.field(4);
      if (kind == "static") {
        e.kind = SubscriptionKind::kStatic;
      } else if (kind == "dynamic") {
        e.kind = SubscriptionKind::kDynamic;
      } else {
        throw Error("parse-error", "line " + std::to_string(row.line) + ": unknown kind '" + kind + "'");
      }
      if (e.subnet.value >= kSubnetCount || e.start_tick >= e.end_tick) {
        throw Error("schema-violation", "line " + std::to_string(row.line));
      }
      out.push_back(e);
    });
    return out;
  }

  inline std::vector<ConnectionEvent> read_connections(std::istream &in) {
    std::vector<ConnectionEvent> out;
    csv::for_each_row(in, 3, [&](const csv::Row &row) {
      ConnectionEvent e{NodeId{row.u32(0)}, row.u64(1), row.u64(2)};
      if (e.start_tick >= e.end_tick) {
        throw Error("schema-violation", "line " + std::to_string(row.line));
      }
      out.push_back(e);
    });
    return out;
  }

  /// Ground truth rows `node,validator`; an empty validator field records a
  /// node that hosts nothing.
  inline void write_ground_truth(std::ostream &out, const std::map<NodeId, std::vector<ValidatorId>> &truth) {
    out << "# node,validator\n";
    for (const auto &[node, vals] : truth) {
      if (vals.empty()) {
        out << node.value << ",\n";
      }
      for (auto v : vals) {
        out << node.value << ',' << v.value << '\n';
      }
    }
  }

  inline std::map<NodeId, std::vector<ValidatorId>> read_ground_truth(std::istream &in) {
    std::map<NodeId, std::vector<ValidatorId>> truth;
    csv::for_each_row(in, 2, [&](const csv::Row &row) {
      auto &vals = truth[NodeId{row.u32(0)}];
      if (!row.field(1).empty()) {
        vals.push_back(ValidatorId{row.u32(1)});
      }
    });
    for (auto &[node, vals] : truth) {
      std::sort(vals.begin(), vals.end());
    }
    return truth;
  }

}  // namespace attnet
