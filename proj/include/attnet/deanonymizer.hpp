/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"
#include "csv.hpp"
#include "error.hpp"
#include "observation.hpp"

namespace attnet {

  /// Minimum non-backbone share a hosted validator must exceed:
  /// slack * (64 - n_sub) / 64.
  inline double c1_threshold(double n_sub_avg, double slack = 0.9) {
    if (!(n_sub_avg >= 0.0 && n_sub_avg <= kSubnetCount)) {
      throw Error("invalid-nsub", std::to_string(n_sub_avg));
    }
    if (!(slack >= 0.0 && slack <= 1e6)) {
      throw Error("invalid-config", "c1 slack " + std::to_string(slack));
    }
    // slack as a 9-digit decimal so that one rounding happens, at the end
    constexpr double kScale = 1e9;
    const double numerator = std::round(slack * kScale) * (kSubnetCount - n_sub_avg);
    return numerator / (kScale * kSubnetCount);
  }

  struct ConditionVector {
    bool c1 = false;
    bool c2 = false;
    bool c3 = false;
    bool c4 = false;
    double nonbackbone_ratio = 0.0;
    double threshold = 0.0;
    uint64_t expected = 0;
    uint64_t received = 0;
    double mean_peer = 0.0;
    double std_peer = 0.0;

    bool all() const {
      return c1 && c2 && c3 && c4;
    }
  };

  /// Evaluates C1..C4 for every validator observed from a qualified peer.
  inline std::map<ValidatorId, ConditionVector> evaluate_conditions(const PeerProfile &profile,
                                                                    const AnalysisParams &params) {
    if (!profile.qualified_window) {
      throw Error("not-qualified", std::to_string(profile.peer.value));
    }
    const double threshold = c1_threshold(std::min<double>(profile.n_sub_avg, kSubnetCount), params.c1_slack);
    const uint64_t expected = profile.qualified_window->complete_epochs();

    // population statistics over every validator seen from this peer
    double mean = 0.0;
    double stddev = 0.0;
    const auto population = profile.per_validator.size();
    if (population > 0) {
      for (const auto &[v, c] : profile.per_validator) {
        mean += static_cast<double>(c.received());
      }
      mean /= static_cast<double>(population);
      double sq = 0.0;
      for (const auto &[v, c] : profile.per_validator) {
        const double d = static_cast<double>(c.received()) - mean;
        sq += d * d;
      }
      stddev = std::sqrt(sq / static_cast<double>(population));
    }
    const bool small_population = population < params.c4_min_population;

    std::map<ValidatorId, ConditionVector> out;
    for (const auto &[v, c] : profile.per_validator) {
      ConditionVector cv;
      cv.received = c.received();
      cv.expected = expected;
      cv.threshold = threshold;
      cv.mean_peer = mean;
      cv.std_peer = stddev;
      cv.nonbackbone_ratio =
          cv.received == 0 ? 0.0 : static_cast<double>(c.nonbackbone) / static_cast<double>(cv.received);
      cv.c1 = cv.nonbackbone_ratio > threshold;
      cv.c2 = profile.n_sub_avg < kSubnetCount;
      cv.c3 = static_cast<double>(cv.received) >= static_cast<double>(expected) / params.c3_divisor;
      cv.c4 = small_population
           || static_cast<double>(cv.received) > mean + params.c4_sigma * stddev;
      out.emplace(v, cv);
    }
    return out;
  }

  enum class PeerCategory { kDeanonymized, kNoValidators, kAllSubnets, kRest };

  inline const char *to_string(PeerCategory c) {
    switch (c) {
      case PeerCategory::kDeanonymized:
        return "deanonymized";
      case PeerCategory::kNoValidators:
        return "no_validators";
      case PeerCategory::kAllSubnets:
        return "all_subnets";
      case PeerCategory::kRest:
        return "rest";
    }
    return "rest";
  }

  inline PeerCategory parse_category(const std::string &s) {
    if (s == "deanonymized") {
      return PeerCategory::kDeanonymized;
    }
    if (s == "no_validators") {
      return PeerCategory::kNoValidators;
    }
    if (s == "all_subnets") {
      return PeerCategory::kAllSubnets;
    }
    if (s == "rest") {
      return PeerCategory::kRest;
    }
    throw Error("parse-error", "unknown category '" + s + "'");
  }

  struct PeerClassification {
    PeerCategory category = PeerCategory::kRest;
    std::vector<ValidatorId> hosted;

    bool operator==(const PeerClassification &) const = default;
  };

  inline PeerClassification classify_peer(const PeerProfile &profile,
                                          const std::map<ValidatorId, ConditionVector> &conditions) {
    if (!profile.qualified_window) {
      throw Error("not-qualified", std::to_string(profile.peer.value));
    }
    if (profile.n_sub_avg >= kSubnetCount) {
      return {PeerCategory::kAllSubnets, {}};
    }
    uint64_t nonbackbone = 0;
    for (const auto &[v, c] : profile.per_validator) {
      nonbackbone += c.nonbackbone;
    }
    if (nonbackbone == 0) {
      return {PeerCategory::kNoValidators, {}};
    }
    PeerClassification out;
    for (const auto &[v, cv] : conditions) {
      if (cv.all()) {
        out.hosted.push_back(v);
      }
    }
    out.category = out.hosted.empty() ? PeerCategory::kRest : PeerCategory::kDeanonymized;
    return out;
  }

  /// Per (peer, validator) audit row; only pairs with at least one
  /// non-backbone receipt are kept, since C1 fails for all others.
  struct DiagnosticRow {
    NodeId peer;
    ValidatorId validator;
    ValidatorCounts counts;
    ConditionVector conditions;
    // C1 would fail if the non-backbone receipts taken during the sender's
    // dynamic subscriptions were counted as backbone
    bool dynamic_sensitive = false;
  };

  struct DeanonReport {
    std::string observer;
    std::map<NodeId, PeerClassification> per_peer;
    std::vector<DiagnosticRow> diagnostics;

    std::vector<NodeId> peers_in(PeerCategory c) const {
      std::vector<NodeId> out;
      for (const auto &[peer, pc] : per_peer) {
        if (pc.category == c) {
          out.push_back(peer);
        }
      }
      return out;
    }
  };

  /// Runs the full per-peer pipeline over a completed store. Unqualified
  /// peers are left out of the report.
  inline DeanonReport deanonymize(const ObservationStore &store, const AnalysisParams &params,
                                  std::string observer = "observer-0") {
    DeanonReport report;
    report.observer = std::move(observer);
    for (auto peer : store.peers()) {
      const auto profile = build_profile(peer, store, params);
      if (!profile.qualified_window) {
        continue;
      }
      const auto conditions = evaluate_conditions(profile, params);
      report.per_peer.emplace(peer, classify_peer(profile, conditions));
      for (const auto &[v, cv] : conditions) {
        DiagnosticRow row{peer, v, profile.per_validator.at(v), cv, false};
        const auto &c = row.counts;
        if (cv.all() && c.nonbackbone_dynamic > 0 && cv.received > 0) {
          const double reclassified = static_cast<double>(c.nonbackbone - c.nonbackbone_dynamic)
                                    / static_cast<double>(cv.received);
          row.dynamic_sensitive = !(reclassified > cv.threshold);
        }
        if (c.nonbackbone > 0) {
          report.diagnostics.push_back(row);
        }
      }
    }
    return report;
  }

  inline void write_report(std::ostream &out, const DeanonReport &report) {
    out << "# peer,category,hosted_count,hosted_ids...\n";
    for (const auto &[peer, pc] : report.per_peer) {
      out << peer.value << ',' << to_string(pc.category) << ',' << pc.hosted.size();
      for (auto v : pc.hosted) {
        out << ',' << v.value;
      }
      out << '\n';
    }
  }

  inline DeanonReport read_report(std::istream &in, std::string observer) {
    DeanonReport report;
    report.observer = std::move(observer);
    csv::for_each_row(
        in, 3,
        [&](const csv::Row &row) {
          PeerClassification pc;
          pc.category = parse_category(row.field(1));
          const auto count = row.u64(2);
          if (row.fields.size() != 3 + count) {
            throw Error("parse-error", "line " + std::to_string(row.line) + ": hosted_count mismatch");
          }
          for (size_t i = 0; i < count; ++i) {
            pc.hosted.push_back(ValidatorId{row.u32(3 + i)});
          }
          report.per_peer.emplace(NodeId{row.u32(0)}, std::move(pc));
        },
        false);
    return report;
  }

  inline void write_diagnostics(std::ostream &out, const DeanonReport &report) {
    out << "# peer,validator,backbone,nonbackbone,nonbackbone_dynamic,ratio,threshold,expected,"
           "received,mean,std,c1,c2,c3,c4,hosted,dynamic_sensitive\n";
    for (const auto &d : report.diagnostics) {
      const auto &c = d.conditions;
      out << d.peer.value << ',' << d.validator.value << ',' << d.counts.backbone << ','
          << d.counts.nonbackbone << ',' << d.counts.nonbackbone_dynamic << ','
          << csv::fixed(c.nonbackbone_ratio) << ',' << csv::fixed(c.threshold) << ',' << c.expected
          << ',' << c.received << ',' << csv::fixed(c.mean_peer) << ',' << csv::fixed(c.std_peer) << ','
          << c.c1 << ',' << c.c2 << ',' << c.c3 << ',' << c.c4 << ',' << c.all() << ','
          << d.dynamic_sensitive << '\n';
    }
  }

}  // namespace attnet
