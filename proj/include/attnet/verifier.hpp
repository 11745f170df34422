/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "config.hpp"
#include "csv.hpp"
#include "deanonymizer.hpp"
#include "error.hpp"

namespace attnet {

  inline constexpr const char *kMultipleRecipients = "multiple";

  struct ValidatorLabel {
    std::string entity;
    std::string entity_class;
    std::string deposit_address;
    std::string fee_recipient;  // "multiple" when several were used
  };

  /// Partial labels per validator; absent entries mean nothing is known.
  struct EntityLabelSet {
    std::map<ValidatorId, ValidatorLabel> labels;

    const ValidatorLabel *find(ValidatorId v) const {
      auto it = labels.find(v);
      return it == labels.end() ? nullptr : &it->second;
    }
  };

  enum class Verdict { kConsistent, kInconsistent, kUnknown };
  enum class VerdictRule { kGamma1, kGamma2, kGamma3, kGamma4, kSingle, kI1, kNone };

  inline const char *to_string(Verdict v) {
    switch (v) {
      case Verdict::kConsistent:
        return "consistent";
      case Verdict::kInconsistent:
        return "inconsistent";
      case Verdict::kUnknown:
        return "unknown";
    }
    return "unknown";
  }

  inline const char *to_string(VerdictRule r) {
    switch (r) {
      case VerdictRule::kGamma1:
        return "G1";
      case VerdictRule::kGamma2:
        return "G2";
      case VerdictRule::kGamma3:
        return "G3";
      case VerdictRule::kGamma4:
        return "G4";
      case VerdictRule::kSingle:
        return "single";
      case VerdictRule::kI1:
        return "I1";
      case VerdictRule::kNone:
        return "none";
    }
    return "none";
  }

  struct ConsistencyVerdict {
    Verdict verdict = Verdict::kUnknown;
    VerdictRule rule = VerdictRule::kNone;

    bool operator==(const ConsistencyVerdict &) const = default;
  };

  /// Maximal runs of consecutive ids from a sorted, distinct list.
  inline std::vector<std::vector<ValidatorId>> group_consecutive(std::span<const ValidatorId> ids) {
    std::vector<std::vector<ValidatorId>> groups;
    for (auto v : ids) {
      if (groups.empty() || groups.back().back().value + 1 != v.value) {
        groups.emplace_back();
      }
      groups.back().push_back(v);
    }
    return groups;
  }

  namespace detail {
    // Largest number of hosted validators sharing one non-empty key.
    template <typename KeyFn>
    size_t modal_count(std::span<const ValidatorId> hosted, KeyFn &&key) {
      std::map<std::string, size_t> counts;
      size_t best = 0;
      for (auto v : hosted) {
        const std::string k = key(v);
        if (!k.empty()) {
          best = std::max(best, ++counts[k]);
        }
      }
      return best;
    }
  }  // namespace detail

  /// Consistency of a located validator set against its labels. Consistency
  /// rules are tried in order G1..G4 before the inconsistency rule.
  inline ConsistencyVerdict check_consistency(std::span<const ValidatorId> hosted_in,
                                              const EntityLabelSet &labels,
                                              const VerifyParams &params = {}) {
    if (hosted_in.empty()) {
      throw Error("empty-set", "");
    }
    std::vector<ValidatorId> hosted(hosted_in.begin(), hosted_in.end());
    std::sort(hosted.begin(), hosted.end());
    hosted.erase(std::unique(hosted.begin(), hosted.end()), hosted.end());
    const size_t n = hosted.size();
    if (n == 1) {
      return {Verdict::kConsistent, VerdictRule::kSingle};
    }

    auto canonical_entity = [&](ValidatorId v) -> std::string {
      const auto *l = labels.find(v);
      if (l == nullptr || l->entity.empty()) {
        return {};
      }
      for (const auto &group : params.operator_allow_list) {
        if (group.contains(l->entity)) {
          return *group.begin();
        }
      }
      return l->entity;
    };

    size_t labeled = 0;
    bool all_exception_class = true;
    for (auto v : hosted) {
      const auto *l = labels.find(v);
      if (l != nullptr && !l->entity.empty()) {
        ++labeled;
        all_exception_class = all_exception_class && params.i1_exception_classes.contains(l->entity_class);
      }
    }
    const size_t modal = detail::modal_count(hosted, canonical_entity);

    if (labeled > 0 && 10 * labeled >= 3 * n && 10 * modal >= 9 * labeled) {
      return {Verdict::kConsistent, VerdictRule::kGamma1};
    }
    const size_t deposit = detail::modal_count(hosted, [&](ValidatorId v) {
      const auto *l = labels.find(v);
      return l == nullptr ? std::string{} : l->deposit_address;
    });
    if (10 * deposit >= 9 * n) {
      return {Verdict::kConsistent, VerdictRule::kGamma2};
    }
    const size_t fee = detail::modal_count(hosted, [&](ValidatorId v) {
      const auto *l = labels.find(v);
      if (l == nullptr || l->fee_recipient == kMultipleRecipients) {
        return std::string{};
      }
      return l->fee_recipient;
    });
    if (10 * fee >= 9 * n) {
      return {Verdict::kConsistent, VerdictRule::kGamma3};
    }
    if (group_consecutive(hosted).size() <= (n + 9) / 10) {
      return {Verdict::kConsistent, VerdictRule::kGamma4};
    }
    if (labeled > 0 && 10 * labeled >= n && 10 * modal < 9 * labeled && !all_exception_class) {
      return {Verdict::kInconsistent, VerdictRule::kI1};
    }
    return {Verdict::kUnknown, VerdictRule::kNone};
  }

  inline std::map<NodeId, ConsistencyVerdict> verdicts_for(const DeanonReport &report,
                                                           const EntityLabelSet &labels,
                                                           const VerifyParams &params = {}) {
    std::map<NodeId, ConsistencyVerdict> out;
    for (const auto &[peer, pc] : report.per_peer) {
      if (pc.category == PeerCategory::kDeanonymized) {
        out.emplace(peer, check_consistency(pc.hosted, labels, params));
      }
    }
    return out;
  }

  struct ServiceProviderResult {
    std::set<NodeId> flagged;
    // candidates ordered by hosted-set size (largest first), then id
    std::vector<NodeId> order;
    // overlap[i][j] = |H_i ∩ H_j| / |H_j|
    std::vector<std::vector<double>> overlap;
  };

  inline ServiceProviderResult detect_service_providers(const DeanonReport &report,
                                                        const std::map<NodeId, ConsistencyVerdict> &verdicts,
                                                        uint32_t min_size = 20) {
    ServiceProviderResult out;
    for (const auto &[peer, v] : verdicts) {
      auto it = report.per_peer.find(peer);
      if (v.verdict == Verdict::kInconsistent && it != report.per_peer.end()
          && it->second.hosted.size() >= min_size) {
        out.flagged.insert(peer);
        out.order.push_back(peer);
      }
    }
    std::stable_sort(out.order.begin(), out.order.end(), [&](NodeId a, NodeId b) {
      return report.per_peer.at(a).hosted.size() > report.per_peer.at(b).hosted.size();
    });
    const size_t k = out.order.size();
    out.overlap.assign(k, std::vector<double>(k, 0.0));
    for (size_t i = 0; i < k; ++i) {
      const auto &hi = report.per_peer.at(out.order[i]).hosted;
      for (size_t j = 0; j < k; ++j) {
        const auto &hj = report.per_peer.at(out.order[j]).hosted;
        std::vector<ValidatorId> both;
        std::set_intersection(hi.begin(), hi.end(), hj.begin(), hj.end(), std::back_inserter(both));
        out.overlap[i][j] = static_cast<double>(both.size()) / static_cast<double>(hj.size());
      }
    }
    return out;
  }

  /// Validator -> every peer it was located on, across all reports.
  inline std::map<ValidatorId, std::set<NodeId>> uniqueness_report(std::span<const DeanonReport> reports) {
    std::map<ValidatorId, std::set<NodeId>> out;
    for (const auto &r : reports) {
      for (const auto &[peer, pc] : r.per_peer) {
        for (auto v : pc.hosted) {
          out[v].insert(peer);
        }
      }
    }
    return out;
  }

  struct AgreementResult {
    double exact_match_rate = 1.0;
    double mean_overlap = 1.0;
    size_t peers_compared = 0;
  };

  /// Agreement between observers on peers that at least two of them
  /// deanonymized. With no such peer both rates are vacuously 1.
  inline AgreementResult cross_observer_agreement(std::span<const DeanonReport> reports) {
    if (reports.size() < 2) {
      throw Error("insufficient-observers", std::to_string(reports.size()));
    }
    std::map<NodeId, std::vector<const std::vector<ValidatorId> *>> sets;
    for (const auto &r : reports) {
      for (const auto &[peer, pc] : r.per_peer) {
        if (pc.category == PeerCategory::kDeanonymized) {
          sets[peer].push_back(&pc.hosted);
        }
      }
    }
    AgreementResult out;
    size_t exact = 0;
    size_t pairs = 0;
    double overlap_sum = 0.0;
    for (const auto &[peer, list] : sets) {
      if (list.size() < 2) {
        continue;
      }
      ++out.peers_compared;
      bool same = true;
      for (size_t i = 0; i < list.size(); ++i) {
        for (size_t j = i + 1; j < list.size(); ++j) {
          const auto &a = *list[i];
          const auto &b = *list[j];
          same = same && a == b;
          std::vector<ValidatorId> both;
          std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
          const double uni = static_cast<double>(a.size() + b.size() - both.size());
          overlap_sum += static_cast<double>(both.size()) / uni;
          ++pairs;
        }
      }
      exact += same ? 1 : 0;
    }
    if (out.peers_compared > 0) {
      out.exact_match_rate = static_cast<double>(exact) / static_cast<double>(out.peers_compared);
      out.mean_overlap = overlap_sum / static_cast<double>(pairs);
    }
    return out;
  }

  // --- files ----------------------------------------------------------------

  inline void write_labels(std::ostream &out, const EntityLabelSet &labels) {
    out << "# validator,entity,entity_class,deposit_address,fee_recipient\n";
    for (const auto &[v, l] : labels.labels) {
      out << v.value << ',' << l.entity << ',' << l.entity_class << ',' << l.deposit_address << ','
          << l.fee_recipient << '\n';
    }
  }

  inline EntityLabelSet read_labels(std::istream &in) {
    EntityLabelSet out;
    csv::for_each_row(in, 5, [&](const csv::Row &row) {
      ValidatorLabel l{row.field(1), row.field(2), row.field(3), row.field(4)};
      if (!out.labels.emplace(ValidatorId{row.u32(0)}, std::move(l)).second) {
        throw Error("parse-error", "line " + std::to_string(row.line) + ": duplicate validator");
      }
    });
    return out;
  }

  inline void write_verdicts(std::ostream &out, const std::map<NodeId, ConsistencyVerdict> &verdicts) {
    out << "# peer,verdict,rule\n";
    for (const auto &[peer, v] : verdicts) {
      out << peer.value << ',' << to_string(v.verdict) << ',' << to_string(v.rule) << '\n';
    }
  }

}  // namespace attnet
