/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace attnet {

  constexpr uint32_t kSlotsPerEpoch = 32;
  constexpr uint32_t kSubnetCount = 64;
  constexpr uint32_t kMaxCommitteesPerSlot = 64;
  constexpr double kTargetAggregatorsPerCommittee = 16.0;

  struct ValidatorId {
    uint32_t value = 0;
    auto operator<=>(const ValidatorId &) const = default;
  };

  struct SubnetId {
    uint32_t value = 0;
    auto operator<=>(const SubnetId &) const = default;
  };

  struct SlotRef {
    uint64_t epoch = 0;
    uint32_t slot_in_epoch = 0;

    auto operator<=>(const SlotRef &) const = default;

    uint64_t absolute() const {
      return epoch * kSlotsPerEpoch + slot_in_epoch;
    }

    static SlotRef from_absolute(uint64_t abs) {
      return {abs / kSlotsPerEpoch, static_cast<uint32_t>(abs % kSlotsPerEpoch)};
    }
  };

  /// Half-open epoch range [begin, end).
  struct EpochInterval {
    uint64_t begin = 0;
    uint64_t end = 0;

    bool empty() const {
      return end <= begin;
    }
    uint64_t length() const {
      return empty() ? 0 : end - begin;
    }
  };

  /// Maps a committee to its attestation subnet (identity modulo 64).
  inline SubnetId subnet_for(const SlotRef & /*slot*/, uint32_t committee_index) {
    if (committee_index >= kMaxCommitteesPerSlot) {
      throw Error("invalid-committee", std::to_string(committee_index));
    }
    return SubnetId{committee_index % kSubnetCount};
  }

  /// Each member is selected independently with probability
  /// min(1, target / |committee|). Output is sorted.
  inline std::vector<ValidatorId> select_aggregators(
      std::span<const ValidatorId> committee, uint64_t seed,
      double target = kTargetAggregatorsPerCommittee) {
    if (committee.empty()) {
      throw Error("empty-committee", "");
    }
    const double p = std::min(1.0, target / static_cast<double>(committee.size()));
    Rng rng(seed, Stream::kAggregator);
    std::vector<ValidatorId> chosen;
    for (auto v : committee) {
      if (rng.chance(p)) {
        chosen.push_back(v);
      }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  /// One expected attestation per complete epoch of the window.
  inline uint64_t expected_attestations(ValidatorId /*validator*/,
                                        const EpochInterval &window) {
    return window.length();
  }

  struct AttestationDuty {
    SlotRef slot;
    uint32_t committee_index = 0;
    SubnetId subnet;
  };

  struct DutySchedule {
    uint64_t epoch = 0;
    std::map<ValidatorId, AttestationDuty> attestation_duty;
    // committees[slot_in_epoch][committee_index] -> sorted members
    std::vector<std::vector<std::vector<ValidatorId>>> committees;
    // aggregators[slot_in_epoch][committee_index] -> sorted subset of members
    std::vector<std::vector<std::vector<ValidatorId>>> aggregators;

    bool is_aggregator(ValidatorId v) const {
      auto it = attestation_duty.find(v);
      if (it == attestation_duty.end()) {
        return false;
      }
      const auto &aggs = aggregators[it->second.slot.slot_in_epoch][it->second.committee_index];
      return std::binary_search(aggs.begin(), aggs.end(), v);
    }
  };

  struct ScheduleParams {
    uint32_t committees_per_slot = kMaxCommitteesPerSlot;
    double aggregator_target = kTargetAggregatorsPerCommittee;
  };

  namespace detail {
    // Splits `total` into `parts` sizes differing by at most one; the larger
    // parts start at `rotation` and wrap.
    inline std::vector<size_t> balanced_sizes(size_t total, size_t parts, uint64_t rotation) {
      std::vector<size_t> sizes(parts, total / parts);
      const size_t extra = total % parts;
      for (size_t k = 0; k < extra; ++k) {
        sizes[(k + rotation) % parts] += 1;
      }
      return sizes;
    }
  }  // namespace detail

  /// Assigns every validator exactly once per epoch to a (slot, committee),
  /// then draws aggregators for each non-empty committee.
  inline DutySchedule build_duty_schedule(std::span<const ValidatorId> validators,
                                          uint64_t epoch, uint64_t seed,
                                          const ScheduleParams &params = {}) {
    if (validators.empty()) {
      throw Error("empty-validator-set", "");
    }
    if (params.committees_per_slot == 0 || params.committees_per_slot > kMaxCommitteesPerSlot) {
      throw Error("invalid-committee", "committees_per_slot out of range");
    }
    std::vector<ValidatorId> order(validators.begin(), validators.end());
    std::sort(order.begin(), order.end());
    if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
      throw Error("duplicate-validator", "");
    }
    Rng rng(seed, Stream::kShuffle, {epoch});
    rng.shuffle(std::span<ValidatorId>(order));

    DutySchedule schedule;
    schedule.epoch = epoch;
    schedule.committees.assign(kSlotsPerEpoch, {});
    schedule.aggregators.assign(kSlotsPerEpoch, {});

    const auto slot_sizes = detail::balanced_sizes(order.size(), kSlotsPerEpoch, epoch);
    size_t cursor = 0;
    for (uint32_t s = 0; s < kSlotsPerEpoch; ++s) {
      const SlotRef slot{epoch, s};
      const uint32_t n_comm = params.committees_per_slot;
      // rotate by remainder so the oversized committees walk across subnets
      const uint64_t remainder = slot_sizes[s] % n_comm;
      const auto comm_sizes =
          detail::balanced_sizes(slot_sizes[s], n_comm, slot.absolute() * remainder);
      auto &slot_committees = schedule.committees[s];
      auto &slot_aggregators = schedule.aggregators[s];
      slot_committees.resize(n_comm);
      slot_aggregators.resize(n_comm);
      for (uint32_t c = 0; c < n_comm; ++c) {
        auto &members = slot_committees[c];
        members.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                       order.begin() + static_cast<std::ptrdiff_t>(cursor + comm_sizes[c]));
        cursor += comm_sizes[c];
        std::sort(members.begin(), members.end());
        const SubnetId subnet = subnet_for(slot, c);
        for (auto v : members) {
          schedule.attestation_duty.emplace(v, AttestationDuty{slot, c, subnet});
        }
        if (!members.empty()) {
          slot_aggregators[c] = select_aggregators(
              members, derive_seed(seed, {epoch, s, c}), params.aggregator_target);
        }
      }
    }
    return schedule;
  }

}  // namespace attnet
