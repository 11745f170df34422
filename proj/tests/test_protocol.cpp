/**
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include <attnet/attnet.hpp>

#include <map>
#include <set>
#include <sstream>

using namespace attnet;

namespace {

  std::vector<ValidatorId> ids(uint32_t n, uint32_t first = 0) {
    std::vector<ValidatorId> out;
    for (uint32_t i = 0; i < n; ++i) {
      out.push_back(ValidatorId{first + i});
    }
    return out;
  }

  // Every validator in exactly one committee.
  void expect_partition(const DutySchedule &s, const std::vector<ValidatorId> &validators) {
    std::map<ValidatorId, int> seen;
    for (uint32_t slot = 0; slot < kSlotsPerEpoch; ++slot) {
      for (uint32_t c = 0; c < s.committees[slot].size(); ++c) {
        for (auto v : s.committees[slot][c]) {
          ++seen[v];
          const auto &duty = s.attestation_duty.at(v);
          EXPECT_EQ(duty.slot.slot_in_epoch, slot);
          EXPECT_EQ(duty.committee_index, c);
          EXPECT_EQ(duty.subnet, subnet_for(duty.slot, c));
        }
      }
    }
    ASSERT_EQ(seen.size(), validators.size());
    for (auto v : validators) {
      EXPECT_EQ(seen[v], 1);
    }
  }

}  // namespace

TEST(Schedule, SixtyFourValidatorsTwoPerSlot) {
  const auto vs = ids(64);
  const auto s = build_duty_schedule(vs, 0, 7);
  expect_partition(s, vs);
  for (uint32_t slot = 0; slot < kSlotsPerEpoch; ++slot) {
    size_t n = 0;
    for (const auto &committee : s.committees[slot]) {
      n += committee.size();
    }
    EXPECT_EQ(n, 2U);
  }
}

TEST(Schedule, SingleValidator) {
  const auto vs = ids(1);
  for (uint64_t epoch : {0, 5, 99}) {
    const auto s = build_duty_schedule(vs, epoch, epoch * 31 + 1);
    expect_partition(s, vs);
    EXPECT_EQ(s.attestation_duty.size(), 1U);
    EXPECT_EQ(s.attestation_duty.at(ValidatorId{0}).slot.epoch, epoch);
  }
}

TEST(Schedule, Deterministic) {
  const auto vs = ids(500);
  const auto a = build_duty_schedule(vs, 3, 11);
  const auto b = build_duty_schedule(vs, 3, 11);
  EXPECT_EQ(a.committees, b.committees);
  EXPECT_EQ(a.aggregators, b.aggregators);
  const auto c = build_duty_schedule(vs, 4, 11);
  EXPECT_NE(a.committees, c.committees);
}

TEST(Schedule, PartitionProperty) {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<uint32_t>(1 + rng.below(5000));
    const auto vs = ids(n, static_cast<uint32_t>(rng.below(1000)));
    ScheduleParams p;
    p.committees_per_slot = static_cast<uint32_t>(1 + rng.below(kMaxCommitteesPerSlot));
    const auto s = build_duty_schedule(vs, rng.below(100), rng.next(), p);
    expect_partition(s, vs);
    // committee sizes in one epoch differ by at most one
    size_t lo = SIZE_MAX, hi = 0;
    for (const auto &slot : s.committees) {
      for (const auto &c : slot) {
        lo = std::min(lo, c.size());
        hi = std::max(hi, c.size());
      }
    }
    EXPECT_LE(hi - lo, 1U);
  }
}

TEST(Schedule, Errors) {
  std::vector<ValidatorId> none;
  try {
    build_duty_schedule(none, 0, 1);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), "empty-validator-set");
  }
  std::vector<ValidatorId> dup{ValidatorId{1}, ValidatorId{1}};
  EXPECT_THROW(build_duty_schedule(dup, 0, 1), Error);
}

TEST(Subnet, IdentityMapping) {
  EXPECT_EQ(subnet_for(SlotRef{3, 4}, 12).value, 12U);
  EXPECT_EQ(subnet_for(SlotRef{0, 0}, 0).value, 0U);
  std::set<uint32_t> covered;
  for (uint32_t c = 0; c < kMaxCommitteesPerSlot; ++c) {
    covered.insert(subnet_for(SlotRef{7, 9}, c).value);
  }
  EXPECT_EQ(covered.size(), kSubnetCount);
  try {
    subnet_for(SlotRef{}, 64);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), "invalid-committee");
  }
}

TEST(Aggregators, SmallCommitteeAllSelected) {
  const auto committee = ids(8);
  EXPECT_EQ(select_aggregators(committee, 5), committee);
}

TEST(Aggregators, MeanSixteenOnLargeCommittee) {
  const auto committee = ids(1600);
  double total = 0.0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    total += static_cast<double>(select_aggregators(committee, derive_seed(2024, {static_cast<uint64_t>(t)})).size());
  }
  const double mean = total / trials;
  EXPECT_NEAR(mean, 16.0, 1.0);
}

TEST(Aggregators, DeterministicSortedSubset) {
  const auto committee = ids(300, 1000);
  const auto a = select_aggregators(committee, 77);
  EXPECT_EQ(a, select_aggregators(committee, 77));
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  for (auto v : a) {
    EXPECT_TRUE(std::binary_search(committee.begin(), committee.end(), v));
  }
  std::vector<ValidatorId> empty;
  EXPECT_THROW(select_aggregators(empty, 1), Error);
}

// Per-validator selection frequency tracks min(1, 16/|committee|).
TEST(Aggregators, RateProperty) {
  for (uint32_t size : {4U, 16U, 32U, 160U, 640U}) {
    const auto committee = ids(size);
    double selected = 0.0;
    const int trials = 4000;
    for (int t = 0; t < trials; ++t) {
      selected += static_cast<double>(select_aggregators(committee, derive_seed(size, {static_cast<uint64_t>(t)})).size());
    }
    const double rate = selected / (static_cast<double>(trials) * size);
    const double p = std::min(1.0, 16.0 / size);
    EXPECT_NEAR(rate, p, 4.0 * std::sqrt(p * (1 - p) / (trials * size)) + 1e-12) << size;
  }
}

TEST(Expected, CountsCompleteEpochs) {
  EXPECT_EQ(expected_attestations(ValidatorId{1}, EpochInterval{0, 32}), 32U);
  EXPECT_EQ(expected_attestations(ValidatorId{1}, EpochInterval{4, 4}), 0U);
  EXPECT_EQ(expected_attestations(ValidatorId{1}, EpochInterval{5, 10}), 5U);
  EXPECT_EQ(expected_attestations(ValidatorId{1}, EpochInterval{9, 5}), 0U);
}

TEST(Slots, AbsoluteRoundTrip) {
  for (uint64_t abs : {0ULL, 31ULL, 32ULL, 1000ULL}) {
    EXPECT_EQ(SlotRef::from_absolute(abs).absolute(), abs);
  }
  EXPECT_EQ((SlotRef{2, 5}.absolute()), 69U);
}

TEST(Rng, BelowStaysInRangeAndIsRoughlyUniform) {
  Rng rng(3);
  std::vector<int> hist(10);
  for (int i = 0; i < 100000; ++i) {
    const auto x = rng.below(10);
    ASSERT_LT(x, 10U);
    ++hist[x];
  }
  for (int h : hist) {
    EXPECT_NEAR(h, 10000, 500);
  }
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
  Rng a(5, Stream::kMesh, {1});
  Rng b(5, Stream::kMesh, {1});
  Rng c(5, Stream::kMesh, {2});
  Rng d(5, Stream::kDrop, {1});
  const auto x = a.next();
  EXPECT_EQ(x, b.next());
  EXPECT_NE(x, c.next());
  EXPECT_NE(x, d.next());
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
}

TEST(Csv, RowsAndErrors) {
  std::istringstream in("# header\n1,2\n\n3,4\r\n");
  std::vector<std::pair<uint32_t, uint32_t>> rows;
  csv::for_each_row(in, 2, [&](const csv::Row &r) { rows.emplace_back(r.u32(0), r.u32(1)); });
  ASSERT_EQ(rows.size(), 2U);
  EXPECT_EQ(rows[1], std::make_pair(3U, 4U));

  std::istringstream bad("1,2\n1,x\n");
  try {
    csv::for_each_row(bad, 2, [](const csv::Row &r) { r.u32(1); });
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), "parse-error");
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream short_row("1\n");
  EXPECT_THROW(csv::for_each_row(short_row, 2, [](const csv::Row &) {}), Error);
  EXPECT_EQ(csv::fixed(0.5), "0.500000");
}
