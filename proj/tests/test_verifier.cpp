/**
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <sstream>

using namespace attnet;

namespace {

  std::vector<ValidatorId> range(uint32_t first, uint32_t count, uint32_t stride = 1) {
    std::vector<ValidatorId> out;
    for (uint32_t i = 0; i < count; ++i) {
      out.push_back(ValidatorId{first + i * stride});
    }
    return out;
  }

  void label(EntityLabelSet &set, const std::vector<ValidatorId> &vs, const std::string &entity,
             const std::string &cls = "pool") {
    for (auto v : vs) {
      set.labels[v].entity = entity;
      set.labels[v].entity_class = cls;
    }
  }

  DeanonReport report_with(std::map<NodeId, std::vector<ValidatorId>> hosted) {
    DeanonReport r;
    for (auto &[peer, vs] : hosted) {
      std::sort(vs.begin(), vs.end());
      r.per_peer[peer] = {PeerCategory::kDeanonymized, vs};
    }
    return r;
  }

}  // namespace

TEST(GroupConsecutive, Examples) {
  const std::vector<ValidatorId> a{ValidatorId{5}, ValidatorId{6}, ValidatorId{7}, ValidatorId{9}};
  const auto g = group_consecutive(a);
  ASSERT_EQ(g.size(), 2U);
  EXPECT_EQ(g[0].size(), 3U);
  EXPECT_EQ(g[1], std::vector<ValidatorId>{ValidatorId{9}});
  EXPECT_EQ(group_consecutive(range(100, 100)).size(), 1U);
  EXPECT_TRUE(group_consecutive({}).empty());
}

TEST(Consistency, Examples) {
  const auto hosted = range(0, 100, 3);  // no consecutive ids
  EntityLabelSet g1;
  label(g1, range(0, 40, 3), "PoolA");
  EXPECT_EQ(check_consistency(hosted, g1), (ConsistencyVerdict{Verdict::kConsistent, VerdictRule::kGamma1}));

  EntityLabelSet i1;
  label(i1, range(0, 10, 3), "PoolA");
  label(i1, range(30, 10, 3), "PoolB");
  EXPECT_EQ(check_consistency(hosted, i1), (ConsistencyVerdict{Verdict::kInconsistent, VerdictRule::kI1}));

  EXPECT_EQ(check_consistency(range(4, 1), EntityLabelSet{}),
            (ConsistencyVerdict{Verdict::kConsistent, VerdictRule::kSingle}));

  try {
    check_consistency({}, EntityLabelSet{});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), "empty-set");
  }
}

TEST(Consistency, AddressRules) {
  const auto hosted = range(0, 20, 2);
  EntityLabelSet dep;
  for (size_t i = 0; i < hosted.size(); ++i) {
    dep.labels[hosted[i]].deposit_address = i < 18 ? "d1" : "d2";
  }
  EXPECT_EQ(check_consistency(hosted, dep).rule, VerdictRule::kGamma2);

  EntityLabelSet fee;
  for (size_t i = 0; i < hosted.size(); ++i) {
    fee.labels[hosted[i]].fee_recipient = i < 18 ? "f1" : "f2";
  }
  EXPECT_EQ(check_consistency(hosted, fee).rule, VerdictRule::kGamma3);
  // a validator that used several recipients does not count as exclusive
  fee.labels[hosted[0]].fee_recipient = kMultipleRecipients;
  EXPECT_EQ(check_consistency(hosted, fee).verdict, Verdict::kUnknown);
}

TEST(Consistency, ConsecutiveRunAlwaysConsistent) {
  for (uint32_t n : {2U, 9U, 10U, 11U, 57U, 400U}) {
    EXPECT_EQ(check_consistency(range(1000, n), EntityLabelSet{}).rule, VerdictRule::kGamma4) << n;
  }
}

TEST(Consistency, GroupCapIsCeilingOfTenth) {
  // 21 validators in 3 runs: cap ceil(21/10) = 3
  auto hosted = range(0, 7);
  for (auto v : range(100, 7)) {
    hosted.push_back(v);
  }
  for (auto v : range(200, 7)) {
    hosted.push_back(v);
  }
  EXPECT_EQ(check_consistency(hosted, EntityLabelSet{}).rule, VerdictRule::kGamma4);
  // 20 validators in 3 runs: cap 2
  hosted.pop_back();
  EXPECT_EQ(check_consistency(hosted, EntityLabelSet{}).verdict, Verdict::kUnknown);
}

TEST(Consistency, ExceptionClassesAndAllowList) {
  const auto hosted = range(0, 20, 2);
  EntityLabelSet labels;
  label(labels, range(0, 10, 2), "ens-a", "ens");
  label(labels, range(20, 10, 2), "ens-b", "ens");
  EXPECT_EQ(check_consistency(hosted, labels).verdict, Verdict::kUnknown);

  EntityLabelSet pools;
  label(pools, range(0, 10, 2), "lido-a");
  label(pools, range(20, 10, 2), "lido-b");
  EXPECT_EQ(check_consistency(hosted, pools).verdict, Verdict::kInconsistent);
  VerifyParams params;
  params.operator_allow_list.push_back({"lido-a", "lido-b"});
  EXPECT_EQ(check_consistency(hosted, pools, params).rule, VerdictRule::kGamma1);
}

TEST(Consistency, AgreesWithOracle) {
  Rng rng(31337);
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = oracle::random_label_case(rng);
    EXPECT_EQ(check_consistency(c.hosted, c.labels, c.params), oracle::consistency(c.hosted, c.labels, c.params))
        << "trial " << trial;
  }
}

TEST(ServiceProviders, Examples) {
  const auto fifty = range(0, 50, 3);
  auto r = report_with({{NodeId{1}, fifty}, {NodeId{2}, fifty}, {NodeId{3}, range(500, 19, 3)}});
  std::map<NodeId, ConsistencyVerdict> verdicts;
  for (auto p : {1U, 2U, 3U}) {
    verdicts[NodeId{p}] = {Verdict::kInconsistent, VerdictRule::kI1};
  }
  const auto sp = detect_service_providers(r, verdicts);
  EXPECT_EQ(sp.flagged, (std::set<NodeId>{NodeId{1}, NodeId{2}}));
  ASSERT_EQ(sp.overlap.size(), 2U);
  EXPECT_DOUBLE_EQ(sp.overlap[0][1], 1.0);
  EXPECT_DOUBLE_EQ(sp.overlap[1][0], 1.0);

  auto disjoint = report_with({{NodeId{1}, range(0, 30, 3)}, {NodeId{2}, range(1000, 30, 3)}});
  verdicts.erase(NodeId{3});
  const auto d = detect_service_providers(disjoint, verdicts);
  EXPECT_EQ(d.flagged.size(), 2U);
  EXPECT_DOUBLE_EQ(d.overlap[0][1], 0.0);
  EXPECT_DOUBLE_EQ(d.overlap[0][0], 1.0);
}

TEST(ServiceProviders, OverlapIsRelativeToColumn) {
  auto r = report_with({{NodeId{1}, range(0, 40)}, {NodeId{2}, range(20, 20)}});
  std::map<NodeId, ConsistencyVerdict> verdicts{{NodeId{1}, {Verdict::kInconsistent, VerdictRule::kI1}},
                                                {NodeId{2}, {Verdict::kInconsistent, VerdictRule::kI1}}};
  const auto sp = detect_service_providers(r, verdicts);
  ASSERT_EQ(sp.order, (std::vector<NodeId>{NodeId{1}, NodeId{2}}));
  EXPECT_DOUBLE_EQ(sp.overlap[0][1], 1.0);  // all of peer 2's set is in peer 1's
  EXPECT_DOUBLE_EQ(sp.overlap[1][0], 0.5);
}

TEST(Uniqueness, Examples) {
  const std::vector<DeanonReport> same{report_with({{NodeId{1}, range(7, 1)}}), report_with({{NodeId{1}, range(7, 1)}})};
  const auto u = uniqueness_report(same);
  EXPECT_EQ(u.at(ValidatorId{7}).size(), 1U);
  const std::vector<DeanonReport> two{report_with({{NodeId{1}, range(7, 1)}, {NodeId{2}, range(7, 1)}})};
  EXPECT_EQ(uniqueness_report(two).at(ValidatorId{7}).size(), 2U);
  EXPECT_TRUE(uniqueness_report({}).empty());
}

TEST(Agreement, Examples) {
  const auto a = report_with({{NodeId{1}, range(1, 3)}, {NodeId{2}, range(10, 5)}});
  const std::vector<DeanonReport> same{a, a};
  const auto r = cross_observer_agreement(same);
  EXPECT_EQ(r.exact_match_rate, 1.0);
  EXPECT_EQ(r.mean_overlap, 1.0);
  EXPECT_EQ(r.peers_compared, 2U);

  const std::vector<DeanonReport> diff{report_with({{NodeId{1}, range(1, 3)}}), report_with({{NodeId{1}, range(1, 2)}})};
  const auto d = cross_observer_agreement(diff);
  EXPECT_EQ(d.exact_match_rate, 0.0);
  EXPECT_DOUBLE_EQ(d.mean_overlap, 2.0 / 3.0);

  const std::vector<DeanonReport> one{a};
  try {
    cross_observer_agreement(one);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), "insufficient-observers");
  }
}

TEST(Files, LabelsAndVerdicts) {
  EntityLabelSet labels;
  labels.labels[ValidatorId{3}] = {"alpha", "pool", "dep", kMultipleRecipients};
  labels.labels[ValidatorId{9}] = {"", "", "", "fee"};
  std::stringstream s;
  write_labels(s, labels);
  const auto back = read_labels(s);
  ASSERT_EQ(back.labels.size(), 2U);
  EXPECT_EQ(back.labels.at(ValidatorId{3}).fee_recipient, kMultipleRecipients);
  EXPECT_EQ(back.labels.at(ValidatorId{9}).fee_recipient, "fee");

  std::istringstream dup("1,a,pool,,\n1,b,pool,,\n");
  EXPECT_THROW(read_labels(dup), Error);

  std::ostringstream v;
  write_verdicts(v, {{NodeId{2}, {Verdict::kConsistent, VerdictRule::kGamma4}}});
  EXPECT_NE(v.str().find("2,consistent,G4"), std::string::npos);
}
