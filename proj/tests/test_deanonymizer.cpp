/**
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include <attnet/attnet.hpp>

#include <cmath>
#include <sstream>

using namespace attnet;

namespace {

  PeerProfile qualified_profile(double n_sub = 2.0, uint64_t epochs = 64) {
    PeerProfile p;
    p.peer = NodeId{1};
    p.n_sub_avg = n_sub;
    QualifiedWindow w;
    w.ticks_per_epoch = 384;
    w.intervals = {{0, epochs * 384}};
    p.qualified_window = w;
    return p;
  }

  std::string error_code(auto &&fn) {
    try {
      fn();
    } catch (const Error &e) {
      return e.code();
    }
    return "";
  }

}  // namespace

TEST(C1, ThresholdValues) {
  EXPECT_EQ(c1_threshold(2), 0.871875);
  EXPECT_EQ(c1_threshold(4), 0.84375);
  EXPECT_EQ(c1_threshold(64), 0.0);
  EXPECT_EQ(error_code([] { c1_threshold(65); }), "invalid-nsub");
  EXPECT_EQ(error_code([] { c1_threshold(-1); }), "invalid-nsub");
  EXPECT_EQ(error_code([] { c1_threshold(std::nan("")); }), "invalid-nsub");
  EXPECT_EQ(error_code([] { c1_threshold(2, -0.1); }), "invalid-config");
  EXPECT_EQ(c1_threshold(10, 0.8), 0.675);
}

TEST(C1, MonotoneInSubscriptionsAndSlack) {
  for (double n = 0; n < 64; n += 0.5) {
    EXPECT_GT(c1_threshold(n), c1_threshold(n + 0.5));
    EXPECT_LT(c1_threshold(n, 0.8), c1_threshold(n, 0.9));
  }
}

TEST(Conditions, C1Examples) {
  auto p = qualified_profile();
  p.per_validator[ValidatorId{1}] = {4, 60, 0};
  p.per_validator[ValidatorId{2}] = {64, 0, 0};
  const auto c = evaluate_conditions(p, AnalysisParams{});
  EXPECT_TRUE(c.at(ValidatorId{1}).c1);
  EXPECT_DOUBLE_EQ(c.at(ValidatorId{1}).nonbackbone_ratio, 0.9375);
  EXPECT_FALSE(c.at(ValidatorId{2}).c1);
}

TEST(Conditions, C4OutlierAgainstRelayedPopulation) {
  auto p = qualified_profile(2.0, 32);
  p.per_validator[ValidatorId{0}] = {0, 32, 0};
  for (uint32_t v = 1; v <= 500; ++v) {
    p.per_validator[ValidatorId{v}] = {0, v % 3, 0};
  }
  const auto c = evaluate_conditions(p, AnalysisParams{});
  const auto &hosted = c.at(ValidatorId{0});
  EXPECT_TRUE(hosted.c4);
  EXPECT_TRUE(hosted.all());
  // reference statistics
  double mean = 32.0;
  for (uint32_t v = 1; v <= 500; ++v) {
    mean += v % 3;
  }
  mean /= 501;
  double sq = (32 - mean) * (32 - mean);
  for (uint32_t v = 1; v <= 500; ++v) {
    sq += (v % 3 - mean) * (v % 3 - mean);
  }
  EXPECT_NEAR(hosted.mean_peer, mean, 1e-12);
  EXPECT_NEAR(hosted.std_peer, std::sqrt(sq / 501), 1e-12);
  EXPECT_FALSE(c.at(ValidatorId{2}).c4);
}

TEST(Conditions, SmallPopulationSkipsC4) {
  auto p = qualified_profile();
  for (uint32_t v = 0; v < 9; ++v) {
    p.per_validator[ValidatorId{v}] = {0, 64, 0};
  }
  for (const auto &[v, cv] : evaluate_conditions(p, AnalysisParams{})) {
    EXPECT_TRUE(cv.c4);
  }
}

TEST(Conditions, C3ScalesWithDivisor) {
  auto p = qualified_profile(2.0, 100);
  p.per_validator[ValidatorId{1}] = {0, 10, 0};
  p.per_validator[ValidatorId{2}] = {0, 9, 0};
  AnalysisParams params;
  auto c = evaluate_conditions(p, params);
  EXPECT_EQ(c.at(ValidatorId{1}).expected, 100U);
  EXPECT_TRUE(c.at(ValidatorId{1}).c3);
  EXPECT_FALSE(c.at(ValidatorId{2}).c3);
  params.c3_divisor = 20;
  c = evaluate_conditions(p, params);
  EXPECT_TRUE(c.at(ValidatorId{2}).c3);
  params.c3_divisor = 5;
  c = evaluate_conditions(p, params);
  EXPECT_FALSE(c.at(ValidatorId{1}).c3);
}

TEST(Conditions, RequiresQualifiedPeer) {
  PeerProfile p;
  EXPECT_EQ(error_code([&] { evaluate_conditions(p, AnalysisParams{}); }), "not-qualified");
  EXPECT_EQ(error_code([&] { classify_peer(p, {}); }), "not-qualified");
}

TEST(Classify, Categories) {
  auto all = qualified_profile(64.0);
  all.per_validator[ValidatorId{1}] = {0, 64, 0};
  EXPECT_EQ(classify_peer(all, evaluate_conditions(all, AnalysisParams{})),
            (PeerClassification{PeerCategory::kAllSubnets, {}}));

  auto relay = qualified_profile();
  relay.per_validator[ValidatorId{1}] = {30, 0, 0};
  relay.per_validator[ValidatorId{2}] = {12, 0, 0};
  EXPECT_EQ(classify_peer(relay, evaluate_conditions(relay, AnalysisParams{})).category,
            PeerCategory::kNoValidators);

  auto rest = qualified_profile();
  rest.per_validator[ValidatorId{1}] = {30, 1, 0};
  EXPECT_EQ(classify_peer(rest, evaluate_conditions(rest, AnalysisParams{})).category, PeerCategory::kRest);

  auto host = qualified_profile();
  for (uint32_t v = 1; v <= 4; ++v) {
    host.per_validator[ValidatorId{v}] = {1, 63, 0};
  }
  const auto pc = classify_peer(host, evaluate_conditions(host, AnalysisParams{}));
  EXPECT_EQ(pc.category, PeerCategory::kDeanonymized);
  EXPECT_EQ(pc.hosted, (std::vector<ValidatorId>{ValidatorId{1}, ValidatorId{2}, ValidatorId{3}, ValidatorId{4}}));
}

TEST(Deanonymize, EmptyStore) {
  const auto report = deanonymize(ObservationStore{}, AnalysisParams{});
  EXPECT_TRUE(report.per_peer.empty());
  EXPECT_TRUE(report.diagnostics.empty());
}

// Ideal peer hosting {v1..v4} from a small simulation.
TEST(Deanonymize, IdealPeerFromSimulation) {
  ScenarioConfig c;
  c.node_count = 30;
  c.validator_count = 300;
  c.epochs = 40;
  c.seed = 5;
  c.observer_peer_cap = 10;
  c.observer_pinned_peers = {NodeId{4}};
  c.dynamic_subscriptions = false;
  c.observer_in_fanout = 1.0;
  c.analysis.knowledge_delay_slots = 0;
  NodeOverride o;
  o.node = NodeId{4};
  o.validators = std::vector<ValidatorId>{ValidatorId{1}, ValidatorId{2}, ValidatorId{3}, ValidatorId{4}};
  c.nodes = {o};
  const auto net = build_topology(c, c.seed);
  const auto logs = run_epochs(net, c.epochs, c.seed);
  const auto &log = logs.observers[0];
  const ObservationStore store(log.receipts, log.subscriptions, log.connections);
  const auto report = deanonymize(store, c.analysis);
  const auto &pc = report.per_peer.at(NodeId{4});
  EXPECT_EQ(pc.category, PeerCategory::kDeanonymized);
  EXPECT_EQ(pc.hosted, *o.validators);
}

TEST(Deanonymize, AllSubnetsPeerLocatesNothing) {
  ScenarioConfig c;
  c.node_count = 30;
  c.validator_count = 300;
  c.epochs = 40;
  c.seed = 6;
  c.observer_peer_cap = 10;
  c.observer_pinned_peers = {NodeId{2}};
  c.dynamic_subscriptions = false;
  NodeOverride o;
  o.node = NodeId{2};
  o.hosted = 20;
  o.subscribes_all = true;
  c.nodes = {o};
  const auto net = build_topology(c, c.seed);
  const auto logs = run_epochs(net, c.epochs, c.seed);
  const auto &log = logs.observers[0];
  const auto report = deanonymize(ObservationStore(log.receipts, log.subscriptions, log.connections), c.analysis);
  EXPECT_EQ(report.per_peer.at(NodeId{2}).category, PeerCategory::kAllSubnets);
  for (const auto &[peer, pc] : report.per_peer) {
    for (auto v : pc.hosted) {
      EXPECT_FALSE(std::binary_search(net.nodes[2].hosted_validators.begin(), net.nodes[2].hosted_validators.end(), v)
                   && peer == NodeId{2});
    }
  }
}

TEST(Report, RoundTripAndErrors) {
  DeanonReport r;
  r.per_peer[NodeId{3}] = {PeerCategory::kDeanonymized, {ValidatorId{1}, ValidatorId{5}}};
  r.per_peer[NodeId{4}] = {PeerCategory::kNoValidators, {}};
  r.per_peer[NodeId{8}] = {PeerCategory::kAllSubnets, {}};
  r.per_peer[NodeId{9}] = {PeerCategory::kRest, {}};
  std::stringstream s;
  write_report(s, r);
  const auto back = read_report(s, "observer-0");
  EXPECT_EQ(back.per_peer, r.per_peer);
  EXPECT_EQ(back.peers_in(PeerCategory::kDeanonymized), std::vector<NodeId>{NodeId{3}});

  std::istringstream bad("3,deanonymized,2,1\n");
  EXPECT_THROW(read_report(bad, "x"), Error);
  std::istringstream unknown("3,ghost,0\n");
  EXPECT_THROW(read_report(unknown, "x"), Error);
}
