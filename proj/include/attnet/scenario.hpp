/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "deanonymizer.hpp"
#include "error.hpp"
#include "gossip_sim.hpp"
#include "observation.hpp"
#include "verifier.hpp"

namespace attnet {

  using json = nlohmann::json;
  namespace fs = std::filesystem;

  // --- config (de)serialization ----------------------------------------------

  namespace detail {

    inline void reject_unknown(const json &obj, const std::set<std::string> &allowed, const std::string &where) {
      if (!obj.is_object()) {
        throw Error("invalid-config", where + " must be an object");
      }
      for (const auto &[key, value] : obj.items()) {
        if (!allowed.contains(key)) {
          throw Error("unknown-key", where.empty() ? key : where + "." + key);
        }
      }
    }

    template <typename T>
    void read_opt(const json &obj, const char *key, T &out) {
      if (auto it = obj.find(key); it != obj.end()) {
        try {
          out = it->get<T>();
        } catch (const json::exception &e) {
          throw Error("invalid-config", std::string(key) + ": " + e.what());
        }
      }
    }

    template <typename T>
    void read_required(const json &obj, const char *key, T &out) {
      if (!obj.contains(key)) {
        throw Error("invalid-config", std::string("missing required key ") + key);
      }
      read_opt(obj, key, out);
    }

  }  // namespace detail

  inline ScenarioConfig parse_config(const json &j) {
    using detail::read_opt;
    detail::reject_unknown(j,
                           {"node_count", "validator_count", "epochs", "seed", "observers",
                            "observer_peer_cap", "observer_pinned_peers", "mesh_degree", "fanout_size", "ticks_per_slot",
                            "committees_per_slot", "aggregator_target", "default_static_subnets",
                            "subscribes_all_fraction", "hosting_fraction", "hosting_spread",
                            "dynamic_subscriptions", "noise", "heuristics", "labels", "verify", "nodes"},
                           "");
    ScenarioConfig c;
    detail::read_required(j, "node_count", c.node_count);
    detail::read_required(j, "validator_count", c.validator_count);
    detail::read_required(j, "epochs", c.epochs);
    detail::read_required(j, "seed", c.seed);
    read_opt(j, "observers", c.observers);
    read_opt(j, "observer_peer_cap", c.observer_peer_cap);
    {
      std::vector<uint32_t> pinned;
      read_opt(j, "observer_pinned_peers", pinned);
      for (auto p : pinned) {
        c.observer_pinned_peers.push_back(NodeId{p});
      }
    }
    read_opt(j, "mesh_degree", c.mesh_degree);
    if (j.contains("fanout_size") && !j.at("fanout_size").is_null()) {
      uint32_t f = 0;
      read_opt(j, "fanout_size", f);
      c.fanout_size = f;
    }
    read_opt(j, "ticks_per_slot", c.ticks_per_slot);
    read_opt(j, "committees_per_slot", c.committees_per_slot);
    read_opt(j, "aggregator_target", c.aggregator_target);
    read_opt(j, "default_static_subnets", c.default_static_subnets);
    read_opt(j, "subscribes_all_fraction", c.subscribes_all_fraction);
    read_opt(j, "hosting_fraction", c.hosting_fraction);
    read_opt(j, "hosting_spread", c.hosting_spread);
    read_opt(j, "dynamic_subscriptions", c.dynamic_subscriptions);
    if (auto it = j.find("noise"); it != j.end()) {
      detail::reject_unknown(*it, {"edge_drop", "observer_in_fanout", "knowledge_delay_slots", "origin_first"},
                             "noise");
      read_opt(*it, "edge_drop", c.edge_drop);
      read_opt(*it, "observer_in_fanout", c.observer_in_fanout);
      read_opt(*it, "knowledge_delay_slots", c.analysis.knowledge_delay_slots);
      read_opt(*it, "origin_first", c.origin_first);
    }
    if (auto it = j.find("heuristics"); it != j.end()) {
      detail::reject_unknown(*it, {"c1_slack", "c3_divisor", "c4_sigma", "c4_min_population"}, "heuristics");
      read_opt(*it, "c1_slack", c.analysis.c1_slack);
      read_opt(*it, "c3_divisor", c.analysis.c3_divisor);
      read_opt(*it, "c4_sigma", c.analysis.c4_sigma);
      read_opt(*it, "c4_min_population", c.analysis.c4_min_population);
    }
    if (auto it = j.find("labels"); it != j.end()) {
      detail::reject_unknown(*it, {"coverage", "noise", "deposit_coverage", "fee_coverage", "shuffle"}, "labels");
      read_opt(*it, "coverage", c.labels.coverage);
      read_opt(*it, "noise", c.labels.noise);
      read_opt(*it, "deposit_coverage", c.labels.deposit_coverage);
      read_opt(*it, "fee_coverage", c.labels.fee_coverage);
      read_opt(*it, "shuffle", c.labels.shuffle);
    }
    if (auto it = j.find("verify"); it != j.end()) {
      detail::reject_unknown(*it, {"i1_exception_classes", "operator_allow_list", "service_provider_min_size"},
                             "verify");
      read_opt(*it, "i1_exception_classes", c.verify.i1_exception_classes);
      read_opt(*it, "operator_allow_list", c.verify.operator_allow_list);
      read_opt(*it, "service_provider_min_size", c.verify.service_provider_min_size);
    }
    if (auto it = j.find("nodes"); it != j.end()) {
      if (!it->is_array()) {
        throw Error("invalid-config", "nodes must be an array");
      }
      for (size_t i = 0; i < it->size(); ++i) {
        const auto &nj = (*it)[i];
        const std::string where = "nodes[" + std::to_string(i) + "]";
        detail::reject_unknown(nj,
                               {"node", "hosted", "validators", "static_subnet_count", "subscribes_all",
                                "relay_clients", "online", "entity", "entity_class"},
                               where);
        NodeOverride o;
        uint32_t id = 0;
        detail::read_required(nj, "node", id);
        o.node = NodeId{id};
        if (nj.contains("hosted")) {
          uint32_t h = 0;
          read_opt(nj, "hosted", h);
          o.hosted = h;
        }
        if (nj.contains("validators")) {
          std::vector<uint32_t> ids;
          read_opt(nj, "validators", ids);
          std::vector<ValidatorId> vs;
          for (auto v : ids) {
            vs.push_back(ValidatorId{v});
          }
          o.validators = std::move(vs);
        }
        if (nj.contains("static_subnet_count")) {
          uint32_t s = 0;
          read_opt(nj, "static_subnet_count", s);
          o.static_subnet_count = s;
        }
        if (nj.contains("subscribes_all")) {
          bool b = false;
          read_opt(nj, "subscribes_all", b);
          o.subscribes_all = b;
        }
        std::vector<uint32_t> relays;
        read_opt(nj, "relay_clients", relays);
        for (auto r : relays) {
          o.relay_clients.push_back(NodeId{r});
        }
        read_opt(nj, "online", o.online);
        if (nj.contains("entity")) {
          std::string e;
          read_opt(nj, "entity", e);
          o.entity = e;
        }
        if (nj.contains("entity_class")) {
          std::string e;
          read_opt(nj, "entity_class", e);
          o.entity_class = e;
        }
        c.nodes.push_back(std::move(o));
      }
    }
    c.analysis.ticks_per_slot = c.ticks_per_slot;
    return c;
  }

  /// Canonical form with every key spelled out; parse_config(to_json(c)) == c.
  inline json to_json(const ScenarioConfig &c) {
    json j;
    j["node_count"] = c.node_count;
    j["validator_count"] = c.validator_count;
    j["epochs"] = c.epochs;
    j["seed"] = c.seed;
    j["observers"] = c.observers;
    j["observer_peer_cap"] = c.observer_peer_cap;
    {
      std::vector<uint32_t> pinned;
      for (auto p : c.observer_pinned_peers) {
        pinned.push_back(p.value);
      }
      j["observer_pinned_peers"] = pinned;
    }
    j["mesh_degree"] = c.mesh_degree;
    j["fanout_size"] = c.fanout_size ? json(*c.fanout_size) : json(nullptr);
    j["ticks_per_slot"] = c.ticks_per_slot;
    j["committees_per_slot"] = c.committees_per_slot;
    j["aggregator_target"] = c.aggregator_target;
    j["default_static_subnets"] = c.default_static_subnets;
    j["subscribes_all_fraction"] = c.subscribes_all_fraction;
    j["hosting_fraction"] = c.hosting_fraction;
    j["hosting_spread"] = c.hosting_spread;
    j["dynamic_subscriptions"] = c.dynamic_subscriptions;
    j["noise"] = {{"edge_drop", c.edge_drop},
                  {"observer_in_fanout", c.observer_in_fanout},
                  {"knowledge_delay_slots", c.analysis.knowledge_delay_slots},
                  {"origin_first", c.origin_first}};
    j["heuristics"] = {{"c1_slack", c.analysis.c1_slack},
                       {"c3_divisor", c.analysis.c3_divisor},
                       {"c4_sigma", c.analysis.c4_sigma},
                       {"c4_min_population", c.analysis.c4_min_population}};
    j["labels"] = {{"coverage", c.labels.coverage},
                   {"noise", c.labels.noise},
                   {"deposit_coverage", c.labels.deposit_coverage},
                   {"fee_coverage", c.labels.fee_coverage},
                   {"shuffle", c.labels.shuffle}};
    j["verify"] = {{"i1_exception_classes", c.verify.i1_exception_classes},
                   {"operator_allow_list", c.verify.operator_allow_list},
                   {"service_provider_min_size", c.verify.service_provider_min_size}};
    json nodes = json::array();
    for (const auto &o : c.nodes) {
      json nj;
      nj["node"] = o.node.value;
      if (o.hosted) {
        nj["hosted"] = *o.hosted;
      }
      if (o.validators) {
        std::vector<uint32_t> ids;
        for (auto v : *o.validators) {
          ids.push_back(v.value);
        }
        nj["validators"] = ids;
      }
      if (o.static_subnet_count) {
        nj["static_subnet_count"] = *o.static_subnet_count;
      }
      if (o.subscribes_all) {
        nj["subscribes_all"] = *o.subscribes_all;
      }
      if (!o.relay_clients.empty()) {
        std::vector<uint32_t> ids;
        for (auto r : o.relay_clients) {
          ids.push_back(r.value);
        }
        nj["relay_clients"] = ids;
      }
      if (!o.online.empty()) {
        nj["online"] = o.online;
      }
      if (o.entity) {
        nj["entity"] = *o.entity;
      }
      if (o.entity_class) {
        nj["entity_class"] = *o.entity_class;
      }
      nodes.push_back(std::move(nj));
    }
    j["nodes"] = std::move(nodes);
    return j;
  }

  inline ScenarioConfig load_config(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
      throw Error("io-error", "cannot open " + path.string());
    }
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error &e) {
      throw Error("parse-error", path.string() + ": " + e.what());
    }
    return parse_config(j);
  }

  inline uint64_t fnv1a64(std::string_view data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : data) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  inline std::string config_hash(const ScenarioConfig &c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
    return buf;
  }

  // --- labels ---------------------------------------------------------------

  /// Synthetic labels: each hosting node is one entity; a validator is
  /// labeled with probability `coverage`, and a labeled validator gets a
  /// random other entity with probability `noise`.
  inline EntityLabelSet synthesize_labels(const Network &net, const LabelSpec &spec, uint64_t seed) {
    std::vector<uint32_t> entity_nodes;
    for (uint32_t i = 0; i < net.node_count(); ++i) {
      if (!net.nodes[i].hosted_validators.empty()) {
        entity_nodes.push_back(i);
      }
    }
    EntityLabelSet out;
    for (size_t oi = 0; oi < entity_nodes.size(); ++oi) {
      const auto &node = net.nodes[entity_nodes[oi]];
      for (auto v : node.hosted_validators) {
        Rng rng(seed, Stream::kLabels, {v.value});
        ValidatorLabel l;
        const NodeConfig *owner = &node;
        if (rng.chance(spec.coverage)) {
          if (entity_nodes.size() > 1 && rng.chance(spec.noise)) {
            // any entity but the true owner
            auto j = static_cast<size_t>(rng.below(entity_nodes.size() - 1));
            owner = &net.nodes[entity_nodes[j >= oi ? j + 1 : j]];
          }
          l.entity = owner->entity;
          l.entity_class = owner->entity_class;
        }
        if (rng.chance(spec.deposit_coverage)) {
          l.deposit_address = "dep-" + node.entity;
        }
        if (rng.chance(spec.fee_coverage)) {
          l.fee_recipient = "fee-" + node.entity;
        }
        if (!l.entity.empty() || !l.deposit_address.empty() || !l.fee_recipient.empty()) {
          out.labels.emplace(v, std::move(l));
        }
      }
    }
    return out;
  }

  // --- scoring --------------------------------------------------------------

  using GroundTruth = std::map<NodeId, std::vector<ValidatorId>>;

  struct PeerScore {
    NodeId peer;
    PeerCategory category = PeerCategory::kRest;
    size_t hosted = 0;
    size_t truth = 0;
    size_t correct = 0;
    double precision = 1.0;
    double recall = 1.0;
  };

  struct ScoreCard {
    std::vector<PeerScore> peers;
    double micro_precision = 1.0;
    // over validators hosted on qualified peers that are not all-subnets
    double micro_recall = 0.0;
    // over validators hosted on every qualified peer
    double coverage_recall = 0.0;
    size_t located = 0;
    size_t located_correct = 0;
    size_t eligible_truth = 0;
    size_t qualified_truth = 0;
    // (category, truth non-empty) -> peer count
    std::map<std::pair<std::string, bool>, size_t> confusion;
    std::vector<std::pair<size_t, double>> cdf;
    std::vector<std::pair<NodeId, ValidatorId>> false_positives;
  };

  /// Empirical CDF of hosted-set sizes over deanonymized peers.
  inline std::vector<std::pair<size_t, double>> validators_per_peer_cdf(const DeanonReport &report) {
    std::vector<size_t> sizes;
    for (const auto &[peer, pc] : report.per_peer) {
      if (pc.category == PeerCategory::kDeanonymized) {
        sizes.push_back(pc.hosted.size());
      }
    }
    std::sort(sizes.begin(), sizes.end());
    std::vector<std::pair<size_t, double>> points;
    for (size_t i = 0; i < sizes.size(); ++i) {
      if (i + 1 == sizes.size() || sizes[i + 1] != sizes[i]) {
        points.emplace_back(sizes[i], static_cast<double>(i + 1) / static_cast<double>(sizes.size()));
      }
    }
    return points;
  }

  inline ScoreCard score_against_ground_truth(const DeanonReport &report, const GroundTruth &truth) {
    ScoreCard card;
    for (const auto &[peer, pc] : report.per_peer) {
      auto it = truth.find(peer);
      if (it == truth.end()) {
        throw Error("truth-gap", std::to_string(peer.value));
      }
      std::vector<ValidatorId> t = it->second;
      std::sort(t.begin(), t.end());
      std::vector<ValidatorId> both;
      std::set_intersection(pc.hosted.begin(), pc.hosted.end(), t.begin(), t.end(), std::back_inserter(both));
      PeerScore s;
      s.peer = peer;
      s.category = pc.category;
      s.hosted = pc.hosted.size();
      s.truth = t.size();
      s.correct = both.size();
      s.precision = s.hosted == 0 ? 1.0 : static_cast<double>(s.correct) / static_cast<double>(s.hosted);
      s.recall = s.truth == 0 ? 1.0 : static_cast<double>(s.correct) / static_cast<double>(s.truth);
      for (auto v : pc.hosted) {
        if (!std::binary_search(t.begin(), t.end(), v)) {
          card.false_positives.emplace_back(peer, v);
        }
      }
      card.located += s.hosted;
      card.located_correct += s.correct;
      card.qualified_truth += s.truth;
      if (pc.category != PeerCategory::kAllSubnets) {
        card.eligible_truth += s.truth;
      }
      card.confusion[{to_string(pc.category), s.truth > 0}] += 1;
      card.peers.push_back(s);
    }
    card.micro_precision =
        card.located == 0 ? 1.0 : static_cast<double>(card.located_correct) / static_cast<double>(card.located);
    size_t eligible_correct = 0;
    for (const auto &s : card.peers) {
      if (s.category != PeerCategory::kAllSubnets) {
        eligible_correct += s.correct;
      }
    }
    card.micro_recall = card.eligible_truth == 0
                          ? 0.0
                          : static_cast<double>(eligible_correct) / static_cast<double>(card.eligible_truth);
    card.coverage_recall = card.qualified_truth == 0 ? 0.0
                                                     : static_cast<double>(card.located_correct)
                                                           / static_cast<double>(card.qualified_truth);
    card.cdf = validators_per_peer_cdf(report);
    return card;
  }

  inline json to_json(const ScoreCard &card) {
    json j;
    j["micro_precision"] = card.micro_precision;
    j["micro_recall"] = card.micro_recall;
    j["coverage_recall"] = card.coverage_recall;
    j["located"] = card.located;
    j["located_correct"] = card.located_correct;
    j["eligible_truth"] = card.eligible_truth;
    j["false_positives"] = card.false_positives.size();
    json conf = json::object();
    for (const auto &[key, count] : card.confusion) {
      conf[key.first + (key.second ? "/hosting" : "/not_hosting")] = count;
    }
    j["confusion"] = conf;
    return j;
  }

  // --- run directories --------------------------------------------------------

  namespace detail {

    inline std::ofstream open_out(const fs::path &p) {
      std::ofstream out(p, std::ios::binary | std::ios::trunc);
      if (!out) {
        throw Error("io-error", "cannot write " + p.string());
      }
      return out;
    }

    inline std::ifstream open_in(const fs::path &p) {
      std::ifstream in(p, std::ios::binary);
      if (!in) {
        throw Error("io-error", "cannot read " + p.string());
      }
      return in;
    }

    inline std::vector<fs::path> observer_dirs(const fs::path &run_dir) {
      std::vector<fs::path> dirs;
      for (uint32_t k = 0;; ++k) {
        const auto d = run_dir / ("observer-" + std::to_string(k));
        if (!fs::is_directory(d)) {
          break;
        }
        dirs.push_back(d);
      }
      if (dirs.empty()) {
        throw Error("io-error", "no observer-* directories in " + run_dir.string());
      }
      return dirs;
    }

    inline json read_summary(const fs::path &run_dir) {
      const auto p = run_dir / "summary.json";
      if (!fs::exists(p)) {
        return json::object();
      }
      auto in = open_in(p);
      return json::parse(in);
    }

    inline void write_summary_section(const fs::path &run_dir, const std::string &key, json value) {
      auto summary = read_summary(run_dir);
      summary[key] = std::move(value);
      auto out = open_out(run_dir / "summary.json");
      out << summary.dump(2) << '\n';
    }

  }  // namespace detail

  inline std::string run_dir_name(const ScenarioConfig &c) {
    return "run-" + std::to_string(c.seed) + "-" + config_hash(c);
  }

  struct SimulationBundle {
    Network network;
    ObservationLogs logs;
    EntityLabelSet labels;
  };

  inline SimulationBundle simulate_in_memory(const ScenarioConfig &config) {
    SimulationBundle b{build_topology(config, config.seed), {}, {}};
    b.logs = run_epochs(b.network, config.epochs, config.seed);
    // every node appears in the truth map, including nodes hosting nothing
    for (uint32_t i = 0; i < b.network.node_count(); ++i) {
      b.logs.ground_truth.try_emplace(NodeId{i});
    }
    b.labels = synthesize_labels(b.network, config.labels, config.seed);
    return b;
  }

  /// Writes config, truth, labels and every observer's three logs into
  /// `<out_root>/run-<seed>-<hash>` and returns that directory.
  inline fs::path simulate(const ScenarioConfig &config, const fs::path &out_root) {
    const auto bundle = simulate_in_memory(config);
    const fs::path dir = out_root / run_dir_name(config);
    fs::create_directories(dir);
    {
      auto out = detail::open_out(dir / "config.json");
      out << to_json(config).dump(2) << '\n';
    }
    {
      auto out = detail::open_out(dir / "truth.csv");
      write_ground_truth(out, bundle.logs.ground_truth);
    }
    {
      auto out = detail::open_out(dir / "labels.csv");
      write_labels(out, bundle.labels);
    }
    json obs = json::array();
    for (size_t k = 0; k < bundle.logs.observers.size(); ++k) {
      const auto &log = bundle.logs.observers[k];
      const fs::path od = dir / ("observer-" + std::to_string(k));
      fs::create_directories(od);
      auto r = detail::open_out(od / "receipts.csv");
      write_receipts(r, log.receipts);
      auto s = detail::open_out(od / "subscriptions.csv");
      write_subscriptions(s, log.subscriptions);
      auto c = detail::open_out(od / "connections.csv");
      write_connections(c, log.connections);
      obs.push_back({{"observer", log.observer.value},
                     {"receipts", log.receipts.size()},
                     {"connections", log.connections.size()}});
    }
    detail::write_summary_section(dir, "simulate",
                                  {{"config_hash", config_hash(config)},
                                   {"seed", config.seed},
                                   {"message_complexity_estimate", estimate_message_complexity(config)},
                                   {"observers", obs}});
    return dir;
  }

  inline ObservationStore load_store(const fs::path &observer_dir) {
    auto r = detail::open_in(observer_dir / "receipts.csv");
    auto s = detail::open_in(observer_dir / "subscriptions.csv");
    auto c = detail::open_in(observer_dir / "connections.csv");
    const auto receipts = read_receipts(r);
    const auto subs = read_subscriptions(s);
    const auto conns = read_connections(c);
    return ObservationStore(receipts, subs, conns);
  }

  /// Heuristic overrides given on the command line.
  struct ParamOverrides {
    std::optional<double> c1_slack;
    std::optional<double> c3_divisor;
    std::optional<double> c4_sigma;
    std::optional<uint32_t> knowledge_delay_slots;

    AnalysisParams apply(AnalysisParams p) const {
      p.c1_slack = c1_slack.value_or(p.c1_slack);
      p.c3_divisor = c3_divisor.value_or(p.c3_divisor);
      p.c4_sigma = c4_sigma.value_or(p.c4_sigma);
      p.knowledge_delay_slots = knowledge_delay_slots.value_or(p.knowledge_delay_slots);
      return p;
    }
  };

  inline AnalysisParams run_params(const fs::path &run_dir, const ParamOverrides &overrides) {
    AnalysisParams p;
    if (fs::exists(run_dir / "config.json")) {
      p = load_config(run_dir / "config.json").analysis;
    }
    return overrides.apply(p);
  }

  inline std::vector<DeanonReport> load_reports(const fs::path &run_dir) {
    std::vector<DeanonReport> reports;
    for (const auto &od : detail::observer_dirs(run_dir)) {
      auto in = detail::open_in(od / "deanon_report.csv");
      reports.push_back(read_report(in, od.filename().string()));
    }
    return reports;
  }

  /// Runs the heuristic pipeline over each observer's logs and writes
  /// `deanon_report.csv` and `diagnostics.csv` next to them.
  inline std::vector<DeanonReport> analyze(const fs::path &run_dir, const ParamOverrides &overrides = {}) {
    const auto params = run_params(run_dir, overrides);
    std::vector<DeanonReport> reports;
    json counts = json::array();
    for (const auto &od : detail::observer_dirs(run_dir)) {
      const auto store = load_store(od);
      auto report = deanonymize(store, params, od.filename().string());
      auto out = detail::open_out(od / "deanon_report.csv");
      write_report(out, report);
      auto diag = detail::open_out(od / "diagnostics.csv");
      write_diagnostics(diag, report);
      json cat = json::object();
      for (auto c : {PeerCategory::kDeanonymized, PeerCategory::kNoValidators, PeerCategory::kAllSubnets,
                     PeerCategory::kRest}) {
        cat[to_string(c)] = report.peers_in(c).size();
      }
      counts.push_back({{"observer", report.observer}, {"qualified_peers", report.per_peer.size()},
                        {"categories", cat}});
      reports.push_back(std::move(report));
    }
    detail::write_summary_section(run_dir, "analyze",
                                  {{"c1_slack", params.c1_slack},
                                   {"c3_divisor", params.c3_divisor},
                                   {"c4_sigma", params.c4_sigma},
                                   {"knowledge_delay_slots", params.knowledge_delay_slots},
                                   {"observers", counts}});
    return reports;
  }

  struct VerifyOutcome {
    std::vector<std::map<NodeId, ConsistencyVerdict>> verdicts;
    std::vector<ServiceProviderResult> providers;
    std::map<ValidatorId, std::set<NodeId>> uniqueness;
    std::optional<AgreementResult> agreement;
    size_t located = 0;
    size_t located_excluding_providers = 0;
    size_t non_unique = 0;
  };

  inline VerifyOutcome verify_reports(std::span<const DeanonReport> reports, const EntityLabelSet &labels,
                                      const VerifyParams &params) {
    VerifyOutcome out;
    std::set<ValidatorId> located;
    std::set<ValidatorId> kept;
    for (const auto &r : reports) {
      auto verdicts = verdicts_for(r, labels, params);
      auto providers = detect_service_providers(r, verdicts, params.service_provider_min_size);
      for (const auto &[peer, pc] : r.per_peer) {
        for (auto v : pc.hosted) {
          located.insert(v);
          if (!providers.flagged.contains(peer)) {
            kept.insert(v);
          }
        }
      }
      out.verdicts.push_back(std::move(verdicts));
      out.providers.push_back(std::move(providers));
    }
    out.uniqueness = uniqueness_report(reports);
    if (reports.size() >= 2) {
      out.agreement = cross_observer_agreement(reports);
    }
    out.located = located.size();
    out.located_excluding_providers = kept.size();
    for (const auto &[v, peers] : out.uniqueness) {
      out.non_unique += peers.size() > 1 ? 1 : 0;
    }
    return out;
  }

  inline VerifyOutcome verify(const fs::path &run_dir, const fs::path &labels_path) {
    VerifyParams params;
    if (fs::exists(run_dir / "config.json")) {
      params = load_config(run_dir / "config.json").verify;
    }
    auto lin = detail::open_in(labels_path);
    const auto labels = read_labels(lin);
    const auto reports = load_reports(run_dir);
    auto outcome = verify_reports(reports, labels, params);
    const auto dirs = detail::observer_dirs(run_dir);
    json per_observer = json::array();
    for (size_t k = 0; k < reports.size(); ++k) {
      auto vout = detail::open_out(dirs[k] / "verdicts.csv");
      write_verdicts(vout, outcome.verdicts[k]);
      const auto &sp = outcome.providers[k];
      auto sout = detail::open_out(dirs[k] / "service_providers.csv");
      sout << "# peer_i,peer_j,overlap (|H_i & H_j| / |H_j|)\n";
      for (size_t i = 0; i < sp.order.size(); ++i) {
        for (size_t j = 0; j < sp.order.size(); ++j) {
          sout << sp.order[i].value << ',' << sp.order[j].value << ',' << csv::fixed(sp.overlap[i][j]) << '\n';
        }
      }
      std::map<std::string, size_t> tally;
      for (const auto &[peer, v] : outcome.verdicts[k]) {
        tally[to_string(v.verdict)] += 1;
      }
      std::vector<uint32_t> flagged;
      for (auto p : sp.flagged) {
        flagged.push_back(p.value);
      }
      per_observer.push_back({{"observer", reports[k].observer}, {"verdicts", tally}, {"service_providers", flagged}});
    }
    {
      auto uout = detail::open_out(run_dir / "uniqueness.csv");
      uout << "# validator,peer_count,peers...\n";
      for (const auto &[v, peers] : outcome.uniqueness) {
        uout << v.value << ',' << peers.size();
        for (auto p : peers) {
          uout << ',' << p.value;
        }
        uout << '\n';
      }
    }
    json section{{"observers", per_observer},
                 {"located", outcome.located},
                 {"located_excluding_service_providers", outcome.located_excluding_providers},
                 {"non_unique", outcome.non_unique}};
    if (outcome.agreement) {
      section["agreement"] = {{"exact_match_rate", outcome.agreement->exact_match_rate},
                              {"mean_overlap", outcome.agreement->mean_overlap},
                              {"peers_compared", outcome.agreement->peers_compared}};
    }
    detail::write_summary_section(run_dir, "verify", section);
    return outcome;
  }

  /// Writes each observer's validators-per-peer CDF (`cdf.csv`).
  inline void report(const fs::path &run_dir) {
    const auto reports = load_reports(run_dir);
    const auto dirs = detail::observer_dirs(run_dir);
    json section = json::array();
    for (size_t k = 0; k < reports.size(); ++k) {
      const auto cdf = validators_per_peer_cdf(reports[k]);
      auto out = detail::open_out(dirs[k] / "cdf.csv");
      out << "# hosted_count,cumulative_fraction\n";
      for (const auto &[count, frac] : cdf) {
        out << count << ',' << csv::fixed(frac) << '\n';
      }
      json cat = json::object();
      for (auto c : {PeerCategory::kDeanonymized, PeerCategory::kNoValidators, PeerCategory::kAllSubnets,
                     PeerCategory::kRest}) {
        cat[to_string(c)] = reports[k].peers_in(c).size();
      }
      section.push_back({{"observer", reports[k].observer}, {"categories", cat}, {"cdf_points", cdf.size()}});
    }
    detail::write_summary_section(run_dir, "report", section);
  }

  /// Scores each observer's report against `truth.csv` (`scorecard.csv`).
  inline std::vector<ScoreCard> score(const fs::path &run_dir) {
    auto tin = detail::open_in(run_dir / "truth.csv");
    const auto truth = read_ground_truth(tin);
    const auto reports = load_reports(run_dir);
    const auto dirs = detail::observer_dirs(run_dir);
    std::vector<ScoreCard> cards;
    json section = json::array();
    for (size_t k = 0; k < reports.size(); ++k) {
      auto card = score_against_ground_truth(reports[k], truth);
      auto out = detail::open_out(dirs[k] / "scorecard.csv");
      out << "# peer,category,hosted,truth,correct,precision,recall\n";
      for (const auto &s : card.peers) {
        out << s.peer.value << ',' << to_string(s.category) << ',' << s.hosted << ',' << s.truth << ','
            << s.correct << ',' << csv::fixed(s.precision) << ',' << csv::fixed(s.recall) << '\n';
      }
      auto j = to_json(card);
      j["observer"] = reports[k].observer;
      section.push_back(j);
      cards.push_back(std::move(card));
    }
    detail::write_summary_section(run_dir, "score", section);
    return cards;
  }

  /// The whole pipeline over a fresh run directory.
  inline fs::path run_scenario(const ScenarioConfig &config, const fs::path &out_root) {
    const auto dir = simulate(config, out_root);
    analyze(dir);
    verify(dir, dir / "labels.csv");
    report(dir);
    score(dir);
    return dir;
  }

}  // namespace attnet
