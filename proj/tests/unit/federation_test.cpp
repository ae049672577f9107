#include "fedstl/error.hpp"
#include "fedstl/federation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

namespace fedstl {
namespace {

RunConfig small_config(std::uint64_t seed = 3) {
  RunConfig c;
  c.seed = seed;
  c.n_clients = 6;
  c.n_groups = 2;
  c.n_clusters = 2;
  c.series_len = 80;
  c.input_len = 8;
  c.output_len = 2;
  c.rounds = 3;
  c.participation = 1.0;
  c.sample_windows = 8;
  c.seed_steps = 5;
  c.local_epochs = 1;
  c.cluster_epochs = 1;
  c.cluster_period = 1;
  c.batch_size = 16;
  return c;
}

// LinearAR with zero weights predicting `level` at every output step.
ModelState constant_model(const Arch& arch, double level) {
  ModelState m = ModelState::zeros(arch);
  std::fill(m.priv.begin(), m.priv.end(), level);
  return m;
}

ClientState client_with_property(int id, const Arch& arch, const std::string& formula) {
  ClientState c;
  c.id = id;
  for (int k = 0; k < 3; ++k) {
    c.sample.inputs.push_back(Trace::univariate("x", std::vector<double>(arch.input_len, 9.0)));
    c.sample.targets.push_back(Trace::univariate("x", std::vector<double>(arch.output_len, 9.0)));
  }
  c.sample_property.formula = parse(formula);
  c.sample_property.compiled = std::make_shared<const CompiledProperty>(
      c.sample_property.formula, std::vector<std::string>{"x"}, arch.output_len);
  c.sample_property.mined = true;
  return c;
}

TEST(Aggregate, WeightedMean) {
  const std::vector<double> a{1, 2}, b{3, 4};
  const auto out = aggregate({{a, 1.0}, {b, 3.0}});
  EXPECT_DOUBLE_EQ(out[0], 2.5);
  EXPECT_DOUBLE_EQ(out[1], 3.5);
  EXPECT_EQ(aggregate({{a, 7.0}}), a);
}

TEST(Aggregate, Errors) {
  const std::vector<double> a{1, 2}, b{3};
  EXPECT_THROW(aggregate({}), ShapeError);
  EXPECT_THROW(aggregate({{a, 1.0}, {b, 1.0}}), ShapeError);
  EXPECT_THROW(aggregate({{a, 0.0}}), ShapeError);
}

TEST(ClusterId, ConstantModels) {
  const Arch arch{ArchKind::LinearAR, 2, 2, 1, 0};
  std::vector<ClusterState> clusters{{0, constant_model(arch, 0.0), {}, {}},
                                     {1, constant_model(arch, 10.0), {}, {}}};
  ClientState c = client_with_property(0, arch, "G[0,1](x >= 8)");
  const Assignment a = cluster_id(clusters, {&c}, {-1});
  EXPECT_EQ(a.cluster_of[0], 1);
  ASSERT_EQ(a.losses[0].size(), 2u);
  EXPECT_DOUBLE_EQ(a.losses[0][0], 16.0);
  EXPECT_DOUBLE_EQ(a.losses[0][1], 0.0);
}

TEST(ClusterId, Ties) {
  const Arch arch{ArchKind::LinearAR, 2, 2, 1, 0};
  ClientState c = client_with_property(0, arch, "G[0,1](x >= 8)");
  std::vector<ClusterState> one{{0, constant_model(arch, -5.0), {}, {}}};
  EXPECT_EQ(cluster_id(one, {&c}, {-1}).cluster_of[0], 0);
  std::vector<ClusterState> same{{0, constant_model(arch, 3.0), {}, {}},
                                 {1, constant_model(arch, 3.0), {}, {}},
                                 {2, constant_model(arch, 3.0), {}, {}}};
  EXPECT_EQ(cluster_id(same, {&c}, {-1}).cluster_of[0], 0);
}

TEST(ClusterId, UnminedClientKeepsPrevious) {
  const Arch arch{ArchKind::LinearAR, 2, 2, 1, 0};
  std::vector<ClusterState> clusters{{0, constant_model(arch, 0.0), {}, {}},
                                     {1, constant_model(arch, 10.0), {}, {}}};
  ClientState c = client_with_property(1, arch, "G[0,1](x >= 8)");
  c.sample_property = Property{};
  Assignment a = cluster_id(clusters, {&c}, {-1, 1});
  EXPECT_EQ(a.cluster_of[1], 1);
  EXPECT_EQ(a.flagged, std::vector<int>{1});
  a = cluster_id(clusters, {&c}, {-1, -1});
  EXPECT_EQ(a.cluster_of[1], 0);
  EXPECT_THROW(cluster_id({}, {&c}, {-1, -1}), ConfigError);
}

TEST(Selection, CountOrderAndDeterminism) {
  RunConfig c = small_config();
  c.participation = 0.5;
  for (std::size_t round = 0; round < 20; ++round) {
    const auto ids = select_clients(c, 6, round);
    EXPECT_EQ(ids.size(), 3u);
    EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
    EXPECT_EQ(std::set<int>(ids.begin(), ids.end()).size(), ids.size());
    EXPECT_EQ(ids, select_clients(c, 6, round));
  }
  c.participation = 0.01;
  EXPECT_EQ(select_clients(c, 6, 0).size(), 1u);
}

TEST(Federation, RoundPartitionsSelectedClientsByArgmin) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RunConfig cfg = small_config(seed);
    const Dataset data = generate(cfg.gen_spec());
    FederationState s = init_federation(cfg, data);
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
      const RoundLog log = run_round(s);
      std::set<int> seen;
      std::size_t total = 0;
      for (const auto& cl : s.clusters) {
        for (int id : cl.members) {
          EXPECT_TRUE(seen.insert(id).second) << "client " << id << " in two clusters";
          EXPECT_EQ(s.identity[static_cast<std::size_t>(id)], cl.id);
        }
      }
      for (std::size_t n : log.cluster_sizes) total += n;
      EXPECT_EQ(total, log.selected.size());
      EXPECT_EQ(seen, std::set<int>(log.selected.begin(), log.selected.end()));
      ASSERT_TRUE(s.last_assignment.has_value());
      const Assignment& a = *s.last_assignment;
      for (std::size_t k = 0; k < a.losses.size(); ++k) {
        if (a.losses[k].empty()) continue;
        const auto best = std::min_element(a.losses[k].begin(), a.losses[k].end()) - a.losses[k].begin();
        EXPECT_EQ(a.cluster_of[static_cast<std::size_t>(log.selected[k])], best);
      }
    }
  }
}

TEST(Federation, PrivateHeadsStayOnClients) {
  RunConfig cfg = small_config();
  cfg.local_epochs = 0;
  cfg.cluster_epochs = 1;
  const Dataset data = generate(cfg.gen_spec());
  FederationState s = init_federation(cfg, data);
  for (auto& cl : s.clusters) std::fill(cl.model.priv.begin(), cl.model.priv.end(), 1e3);
  std::vector<std::vector<double>> heads;
  for (const auto& c : s.clients) heads.push_back(c.model.priv);
  run_round(s);
  run_round(s);
  for (std::size_t i = 0; i < s.clients.size(); ++i) EXPECT_EQ(s.clients[i].model.priv, heads[i]);
}

TEST(Federation, UnselectedClientsUntouched) {
  RunConfig cfg = small_config();
  cfg.participation = 0.34;
  const Dataset data = generate(cfg.gen_spec());
  FederationState s = init_federation(cfg, data);
  std::vector<ModelState> before;
  for (const auto& c : s.clients) before.push_back(c.model);
  const RoundLog log = run_round(s);
  for (std::size_t i = 0; i < s.clients.size(); ++i) {
    if (std::find(log.selected.begin(), log.selected.end(), static_cast<int>(i)) == log.selected.end()) {
      EXPECT_EQ(s.clients[i].model, before[i]);
    }
  }
}

TEST(Federation, DeterministicAcrossThreadCounts) {
  RunConfig cfg = small_config();
  const Dataset data = generate(cfg.gen_spec());
  FederationState a = init_federation(cfg, data);
  cfg.threads = 3;
  FederationState b = init_federation(cfg, data);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    run_round(a);
    run_round(b);
  }
  EXPECT_EQ(a.identity, b.identity);
  for (std::size_t j = 0; j < a.clusters.size(); ++j) EXPECT_EQ(a.clusters[j].model, b.clusters[j].model);
  for (std::size_t i = 0; i < a.clients.size(); ++i) EXPECT_EQ(a.clients[i].model, b.clients[i].model);
}

TEST(Federation, DegenerateConfigMatchesFedAvg) {
  RunConfig cfg = small_config();
  cfg.n_clusters = 1;
  cfg.lambda = 0.0;
  cfg.cluster_epochs = 0;
  cfg.local_epochs = 2;
  cfg.share_all = true;
  const Dataset data = generate(cfg.gen_spec());
  FederationState s = init_federation(cfg, data);
  FedAvgState avg = init_fedavg(cfg, data);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    run_round(s);
    run_fedavg_round(avg);
    EXPECT_EQ(s.clusters[0].model, avg.global) << "round " << r;
  }
}

TEST(Federation, RoundLimitAndSchemaCheck) {
  RunConfig cfg = small_config();
  cfg.rounds = 1;
  const Dataset data = generate(cfg.gen_spec());
  FederationState s = init_federation(cfg, data);
  run_round(s);
  EXPECT_THROW(run_round(s), Error);
  cfg.n_vars = 2;
  EXPECT_THROW(init_federation(cfg, data), ConfigError);
}

TEST(Evaluate, TeacherAlwaysSatisfies) {
  RunConfig cfg = small_config();
  const Dataset data = generate(cfg.gen_spec());
  FederationState s = init_federation(cfg, data);
  run_round(s);
  for (const auto& m : evaluate(s, Split::Test)) {
    EXPECT_EQ(m.rho_pct_teacher, 100.0) << "client " << m.id;
    EXPECT_GE(m.rho_pct, 0.0);
    EXPECT_LE(m.rho_pct, 100.0);
  }
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
  std::vector<int> hits(50, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 50);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw ShapeError("boom");
               }),
               ShapeError);
}

}  // namespace
}  // namespace fedstl
