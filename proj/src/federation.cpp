#include "fedstl/federation.hpp"

#include "fedstl/error.hpp"
#include "fedstl/rng.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace fedstl {

namespace {

constexpr std::uint64_t kTagInit = 10;
constexpr std::uint64_t kTagSelect = 11;
constexpr std::uint64_t kTagClientEpoch = 12;
constexpr std::uint64_t kTagClusterEpoch = 13;

std::pair<double, double> value_range(const std::vector<Trace>& traces) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Trace& t : traces) {
    for (double v : t.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return {lo, hi};
}

Batch take(const Batch& from, std::span<const std::size_t> idx) {
  Batch b;
  b.inputs.reserve(idx.size());
  b.targets.reserve(idx.size());
  for (std::size_t i : idx) {
    b.inputs.push_back(from.inputs[i]);
    b.targets.push_back(from.targets[i]);
  }
  return b;
}

// `epochs` passes over `data` in minibatches, reshuffled every epoch.
void train_epochs(ModelState& model, const Batch& data, const Property& property,
                  const RunConfig& config, std::size_t epochs, double lr, Scope scope,
                  Stream& order_rng) {
  const std::size_t n = data.inputs.size();
  if (n == 0) return;
  const Penalty penalty{property.compiled.get(), config.lambda};
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    for (std::size_t lo = 0; lo < n; lo += config.batch_size) {
      const std::size_t hi = std::min(n, lo + config.batch_size);
      Batch mb = take(data, std::span<const std::size_t>(order).subspan(lo, hi - lo));
      sgd_step(model, mb, penalty, lr, scope);
    }
  }
}

Batch head(const Batch& b, std::size_t count) {
  Batch out;
  count = std::min(count, b.inputs.size());
  out.inputs.assign(b.inputs.begin(), b.inputs.begin() + static_cast<std::ptrdiff_t>(count));
  out.targets.assign(b.targets.begin(), b.targets.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

double mean_property_loss(const ModelState& model, const Batch& sample, const Property& p) {
  double total = 0.0;
  for (const Trace& x : sample.inputs) {
    try {
      total += p.compiled->loss(forward(model, x));
    } catch (const InfeasibleError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return total / static_cast<double>(sample.inputs.size());
}

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  const std::size_t count = std::min(threads, n);
  workers.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

Property Property::mine(const std::vector<Trace>& targets, const RunConfig& config) {
  Property p;
  if (targets.empty()) return p;
  const auto& schema = targets.front().schema();
  const int horizon = static_cast<int>(targets.front().length());
  std::vector<Template> templates;
  for (int row : config.templates) {
    const int one[] = {row};
    try {
      auto built = builtin_templates(schema, horizon, one, config.template_options);
      for (auto& t : built) templates.push_back(std::move(t));
    } catch (const Error& e) {
      spdlog::debug("template row {} unavailable: {}", row, e.what());
    }
  }
  if (templates.empty()) return p;
  auto [lo, hi] = value_range(targets);
  double span = hi - lo;
  if (!(span > 0.0)) span = std::max(1.0, std::fabs(lo));
  ClientProperty cp = mine_client_property(targets, templates, config.tol_rel * span);
  if (cp.parts.empty()) return p;
  p.formula = cp.formula;
  p.compiled = std::make_shared<const CompiledProperty>(
      p.formula, schema, static_cast<std::size_t>(horizon),
      ProjectionOptions{config.delta_rel * span, config.clause_cap});
  p.mined = true;
  return p;
}

FederationState init_federation(const RunConfig& config, const Dataset& data) {
  config.validate();
  if (data.clients.empty()) throw ConfigError("no clients");
  FederationState s;
  s.config = config;
  s.arch = config.architecture();
  s.schema = data.clients.front().series.schema();
  if (s.schema.size() != config.n_vars) {
    throw ConfigError("data has " + std::to_string(s.schema.size()) + " variables, n_vars is " +
                      std::to_string(config.n_vars));
  }
  Stream init_rng(config.seed, {kTagInit});
  const ModelState base = ModelState::init(s.arch, init_rng);
  s.clients.resize(data.clients.size());
  parallel_for(data.clients.size(), config.threads, [&](std::size_t i) {
    ClientState& c = s.clients[i];
    c.id = static_cast<int>(i);
    c.data = std::make_shared<const ClientDataset>(data.clients[i]);
    if (c.data->series.schema() != s.schema) throw ConfigError("clients disagree on the schema");
    c.sample = head(c.data->train, config.sample_windows);
    c.property = Property::mine(c.data->train.targets, config);
    c.sample_property = Property::mine(c.sample.targets, config);
    c.model = base;
  });
  for (std::size_t j = 0; j < config.n_clusters; ++j) {
    s.clusters.push_back(ClusterState{static_cast<int>(j), base, {}, {}});
  }
  s.identity.assign(s.clients.size(), -1);
  return s;
}

Assignment cluster_id(const std::vector<ClusterState>& clusters,
                      const std::vector<const ClientState*>& selected,
                      const std::vector<int>& previous) {
  if (clusters.empty()) throw ConfigError("no clusters");
  Assignment a;
  a.cluster_of.assign(previous.size(), -1);
  a.losses.resize(selected.size());
  for (std::size_t k = 0; k < selected.size(); ++k) {
    const ClientState& c = *selected[k];
    const auto id = static_cast<std::size_t>(c.id);
    if (!c.sample_property.mined || c.sample.inputs.empty()) {
      a.cluster_of[id] = previous[id] >= 0 ? previous[id] : 0;
      a.flagged.push_back(c.id);
      continue;
    }
    int best = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (const ClusterState& cl : clusters) {
      const double loss = mean_property_loss(cl.model, c.sample, c.sample_property);
      a.losses[k].push_back(loss);
      if (loss < best_loss) {
        best_loss = loss;
        best = cl.id;
      }
    }
    a.cluster_of[id] = best;
  }
  return a;
}

std::vector<double> aggregate(
    const std::vector<std::pair<std::span<const double>, double>>& weighted) {
  if (weighted.empty()) throw ShapeError("aggregate needs at least one member");
  const std::size_t len = weighted.front().first.size();
  std::vector<double> sum(len, 0.0);
  double total = 0.0;
  for (const auto& [v, n] : weighted) {
    if (v.size() != len) throw ShapeError("aggregate: parameter vectors differ in length");
    if (!(n > 0.0)) throw ShapeError("aggregate: weights must be positive");
    for (std::size_t i = 0; i < len; ++i) sum[i] += n * v[i];
    total += n;
  }
  for (double& x : sum) x /= total;
  return sum;
}

std::vector<int> select_clients(const RunConfig& config, std::size_t n_clients, std::size_t round) {
  std::vector<int> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  Stream rng(config.seed, {kTagSelect, round});
  rng.shuffle(ids);
  ids.resize(config.selection_count(n_clients));
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

// Farthest-first: each next cluster is trained on the sample of the client
// worst served by the clusters seeded so far.
void seed_clusters(FederationState& s, const std::vector<const ClientState*>& selected) {
  std::vector<const ClientState*> candidates;
  for (const ClientState* c : selected) {
    if (c->sample_property.mined && !c->sample.inputs.empty()) candidates.push_back(c);
  }
  if (candidates.empty()) return;
  std::vector<bool> used(candidates.size(), false);
  std::vector<double> nearest(candidates.size(), std::numeric_limits<double>::infinity());
  std::size_t pick = 0;
  for (ClusterState& cl : s.clusters) {
    const ClientState& seed = *candidates[pick];
    used[pick] = true;
    const Penalty penalty{seed.sample_property.compiled.get(), s.config.lambda};
    for (std::size_t step = 0; step < s.config.seed_steps; ++step) {
      sgd_step(cl.model, seed.sample, penalty, s.config.cluster_lr, Scope::All);
    }
    spdlog::debug("cluster {} seeded from client {}", cl.id, seed.id);
    double far = -1.0;
    std::size_t next = candidates.size();
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (used[k]) continue;
      nearest[k] = std::min(nearest[k],
                            mean_property_loss(cl.model, candidates[k]->sample, candidates[k]->sample_property));
      if (nearest[k] > far) {
        far = nearest[k];
        next = k;
      }
    }
    if (next == candidates.size()) break;
    pick = next;
  }
  s.seeded = true;
}

}  // namespace

RoundLog run_round(FederationState& s) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig& cfg = s.config;
  if (s.round >= cfg.rounds) throw Error("all rounds already ran");
  RoundLog log;
  log.round = s.round;
  log.selected = select_clients(cfg, s.clients.size(), s.round);

  // Cluster identity: every selected client on clustering rounds, otherwise
  // only the ones never assigned.
  const bool period = s.round % cfg.cluster_period == 0;
  std::vector<const ClientState*> to_assign;
  for (int id : log.selected) {
    if (period || s.identity[static_cast<std::size_t>(id)] < 0) {
      to_assign.push_back(&s.clients[static_cast<std::size_t>(id)]);
    }
  }
  if (!to_assign.empty()) {
    if (!s.seeded && s.clusters.size() > 1) seed_clusters(s, to_assign);
    Assignment a = cluster_id(s.clusters, to_assign, s.identity);
    for (const ClientState* c : to_assign) {
      const auto id = static_cast<std::size_t>(c->id);
      s.identity[id] = a.cluster_of[id];
    }
    s.last_assignment = std::move(a);
    log.reclustered = true;
  }

  std::vector<std::vector<int>> members(s.clusters.size());
  for (int id : log.selected) members[static_cast<std::size_t>(s.identity[static_cast<std::size_t>(id)])].push_back(id);

  // Broadcast, then local epochs with the client property.
  for (int id : log.selected) {
    ClientState& c = s.clients[static_cast<std::size_t>(id)];
    const ClusterState& cl = s.clusters[static_cast<std::size_t>(s.identity[static_cast<std::size_t>(id)])];
    c.model.shared = cl.model.shared;
    if (cfg.share_all) c.model.priv = cl.model.priv;
  }
  parallel_for(log.selected.size(), cfg.threads, [&](std::size_t k) {
    ClientState& c = s.clients[static_cast<std::size_t>(log.selected[k])];
    Stream order(cfg.seed, {kTagClientEpoch, static_cast<std::uint64_t>(c.id), s.round});
    train_epochs(c.model, c.data->train, c.property, cfg, cfg.local_epochs, cfg.lr, Scope::All, order);
  });

  // Member aggregation, property refresh and cluster epochs.
  log.cluster_ms.assign(s.clusters.size(), 0.0);
  parallel_for(s.clusters.size(), cfg.threads, [&](std::size_t j) {
    const auto cluster_start = std::chrono::steady_clock::now();
    ClusterState& cl = s.clusters[j];
    const auto& ids = members[j];
    if (ids.empty()) return;
    std::vector<std::pair<std::span<const double>, double>> shared, priv;
    for (int id : ids) {
      const ClientState& c = s.clients[static_cast<std::size_t>(id)];
      const auto n = static_cast<double>(c.data->train.inputs.size());
      shared.emplace_back(c.model.shared, n);
      if (cfg.share_all) priv.emplace_back(c.model.priv, n);
    }
    cl.model.shared = aggregate(shared);
    if (cfg.share_all) cl.model.priv = aggregate(priv);
    Batch pooled;
    for (int id : ids) {
      const Batch& smp = s.clients[static_cast<std::size_t>(id)].sample;
      pooled.inputs.insert(pooled.inputs.end(), smp.inputs.begin(), smp.inputs.end());
      pooled.targets.insert(pooled.targets.end(), smp.targets.begin(), smp.targets.end());
    }
    if (cl.members != ids) cl.property = Property::mine(pooled.targets, cfg);
    cl.members = ids;
    if (cfg.cluster_epochs > 0) {
      Stream order(cfg.seed, {kTagClusterEpoch, j, s.round});
      train_epochs(cl.model, pooled, cl.property, cfg, cfg.cluster_epochs, cfg.cluster_lr,
                   Scope::All, order);
    }
    log.cluster_ms[j] = ms_since(cluster_start);
  });
  for (std::size_t j = 0; j < s.clusters.size(); ++j) {
    if (members[j].empty()) s.clusters[j].members.clear();
    log.cluster_sizes.push_back(members[j].size());
  }
  ++s.round;
  log.wall_ms = ms_since(start);
  return log;
}

FedAvgState init_fedavg(const RunConfig& config, const Dataset& data) {
  config.validate();
  FedAvgState s;
  s.config = config;
  s.arch = config.architecture();
  for (const auto& c : data.clients) s.clients.push_back(std::make_shared<const ClientDataset>(c));
  Stream init_rng(config.seed, {kTagInit});
  s.global = ModelState::init(s.arch, init_rng);
  return s;
}

RoundLog run_fedavg_round(FedAvgState& s) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig& cfg = s.config;
  if (s.round >= cfg.rounds) throw Error("all rounds already ran");
  RoundLog log;
  log.round = s.round;
  log.selected = select_clients(cfg, s.clients.size(), s.round);
  std::vector<ModelState> local(log.selected.size(), s.global);
  const Property none;
  parallel_for(log.selected.size(), cfg.threads, [&](std::size_t k) {
    const int id = log.selected[k];
    Stream order(cfg.seed, {kTagClientEpoch, static_cast<std::uint64_t>(id), s.round});
    train_epochs(local[k], s.clients[static_cast<std::size_t>(id)]->train, none, cfg,
                 cfg.local_epochs + cfg.cluster_epochs, cfg.lr, Scope::All, order);
  });
  std::vector<std::pair<std::span<const double>, double>> shared, priv;
  for (std::size_t k = 0; k < local.size(); ++k) {
    const auto n = static_cast<double>(s.clients[static_cast<std::size_t>(log.selected[k])]->train.inputs.size());
    shared.emplace_back(local[k].shared, n);
    priv.emplace_back(local[k].priv, n);
  }
  s.global.shared = aggregate(shared);
  s.global.priv = aggregate(priv);
  log.cluster_sizes = {log.selected.size()};
  ++s.round;
  log.wall_ms = ms_since(start);
  return log;
}

ModelState evaluation_model(const FederationState& s, int client) {
  const ClientState& c = s.clients.at(static_cast<std::size_t>(client));
  ModelState m = c.model;
  const int j = s.identity[static_cast<std::size_t>(client)];
  if (j >= 0) {
    m.shared = s.clusters[static_cast<std::size_t>(j)].model.shared;
    if (s.config.share_all) m.priv = s.clusters[static_cast<std::size_t>(j)].model.priv;
  }
  return m;
}

namespace {

const Batch& split_of(const ClientDataset& d, Split split) {
  switch (split) {
    case Split::Train: return d.train;
    case Split::Val: return d.val;
    case Split::Test: return d.test;
  }
  return d.test;
}

double mse(const Trace& a, const Trace& b) {
  double s = 0.0;
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

struct Scores {
  double mse = 0.0, rho = 0.0, mse_teacher = 0.0, rho_teacher = 0.0;
};

Scores score(const ModelState& model, const Batch& b, const Property& p, bool teacher) {
  Scores s;
  std::size_t sat = 0, sat_teacher = 0;
  for (std::size_t i = 0; i < b.inputs.size(); ++i) {
    Trace pred = forward(model, b.inputs[i]);
    s.mse += mse(pred, b.targets[i]);
    if (eval_bool(p.formula, pred, 0)) ++sat;
    if (teacher) {
      Trace fixed = p.compiled ? p.compiled->correct(pred).trace : pred;
      s.mse_teacher += mse(fixed, b.targets[i]);
      if (eval_bool(p.formula, fixed, 0)) ++sat_teacher;
    }
  }
  const auto n = static_cast<double>(b.inputs.size());
  s.mse /= n;
  s.rho = 100.0 * static_cast<double>(sat) / n;
  s.mse_teacher /= n;
  s.rho_teacher = 100.0 * static_cast<double>(sat_teacher) / n;
  return s;
}

}  // namespace

std::vector<ClientMetrics> evaluate(const FederationState& state, Split split) {
  std::vector<ClientMetrics> out(state.clients.size());
  parallel_for(state.clients.size(), state.config.threads, [&](std::size_t i) {
    const ClientState& c = state.clients[i];
    const Batch& b = split_of(*c.data, split);
    ClientMetrics& m = out[i];
    m.id = c.id;
    m.cluster = state.identity[i];
    Scores own = score(evaluation_model(state, c.id), b, c.property, true);
    m.mse = own.mse;
    m.rho_pct = own.rho;
    m.mse_teacher = own.mse_teacher;
    m.rho_pct_teacher = own.rho_teacher;
    if (m.cluster >= 0) {
      Scores cl = score(state.clusters[static_cast<std::size_t>(m.cluster)].model, b, c.property, false);
      m.mse_cluster = cl.mse;
      m.rho_pct_cluster = cl.rho;
    } else {
      m.mse_cluster = own.mse;
      m.rho_pct_cluster = own.rho;
    }
  });
  return out;
}

std::vector<ClientMetrics> evaluate(const FedAvgState& fedavg, const FederationState& state,
                                    Split split) {
  std::vector<ClientMetrics> out(fedavg.clients.size());
  parallel_for(fedavg.clients.size(), fedavg.config.threads, [&](std::size_t i) {
    Scores s = score(fedavg.global, split_of(*fedavg.clients[i], split), state.clients.at(i).property, false);
    out[i].id = static_cast<int>(i);
    out[i].mse = s.mse;
    out[i].rho_pct = s.rho;
  });
  return out;
}

}  // namespace fedstl
