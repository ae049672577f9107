#include "fedstl/bench.hpp"

#include "fedstl/error.hpp"
#include "fedstl/federation.hpp"
#include "fedstl/mining.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>

namespace fedstl {

namespace {

template <class Fn>
double min_seconds(std::size_t repeats, Fn&& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    best = std::min(best, d.count());
  }
  return best;
}

void mine_all(const std::vector<const std::vector<Trace>*>& sets,
              const std::vector<Template>& templates) {
  for (const auto* traces : sets) {
    try {
      mine_client_property(*traces, templates, default_tolerance(*traces));
    } catch (const MiningError&) {
      // Timed either way; a failed client still paid for the search.
    }
  }
}

}  // namespace

BenchOptions bench_options(const RunConfig& config) {
  BenchOptions o;
  o.rows = config.templates;
  return o;
}

std::vector<BenchRow> bench(const RunConfig& config, const BenchOptions& options) {
  config.validate();
  std::vector<BenchRow> table;
  if (options.rows.empty()) return table;

  const Dataset data = load_dataset(config);
  const auto& schema = data.clients.front().series.schema();
  std::vector<const std::vector<Trace>*> sets;
  for (const auto& c : data.clients) sets.push_back(&c.train.targets);
  const int horizon = static_cast<int>(data.clients.front().train.targets.front().length());

  for (int row : options.rows) {
    const int one[] = {row};
    std::vector<Template> templates;
    try {
      templates = builtin_templates(schema, horizon, one, config.template_options);
    } catch (const Error& e) {
      spdlog::warn("bench: template row {} skipped: {}", row, e.what());
      continue;
    }
    const double s = min_seconds(options.repeats, [&] { mine_all(sets, templates); });
    table.push_back({"mining", "row " + std::to_string(row), sets.size(), s});
  }

  // Row-1 windows of one step over growing horizons: one formula per step.
  if (!options.scaling.empty()) {
    const int longest = *std::max_element(options.scaling.begin(), options.scaling.end());
    const Trace& series = data.clients.front().series;
    if (series.length() >= static_cast<std::size_t>(longest)) {
      TemplateOptions one_step = config.template_options;
      one_step.window_len = 1;
      const int row1[] = {1};
      for (int k : options.scaling) {
        std::vector<Trace> traces;
        for (std::size_t t = 0; t + static_cast<std::size_t>(longest) <= series.length(); ++t) {
          traces.push_back(series.slice(t, static_cast<std::size_t>(k)));
        }
        const auto templates = builtin_templates(schema, k, row1, one_step);
        const std::vector<const std::vector<Trace>*> one_set{&traces};
        const double s = min_seconds(options.repeats, [&] { mine_all(one_set, templates); });
        table.push_back({"scaling", "formulas=" + std::to_string(k),
                         static_cast<std::size_t>(k) * templates.size(), s});
      }
    }
  }

  if (options.rounds > 0) {
    RunConfig cfg = config;
    cfg.templates = options.rows;
    FederationState fed = init_federation(cfg, data);
    std::vector<double> total(fed.clusters.size(), 0.0);
    std::vector<std::size_t> members(fed.clusters.size(), 0);
    for (std::size_t r = 0; r < options.rounds; ++r) {
      const RoundLog log = run_round(fed);
      for (std::size_t j = 0; j < total.size(); ++j) {
        total[j] += log.cluster_ms[j] / 1000.0;
        members[j] += log.cluster_sizes[j];
      }
    }
    const auto n = static_cast<double>(options.rounds);
    for (std::size_t j = 0; j < total.size(); ++j) {
      table.push_back({"round", "cluster " + std::to_string(j), members[j],
                       total[j] / n});
    }
  }
  return table;
}

std::string render_bench(const std::vector<BenchRow>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-14s %6s %12s\n", "section", "item", "count", "seconds");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-8s %-14s %6zu %12.6f\n", r.section.c_str(), r.item.c_str(),
                  r.count, r.seconds);
    out += line;
  }
  return out;
}

}  // namespace fedstl
