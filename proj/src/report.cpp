#include "fedstl/report.hpp"

#include "fedstl/error.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace fedstl {

namespace {

using Json = nlohmann::ordered_json;

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Json row_json(const SummaryRow& r) {
  return Json{{"mse", r.mse_mean}, {"mse_std", r.mse_std}, {"rho_pct", r.rho_pct_mean},
              {"rho_pct_std", r.rho_pct_std}};
}

template <class Get>
std::vector<double> column(const std::vector<ClientMetrics>& m, Get get) {
  std::vector<double> out;
  for (const auto& x : m) out.push_back(get(x));
  return out;
}

Json round_json(const RoundLog& log, Json per_client, bool timings) {
  Json j{{"round", log.round}, {"selected", log.selected}, {"per_client", std::move(per_client)},
         {"cluster_sizes", log.cluster_sizes}};
  if (timings) j["wall_ms"] = log.wall_ms;
  return j;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_checkpoint(out, m);
}

}  // namespace

SummaryRow summarize(const std::vector<double>& mse, const std::vector<double>& rho_pct) {
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = mean_of(v);
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    sd = v.empty() ? 0.0 : std::sqrt(var / static_cast<double>(v.size()));
  };
  SummaryRow r;
  stats(mse, r.mse_mean, r.mse_std);
  stats(rho_pct, r.rho_pct_mean, r.rho_pct_std);
  return r;
}

std::string train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  namespace fs = std::filesystem;
  const fs::path out_dir = config.out_dir;
  if (options.write_files) {
    fs::create_directories(out_dir / "checkpoints");
  }

  Dataset data = load_dataset(config);
  spdlog::info("{} clients, mining properties", data.clients.size());
  // Properties are needed for the satisfaction columns of either method.
  FederationState fed = init_federation(config, data);

  Json report;
  report["schema"] = 1;
  Json cfg = Json::object();
  for (const auto& [k, v] : config.entries()) {
    if (k != "out_dir" && k != "threads") cfg[k] = v;
  }
  report["config"] = cfg;
  Json mined = Json::array();
  for (const auto& c : fed.clients) mined.push_back(c.property.mined);
  report["property_mined"] = mined;
  Json summary = Json::object();

  if (config.method != Method::FedAvg) {
    Json rounds = Json::array();
    for (std::size_t r = 0; r < config.rounds; ++r) {
      RoundLog log = run_round(fed);
      auto val = evaluate(fed, Split::Val);
      Json pc = Json::array();
      for (const auto& m : val) {
        pc.push_back({{"id", m.id}, {"cluster", m.cluster}, {"mse", m.mse}, {"rho_pct", m.rho_pct},
                      {"rho_pct_teacher", m.rho_pct_teacher}});
      }
      spdlog::info("fedstl round {}/{}: val mse {:.6f}", r + 1, config.rounds,
                   mean_of(column(val, [](const auto& m) { return m.mse; })));
      rounds.push_back(round_json(log, std::move(pc), config.timings));
    }
    auto test = evaluate(fed, Split::Test);
    Json pc = Json::array();
    for (const auto& m : test) {
      pc.push_back({{"id", m.id},
                    {"cluster", m.cluster},
                    {"mse", m.mse},
                    {"rho_pct", m.rho_pct},
                    {"mse_cluster", m.mse_cluster},
                    {"rho_pct_cluster", m.rho_pct_cluster},
                    {"mse_teacher", m.mse_teacher},
                    {"rho_pct_teacher", m.rho_pct_teacher}});
    }
    report["fedstl"] = {{"rounds", std::move(rounds)}, {"identity", fed.identity}, {"test", std::move(pc)}};
    summary["FedSTL"] = row_json(summarize(column(test, [](const auto& m) { return m.mse; }),
                                           column(test, [](const auto& m) { return m.rho_pct; })));
    summary["FedSTL-S"] =
        row_json(summarize(column(test, [](const auto& m) { return m.mse_cluster; }),
                           column(test, [](const auto& m) { return m.rho_pct_cluster; })));
    summary["FedSTL-T"] =
        row_json(summarize(column(test, [](const auto& m) { return m.mse_teacher; }),
                           column(test, [](const auto& m) { return m.rho_pct_teacher; })));
    if (options.write_files) {
      for (const auto& c : fed.clients) {
        save_checkpoint(out_dir / "checkpoints" / ("client_" + std::to_string(c.id) + ".ckpt"),
                        evaluation_model(fed, c.id));
      }
      for (const auto& cl : fed.clusters) {
        save_checkpoint(out_dir / "checkpoints" / ("cluster_" + std::to_string(cl.id) + ".ckpt"),
                        cl.model);
      }
    }
  }

  if (config.method != Method::FedStl) {
    FedAvgState avg = init_fedavg(config, data);
    Json rounds = Json::array();
    for (std::size_t r = 0; r < config.rounds; ++r) {
      RoundLog log = run_fedavg_round(avg);
      auto val = evaluate(avg, fed, Split::Val);
      Json pc = Json::array();
      for (const auto& m : val) pc.push_back({{"id", m.id}, {"mse", m.mse}, {"rho_pct", m.rho_pct}});
      spdlog::info("fedavg round {}/{}: val mse {:.6f}", r + 1, config.rounds,
                   mean_of(column(val, [](const auto& m) { return m.mse; })));
      rounds.push_back(round_json(log, std::move(pc), config.timings));
    }
    auto test = evaluate(avg, fed, Split::Test);
    Json pc = Json::array();
    for (const auto& m : test) pc.push_back({{"id", m.id}, {"mse", m.mse}, {"rho_pct", m.rho_pct}});
    report["fedavg"] = {{"rounds", std::move(rounds)}, {"test", std::move(pc)}};
    summary["FedAvg"] = row_json(summarize(column(test, [](const auto& m) { return m.mse; }),
                                           column(test, [](const auto& m) { return m.rho_pct; })));
    if (options.write_files) save_checkpoint(out_dir / "checkpoints" / "fedavg_global.ckpt", avg.global);
  }

  report["summary"] = std::move(summary);
  std::string text = report.dump(2) + "\n";
  if (options.write_files) {
    std::ofstream out(out_dir / "report.json", std::ios::binary);
    if (!out) throw IoError("cannot write report to '" + out_dir.string() + "'");
    out << text;
  }
  return text;
}

}  // namespace fedstl
