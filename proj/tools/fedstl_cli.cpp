// Command-line front end over the C API.
//   fedstl monitor FORMULA_FILE TRACE_CSV [T]
//   fedstl mine ROW TRACE_CSV [--tol X] [--window N]
//   fedstl train [--config PATH | --preset NAME] [--set KEY=VALUE]...
//   fedstl bench [--config PATH | --preset NAME] [--rows LIST]
// Exit codes: 0 success, 1 runtime error (or an unsatisfied monitor check),
// 2 config or usage error.

#include "fedstl/fedstl.h"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Failure {
  fedstl_status status;
};

void check(fedstl_status s) {
  if (s != FEDSTL_OK) throw Failure{s};
}

std::string take_string(char* s) {
  std::string out(s ? s : "");
  fedstl_string_free(s);
  return out;
}

// Shortest round-tripping text; integers keep one decimal, infinities are
// spelled +inf / -inf.
std::string number_text(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  std::string s(buf);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

struct RunFlags {
  std::string config_path;
  std::string preset;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  auto* config = cmd->add_option("--config", f.config_path, "Run configuration file");
  auto* preset = cmd->add_option("--preset", f.preset, "Start from a named preset");
  config->excludes(preset);
  cmd->add_option("--set", f.sets, "Override one key (KEY=VALUE), repeatable");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--threads", f.threads, "Worker cap; 1 is the serial reference mode");
}

fedstl_config* build_config(const RunFlags& f) {
  fedstl_config* c = nullptr;
  if (!f.config_path.empty()) {
    check(fedstl_config_load(f.config_path.c_str(), &c));
  } else {
    check(fedstl_config_default(&c));
  }
  try {
    if (!f.preset.empty()) check(fedstl_config_set(c, "preset", f.preset.c_str()));
    for (const auto& kv : f.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: --set expects KEY=VALUE, got '" << kv << "'\n";
        throw Failure{FEDSTL_ERR_CONFIG};
      }
      check(fedstl_config_set(c, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    if (f.seed) check(fedstl_config_set(c, "seed", std::to_string(*f.seed).c_str()));
    if (!f.out.empty()) check(fedstl_config_set(c, "out_dir", f.out.c_str()));
    if (f.threads) check(fedstl_config_set(c, "threads", std::to_string(*f.threads).c_str()));
    check(fedstl_config_validate(c));
  } catch (...) {
    fedstl_config_free(c);
    throw;
  }
  return c;
}

std::vector<int> parse_rows(const std::string& text) {
  std::vector<int> rows;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      rows.push_back(std::stoi(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      std::cerr << "error: bad template row '" << item << "'\n";
      throw Failure{FEDSTL_ERR_CONFIG};
    }
  }
  return rows;
}

int cmd_monitor(const std::string& formula_path, const std::string& trace_path, std::size_t t) {
  fedstl_formula* f = nullptr;
  fedstl_trace* tr = nullptr;
  int sat = 0;
  double rho = 0.0;
  fedstl_status s = fedstl_formula_load(formula_path.c_str(), &f);
  if (s == FEDSTL_OK) s = fedstl_trace_load_csv(trace_path.c_str(), &tr);
  if (s == FEDSTL_OK) s = fedstl_eval(f, tr, t, &sat, &rho);
  fedstl_formula_free(f);
  fedstl_trace_free(tr);
  check(s);
  std::cout << "sat=" << (sat ? "true" : "false") << " rho=" << number_text(rho) << "\n";
  return sat ? 0 : kExitRuntime;
}

int cmd_mine(int row, const std::string& trace_path, double tol, int window) {
  fedstl_trace* tr = nullptr;
  check(fedstl_trace_load_csv(trace_path.c_str(), &tr));
  char* formula = nullptr;
  double eps = 0.0;
  const fedstl_status s = fedstl_mine(row, tr, tol, window, &formula, &eps);
  fedstl_trace_free(tr);
  check(s);
  std::cout << take_string(formula) << ", eps=" << number_text(eps) << "\n";
  return 0;
}

int cmd_train(const RunFlags& flags) {
  fedstl_config* c = build_config(flags);
  char* report = nullptr;
  const fedstl_status s = fedstl_train(c, 1, &report);
  char* listing = nullptr;
  std::string out_dir = "out";
  if (s == FEDSTL_OK && fedstl_config_render(c, &listing) == FEDSTL_OK) {
    std::istringstream lines(take_string(listing));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("out_dir = ", 0) == 0) out_dir = line.substr(10);
    }
  }
  fedstl_config_free(c);
  check(s);
  fedstl_string_free(report);
  std::cout << out_dir << "/report.json\n";
  return 0;
}

int cmd_bench(const RunFlags& flags, const std::optional<std::string>& rows_text) {
  fedstl_config* c = build_config(flags);
  char* table = nullptr;
  fedstl_status s;
  try {
    if (rows_text) {
      const std::vector<int> rows = parse_rows(*rows_text);
      static const int none = 0;
      s = fedstl_bench(c, rows.empty() ? &none : rows.data(), rows.size(), &table);
    } else {
      s = fedstl_bench(c, nullptr, 0, &table);
    }
  } catch (...) {
    fedstl_config_free(c);
    throw;
  }
  fedstl_config_free(c);
  check(s);
  std::cout << take_string(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training with mined signal temporal logic properties"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string formula_path, trace_path;
  std::size_t step = 0;
  auto* monitor = app.add_subcommand("monitor", "Evaluate a formula file on a CSV trace");
  monitor->add_option("formula", formula_path, "Formula file")->required();
  monitor->add_option("trace", trace_path, "Trace CSV")->required();
  monitor->add_option("t", step, "Evaluation step");

  int row = 1;
  double tol = 0.0;
  int window = 0;
  auto* mine = app.add_subcommand("mine", "Mine a template row on a CSV trace");
  mine->add_option("row", row, "Template row (1-7)")->required();
  mine->add_option("trace", trace_path, "Trace CSV")->required();
  mine->add_option("--tol", tol, "Bisection tolerance; 0 uses the default");
  mine->add_option("--window", window, "Window length; 0 spans the trace");

  RunFlags train_flags, bench_flags;
  auto* train = app.add_subcommand("train", "Run training and write the report");
  add_run_flags(train, train_flags);
  auto* bench = app.add_subcommand("bench", "Print mining and round timings");
  add_run_flags(bench, bench_flags);
  std::optional<std::string> rows_text;
  bench->add_option("--rows", rows_text, "Comma-separated template rows; default from config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const int levels[] = {0, 1, 2, 3, 4, 6};
  const char* names[] = {"trace", "debug", "info", "warn", "error", "off"};
  for (int i = 0; i < 6; ++i) {
    if (log_level == names[i]) fedstl_set_log_level(levels[i]);
  }

  try {
    if (*monitor) return cmd_monitor(formula_path, trace_path, step);
    if (*mine) return cmd_mine(row, trace_path, tol, window);
    if (*train) return cmd_train(train_flags);
    if (*bench) return cmd_bench(bench_flags, rows_text);
  } catch (const Failure& f) {
    if (f.status != FEDSTL_OK && *fedstl_last_error()) {
      std::cerr << "error: " << fedstl_last_error() << "\n";
    }
    return f.status == FEDSTL_ERR_CONFIG ? kExitConfig : kExitRuntime;
  }
  return 0;
}
