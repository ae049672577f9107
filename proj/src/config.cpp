#include "fedstl/config.hpp"

#include "fedstl/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace fedstl {

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("key '" + key + "': expected " + want + ", got '" + value + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size()) bad(key, v, "an unsigned integer");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out)) {
    bad(key, v, "a finite number");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(key, v, "true or false");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_KEY(field)                                                                         \
  Key {                                                                                         \
    #field, [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_size(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                              \
  }
#define DOUBLE_KEY(field)                                                                         \
  Key {                                                                                           \
    #field, [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }, \
        [](const RunConfig& c) { return fmt_double(c.field); }                                    \
  }
#define LIST_KEY(field)                                                                            \
  Key {                                                                                            \
    #field, [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_doubles(k, v); }, \
        [](const RunConfig& c) { return fmt_doubles(c.field); }                                    \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
      SIZE_KEY(threads),
      Key{"out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
          [](const RunConfig& c) { return c.out_dir; }},
      Key{"method",
          [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "fedstl") {
              c.method = Method::FedStl;
            } else if (v == "fedavg") {
              c.method = Method::FedAvg;
            } else if (v == "both") {
              c.method = Method::Both;
            } else {
              bad(k, v, "fedstl, fedavg or both");
            }
          },
          [](const RunConfig& c) {
            return std::string(c.method == Method::FedStl ? "fedstl"
                               : c.method == Method::FedAvg ? "fedavg"
                                                            : "both");
          }},
      Key{"timings", [](RunConfig& c, const std::string& k, const std::string& v) { c.timings = to_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.timings ? "true" : "false"); }},
      Key{"arch",
          [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "linear_ar") {
              c.arch = ArchKind::LinearAR;
            } else if (v == "mini_gru") {
              c.arch = ArchKind::MiniGRU;
            } else {
              bad(k, v, "linear_ar or mini_gru");
            }
          },
          [](const RunConfig& c) {
            return std::string(c.arch == ArchKind::LinearAR ? "linear_ar" : "mini_gru");
          }},
      SIZE_KEY(hidden_dim),
      DOUBLE_KEY(lr),
      DOUBLE_KEY(cluster_lr),
      DOUBLE_KEY(lambda),
      SIZE_KEY(batch_size),
      SIZE_KEY(rounds),
      DOUBLE_KEY(participation),
      SIZE_KEY(local_epochs),
      SIZE_KEY(cluster_epochs),
      SIZE_KEY(cluster_period),
      SIZE_KEY(n_clusters),
      SIZE_KEY(sample_windows),
      SIZE_KEY(seed_steps),
      Key{"share_all", [](RunConfig& c, const std::string& k, const std::string& v) { c.share_all = to_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.share_all ? "true" : "false"); }},
      Key{"templates",
          [](RunConfig& c, const std::string& k, const std::string& v) {
            c.templates.clear();
            for (const auto& item : split_list(v)) c.templates.push_back(static_cast<int>(to_u64(k, item)));
          },
          [](const RunConfig& c) {
            std::string out;
            for (std::size_t i = 0; i < c.templates.size(); ++i) out += (i ? "," : "") + std::to_string(c.templates[i]);
            return out;
          }},
      Key{"window_len",
          [](RunConfig& c, const std::string& k, const std::string& v) { c.template_options.window_len = static_cast<int>(to_size(k, v)); },
          [](const RunConfig& c) { return std::to_string(c.template_options.window_len); }},
      Key{"lookahead",
          [](RunConfig& c, const std::string& k, const std::string& v) { c.template_options.lookahead = static_cast<int>(to_size(k, v)); },
          [](const RunConfig& c) { return std::to_string(c.template_options.lookahead); }},
      Key{"eventualities",
          [](RunConfig& c, const std::string& k, const std::string& v) { c.template_options.eventualities = static_cast<int>(to_size(k, v)); },
          [](const RunConfig& c) { return std::to_string(c.template_options.eventualities); }},
      DOUBLE_KEY(tol_rel),
      DOUBLE_KEY(delta_rel),
      SIZE_KEY(clause_cap),
      SIZE_KEY(n_clients),
      SIZE_KEY(n_groups),
      SIZE_KEY(n_vars),
      SIZE_KEY(series_len),
      SIZE_KEY(input_len),
      SIZE_KEY(output_len),
      LIST_KEY(levels),
      LIST_KEY(amplitudes),
      LIST_KEY(periods),
      LIST_KEY(noise),
      Key{"gap",
          [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "none") {
              c.gap.reset();
            } else {
              c.gap = to_double(k, v);
            }
          },
          [](const RunConfig& c) { return c.gap ? fmt_double(*c.gap) : std::string("none"); }},
      Key{"data_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; },
          [](const RunConfig& c) { return c.data_dir; }},
  };
  return table;
}

#undef SIZE_KEY
#undef DOUBLE_KEY
#undef LIST_KEY

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "preset") {
    apply_preset(value);
    return;
  }
  for (const Key& k : keys()) {
    if (key == k.name) {
      k.set(*this, key, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

std::vector<std::string> preset_names() { return {"main", "appendix", "desk20"}; }

void RunConfig::apply_preset(const std::string& name) {
  if (name == "main") {
    local_epochs = 6;
    cluster_epochs = 4;
  } else if (name == "appendix") {
    local_epochs = 8;
    cluster_epochs = 2;
  } else if (name == "desk20") {
    apply_preset("main");
    n_clients = 20;
    n_groups = 5;
    n_clusters = 5;
    rounds = 50;
    participation = 0.25;
    arch = ArchKind::MiniGRU;
    hidden_dim = 8;
    input_len = 24;
    output_len = 6;
    series_len = 300;
    templates = {1};
    method = Method::Both;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(participation > 0.0 && participation <= 1.0, "participation must be in (0, 1]");
  require(lambda >= 0.0, "lambda must be non-negative");
  require(local_epochs + cluster_epochs >= 1, "local_epochs + cluster_epochs must be at least 1");
  require(lr > 0.0 && cluster_lr > 0.0, "learning rates must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(rounds >= 1, "rounds must be positive");
  require(cluster_period >= 1, "cluster_period must be positive");
  require(n_clusters >= 1, "n_clusters must be positive");
  require(sample_windows >= 1, "sample_windows must be positive");
  require(threads >= 1, "threads must be positive");
  require(arch != ArchKind::MiniGRU || hidden_dim >= 1, "hidden_dim must be positive");
  require(!templates.empty(), "templates must name at least one row");
  for (int row : templates) require(row >= 1 && row <= 7, "template rows are 1..7");
  require(template_options.window_len >= 1, "window_len must be positive");
  require(tol_rel > 0.0, "tol_rel must be positive");
  require(delta_rel >= 0.0, "delta_rel must be non-negative");
  require(clause_cap >= 1, "clause_cap must be positive");
  require(input_len >= 1 && output_len >= 1, "window lengths must be positive");
  if (data_dir.empty()) {
    for (const auto* list : {&levels, &amplitudes, &periods, &noise}) {
      require(list->size() <= 1 || list->size() == n_groups,
              "per-group lists need one value or n_groups values");
    }
    require(series_len >= input_len + output_len, "series_len is shorter than one window");
    gen_spec().validate();
  }
}

std::size_t RunConfig::selection_count(std::size_t n) const {
  // The epsilon keeps 0.1 * 20 at 2 rather than 3.
  auto k = static_cast<std::size_t>(std::ceil(participation * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

Arch RunConfig::architecture() const {
  return Arch{arch, input_len, output_len, n_vars, arch == ArchKind::MiniGRU ? hidden_dim : 0};
}

GenSpec RunConfig::gen_spec() const {
  GenSpec s;
  s.n_clients = n_clients;
  s.n_groups = n_groups;
  s.n_vars = n_vars;
  s.length = series_len;
  s.input_len = input_len;
  s.output_len = output_len;
  s.gap = gap;
  s.seed = seed;
  s.families = separable_families(n_groups, n_vars);
  auto apply = [&](const std::vector<double>& values, double GroupFamily::*field) {
    for (std::size_t g = 0; g < s.families.size() && !values.empty(); ++g) {
      s.families[g].*field = values[values.size() == 1 ? 0 : g];
    }
  };
  apply(levels, &GroupFamily::level);
  apply(amplitudes, &GroupFamily::amplitude);
  apply(periods, &GroupFamily::period);
  apply(noise, &GroupFamily::noise);
  return s;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Key& k : keys()) out.emplace_back(k.name, k.get(*this));
  return out;
}

RunConfig read_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::string> preset;
  while (std::getline(in, line)) {
    ++line_no;
    std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(text.substr(0, eq)), value = trim(text.substr(eq + 1));
    if (key == "preset") {
      if (preset) throw ConfigError("line " + std::to_string(line_no) + ": preset given twice");
      preset = value;
    } else {
      pairs.emplace_back(std::move(key), std::move(value));
    }
  }
  RunConfig c;
  if (preset) c.apply_preset(*preset);
  for (const auto& [k, v] : pairs) c.set(k, v);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return read_config(in);
}

Dataset load_dataset(const RunConfig& config) {
  if (config.data_dir.empty()) return generate(config.gen_spec());
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(config.data_dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list '" + config.data_dir + "': " + ec.message());
  if (files.empty()) throw IoError("no .csv files in '" + config.data_dir + "'");
  std::sort(files.begin(), files.end());
  Dataset d;
  for (std::size_t i = 0; i < files.size(); ++i) {
    d.clients.push_back(window_series(static_cast<int>(i), load_csv(files[i].string()),
                                      config.input_len, config.output_len));
    d.labels.push_back(-1);
  }
  return d;
}

}  // namespace fedstl
