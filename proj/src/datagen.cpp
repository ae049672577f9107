#include "fedstl/datagen.hpp"

#include "fedstl/error.hpp"
#include "fedstl/rng.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace fedstl {

namespace {

constexpr std::uint64_t kTagPhase = 1;
constexpr std::uint64_t kTagNoise = 2;

}  // namespace

void GenSpec::validate() const {
  if (n_clients == 0) throw ConfigError("n_clients must be positive");
  if (n_groups == 0 || n_groups > n_clients) throw ConfigError("n_groups must be in [1, n_clients]");
  if (n_vars == 0) throw ConfigError("n_vars must be positive");
  if (input_len == 0 || output_len == 0) throw ConfigError("window lengths must be positive");
  if (families.size() != n_groups) {
    throw ConfigError("expected " + std::to_string(n_groups) + " group families, got " +
                      std::to_string(families.size()));
  }
  for (std::size_t g = 0; g < families.size(); ++g) {
    const GroupFamily& f = families[g];
    const std::string where = "group " + std::to_string(g) + ": ";
    if (!(f.period > 0.0)) throw ConfigError(where + "period must be positive");
    if (!(f.noise >= 0.0)) throw ConfigError(where + "noise must be non-negative");
    if (f.noise > 0.0 && !(f.noise < f.amplitude / 4.0)) {
      throw ConfigError(where + "noise must stay below amplitude / 4");
    }
    if (f.var_offsets.size() != n_vars) {
      throw ConfigError(where + "needs " + std::to_string(n_vars) + " variable offsets");
    }
    if (gap) {
      for (std::size_t v = 1; v < n_vars; ++v) {
        if (!(f.var_offsets[v] > 0.0)) {
          throw ConfigError(where + "variable offsets must be positive under a planted gap");
        }
      }
    }
  }
  if (gap && n_vars < 2) throw ConfigError("a planted gap needs at least two variables");
  if (gap && !(*gap >= 0.0)) throw ConfigError("planted gap must be non-negative");
}

std::vector<GroupFamily> separable_families(std::size_t n_groups, std::size_t n_vars) {
  static const double kPeriods[] = {24.0, 12.0, 36.0, 8.0, 18.0, 48.0, 6.0};
  std::vector<GroupFamily> out;
  for (std::size_t g = 0; g < n_groups; ++g) {
    GroupFamily f;
    f.level = 0.2 + 0.3 * static_cast<double>(g);
    f.amplitude = 0.1;
    f.period = kPeriods[g % std::size(kPeriods)];
    f.noise = 0.02;
    f.var_offsets.assign(n_vars, 0.0);
    for (std::size_t v = 1; v < n_vars; ++v) f.var_offsets[v] = 0.05 * static_cast<double>(v);
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<std::string> default_schema(std::size_t n_vars) {
  if (n_vars == 1) return {"x"};
  std::vector<std::string> names;
  for (std::size_t v = 0; v < n_vars; ++v) names.push_back("x" + std::to_string(v + 1));
  return names;
}

ClientDataset window_series(int id, Trace series, std::size_t input_len, std::size_t output_len) {
  const std::size_t span = input_len + output_len;
  if (series.length() < span) {
    throw ShapeError("client " + std::to_string(id) + ": series of " +
                     std::to_string(series.length()) + " steps is shorter than one window");
  }
  const std::size_t windows = series.length() - span + 1;
  const std::size_t n_train = windows * 8 / 10;
  const std::size_t n_val = windows / 10;
  const std::size_t purge = output_len - 1;
  const std::size_t val_begin = n_train + purge, val_end = n_train + n_val;
  const std::size_t test_begin = val_end + purge;
  if (n_train == 0 || val_begin >= val_end || test_begin >= windows) {
    throw ShapeError("client " + std::to_string(id) + ": " + std::to_string(windows) +
                     " windows leave an empty split");
  }
  ClientDataset d{id, std::move(series), {}, {}, {}};
  auto fill = [&](Batch& b, std::size_t lo, std::size_t hi) {
    for (std::size_t w = lo; w < hi; ++w) {
      b.inputs.push_back(d.series.slice(w, input_len));
      b.targets.push_back(d.series.slice(w + input_len, output_len));
    }
  };
  fill(d.train, 0, n_train);
  fill(d.val, val_begin, val_end);
  fill(d.test, test_begin, windows);
  return d;
}

Dataset generate(const GenSpec& spec) {
  spec.validate();
  Dataset out;
  const auto schema = default_schema(spec.n_vars);
  for (std::size_t c = 0; c < spec.n_clients; ++c) {
    const int group = static_cast<int>(c % spec.n_groups);
    const GroupFamily& f = spec.families[static_cast<std::size_t>(group)];
    Stream phase_rng(spec.seed, {kTagPhase, c});
    Stream noise(spec.seed, {kTagNoise, c});
    const double phase = phase_rng.uniform(0.0, f.period);
    std::vector<double> data(spec.length * spec.n_vars);
    for (std::size_t t = 0; t < spec.length; ++t) {
      const double wave =
          f.amplitude * std::sin(2.0 * M_PI * (static_cast<double>(t) + phase) / f.period);
      const double x1 = f.level + wave + f.noise * noise.normal();
      double* row = data.data() + t * spec.n_vars;
      row[0] = x1;
      for (std::size_t v = 1; v < spec.n_vars; ++v) {
        const double e = f.noise * noise.normal();
        row[v] = spec.gap ? x1 - *spec.gap - f.var_offsets[v] - std::fabs(e)
                          : f.level + f.var_offsets[v] + wave + e;
      }
    }
    out.clients.push_back(window_series(static_cast<int>(c), Trace(schema, std::move(data)),
                                        spec.input_len, spec.output_len));
    out.labels.push_back(group);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) return cells;
    start = comma + 1;
  }
}

}  // namespace

Trace read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("csv: missing header");
  std::vector<std::string> schema;
  for (auto cell : split(line)) schema.emplace_back(cell);
  const std::size_t nv = schema.size();
  constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  // Trailing blank lines are not rows; interior ones are rows of empty cells.
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  std::vector<double> data;
  std::size_t line_no = 1;
  for (const std::string& text : lines) {
    ++line_no;
    auto cells = split(text);
    if (cells.size() != nv) {
      throw IoError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(nv) +
                    " cells, got " + std::to_string(cells.size()));
    }
    for (auto cell : cells) {
      if (cell.empty()) {
        data.push_back(kMissing);
        continue;
      }
      double v = 0.0;
      auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || end != cell.data() + cell.size() || !std::isfinite(v)) {
        throw IoError("csv line " + std::to_string(line_no) + ": non-numeric cell '" +
                      std::string(cell) + "'");
      }
      data.push_back(v);
    }
  }
  const std::size_t len = data.size() / nv;
  for (std::size_t v = 0; v < nv; ++v) {
    auto at = [&](std::size_t t) -> double& { return data[t * nv + v]; };
    std::size_t t = 0;
    while (t < len) {
      if (!std::isnan(at(t))) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < len && std::isnan(at(end))) ++end;
      if (t == 0 || end == len) {
        throw IoError("csv column '" + schema[v] + "': missing value at row " +
                      std::to_string(t + 1) + " has no neighbour on both sides");
      }
      const double a = at(t - 1), b = at(end);
      const double gap = static_cast<double>(end - t + 1);
      for (std::size_t k = t; k < end; ++k) {
        at(k) = a + (b - a) * static_cast<double>(k - t + 1) / gap;
      }
      t = end;
    }
  }
  return Trace(std::move(schema), std::move(data));
}

Trace load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_csv(in);
}

void write_csv(std::ostream& out, const Trace& trace) {
  const auto& schema = trace.schema();
  for (std::size_t v = 0; v < schema.size(); ++v) out << (v ? "," : "") << schema[v];
  out << "\n";
  char buf[32];
  for (std::size_t t = 0; t < trace.length(); ++t) {
    auto row = trace.row(t);
    for (std::size_t v = 0; v < row.size(); ++v) {
      auto res = std::to_chars(buf, buf + sizeof buf, row[v]);
      out << (v ? "," : "") << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << "\n";
  }
  if (!out) throw IoError("failed to write csv");
}

}  // namespace fedstl
