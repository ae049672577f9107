#include "fedstl/fedstl.h"

#include "fedstl/bench.hpp"
#include "fedstl/config.hpp"
#include "fedstl/datagen.hpp"
#include "fedstl/error.hpp"
#include "fedstl/mining.hpp"
#include "fedstl/report.hpp"
#include "fedstl/stl.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <new>
#include <sstream>
#include <string>

struct fedstl_formula {
  fedstl::Formula value;
};
struct fedstl_trace {
  fedstl::Trace value;
};
struct fedstl_config {
  fedstl::RunConfig value;
};

namespace {

thread_local std::string last_error;

void ensure_logger() {
  static std::once_flag once;
  std::call_once(once, [] {
    auto logger = spdlog::stderr_color_mt("fedstl");
    spdlog::set_default_logger(logger);
  });
}

// Runs `fn`, translating exceptions into status codes.
template <class Fn>
fedstl_status guarded(Fn&& fn) {
  last_error.clear();
  try {
    ensure_logger();
    fn();
    return FEDSTL_OK;
  } catch (const fedstl::ParseError& e) {
    last_error = e.what();
    return FEDSTL_ERR_PARSE;
  } catch (const fedstl::RangeError& e) {
    last_error = e.what();
    return FEDSTL_ERR_RANGE;
  } catch (const fedstl::ShapeError& e) {
    last_error = e.what();
    return FEDSTL_ERR_SHAPE;
  } catch (const fedstl::MiningError& e) {
    last_error = e.what();
    return FEDSTL_ERR_MINING;
  } catch (const fedstl::InfeasibleError& e) {
    last_error = e.what();
    return FEDSTL_ERR_INFEASIBLE;
  } catch (const fedstl::UnsupportedError& e) {
    last_error = e.what();
    return FEDSTL_ERR_UNSUPPORTED;
  } catch (const fedstl::ConfigError& e) {
    last_error = e.what();
    return FEDSTL_ERR_CONFIG;
  } catch (const fedstl::IoError& e) {
    last_error = e.what();
    return FEDSTL_ERR_IO;
  } catch (const fedstl::NumericError& e) {
    last_error = e.what();
    return FEDSTL_ERR_NUMERIC;
  } catch (const std::exception& e) {
    last_error = e.what();
    return FEDSTL_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return FEDSTL_ERR_INTERNAL;
  }
}

fedstl_status argument_error(const char* what) {
  last_error = what;
  return FEDSTL_ERR_ARGUMENT;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string read_file(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fedstl::IoError(std::string("cannot open '") + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

extern "C" {

const char* fedstl_last_error(void) { return last_error.c_str(); }

const char* fedstl_status_name(fedstl_status status) {
  switch (status) {
    case FEDSTL_OK: return "ok";
    case FEDSTL_ERR_PARSE: return "parse error";
    case FEDSTL_ERR_RANGE: return "range error";
    case FEDSTL_ERR_SHAPE: return "shape error";
    case FEDSTL_ERR_MINING: return "mining error";
    case FEDSTL_ERR_INFEASIBLE: return "infeasible";
    case FEDSTL_ERR_UNSUPPORTED: return "unsupported";
    case FEDSTL_ERR_CONFIG: return "config error";
    case FEDSTL_ERR_IO: return "io error";
    case FEDSTL_ERR_NUMERIC: return "numeric error";
    case FEDSTL_ERR_ARGUMENT: return "invalid argument";
    case FEDSTL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void fedstl_string_free(char* s) { std::free(s); }

void fedstl_set_log_level(int level) {
  ensure_logger();
  if (level < 0) level = 0;
  if (level > static_cast<int>(spdlog::level::off)) level = static_cast<int>(spdlog::level::off);
  spdlog::set_level(static_cast<spdlog::level::level_enum>(level));
}

fedstl_status fedstl_formula_parse(const char* text, fedstl_formula** out) {
  if (!text || !out) return argument_error("null argument");
  return guarded([&] { *out = new fedstl_formula{fedstl::parse(text)}; });
}

fedstl_status fedstl_formula_load(const char* path, fedstl_formula** out) {
  if (!path || !out) return argument_error("null argument");
  return guarded([&] { *out = new fedstl_formula{fedstl::parse_property_text(read_file(path))}; });
}

fedstl_status fedstl_formula_render(const fedstl_formula* f, char** out) {
  if (!f || !out) return argument_error("null argument");
  return guarded([&] { *out = copy_string(fedstl::render(f->value)); });
}

void fedstl_formula_free(fedstl_formula* f) { delete f; }

fedstl_status fedstl_trace_create(const char* const* names, size_t n_vars, const double* data,
                                  size_t length, fedstl_trace** out) {
  if (!names || !out || (!data && length * n_vars > 0)) return argument_error("null argument");
  return guarded([&] {
    std::vector<std::string> schema;
    for (size_t i = 0; i < n_vars; ++i) {
      if (!names[i]) throw fedstl::ShapeError("null variable name");
      schema.emplace_back(names[i]);
    }
    std::vector<double> values(data, data + length * n_vars);
    *out = new fedstl_trace{fedstl::Trace(std::move(schema), std::move(values))};
  });
}

fedstl_status fedstl_trace_load_csv(const char* path, fedstl_trace** out) {
  if (!path || !out) return argument_error("null argument");
  return guarded([&] { *out = new fedstl_trace{fedstl::load_csv(path)}; });
}

size_t fedstl_trace_length(const fedstl_trace* t) { return t ? t->value.length() : 0; }

void fedstl_trace_free(fedstl_trace* t) { delete t; }

fedstl_status fedstl_eval(const fedstl_formula* f, const fedstl_trace* t, size_t step,
                          int* satisfied, double* robustness) {
  if (!f || !t || !satisfied || !robustness) return argument_error("null argument");
  return guarded([&] {
    const bool sat = fedstl::eval_bool(f->value, t->value, step);
    const double rho = fedstl::robustness(f->value, t->value, step);
    *satisfied = sat ? 1 : 0;
    *robustness = rho;
  });
}

fedstl_status fedstl_mine(int row, const fedstl_trace* t, double tol, int window_len,
                          char** formula, double* eps) {
  if (!t || !formula || !eps) return argument_error("null argument");
  return guarded([&] {
    const int horizon = static_cast<int>(t->value.length());
    fedstl::TemplateOptions options;
    options.window_len = window_len > 0 ? window_len : horizon;
    options.lookahead = std::min(options.lookahead, std::max(horizon - 1, 0));
    const int rows[] = {row};
    const auto templates = fedstl::builtin_templates(t->value.schema(), horizon, rows, options);
    const std::vector<fedstl::Trace> traces{t->value};
    const double used = tol > 0 ? tol : fedstl::default_tolerance(traces);
    const auto mined = fedstl::mine_client_property(traces, templates, used);
    double tight = std::numeric_limits<double>::infinity();
    for (const auto& p : mined.parts) tight = std::min(tight, p.tightness);
    *formula = copy_string(fedstl::render(mined.formula));
    *eps = tight;
  });
}

fedstl_status fedstl_config_default(fedstl_config** out) {
  if (!out) return argument_error("null argument");
  return guarded([&] { *out = new fedstl_config{}; });
}

fedstl_status fedstl_config_load(const char* path, fedstl_config** out) {
  if (!path || !out) return argument_error("null argument");
  return guarded([&] { *out = new fedstl_config{fedstl::load_config(path)}; });
}

fedstl_status fedstl_config_set(fedstl_config* c, const char* key, const char* value) {
  if (!c || !key || !value) return argument_error("null argument");
  return guarded([&] { c->value.set(key, value); });
}

fedstl_status fedstl_config_validate(const fedstl_config* c) {
  if (!c) return argument_error("null argument");
  return guarded([&] { c->value.validate(); });
}

fedstl_status fedstl_config_render(const fedstl_config* c, char** out) {
  if (!c || !out) return argument_error("null argument");
  return guarded([&] {
    std::string text;
    for (const auto& [k, v] : c->value.entries()) text += k + " = " + v + "\n";
    *out = copy_string(text);
  });
}

void fedstl_config_free(fedstl_config* c) { delete c; }

fedstl_status fedstl_train(const fedstl_config* c, int write_files, char** report_json) {
  if (!c || !report_json) return argument_error("null argument");
  return guarded([&] {
    fedstl::TrainOptions options;
    options.write_files = write_files != 0;
    *report_json = copy_string(fedstl::train(c->value, options));
  });
}

fedstl_status fedstl_bench(const fedstl_config* c, const int* rows, size_t n_rows, char** table) {
  if (!c || !table) return argument_error("null argument");
  return guarded([&] {
    fedstl::BenchOptions options = fedstl::bench_options(c->value);
    if (rows) options.rows.assign(rows, rows + n_rows);
    *table = copy_string(fedstl::render_bench(fedstl::bench(c->value, options)));
  });
}

}  // extern "C"
