#include "fedstl/mining.hpp"

#include "fedstl/error.hpp"
#include "overloaded.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace fedstl {

using detail::Overloaded;

namespace {

// Visits every hole atom with its polarity (+1 / -1).
template <class Fn>
void walk_holes(const Formula& f, int polarity, Fn&& fn) {
  std::visit(Overloaded{
                 [](const True&) {},
                 [&](const Atom& a) {
                   if (a.hole >= 0) fn(a.hole, a.cmp, polarity);
                 },
                 [&](const LinAtom& a) {
                   if (a.hole >= 0) fn(a.hole, a.cmp, polarity);
                 },
                 [&](const Not& n) { walk_holes(n.arg, -polarity, fn); },
                 [&](const And& n) {
                   walk_holes(n.lhs, polarity, fn);
                   walk_holes(n.rhs, polarity, fn);
                 },
                 [&](const Or& n) {
                   walk_holes(n.lhs, polarity, fn);
                   walk_holes(n.rhs, polarity, fn);
                 },
                 [&](const Implies& n) {
                   walk_holes(n.lhs, -polarity, fn);
                   walk_holes(n.rhs, polarity, fn);
                 },
                 [&](const Always& n) { walk_holes(n.arg, polarity, fn); },
                 [&](const Eventually& n) { walk_holes(n.arg, polarity, fn); },
                 [&](const Until& n) {
                   walk_holes(n.lhs, polarity, fn);
                   walk_holes(n.rhs, polarity, fn);
                 },
             },
             f.variant());
}

Direction direction_of(Cmp cmp, int polarity) {
  // x >= c has robustness x - c: falls as c grows.
  bool increasing = !is_lower_bound(cmp);
  if (polarity < 0) increasing = !increasing;
  return increasing ? Direction::Increasing : Direction::Decreasing;
}

bool contains_hole(const Formula& f, int hole) {
  bool found = false;
  walk_holes(f, 1, [&](int h, Cmp, int) { found = found || h == hole; });
  return found;
}

// Value range of the expression a hole thresholds, over all traces and steps.
std::pair<double, double> hole_data_range(const Formula& f, int hole,
                                          std::span<const Trace> traces) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::function<void(const Formula&)> visit = [&](const Formula& g) {
    std::visit(Overloaded{
                   [](const True&) {},
                   [&](const Atom& a) {
                     if (a.hole != hole) return;
                     for (const auto& tr : traces) {
                       std::size_t v = tr.require_index(a.var);
                       for (std::size_t s = 0; s < tr.length(); ++s) {
                         lo = std::min(lo, tr.at(s, v));
                         hi = std::max(hi, tr.at(s, v));
                       }
                     }
                   },
                   [&](const LinAtom& a) {
                     if (a.hole != hole) return;
                     for (const auto& tr : traces) {
                       for (std::size_t s = 0; s < tr.length(); ++s) {
                         double sum = 0.0;
                         for (const auto& t : a.terms) sum += t.coeff * tr.at(s, tr.require_index(t.var));
                         lo = std::min(lo, sum);
                         hi = std::max(hi, sum);
                       }
                     }
                   },
                   [&](const Not& n) { visit(n.arg); },
                   [&](const And& n) { visit(n.lhs), visit(n.rhs); },
                   [&](const Or& n) { visit(n.lhs), visit(n.rhs); },
                   [&](const Implies& n) { visit(n.lhs), visit(n.rhs); },
                   [&](const Always& n) { visit(n.arg); },
                   [&](const Eventually& n) { visit(n.arg); },
                   [&](const Until& n) { visit(n.lhs), visit(n.rhs); },
               },
               g.variant());
  };
  visit(f);
  return {lo, hi};
}

bool satisfies_all(const Formula& f, std::span<const Trace> traces) {
  for (const auto& tr : traces) {
    if (!eval_bool(f, tr, 0)) return false;
  }
  return true;
}

double min_robustness(const Formula& f, std::span<const Trace> traces) {
  double r = std::numeric_limits<double>::infinity();
  for (const auto& tr : traces) r = std::min(r, robustness(f, tr, 0));
  return r;
}

}  // namespace

Direction infer_direction(const Formula& skeleton, int hole) {
  std::optional<Direction> dir;
  walk_holes(skeleton, 1, [&](int h, Cmp cmp, int pol) {
    if (h == hole) dir = direction_of(cmp, pol);
  });
  if (!dir) throw Error("hole " + std::to_string(hole) + " not present in skeleton");
  return *dir;
}

Formula fill_holes(const Formula& f, std::span<const double> values) {
  auto in_range = [&](int h) { return h >= 0 && static_cast<std::size_t>(h) < values.size(); };
  return std::visit(
      Overloaded{
          [&](const True&) { return f; },
          [&](const Atom& a) {
            if (!in_range(a.hole)) return f;
            return Formula::atom(a.var, a.cmp, values[static_cast<std::size_t>(a.hole)]);
          },
          [&](const LinAtom& a) {
            if (!in_range(a.hole)) return f;
            return Formula::lin_atom(a.terms, a.cmp, values[static_cast<std::size_t>(a.hole)]);
          },
          [&](const Not& n) { return Formula::negation(fill_holes(n.arg, values)); },
          [&](const And& n) {
            return Formula::conjunction(fill_holes(n.lhs, values), fill_holes(n.rhs, values));
          },
          [&](const Or& n) {
            return Formula::disjunction(fill_holes(n.lhs, values), fill_holes(n.rhs, values));
          },
          [&](const Implies& n) {
            return Formula::implication(fill_holes(n.lhs, values), fill_holes(n.rhs, values));
          },
          [&](const Always& n) {
            return Formula::always(n.window.lo, n.window.hi, fill_holes(n.arg, values));
          },
          [&](const Eventually& n) {
            return Formula::eventually(n.window.lo, n.window.hi, fill_holes(n.arg, values));
          },
          [&](const Until& n) {
            return Formula::until(n.window.lo, n.window.hi, fill_holes(n.lhs, values),
                                  fill_holes(n.rhs, values));
          },
      },
      f.variant());
}

Template::Template(int row, Formula skeleton, std::vector<Hole> holes)
    : row_(row), skeleton_(std::move(skeleton)), holes_(std::move(holes)) {
  std::vector<int> seen(holes_.size(), 0);
  std::vector<std::optional<Direction>> dirs(holes_.size());
  walk_holes(skeleton_, 1, [&](int h, Cmp cmp, int pol) {
    if (static_cast<std::size_t>(h) >= holes_.size()) {
      throw Error("skeleton references undeclared hole " + std::to_string(h));
    }
    ++seen[static_cast<std::size_t>(h)];
    dirs[static_cast<std::size_t>(h)] = direction_of(cmp, pol);
  });
  for (std::size_t h = 0; h < holes_.size(); ++h) {
    if (seen[h] != 1) {
      throw Error("hole '" + holes_[h].name + "' must appear exactly once, found " +
                  std::to_string(seen[h]));
    }
    if (*dirs[h] != holes_[h].direction) {
      throw Error("hole '" + holes_[h].name + "' declared with the wrong monotone direction");
    }
    if (holes_[h].lower && holes_[h].upper && *holes_[h].lower > *holes_[h].upper) {
      throw Error("hole '" + holes_[h].name + "' has empty bounds");
    }
  }
}

Formula Template::fill(std::span<const double> values) const {
  if (values.size() != holes_.size()) throw Error("wrong number of parameter values");
  return fill_holes(skeleton_, values);
}

// ---------------------------------------------------------------------------
// Catalogue

namespace {

struct Builder {
  std::vector<Hole> holes;

  int add(std::string name, Cmp cmp, int polarity, std::optional<double> lower = std::nullopt) {
    holes.push_back({std::move(name), direction_of(cmp, polarity), lower, std::nullopt});
    return static_cast<int>(holes.size()) - 1;
  }
};

std::vector<std::pair<int, int>> windows(int horizon, int len) {
  std::vector<std::pair<int, int>> out;
  len = std::max(1, len);
  if (len > horizon) return {{0, horizon - 1}};
  for (int i = 0; i + len - 1 <= horizon - 1; i += len) out.emplace_back(i, i + len - 1);
  return out;
}

Template row_range(const std::string& x, int horizon, const TemplateOptions& o, bool eventually) {
  Builder b;
  std::vector<Formula> parts;
  for (auto [lo, hi] : windows(horizon, o.window_len)) {
    std::string suffix = "_" + std::to_string(lo);
    int a = b.add("a" + suffix, Cmp::Le, 1);
    int c = b.add("b" + suffix, Cmp::Ge, 1);
    Formula body = Formula::conjunction(Formula::atom(x, Cmp::Le, 0.0, a),
                                        Formula::atom(x, Cmp::Ge, 0.0, c));
    parts.push_back(eventually ? Formula::eventually(lo, hi, body) : Formula::always(lo, hi, body));
  }
  return Template(eventually ? 2 : 1, Formula::conjunction_of(parts), std::move(b.holes));
}

Template row_until(const std::string& x, int horizon, const TemplateOptions& o) {
  Builder b;
  std::vector<Formula> parts;
  const int stride = std::max(1, o.window_len);
  for (int i = 0; i + 1 <= horizon - 1; i += stride) {
    std::string suffix = "_" + std::to_string(i);
    int a = b.add("a" + suffix, Cmp::Lt, 1);
    int c = b.add("b" + suffix, Cmp::Lt, 1);
    parts.push_back(Formula::until(i, i + 1, Formula::atom(x, Cmp::Lt, 0.0, a),
                                   Formula::atom(x, Cmp::Lt, 0.0, c)));
  }
  if (parts.empty()) throw Error("until template needs a horizon of at least 2 steps");
  return Template(3, Formula::conjunction_of(parts), std::move(b.holes));
}

Template row_gap(const std::string& x1, const std::string& x2, int horizon,
                 const TemplateOptions& o) {
  Builder b;
  std::vector<Formula> parts;
  for (auto [lo, hi] : windows(horizon, o.window_len)) {
    int a = b.add("a_" + std::to_string(lo), Cmp::Gt, 1, 0.0);
    parts.push_back(Formula::always(
        lo, hi, Formula::lin_atom({{x1, 1.0}, {x2, -1.0}}, Cmp::Gt, 0.0, a)));
  }
  return Template(4, Formula::conjunction_of(parts), std::move(b.holes));
}

Template row_implication(int row, const std::string& trigger, const std::string& target,
                         int horizon, const TemplateOptions& o) {
  const int look = std::clamp(o.lookahead, 0, horizon - 1);
  Builder b;
  int a = b.add(row == 5 ? "a1" : "a", Cmp::Ge, -1);
  int c = b.add(row == 5 ? "a2" : "b", Cmp::Ge, 1);
  Formula f = Formula::always(
      0, horizon - 1 - look,
      Formula::implication(Formula::atom(trigger, Cmp::Ge, 0.0, a),
                           Formula::eventually(0, look, Formula::atom(target, Cmp::Ge, 0.0, c))));
  return Template(row, f, std::move(b.holes));
}

Template row_eventualities(const std::string& x, int horizon, const TemplateOptions& o) {
  const int n = std::clamp(o.eventualities, 1, horizon);
  Builder b;
  std::vector<Formula> parts;
  for (int k = 0; k < n; ++k) {
    int lo = k * horizon / n;
    int hi = (k + 1) * horizon / n - 1;
    int a = b.add("a" + std::to_string(k + 1), Cmp::Ge, 1);
    parts.push_back(Formula::eventually(lo, hi, Formula::atom(x, Cmp::Ge, 0.0, a)));
  }
  return Template(7, Formula::conjunction_of(parts), std::move(b.holes));
}

}  // namespace

std::vector<Template> builtin_templates(const std::vector<std::string>& schema, int horizon,
                                        std::span<const int> rows,
                                        const TemplateOptions& options) {
  if (horizon < 1) throw Error("template horizon must be at least 1");
  if (schema.empty()) throw Error("template schema is empty");
  std::vector<Template> out;
  for (int row : rows) {
    switch (row) {
      case 1:
      case 2:
        for (const auto& x : schema) out.push_back(row_range(x, horizon, options, row == 2));
        break;
      case 3:
        for (const auto& x : schema) out.push_back(row_until(x, horizon, options));
        break;
      case 4:
        if (schema.size() < 2) throw Error("template row 4 needs two variables");
        out.push_back(row_gap(schema[0], schema[1], horizon, options));
        break;
      case 5:
        for (const auto& x : schema) out.push_back(row_implication(5, x, x, horizon, options));
        break;
      case 6:
        if (schema.size() < 2) throw Error("template row 6 needs two variables");
        out.push_back(row_implication(6, schema[0], schema[1], horizon, options));
        break;
      case 7:
        for (const auto& x : schema) out.push_back(row_eventualities(x, horizon, options));
        break;
      default:
        throw Error("unknown template row " + std::to_string(row) + " (expected 1-7)");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference

double default_tolerance(std::span<const Trace> traces) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& tr : traces) {
    for (double v : tr.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  double range = hi - lo;
  return 1e-6 * (range > 0.0 && std::isfinite(range) ? range : 1.0);
}

MinedProperty infer_tight(const Template& tmpl, std::span<const Trace> traces, double tol) {
  if (traces.empty()) throw MiningError("no traces to mine from");
  if (!(tol > 0.0)) throw MiningError("tolerance must be positive");

  const auto holes = tmpl.holes();
  const std::size_t k = holes.size();
  std::vector<double> lower(k), upper(k), values(k);
  for (std::size_t h = 0; h < k; ++h) {
    auto [dmin, dmax] = hole_data_range(tmpl.skeleton(), static_cast<int>(h), traces);
    double range = dmax - dmin;
    if (!(range > 0.0)) range = std::max(1.0, std::fabs(dmin));
    lower[h] = holes[h].lower.value_or(dmin - range);
    upper[h] = holes[h].upper.value_or(dmax + range);
    if (lower[h] > upper[h]) {
      throw MiningError("hole '" + holes[h].name + "' has empty search bounds");
    }
    values[h] = holes[h].direction == Direction::Increasing ? upper[h] : lower[h];
  }

  for (const Formula& part : conjuncts(tmpl.skeleton())) {
    for (std::size_t h = 0; h < k; ++h) {
      if (!contains_hole(part, static_cast<int>(h))) continue;
      const bool inc = holes[h].direction == Direction::Increasing;
      const double tight = inc ? lower[h] : upper[h];
      const double loose = inc ? upper[h] : lower[h];
      auto sat = [&](double p) {
        values[h] = p;
        return satisfies_all(fill_holes(part, values), traces);
      };
      if (sat(tight)) continue;
      if (!sat(loose)) {
        throw MiningError("template row " + std::to_string(tmpl.row()) + ": hole '" +
                          holes[h].name + "' has no satisfying value in [" +
                          format_number(lower[h]) + ", " + format_number(upper[h]) + "]");
      }
      double good = loose;
      double bad = tight;
      while (std::fabs(good - bad) > tol) {
        double mid = good + (bad - good) / 2.0;
        if (mid == good || mid == bad) break;
        if (sat(mid)) {
          good = mid;
        } else {
          bad = mid;
        }
      }
      // Robustness moves one-for-one with a threshold, so the residual
      // usually lands exactly on the boundary.
      // Other holes of the conjunct go loose so they cannot mask this one's
      // residual; the snapped value is still checked with the real values.
      std::vector<double> probe = values;
      probe[h] = good;
      for (std::size_t o = 0; o < k; ++o) {
        if (o != h && contains_hole(part, static_cast<int>(o))) {
          probe[o] = holes[o].direction == Direction::Increasing ? upper[o] : lower[o];
        }
      }
      double residual = min_robustness(fill_holes(part, probe), traces);
      if (residual > 0.0 && std::isfinite(residual)) {
        double snapped = inc ? good - residual : good + residual;
        bool between = inc ? (snapped > bad && snapped < good) : (snapped < bad && snapped > good);
        if (between && sat(snapped)) good = snapped;
      }
      values[h] = good;
    }
  }

  MinedProperty out;
  out.formula = tmpl.fill(values);
  out.tightness = min_robustness(out.formula, traces);
  out.template_id = tmpl.row();
  out.parameters = std::move(values);
  return out;
}

ClientProperty mine_client_property(std::span<const Trace> traces,
                                    std::span<const Template> templates, double tol) {
  if (traces.empty()) throw MiningError("no traces to mine from");
  ClientProperty result;
  std::vector<Formula> formulas;
  for (const auto& tmpl : templates) {
    try {
      result.parts.push_back(infer_tight(tmpl, traces, tol));
      for (auto& c : conjuncts(result.parts.back().formula)) formulas.push_back(std::move(c));
    } catch (const Error& e) {
      std::string reason = "template row " + std::to_string(tmpl.row()) + " skipped: " + e.what();
      spdlog::debug("{}", reason);
      result.skipped.push_back(std::move(reason));
    }
  }
  if (formulas.empty()) {
    throw MiningError("every template failed (" + std::to_string(result.skipped.size()) +
                      " tried)");
  }
  result.formula = Formula::conjunction_of(formulas);
  return result;
}

std::string serialize_property(std::span<const MinedProperty> parts) {
  std::ostringstream out;
  for (const auto& p : parts) {
    out << "# template=" << p.template_id << " eps=" << format_number(p.tightness) << "\n";
    for (const auto& c : conjuncts(p.formula)) out << render(c) << "\n";
  }
  return out.str();
}

Formula parse_property_text(std::string_view text) {
  std::vector<Formula> lines;
  std::size_t start = 0;
  std::size_t offset = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first != std::string_view::npos && line[first] != '#') {
      try {
        lines.push_back(parse(line));
      } catch (const ParseError& e) {
        std::string msg = e.what();
        msg = msg.substr(0, msg.rfind(" at byte "));
        throw ParseError("line " + std::to_string(lines.size() + 1) + ": " + msg,
                         offset + e.offset());
      }
    }
    offset = end + 1;
    start = end + 1;
  }
  if (lines.empty()) throw ParseError("no formula found", 0);
  return Formula::conjunction_of(lines);
}

}  // namespace fedstl
