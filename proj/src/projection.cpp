#include "fedstl/projection.hpp"

#include "fedstl/error.hpp"
#include "overloaded.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace fedstl {

using detail::Overloaded;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

// ---------------------------------------------------------------------------
// Constraints and clauses

double LinearConstraint::value(const Trace& y) const {
  double sum = 0.0;
  for (const auto& [var, coeff] : terms) sum += coeff * y.at(step, var);
  return sum;
}

double LinearConstraint::slack(const Trace& y) const {
  double v = value(y);
  return is_lower_bound(cmp) ? v - bound : bound - v;
}

bool LinearConstraint::satisfied(const Trace& y) const { return compare(value(y), cmp, bound); }

double Clause::slack(const Trace& y) const {
  double s = kInf;
  for (const auto& c : constraints) s = std::min(s, c.slack(y));
  return s;
}

bool Clause::satisfied(const Trace& y) const {
  return std::all_of(constraints.begin(), constraints.end(),
                     [&](const LinearConstraint& c) { return c.satisfied(y); });
}

double DnfFormula::robustness(const Trace& y) const {
  double r = -kInf;
  for (const auto& c : clauses) r = std::max(r, c.slack(y));
  return r;
}

bool DnfFormula::satisfied(const Trace& y) const {
  return std::any_of(clauses.begin(), clauses.end(),
                     [&](const Clause& c) { return c.satisfied(y); });
}

// ---------------------------------------------------------------------------
// Negation normal form

namespace {

Formula nnf(const Formula& f, bool neg) {
  return std::visit(
      Overloaded{
          [&](const True&) -> Formula {
            if (neg) throw UnsupportedError("negated 'true' has no satisfying clause");
            return f;
          },
          [&](const Atom& a) {
            return neg ? Formula::atom(a.var, negated(a.cmp), a.threshold) : f;
          },
          [&](const LinAtom& a) {
            return neg ? Formula::lin_atom(a.terms, negated(a.cmp), a.threshold) : f;
          },
          [&](const Not& n) { return nnf(n.arg, !neg); },
          [&](const And& n) {
            auto l = nnf(n.lhs, neg);
            auto r = nnf(n.rhs, neg);
            return neg ? Formula::disjunction(l, r) : Formula::conjunction(l, r);
          },
          [&](const Or& n) {
            auto l = nnf(n.lhs, neg);
            auto r = nnf(n.rhs, neg);
            return neg ? Formula::conjunction(l, r) : Formula::disjunction(l, r);
          },
          [&](const Implies& n) {
            auto l = nnf(n.lhs, !neg);
            auto r = nnf(n.rhs, neg);
            return neg ? Formula::conjunction(l, r) : Formula::disjunction(l, r);
          },
          [&](const Always& n) {
            auto a = nnf(n.arg, neg);
            return neg ? Formula::eventually(n.window.lo, n.window.hi, a)
                       : Formula::always(n.window.lo, n.window.hi, a);
          },
          [&](const Eventually& n) {
            auto a = nnf(n.arg, neg);
            return neg ? Formula::always(n.window.lo, n.window.hi, a)
                       : Formula::eventually(n.window.lo, n.window.hi, a);
          },
          [&](const Until& n) -> Formula {
            if (neg) throw UnsupportedError("negated Until is outside the projection fragment");
            return Formula::until(n.window.lo, n.window.hi, nnf(n.lhs, false), nnf(n.rhs, false));
          },
      },
      f.variant());
}

}  // namespace

Formula to_nnf(const Formula& f) { return nnf(f, false); }

// ---------------------------------------------------------------------------
// DNF expansion

namespace {

using Terms = std::vector<std::pair<std::size_t, double>>;

Terms sorted_terms(const Terms& t) {
  Terms s = t;
  std::sort(s.begin(), s.end());
  return s;
}

// True when `a` is at least as tight as `b` (same step, expression, side).
bool tighter_or_equal(const LinearConstraint& a, const LinearConstraint& b) {
  if (a.bound != b.bound) return is_lower_bound(a.cmp) ? a.bound > b.bound : a.bound < b.bound;
  return is_strict(a.cmp) || !is_strict(b.cmp);
}

bool same_family(const LinearConstraint& a, const LinearConstraint& b) {
  return a.step == b.step && is_lower_bound(a.cmp) == is_lower_bound(b.cmp) &&
         sorted_terms(a.terms) == sorted_terms(b.terms);
}

void add_constraint(Clause& c, const LinearConstraint& k) {
  for (auto& existing : c.constraints) {
    if (same_family(existing, k)) {
      if (!tighter_or_equal(existing, k)) existing = k;
      return;
    }
  }
  c.constraints.push_back(k);
}

Clause merge(const Clause& a, const Clause& b) {
  Clause out = a;
  for (const auto& k : b.constraints) add_constraint(out, k);
  return out;
}

class Expander {
 public:
  Expander(const std::vector<std::string>& schema, std::size_t horizon, std::size_t cap)
      : schema_(schema), horizon_(horizon), cap_(cap) {}

  std::vector<Clause> expand(const Formula& f, std::size_t t) const {
    return std::visit(
        Overloaded{
            [&](const True&) { return std::vector<Clause>{Clause{}}; },
            [&](const Atom& a) {
              check_step(t);
              LinearConstraint k{t, {{index(a.var), 1.0}}, a.cmp, a.threshold};
              return std::vector<Clause>{Clause{{k}}};
            },
            [&](const LinAtom& a) {
              check_step(t);
              LinearConstraint k{t, {}, a.cmp, a.threshold};
              for (const auto& term : a.terms) k.terms.emplace_back(index(term.var), term.coeff);
              return std::vector<Clause>{Clause{{k}}};
            },
            [&](const Not&) -> std::vector<Clause> {
              throw UnsupportedError("negation above a non-atomic node; convert to NNF first");
            },
            [&](const And& n) { return product(expand(n.lhs, t), expand(n.rhs, t)); },
            [&](const Or& n) { return sum(expand(n.lhs, t), expand(n.rhs, t)); },
            [&](const Implies&) -> std::vector<Clause> {
              throw UnsupportedError("implication; convert to NNF first");
            },
            [&](const Always& n) {
              check_window(n.window, t);
              std::vector<Clause> acc{Clause{}};
              for (std::size_t s = t + n.window.lo; s <= t + n.window.hi; ++s) {
                acc = product(acc, expand(n.arg, s));
              }
              return acc;
            },
            [&](const Eventually& n) {
              check_window(n.window, t);
              std::vector<Clause> acc;
              for (std::size_t s = t + n.window.lo; s <= t + n.window.hi; ++s) {
                acc = sum(std::move(acc), expand(n.arg, s));
              }
              return acc;
            },
            [&](const Until& n) {
              check_window(n.window, t);
              std::vector<Clause> acc;
              std::vector<Clause> prefix{Clause{}};
              for (std::size_t s = t; s <= t + n.window.hi; ++s) {
                prefix = product(prefix, expand(n.lhs, s));
                if (s >= t + n.window.lo) acc = sum(std::move(acc), product(prefix, expand(n.rhs, s)));
              }
              return acc;
            },
        },
        f.variant());
  }

  std::vector<Clause> product(const std::vector<Clause>& a, const std::vector<Clause>& b) const {
    if (!a.empty() && b.size() > cap_ / a.size()) overflow(a.size() * b.size());
    std::vector<Clause> out;
    out.reserve(a.size() * b.size());
    for (const auto& x : a) {
      for (const auto& y : b) out.push_back(merge(x, y));
    }
    return out;
  }

 private:
  const std::vector<std::string>& schema_;
  std::size_t horizon_;
  std::size_t cap_;

  std::size_t index(const std::string& var) const {
    auto it = std::find(schema_.begin(), schema_.end(), var);
    if (it == schema_.end()) throw RangeError("variable '" + var + "' not in schema");
    return static_cast<std::size_t>(it - schema_.begin());
  }

  void check_step(std::size_t t) const {
    if (t >= horizon_) {
      throw RangeError("step " + std::to_string(t) + " outside horizon " + std::to_string(horizon_));
    }
  }

  void check_window(const Interval& w, std::size_t t) const {
    if (t + static_cast<std::size_t>(w.hi) >= horizon_) {
      throw RangeError("window [" + std::to_string(t + w.lo) + "," + std::to_string(t + w.hi) +
                       "] exceeds horizon " + std::to_string(horizon_));
    }
  }

  std::vector<Clause> sum(std::vector<Clause> a, std::vector<Clause> b) const {
    if (a.size() + b.size() > cap_) overflow(a.size() + b.size());
    a.insert(a.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
    return a;
  }

  [[noreturn]] void overflow(std::size_t n) const {
    throw Error("DNF expansion needs " + std::to_string(n) + " clauses, cap is " +
                std::to_string(cap_));
  }
};

}  // namespace

DnfFormula to_dnf(const Formula& f, const std::vector<std::string>& schema, std::size_t horizon,
                  std::size_t clause_cap) {
  Expander ex(schema, horizon, clause_cap);
  DnfFormula out;
  out.clauses = ex.expand(to_nnf(f), 0);
  out.source = f;
  out.schema = schema;
  out.horizon = horizon;
  return out;
}

std::string dump_clause(const Clause& c, const std::vector<std::string>& schema) {
  std::ostringstream out;
  for (const auto& k : c.constraints) {
    out << "t=" << k.step << "  ";
    bool first = true;
    for (const auto& [var, coeff] : k.terms) {
      const std::string& name = var < schema.size() ? schema[var] : "?";
      if (first) {
        if (coeff == -1.0) {
          out << "-";
        } else if (coeff != 1.0) {
          out << format_number(coeff) << "*";
        }
      } else {
        out << (coeff < 0 ? " - " : " + ");
        double m = std::fabs(coeff);
        if (m != 1.0) out << format_number(m) << "*";
      }
      out << name;
      first = false;
    }
    out << " " << to_string(k.cmp) << " " << format_number(k.bound) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Projection

namespace {

// a . x >= b on the coordinates of one step.
struct HalfSpace {
  std::vector<double> a;
  double b;
};

double dot(const std::vector<double>& a, const std::vector<double>& x) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * x[k];
  return s;
}

// L1 projection of z (already inside the box) onto {a.x >= b} within the box.
// Moving along the largest |a_k| first buys the most slack per unit of cost.
bool greedy_halfspace(const HalfSpace& h, const std::vector<double>& lo,
                      const std::vector<double>& hi, std::vector<double>& z) {
  double gap = h.b - dot(h.a, z);
  if (gap <= 0.0) return true;
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) {
    return std::fabs(h.a[p]) > std::fabs(h.a[q]);
  });
  for (std::size_t k : order) {
    double ak = h.a[k];
    if (ak == 0.0) break;
    double room = ak > 0.0 ? hi[k] - z[k] : z[k] - lo[k];
    double need = gap / std::fabs(ak);
    if (need <= room) {
      z[k] += ak > 0.0 ? need : -need;
      return true;
    }
    z[k] = ak > 0.0 ? hi[k] : lo[k];
    gap -= std::fabs(ak) * room;
  }
  return false;
}

// Solves the n x n system rows * x = rhs with partial pivoting.
bool solve(std::vector<std::vector<double>> m, std::vector<double> rhs, std::vector<double>& x) {
  const std::size_t n = rhs.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    }
    if (std::fabs(m[piv][col]) < 1e-12) return false;
    std::swap(m[piv], m[col]);
    std::swap(rhs[piv], rhs[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      double f = m[r][col] / m[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= m[i][c] * x[c];
    x[i] = s / m[i][i];
  }
  return true;
}

std::size_t choose(std::size_t p, std::size_t n) {
  if (n > p) return 0;
  double r = 1.0;
  for (std::size_t i = 0; i < n; ++i) r = r * static_cast<double>(p - i) / static_cast<double>(i + 1);
  return r > 1e9 ? static_cast<std::size_t>(1e9) : static_cast<std::size_t>(std::llround(r));
}

// Exact L1 projection onto box ∩ halfspaces: the optimum sits on a vertex of
// the arrangement of constraint planes, box faces and the planes x_k = y_k.
bool vertex_projection(const std::vector<HalfSpace>& hs, const std::vector<double>& lo,
                       const std::vector<double>& hi, const std::vector<double>& y,
                       std::vector<double>& best) {
  const std::size_t n = y.size();
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
  for (const auto& h : hs) {
    rows.push_back(h.a);
    rhs.push_back(h.b);
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> e(n, 0.0);
    e[k] = 1.0;
    rows.push_back(e);
    rhs.push_back(y[k]);
    if (std::isfinite(lo[k])) rows.push_back(e), rhs.push_back(lo[k]);
    if (std::isfinite(hi[k])) rows.push_back(e), rhs.push_back(hi[k]);
  }
  const std::size_t p = rows.size();
  double best_cost = kInf;
  std::vector<std::size_t> pick(n);
  std::iota(pick.begin(), pick.end(), 0);
  std::vector<double> x;
  while (true) {
    std::vector<std::vector<double>> m;
    std::vector<double> r;
    for (std::size_t i : pick) m.push_back(rows[i]), r.push_back(rhs[i]);
    if (solve(m, r, x)) {
      bool ok = true;
      for (std::size_t k = 0; k < n && ok; ++k) {
        double tol = 1e-9 * (1.0 + std::fabs(x[k]));
        ok = x[k] >= lo[k] - tol && x[k] <= hi[k] + tol;
      }
      for (const auto& h : hs) {
        if (!ok) break;
        ok = dot(h.a, x) >= h.b - 1e-9 * (1.0 + std::fabs(h.b));
      }
      if (ok) {
        double cost = 0.0;
        for (std::size_t k = 0; k < n; ++k) cost += std::fabs(x[k] - y[k]);
        if (cost < best_cost) {
          best_cost = cost;
          best = x;
        }
      }
    }
    // Next n-subset in lexicographic order.
    std::size_t i = n;
    while (i > 0 && pick[i - 1] == p - n + (i - 1)) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < n; ++j) pick[j] = pick[j - 1] + 1;
  }
  if (!std::isfinite(best_cost)) return false;
  for (std::size_t k = 0; k < n; ++k) best[k] = std::clamp(best[k], lo[k], hi[k]);
  return true;
}

// Cyclic halfspace-wise repair; used when vertex enumeration is too large.
bool cyclic_projection(const std::vector<HalfSpace>& hs, const std::vector<double>& lo,
                       const std::vector<double>& hi, std::vector<double>& z) {
  for (int sweep = 0; sweep < 1000; ++sweep) {
    bool all = true;
    for (const auto& h : hs) {
      if (dot(h.a, z) >= h.b) continue;
      all = false;
      if (!greedy_halfspace(h, lo, hi, z)) return false;
    }
    if (all) return true;
  }
  return false;
}

constexpr std::size_t kMaxVertexSubsets = 200000;

// Pushes x across the boundary of a constraint that rounding left violated.
bool repair(const LinearConstraint& k, Trace& x) {
  if (k.satisfied(x)) return true;
  std::size_t best = 0;
  double mag = 0.0;
  for (std::size_t i = 0; i < k.terms.size(); ++i) {
    if (std::fabs(k.terms[i].second) > mag) mag = std::fabs(k.terms[i].second), best = i;
  }
  if (mag == 0.0) return false;
  auto [var, coeff] = k.terms[best];
  // Direction that increases the constraint's slack.
  double dir = (coeff > 0.0) == is_lower_bound(k.cmp) ? kInf : -kInf;
  double& v = x.at(k.step, var);
  for (int i = 0; i < 64 && !k.satisfied(x); ++i) v = std::nextafter(v, dir);
  double step = std::fabs(k.slack(x)) / mag;
  for (int i = 0; i < 64 && !k.satisfied(x); ++i) {
    step = std::max(step * 2.0, std::numeric_limits<double>::min());
    v += dir > 0 ? step : -step;
  }
  return k.satisfied(x);
}

// Projects the constrained coordinates of y onto `c`, writing into `out`
// (which starts as a copy of y). Returns false when the clause is infeasible.
bool project_into(const Clause& c, const Trace& y, double delta, Trace& out) {
  if (c.satisfied(y)) return true;
  const std::size_t n = y.n_vars();
  std::vector<std::size_t> steps;
  for (const auto& k : c.constraints) steps.push_back(k.step);
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());

  for (std::size_t s : steps) {
    std::vector<double> lo(n, -kInf), hi(n, kInf);
    std::vector<HalfSpace> hs;
    std::vector<bool> touched(n, false);
    for (const auto& k : c.constraints) {
      if (k.step != s) continue;
      HalfSpace h{std::vector<double>(n, 0.0), k.bound};
      for (const auto& [var, coeff] : k.terms) h.a[var] += coeff, touched[var] = true;
      if (!is_lower_bound(k.cmp)) {
        for (double& v : h.a) v = -v;
        h.b = -h.b;
      }
      if (is_strict(k.cmp)) h.b += delta;
      std::size_t nz = 0, last = 0;
      for (std::size_t v = 0; v < n; ++v) {
        if (h.a[v] != 0.0) ++nz, last = v;
      }
      if (nz == 0) {
        if (0.0 < h.b) return false;
      } else if (nz == 1) {
        double bound = h.b / h.a[last];
        if (h.a[last] > 0.0) {
          lo[last] = std::max(lo[last], bound);
        } else {
          hi[last] = std::min(hi[last], bound);
        }
      } else {
        hs.push_back(std::move(h));
      }
    }
    std::vector<double> yv(n), z(n);
    for (std::size_t v = 0; v < n; ++v) {
      if (lo[v] > hi[v]) return false;
      yv[v] = y.at(s, v);
      z[v] = std::clamp(yv[v], lo[v], hi[v]);
    }
    bool ok = true;
    if (hs.size() == 1) {
      ok = greedy_halfspace(hs[0], lo, hi, z);
    } else if (hs.size() > 1) {
      std::size_t planes = hs.size() + n;
      for (std::size_t v = 0; v < n; ++v) {
        planes += std::isfinite(lo[v]) + std::isfinite(hi[v]);
      }
      if (choose(planes, n) <= kMaxVertexSubsets) {
        ok = vertex_projection(hs, lo, hi, yv, z);
      } else {
        ok = cyclic_projection(hs, lo, hi, z);
      }
    }
    if (!ok) return false;
    // Untouched coordinates may belong to another component's edit.
    for (std::size_t v = 0; v < n; ++v) {
      if (touched[v]) out.at(s, v) = z[v];
    }
  }

  for (int sweep = 0; sweep < 8; ++sweep) {
    bool all = true;
    for (const auto& k : c.constraints) {
      if (!repair(k, out)) return false;
    }
    for (const auto& k : c.constraints) all = all && k.satisfied(out);
    if (all) return true;
  }
  return false;
}

double l1(const Trace& a, const Trace& b) {
  double s = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += std::fabs(x[i] - y[i]);
  return s;
}

}  // namespace

Projection project_clause(const Clause& c, const Trace& y, double delta) {
  for (const auto& k : c.constraints) {
    if (k.step >= y.length()) throw RangeError("clause constrains a step past the trace end");
    for (const auto& [var, coeff] : k.terms) {
      if (var >= y.n_vars()) throw RangeError("clause references a variable outside the schema");
    }
  }
  Trace out = y;
  if (!project_into(c, y, delta, out)) return {y, 0.0, false};
  return {out, l1(out, y), true};
}

// ---------------------------------------------------------------------------
// Compiled properties

namespace {

struct Leaf {
  Formula f;
  std::size_t t;
};

void flatten(const Formula& f, std::size_t t, std::vector<Leaf>& out) {
  if (f.as<True>()) return;
  if (const auto* a = f.as<And>()) {
    flatten(a->lhs, t, out);
    flatten(a->rhs, t, out);
    return;
  }
  if (const auto* g = f.as<Always>()) {
    for (auto s = static_cast<std::size_t>(g->window.lo); s <= static_cast<std::size_t>(g->window.hi); ++s) {
      flatten(g->arg, t + s, out);
    }
    return;
  }
  out.push_back({f, t});
}

// (step, variable) coordinates a formula at time t can read.
void footprint(const Formula& f, std::size_t t, const std::vector<std::string>& schema,
               std::vector<std::size_t>& out) {
  const std::size_t n = schema.size();
  auto idx = [&](const std::string& v) {
    return static_cast<std::size_t>(std::find(schema.begin(), schema.end(), v) - schema.begin());
  };
  std::visit(Overloaded{
                 [](const True&) {},
                 [&](const Atom& a) { out.push_back(t * n + idx(a.var)); },
                 [&](const LinAtom& a) {
                   for (const auto& term : a.terms) out.push_back(t * n + idx(term.var));
                 },
                 [&](const Not& x) { footprint(x.arg, t, schema, out); },
                 [&](const And& x) {
                   footprint(x.lhs, t, schema, out);
                   footprint(x.rhs, t, schema, out);
                 },
                 [&](const Or& x) {
                   footprint(x.lhs, t, schema, out);
                   footprint(x.rhs, t, schema, out);
                 },
                 [&](const Implies& x) {
                   footprint(x.lhs, t, schema, out);
                   footprint(x.rhs, t, schema, out);
                 },
                 [&](const Always& x) {
                   for (auto s = x.window.lo; s <= x.window.hi; ++s) {
                     footprint(x.arg, t + static_cast<std::size_t>(s), schema, out);
                   }
                 },
                 [&](const Eventually& x) {
                   for (auto s = x.window.lo; s <= x.window.hi; ++s) {
                     footprint(x.arg, t + static_cast<std::size_t>(s), schema, out);
                   }
                 },
                 [&](const Until& x) {
                   for (std::size_t s = t; s <= t + static_cast<std::size_t>(x.window.hi); ++s) {
                     footprint(x.lhs, s, schema, out);
                     if (s >= t + static_cast<std::size_t>(x.window.lo)) {
                       footprint(x.rhs, s, schema, out);
                     }
                   }
                 },
             },
             f.variant());
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

}  // namespace

CompiledProperty::CompiledProperty(const Formula& f, std::vector<std::string> schema,
                                   std::size_t horizon, ProjectionOptions options)
    : formula_(f), schema_(std::move(schema)), horizon_(horizon), options_(options) {
  if (horizon_ == 0) throw RangeError("projection horizon must be at least 1");
  if (static_cast<std::size_t>(horizon_of(f)) >= horizon_) {
    throw RangeError("formula needs " + std::to_string(horizon_of(f) + 1) +
                     " steps, horizon is " + std::to_string(horizon_));
  }
  for (const auto& v : variables_of(f)) {
    if (std::find(schema_.begin(), schema_.end(), v) == schema_.end()) {
      throw RangeError("variable '" + v + "' not in schema");
    }
  }
  std::vector<Leaf> leaves;
  flatten(to_nnf(f), 0, leaves);

  // Union leaves that share a coordinate.
  std::vector<std::size_t> parent(leaves.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> owner(horizon_ * schema_.size(), SIZE_MAX);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    std::vector<std::size_t> coords;
    footprint(leaves[i].f, leaves[i].t, schema_, coords);
    for (std::size_t c : coords) {
      if (owner[c] == SIZE_MAX) {
        owner[c] = i;
      } else {
        parent[find_root(parent, i)] = find_root(parent, owner[c]);
      }
    }
  }

  Expander ex(schema_, horizon_, options_.clause_cap);
  std::vector<std::size_t> slot(leaves.size(), SIZE_MAX);
  std::vector<std::size_t> root_slot(leaves.size(), SIZE_MAX);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    std::size_t r = find_root(parent, i);
    if (root_slot[r] == SIZE_MAX) {
      root_slot[r] = components_.size();
      components_.push_back({{Clause{}}});
    }
    auto& comp = components_[root_slot[r]];
    comp.clauses = ex.product(comp.clauses, ex.expand(leaves[i].f, leaves[i].t));
  }
}

std::size_t CompiledProperty::clause_count() const {
  std::size_t total = 1;
  for (const auto& c : components_) {
    if (c.clauses.size() != 0 && total > SIZE_MAX / c.clauses.size()) return SIZE_MAX;
    total *= c.clauses.size();
  }
  return total;
}

void CompiledProperty::check_shape(const Trace& y) const {
  if (y.schema() != schema_) throw ShapeError("trace schema differs from the compiled schema");
  if (y.length() < horizon_) {
    throw ShapeError("trace has " + std::to_string(y.length()) + " steps, horizon is " +
                     std::to_string(horizon_));
  }
}

double CompiledProperty::loss(const Trace& y) const { return correct(y).cost; }

Projection CompiledProperty::correct(const Trace& y) const {
  check_shape(y);
  Trace out = y;
  Trace scratch = y;
  for (const auto& comp : components_) {
    double best = kInf;
    const Clause* best_clause = nullptr;
    for (const auto& clause : comp.clauses) {
      if (clause.satisfied(y)) {
        best = 0.0;
        best_clause = &clause;
        break;
      }
      bool ok = project_into(clause, y, options_.delta, scratch);
      // Measure and undo the edit; only constrained steps are ever written.
      double cost = 0.0;
      for (const auto& k : clause.constraints) {
        for (std::size_t v = 0; v < y.n_vars(); ++v) {
          double& x = scratch.at(k.step, v);
          cost += std::fabs(x - y.at(k.step, v));
          x = y.at(k.step, v);
        }
      }
      if (!ok) continue;
      if (cost < best) {
        best = cost;
        best_clause = &clause;
      }
    }
    if (best_clause == nullptr) throw InfeasibleError("every clause of the property is infeasible");
    if (best > 0.0) project_into(*best_clause, y, options_.delta, out);
  }
  double cost = l1(out, y);
  return {out, cost, true};
}

double property_loss(const Formula& f, const Trace& y, std::size_t horizon,
                     const ProjectionOptions& options) {
  return CompiledProperty(f, y.schema(), horizon, options).loss(y);
}

Trace teacher_correct(const Formula& f, const Trace& y, std::size_t horizon,
                      const ProjectionOptions& options) {
  return CompiledProperty(f, y.schema(), horizon, options).correct(y).trace;
}

}  // namespace fedstl
