#include "fedstl/error.hpp"
#include "fedstl/stl.hpp"
#include "overloaded.hpp"

#include <algorithm>
#include <limits>

namespace fedstl {

using detail::Overloaded;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_window(const Interval& w, std::size_t t, const Trace& tr) {
  if (t + static_cast<std::size_t>(w.hi) >= tr.length()) {
    throw RangeError("window [" + std::to_string(t + w.lo) + "," + std::to_string(t + w.hi) +
                     "] exceeds trace of length " + std::to_string(tr.length()));
  }
}

void check_step(std::size_t t, const Trace& tr) {
  if (t >= tr.length()) {
    throw RangeError("step " + std::to_string(t) + " outside trace of length " +
                     std::to_string(tr.length()));
  }
}

double linear_value(const LinAtom& a, const Trace& tr, std::size_t t) {
  double sum = 0.0;
  for (const auto& term : a.terms) sum += term.coeff * tr.at(t, tr.require_index(term.var));
  return sum;
}

// Signed slack of `value cmp threshold`: positive when satisfied.
double slack(double value, Cmp cmp, double threshold) {
  return is_lower_bound(cmp) ? value - threshold : threshold - value;
}

bool eval_at(const Formula& f, const Trace& tr, std::size_t t);
double rob_at(const Formula& f, const Trace& tr, std::size_t t);

bool eval_at(const Formula& f, const Trace& tr, std::size_t t) {
  return std::visit(
      Overloaded{
          [](const True&) { return true; },
          [&](const Atom& a) {
            check_step(t, tr);
            return compare(tr.at(t, tr.require_index(a.var)), a.cmp, a.threshold);
          },
          [&](const LinAtom& a) {
            check_step(t, tr);
            return compare(linear_value(a, tr, t), a.cmp, a.threshold);
          },
          [&](const Not& n) { return !eval_at(n.arg, tr, t); },
          [&](const And& n) {
            bool l = eval_at(n.lhs, tr, t);
            bool r = eval_at(n.rhs, tr, t);
            return l && r;
          },
          [&](const Or& n) {
            bool l = eval_at(n.lhs, tr, t);
            bool r = eval_at(n.rhs, tr, t);
            return l || r;
          },
          [&](const Implies& n) {
            bool l = eval_at(n.lhs, tr, t);
            bool r = eval_at(n.rhs, tr, t);
            return !l || r;
          },
          [&](const Always& n) {
            check_window(n.window, t, tr);
            bool all = true;
            for (std::size_t s = t + n.window.lo; s <= t + n.window.hi; ++s) {
              all = eval_at(n.arg, tr, s) && all;
            }
            return all;
          },
          [&](const Eventually& n) {
            check_window(n.window, t, tr);
            bool any = false;
            for (std::size_t s = t + n.window.lo; s <= t + n.window.hi; ++s) {
              any = eval_at(n.arg, tr, s) || any;
            }
            return any;
          },
          [&](const Until& n) {
            check_window(n.window, t, tr);
            // prefix tracks "lhs holds on every step of [t, s]".
            bool prefix = true;
            bool found = false;
            for (std::size_t s = t; s <= t + n.window.hi; ++s) {
              prefix = eval_at(n.lhs, tr, s) && prefix;
              if (s >= t + n.window.lo) {
                bool rhs = eval_at(n.rhs, tr, s);
                found = found || (rhs && prefix);
              }
            }
            return found;
          },
      },
      f.variant());
}

double rob_at(const Formula& f, const Trace& tr, std::size_t t) {
  return std::visit(
      Overloaded{
          [](const True&) { return kInf; },
          [&](const Atom& a) {
            check_step(t, tr);
            return slack(tr.at(t, tr.require_index(a.var)), a.cmp, a.threshold);
          },
          [&](const LinAtom& a) {
            check_step(t, tr);
            return slack(linear_value(a, tr, t), a.cmp, a.threshold);
          },
          [&](const Not& n) { return -rob_at(n.arg, tr, t); },
          [&](const And& n) { return std::min(rob_at(n.lhs, tr, t), rob_at(n.rhs, tr, t)); },
          [&](const Or& n) { return std::max(rob_at(n.lhs, tr, t), rob_at(n.rhs, tr, t)); },
          [&](const Implies& n) {
            return std::max(-rob_at(n.lhs, tr, t), rob_at(n.rhs, tr, t));
          },
          [&](const Always& n) {
            check_window(n.window, t, tr);
            double acc = kInf;
            for (std::size_t s = t + n.window.lo; s <= t + n.window.hi; ++s) {
              acc = std::min(acc, rob_at(n.arg, tr, s));
            }
            return acc;
          },
          [&](const Eventually& n) {
            check_window(n.window, t, tr);
            double acc = -kInf;
            for (std::size_t s = t + n.window.lo; s <= t + n.window.hi; ++s) {
              acc = std::max(acc, rob_at(n.arg, tr, s));
            }
            return acc;
          },
          [&](const Until& n) {
            check_window(n.window, t, tr);
            double prefix = kInf;
            double acc = -kInf;
            for (std::size_t s = t; s <= t + n.window.hi; ++s) {
              prefix = std::min(prefix, rob_at(n.lhs, tr, s));
              if (s >= t + n.window.lo) acc = std::max(acc, std::min(rob_at(n.rhs, tr, s), prefix));
            }
            return acc;
          },
      },
      f.variant());
}

}  // namespace

bool eval_bool(const Formula& f, const Trace& tr, std::size_t t) { return eval_at(f, tr, t); }

double robustness(const Formula& f, const Trace& tr, std::size_t t) { return rob_at(f, tr, t); }

}  // namespace fedstl
