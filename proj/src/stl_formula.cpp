#include "fedstl/error.hpp"
#include "fedstl/stl.hpp"
#include "overloaded.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <system_error>

namespace fedstl {

std::string_view to_string(Cmp cmp) {
  switch (cmp) {
    case Cmp::Ge: return ">=";
    case Cmp::Gt: return ">";
    case Cmp::Le: return "<=";
    case Cmp::Lt: return "<";
  }
  return "?";
}

Cmp negated(Cmp cmp) {
  switch (cmp) {
    case Cmp::Ge: return Cmp::Lt;
    case Cmp::Gt: return Cmp::Le;
    case Cmp::Le: return Cmp::Gt;
    case Cmp::Lt: return Cmp::Ge;
  }
  return cmp;
}

bool is_strict(Cmp cmp) { return cmp == Cmp::Gt || cmp == Cmp::Lt; }
bool is_lower_bound(Cmp cmp) { return cmp == Cmp::Ge || cmp == Cmp::Gt; }

bool compare(double lhs, Cmp cmp, double rhs) {
  switch (cmp) {
    case Cmp::Ge: return lhs >= rhs;
    case Cmp::Gt: return lhs > rhs;
    case Cmp::Le: return lhs <= rhs;
    case Cmp::Lt: return lhs < rhs;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Formula

Formula::Formula() : Formula(truth()) {}
Formula::Formula(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

const Formula::Variant& Formula::variant() const { return node_->value; }

bool operator==(const Formula& a, const Formula& b) {
  if (a.node_ == b.node_) return true;
  return a.node_->value == b.node_->value;
}

namespace {

void checked_window(int lo, int hi) {
  if (lo < 0 || hi < lo) {
    throw Error("invalid temporal window [" + std::to_string(lo) + "," + std::to_string(hi) +
                "]: need 0 <= lo <= hi");
  }
}

}  // namespace

Formula Formula::truth() {
  static const auto node = std::make_shared<const Node>(Node{True{}});
  return Formula(node);
}

Formula Formula::atom(std::string var, Cmp cmp, double threshold, int hole) {
  return Formula(std::make_shared<const Node>(Node{Atom{std::move(var), cmp, threshold, hole}}));
}

Formula Formula::lin_atom(std::vector<LinTerm> terms, Cmp cmp, double threshold, int hole) {
  if (terms.empty()) throw Error("linear atom needs at least one term");
  return Formula(
      std::make_shared<const Node>(Node{LinAtom{std::move(terms), cmp, threshold, hole}}));
}

Formula Formula::negation(Formula arg) {
  return Formula(std::make_shared<const Node>(Node{Not{std::move(arg)}}));
}

Formula Formula::conjunction(Formula lhs, Formula rhs) {
  return Formula(std::make_shared<const Node>(Node{And{std::move(lhs), std::move(rhs)}}));
}

Formula Formula::disjunction(Formula lhs, Formula rhs) {
  return Formula(std::make_shared<const Node>(Node{Or{std::move(lhs), std::move(rhs)}}));
}

Formula Formula::implication(Formula lhs, Formula rhs) {
  return Formula(std::make_shared<const Node>(Node{Implies{std::move(lhs), std::move(rhs)}}));
}

Formula Formula::always(int lo, int hi, Formula arg) {
  checked_window(lo, hi);
  return Formula(std::make_shared<const Node>(Node{Always{{lo, hi}, std::move(arg)}}));
}

Formula Formula::eventually(int lo, int hi, Formula arg) {
  checked_window(lo, hi);
  return Formula(std::make_shared<const Node>(Node{Eventually{{lo, hi}, std::move(arg)}}));
}

Formula Formula::until(int lo, int hi, Formula lhs, Formula rhs) {
  checked_window(lo, hi);
  return Formula(
      std::make_shared<const Node>(Node{Until{{lo, hi}, std::move(lhs), std::move(rhs)}}));
}

Formula Formula::conjunction_of(std::span<const Formula> parts) {
  if (parts.empty()) return truth();
  Formula acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = conjunction(acc, parts[i]);
  return acc;
}

using detail::Overloaded;

int horizon_of(const Formula& f) {
  return std::visit(
      Overloaded{
          [](const True&) { return 0; },
          [](const Atom&) { return 0; },
          [](const LinAtom&) { return 0; },
          [](const Not& n) { return horizon_of(n.arg); },
          [](const And& n) { return std::max(horizon_of(n.lhs), horizon_of(n.rhs)); },
          [](const Or& n) { return std::max(horizon_of(n.lhs), horizon_of(n.rhs)); },
          [](const Implies& n) { return std::max(horizon_of(n.lhs), horizon_of(n.rhs)); },
          [](const Always& n) { return n.window.hi + horizon_of(n.arg); },
          [](const Eventually& n) { return n.window.hi + horizon_of(n.arg); },
          [](const Until& n) {
            return n.window.hi + std::max(horizon_of(n.lhs), horizon_of(n.rhs));
          },
      },
      f.variant());
}

namespace {

void collect_conjuncts(const Formula& f, std::vector<Formula>& out) {
  if (const auto* a = f.as<And>()) {
    collect_conjuncts(a->lhs, out);
    collect_conjuncts(a->rhs, out);
  } else {
    out.push_back(f);
  }
}

void collect_vars(const Formula& f, std::vector<std::string>& out) {
  auto add = [&out](const std::string& v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  std::visit(Overloaded{
                 [](const True&) {},
                 [&](const Atom& a) { add(a.var); },
                 [&](const LinAtom& a) {
                   for (const auto& t : a.terms) add(t.var);
                 },
                 [&](const Not& n) { collect_vars(n.arg, out); },
                 [&](const And& n) {
                   collect_vars(n.lhs, out);
                   collect_vars(n.rhs, out);
                 },
                 [&](const Or& n) {
                   collect_vars(n.lhs, out);
                   collect_vars(n.rhs, out);
                 },
                 [&](const Implies& n) {
                   collect_vars(n.lhs, out);
                   collect_vars(n.rhs, out);
                 },
                 [&](const Always& n) { collect_vars(n.arg, out); },
                 [&](const Eventually& n) { collect_vars(n.arg, out); },
                 [&](const Until& n) {
                   collect_vars(n.lhs, out);
                   collect_vars(n.rhs, out);
                 },
             },
             f.variant());
}

}  // namespace

std::vector<Formula> conjuncts(const Formula& f) {
  std::vector<Formula> out;
  collect_conjuncts(f, out);
  return out;
}

std::vector<std::string> variables_of(const Formula& f) {
  std::vector<std::string> out;
  collect_vars(f, out);
  return out;
}

// ---------------------------------------------------------------------------
// Trace

Trace::Trace(std::vector<std::string> schema, std::vector<double> data)
    : schema_(std::move(schema)), data_(std::move(data)) {
  if (schema_.empty()) throw ShapeError("trace needs at least one variable");
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    if (std::find(schema_.begin() + static_cast<std::ptrdiff_t>(i) + 1, schema_.end(), schema_[i]) !=
        schema_.end()) {
      throw ShapeError("duplicate variable '" + schema_[i] + "' in trace schema");
    }
  }
  if (data_.empty() || data_.size() % schema_.size() != 0) {
    throw ShapeError("trace data size " + std::to_string(data_.size()) +
                     " is not a positive multiple of " + std::to_string(schema_.size()) +
                     " variables");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw ShapeError("trace contains a missing or non-finite value");
  }
  length_ = data_.size() / schema_.size();
}

Trace Trace::univariate(std::string var, std::vector<double> values) {
  return Trace({std::move(var)}, std::move(values));
}

std::optional<std::size_t> Trace::index_of(std::string_view var) const {
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    if (schema_[i] == var) return i;
  }
  return std::nullopt;
}

std::size_t Trace::require_index(std::string_view var) const {
  if (auto i = index_of(var)) return *i;
  throw RangeError("variable '" + std::string(var) + "' is not in the trace schema");
}

Trace Trace::suffix(std::size_t from) const {
  if (from >= length_) throw RangeError("suffix start beyond trace end");
  return slice(from, length_ - from);
}

Trace Trace::slice(std::size_t from, std::size_t count) const {
  if (count == 0 || from + count > length_) throw RangeError("slice outside trace");
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(from * n_vars());
  return Trace(schema_,
               std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * n_vars())));
}

// ---------------------------------------------------------------------------
// Rendering

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // also folds -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

enum Prec { kImplies = 1, kOr = 2, kAnd = 3, kUntil = 4, kUnary = 5, kPrimary = 6 };

void render_into(const Formula& f, int min_prec, std::string& out);

void render_linear(const LinAtom& a, std::string& out) {
  for (std::size_t i = 0; i < a.terms.size(); ++i) {
    const auto& t = a.terms[i];
    double c = t.coeff;
    if (i == 0) {
      if (c == -1.0) {
        out += "-";
      } else if (c != 1.0) {
        out += format_number(c) + "*";
      }
    } else {
      out += c < 0 ? " - " : " + ";
      double mag = std::fabs(c);
      if (mag != 1.0) out += format_number(mag) + "*";
    }
    out += t.var;
  }
}

void wrap(int min_prec, int own_prec, std::string& out, const std::string& body) {
  if (own_prec < min_prec) {
    out += "(" + body + ")";
  } else {
    out += body;
  }
}

std::string render_str(const Formula& f, int min_prec) {
  std::string s;
  render_into(f, min_prec, s);
  return s;
}

std::string window_str(const Interval& w) {
  return "[" + std::to_string(w.lo) + "," + std::to_string(w.hi) + "]";
}

void render_into(const Formula& f, int min_prec, std::string& out) {
  std::visit(
      Overloaded{
          [&](const True&) { out += "true"; },
          [&](const Atom& a) {
            wrap(min_prec, kPrimary, out,
                 a.var + " " + std::string(to_string(a.cmp)) + " " + format_number(a.threshold));
          },
          [&](const LinAtom& a) {
            std::string body;
            render_linear(a, body);
            body += " " + std::string(to_string(a.cmp)) + " " + format_number(a.threshold);
            wrap(min_prec, kPrimary, out, body);
          },
          [&](const Not& n) {
            const bool bare = n.arg.as<True>() || n.arg.as<Not>() || n.arg.as<Always>() ||
                              n.arg.as<Eventually>();
            std::string body = "!" + (bare ? render_str(n.arg, kUnary)
                                           : "(" + render_str(n.arg, 0) + ")");
            wrap(min_prec, kUnary, out, body);
          },
          [&](const And& n) {
            wrap(min_prec, kAnd, out,
                 render_str(n.lhs, kAnd) + " & " + render_str(n.rhs, kAnd + 1));
          },
          [&](const Or& n) {
            wrap(min_prec, kOr, out,
                 render_str(n.lhs, kOr) + " | " + render_str(n.rhs, kOr + 1));
          },
          [&](const Implies& n) {
            wrap(min_prec, kImplies, out,
                 render_str(n.lhs, kImplies + 1) + " -> " + render_str(n.rhs, kImplies));
          },
          [&](const Always& n) {
            wrap(min_prec, kUnary, out,
                 "G" + window_str(n.window) + "(" + render_str(n.arg, 0) + ")");
          },
          [&](const Eventually& n) {
            wrap(min_prec, kUnary, out,
                 "F" + window_str(n.window) + "(" + render_str(n.arg, 0) + ")");
          },
          [&](const Until& n) {
            wrap(min_prec, kUntil, out,
                 "(" + render_str(n.lhs, 0) + ") U" + window_str(n.window) + " (" +
                     render_str(n.rhs, 0) + ")");
          },
      },
      f.variant());
}

}  // namespace

std::string render(const Formula& f) { return render_str(f, 0); }

}  // namespace fedstl
