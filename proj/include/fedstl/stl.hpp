#pragma once

// Signal temporal logic over discrete, uniformly sampled traces: formula
// trees, the ASCII grammar, boolean satisfaction and quantitative robustness.
//
// Formulas and traces are immutable values; every evaluation function is pure
// and may be called concurrently.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fedstl {

enum class Cmp { Ge, Gt, Le, Lt };

std::string_view to_string(Cmp cmp);
// The comparison that holds exactly when `cmp` does not.
Cmp negated(Cmp cmp);
bool is_strict(Cmp cmp);
bool is_lower_bound(Cmp cmp);  // Ge / Gt
bool compare(double lhs, Cmp cmp, double rhs);

// Inclusive step range [lo, hi] relative to the evaluation time.
struct Interval {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

class Formula;

struct True {
  friend bool operator==(const True&, const True&) = default;
};

// `var cmp threshold`. `hole` >= 0 marks a template parameter slot whose
// threshold is filled in by mining; evaluation always uses `threshold`.
struct Atom {
  std::string var;
  Cmp cmp = Cmp::Ge;
  double threshold = 0.0;
  int hole = -1;
  friend bool operator==(const Atom&, const Atom&) = default;
};

struct LinTerm {
  std::string var;
  double coeff = 1.0;
  friend bool operator==(const LinTerm&, const LinTerm&) = default;
};

// `sum(coeff_k * var_k) cmp threshold`, evaluated at a single step.
struct LinAtom {
  std::vector<LinTerm> terms;
  Cmp cmp = Cmp::Ge;
  double threshold = 0.0;
  int hole = -1;
  friend bool operator==(const LinAtom&, const LinAtom&) = default;
};

struct Not;
struct And;
struct Or;
struct Implies;
struct Always;
struct Eventually;
struct Until;

class Formula {
 public:
  struct Node;

  // Defaults to `true`.
  Formula();

  static Formula truth();
  static Formula atom(std::string var, Cmp cmp, double threshold, int hole = -1);
  static Formula lin_atom(std::vector<LinTerm> terms, Cmp cmp, double threshold,
                          int hole = -1);
  static Formula negation(Formula arg);
  static Formula conjunction(Formula lhs, Formula rhs);
  static Formula disjunction(Formula lhs, Formula rhs);
  static Formula implication(Formula lhs, Formula rhs);
  static Formula always(int lo, int hi, Formula arg);
  static Formula eventually(int lo, int hi, Formula arg);
  static Formula until(int lo, int hi, Formula lhs, Formula rhs);

  // Left-nested conjunction of `parts`; `true` when empty.
  static Formula conjunction_of(std::span<const Formula> parts);

  using Variant =
      std::variant<True, Atom, LinAtom, Not, And, Or, Implies, Always, Eventually, Until>;

  const Variant& variant() const;

  // Null unless the root node is a T.
  template <class T>
  const T* as() const;

  friend bool operator==(const Formula& a, const Formula& b);

 private:
  explicit Formula(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

struct Not {
  Formula arg;
  friend bool operator==(const Not&, const Not&) = default;
};
struct And {
  Formula lhs, rhs;
  friend bool operator==(const And&, const And&) = default;
};
struct Or {
  Formula lhs, rhs;
  friend bool operator==(const Or&, const Or&) = default;
};
struct Implies {
  Formula lhs, rhs;
  friend bool operator==(const Implies&, const Implies&) = default;
};
struct Always {
  Interval window;
  Formula arg;
  friend bool operator==(const Always&, const Always&) = default;
};
struct Eventually {
  Interval window;
  Formula arg;
  friend bool operator==(const Eventually&, const Eventually&) = default;
};
struct Until {
  Interval window;
  Formula lhs, rhs;
  friend bool operator==(const Until&, const Until&) = default;
};

struct Formula::Node {
  Variant value;
};

template <class T>
const T* Formula::as() const {
  return std::get_if<T>(&variant());
}

// Number of steps after the evaluation time the formula looks at; a formula
// evaluated at t needs steps [t, t + horizon_of(f)] to exist.
int horizon_of(const Formula& f);

// Top-level conjuncts of a left/right nested And chain.
std::vector<Formula> conjuncts(const Formula& f);

// Variables referenced anywhere in the formula, in first-occurrence order.
std::vector<std::string> variables_of(const Formula& f);

// Finite multivariate signal sampled at unit steps. Data is row-major:
// one row per step, one column per schema variable.
class Trace {
 public:
  Trace(std::vector<std::string> schema, std::vector<double> data);
  static Trace univariate(std::string var, std::vector<double> values);

  std::size_t length() const { return length_; }
  std::size_t n_vars() const { return schema_.size(); }
  const std::vector<std::string>& schema() const { return schema_; }

  double at(std::size_t step, std::size_t var) const { return data_[step * n_vars() + var]; }
  double& at(std::size_t step, std::size_t var) { return data_[step * n_vars() + var]; }
  std::span<const double> row(std::size_t step) const {
    return {data_.data() + step * n_vars(), n_vars()};
  }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  std::optional<std::size_t> index_of(std::string_view var) const;
  // Like index_of, but throws RangeError for an unknown variable.
  std::size_t require_index(std::string_view var) const;

  // Steps [from, length).
  Trace suffix(std::size_t from) const;
  // Steps [from, from + count).
  Trace slice(std::size_t from, std::size_t count) const;

  friend bool operator==(const Trace&, const Trace&) = default;

 private:
  std::vector<std::string> schema_;
  std::vector<double> data_;
  std::size_t length_ = 0;
};

// Boolean satisfaction of `f` by `tr` at step `t`. Throws RangeError when a
// temporal window leaves the trace or a variable is not in the schema.
bool eval_bool(const Formula& f, const Trace& tr, std::size_t t = 0);

// Quantitative robustness. `true` has robustness +inf.
double robustness(const Formula& f, const Trace& tr, std::size_t t = 0);

// Parses the ASCII grammar:
//   G[lo,hi](p)  F[lo,hi](p)  (p) U[lo,hi] (q)  p & q  p | q  !p  p -> q
//   true   x >= c   x > c   x <= c   x < c   2*x1 - x2 >= c   (x1 - x2) > c
// Throws ParseError carrying the byte offset of the problem.
Formula parse(std::string_view text);

// Renders back to the grammar; parse(render(f)) == f.
std::string render(const Formula& f);

// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);

}  // namespace fedstl
