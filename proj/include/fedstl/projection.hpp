#pragma once

// Finite-horizon DNF expansion, L1 projection onto clauses, the property loss
// L_p and the teacher correction built on it.

#include "fedstl/stl.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace fedstl {

// sum_k coeff_k * x[step][var_k]  cmp  bound
struct LinearConstraint {
  std::size_t step = 0;
  std::vector<std::pair<std::size_t, double>> terms;  // (schema index, coefficient)
  Cmp cmp = Cmp::Ge;
  double bound = 0.0;

  double value(const Trace& y) const;
  // Signed slack, positive when satisfied; matches atom robustness.
  double slack(const Trace& y) const;
  bool satisfied(const Trace& y) const;
};

struct Clause {
  std::vector<LinearConstraint> constraints;

  // Minimum constraint slack (+inf for the empty clause).
  double slack(const Trace& y) const;
  bool satisfied(const Trace& y) const;
};

struct DnfFormula {
  std::vector<Clause> clauses;
  Formula source;
  std::vector<std::string> schema;
  std::size_t horizon = 0;

  // max over clauses of the clause slack; equals robustness(source, y, 0).
  double robustness(const Trace& y) const;
  bool satisfied(const Trace& y) const;
};

struct ProjectionOptions {
  // Margin that turns a strict constraint into a closed one.
  double delta = 1e-6;
  std::size_t clause_cap = 4096;
};

// Negation normal form: Not only directly above atoms, folded into the
// comparison. Implies becomes Or(Not p, q). Throws UnsupportedError for a
// negated Until and for a negated `true`.
Formula to_nnf(const Formula& f);

// Expands f at t = 0 over steps [0, horizon). Within a clause only the
// tightest constraint per (step, expression, direction) is kept; infeasible
// clauses are kept and flagged at projection time. Throws RangeError when a
// window leaves the horizon, UnsupportedError outside the fragment and Error
// when the clause count exceeds the cap.
DnfFormula to_dnf(const Formula& f, const std::vector<std::string>& schema, std::size_t horizon,
                  std::size_t clause_cap = 4096);

// Debug text: one constraint per line, "t=K  expr CMP value".
std::string dump_clause(const Clause& c, const std::vector<std::string>& schema);

struct Projection {
  Trace trace;
  double cost = 0.0;  // L1 distance from the input
  bool feasible = false;
};

// L1-closest trace satisfying every constraint of `c`. A trace already
// satisfying `c` is returned unchanged at cost 0. Infeasible clauses return
// feasible = false and the input trace.
Projection project_clause(const Clause& c, const Trace& y, double delta = 1e-6);

// A formula compiled for repeated projection. Top-level conjuncts touching
// disjoint (step, variable) coordinates are split into independent
// components whose DNFs are expanded separately; the loss is the sum of the
// component minima, identical to the minimum over the full product DNF.
class CompiledProperty {
 public:
  CompiledProperty(const Formula& f, std::vector<std::string> schema, std::size_t horizon,
                   ProjectionOptions options = {});

  const Formula& formula() const { return formula_; }
  const std::vector<std::string>& schema() const { return schema_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t component_count() const { return components_.size(); }
  // Clause count of the equivalent flat DNF, saturating at SIZE_MAX.
  std::size_t clause_count() const;

  // Minimum L1 cost to satisfy the property. Throws InfeasibleError when no
  // clause is feasible.
  double loss(const Trace& y) const;
  // Argmin-clause projection; ties go to the lowest clause index.
  Projection correct(const Trace& y) const;

 private:
  struct Component {
    std::vector<Clause> clauses;
  };

  void check_shape(const Trace& y) const;

  Formula formula_;
  std::vector<std::string> schema_;
  std::size_t horizon_;
  ProjectionOptions options_;
  std::vector<Component> components_;
};

// One-shot wrappers over CompiledProperty; the schema is taken from `y`.
double property_loss(const Formula& f, const Trace& y, std::size_t horizon,
                     const ProjectionOptions& options = {});
Trace teacher_correct(const Formula& f, const Trace& y, std::size_t horizon,
                      const ProjectionOptions& options = {});

}  // namespace fedstl
