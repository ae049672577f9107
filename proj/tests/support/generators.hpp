#pragma once

// Hand-rolled generators and reference oracles shared by unit and
// acceptance tests. Nothing here calls into the evaluators under test.

#include "fedstl/stl.hpp"

#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace fedstl {

// gtest failure messages show formulas in the grammar.
inline void PrintTo(const Formula& f, std::ostream* os) { *os << render(f); }

}  // namespace fedstl

namespace fedstl::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(integer(0, static_cast<int>(v.size()) - 1))];
  }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

struct FormulaShape {
  std::vector<std::string> vars{"x"};
  int max_depth = 4;
  // Upper bound on horizon_of(result).
  int horizon_budget = 5;
  // Restrict to what the projection engine supports: no Not above temporal
  // or boolean nodes that would negate an Until.
  bool projection_fragment = false;
  bool allow_linear = false;
  // Thresholds are drawn from the integers in [lo, hi].
  int threshold_lo = -3;
  int threshold_hi = 3;
  bool allow_true = true;
};

Formula random_formula(Rng& rng, const FormulaShape& shape);

// Only single-variable atoms, And and Always.
Formula random_convex_formula(Rng& rng, const std::string& var, int depth, int horizon_budget);

// Values drawn from integers in [lo, hi] when `integral`, else uniform reals.
Trace random_trace(Rng& rng, const std::vector<std::string>& vars, std::size_t length, double lo,
                   double hi, bool integral);

// Direct transcription of the qualitative semantics: every quantifier is
// expanded by its own nested loop, with no shared prefix state.
bool brute_eval(const Formula& f, const Trace& tr, std::size_t t);

// Same for robustness.
double brute_robustness(const Formula& f, const Trace& tr, std::size_t t);

}  // namespace fedstl::testing
