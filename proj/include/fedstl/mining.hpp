#pragma once

// Template-based property mining: instantiate formula skeletons with
// parameter holes and solve each hole for the tightest value that every
// training trace still satisfies.

#include "fedstl/stl.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedstl {

// How robustness of the filled formula moves as the hole's value grows.
enum class Direction { Increasing, Decreasing };

struct Hole {
  std::string name;
  Direction direction = Direction::Increasing;
  // Search interval. Unset ends default to [min - range, max + range] of the
  // hole's expression over the mining data.
  std::optional<double> lower;
  std::optional<double> upper;
};

// Direction implied by where hole `hole` sits in `skeleton` (comparison sense
// and the parity of enclosing negations / implication antecedents).
Direction infer_direction(const Formula& skeleton, int hole);

// Replaces the threshold of every hole atom with values[hole] and clears the
// hole marks. Holes outside `values` are left untouched.
Formula fill_holes(const Formula& f, std::span<const double> values);

class Template {
 public:
  // Throws Error when a hole index is missing or repeated in the skeleton, or
  // a declared direction contradicts the hole's polarity.
  Template(int row, Formula skeleton, std::vector<Hole> holes);

  int row() const { return row_; }
  const Formula& skeleton() const { return skeleton_; }
  std::span<const Hole> holes() const { return holes_; }

  Formula fill(std::span<const double> values) const;

 private:
  int row_;
  Formula skeleton_;
  std::vector<Hole> holes_;
};

struct TemplateOptions {
  int window_len = 2;     // rows 1-4: length of each non-overlapping window
  int lookahead = 2;      // rows 5-6: eventuality window after the trigger
  int eventualities = 3;  // row 7: number of Eventually conjuncts
};

// Rows 1-7 of the reasoning-template catalogue:
//   1 operational range    G[i,i+t-1](x <= a_i & x >= b_i), one conjunct per window
//   2 existence            F[i,i+t-1](x <= a_i & x >= b_i)
//   3 until                (x < a_i) U[i,i+1] (x < b_i)
//   4 intra-task           G[i,i+t-1](x1 - x2 > a_i), a_i >= 0
//   5 temporal implication G[0,T](x >= a1 -> F[0,L](x >= a2))
//   6 nested intra-task    G[0,T](x1 >= a -> F[0,L](x2 >= b))
//   7 multiple eventuality F[seg_1](x >= a_1) & ... & F[seg_n](x >= a_n)
// Single-variable rows produce one template per schema variable; rows 4 and 6
// use the first two variables and throw Error when the schema has fewer.
std::vector<Template> builtin_templates(const std::vector<std::string>& schema, int horizon,
                                        std::span<const int> rows,
                                        const TemplateOptions& options = {});

struct MinedProperty {
  Formula formula;
  // Minimum robustness of `formula` over the mining traces.
  double tightness = 0.0;
  int template_id = 0;
  std::vector<double> parameters;
};

// Default bisection tolerance: 1e-6 times the value range of the traces.
double default_tolerance(std::span<const Trace> traces);

// Solves every hole by bisection along its monotone direction. Holes in
// different top-level conjuncts are independent; holes sharing a conjunct are
// solved in index order with the not-yet-solved ones held at their loosest
// bound. Throws MiningError when a hole has no satisfying value in bounds or
// `traces` is empty.
MinedProperty infer_tight(const Template& tmpl, std::span<const Trace> traces, double tol);

struct ClientProperty {
  Formula formula;                    // flat conjunction of every mined conjunct
  std::vector<MinedProperty> parts;   // in template order
  std::vector<std::string> skipped;   // one reason per failed template
};

// Mines every template and conjoins the successes. Throws MiningError when
// none succeed.
ClientProperty mine_client_property(std::span<const Trace> traces,
                                    std::span<const Template> templates, double tol);

// Text form: per mined part a "# template=ROW eps=VALUE" header followed by
// one conjunct per line in the formula grammar.
std::string serialize_property(std::span<const MinedProperty> parts);

// Reads the text form back (also accepts any file of formula lines): comment
// lines are skipped and the remaining lines are conjoined.
Formula parse_property_text(std::string_view text);

}  // namespace fedstl
