#pragma once

// Sequential predictors with a cluster-shared / locally-private parameter
// split, trained by SGD on MSE plus the property loss.

#include "fedstl/projection.hpp"
#include "fedstl/rng.hpp"
#include "fedstl/stl.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace fedstl {

enum class ArchKind { LinearAR, MiniGRU };

struct Arch {
  ArchKind kind = ArchKind::LinearAR;
  std::size_t input_len = 1;
  std::size_t output_len = 1;
  std::size_t n_vars = 1;
  std::size_t hidden_dim = 0;  // MiniGRU only

  std::size_t shared_size() const;
  std::size_t private_size() const;
  // One-line descriptor, e.g. "MiniGRU hidden_dim=8 input_len=120 output_len=24 n_vars=1".
  std::string describe() const;
  static Arch parse(std::string_view descriptor);
  void validate() const;
  friend bool operator==(const Arch&, const Arch&) = default;
};

// LinearAR:  y = W flatten(x) + b            shared = W, private = b
// MiniGRU:   h_t = GRU(x_t, h_{t-1}), y = Wo h_n + bo
//            shared = [Wz Uz bz Wr Ur br Wh Uh bh], private = [Wo bo]
// Matrices are row-major; flatten is step-major.
struct ModelState {
  Arch arch;
  std::vector<double> shared;
  std::vector<double> priv;

  static ModelState zeros(const Arch& arch);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per parameter block.
  static ModelState init(const Arch& arch, Stream& rng);
  friend bool operator==(const ModelState&, const ModelState&) = default;
};

struct Batch {
  std::vector<Trace> inputs;   // input_len steps each
  std::vector<Trace> targets;  // output_len steps each
};

enum class Scope { All, SharedOnly, PrivateOnly };

// The property term of the objective. A null property or lambda 0 disables it.
struct Penalty {
  const CompiledProperty* property = nullptr;
  double lambda = 0.0;
};

struct Gradient {
  std::vector<double> shared;
  std::vector<double> priv;
};

// Throws ShapeError when x does not match the architecture.
Trace forward(const ModelState& model, const Trace& x);

// Mean over the batch of MSE(target, prediction) + lambda * L_p(prediction).
double local_loss(const ModelState& model, const Batch& batch, const Penalty& penalty);
double local_loss(const ModelState& model, const Batch& batch, const Formula& property,
                  double lambda);

// Objective value and its gradient. The property term contributes
// lambda * sign(prediction - teacher(prediction)) with the teacher output
// held constant; sign(0) = 0.
double loss_and_gradient(const ModelState& model, const Batch& batch, const Penalty& penalty,
                         Gradient& grad);

// One SGD step restricted to `scope`. Throws NumericError naming the
// parameter index (shared first, then private) of a non-finite gradient.
void sgd_step(ModelState& model, const Batch& batch, const Penalty& penalty, double lr,
              Scope scope);
ModelState sgd_step(const ModelState& model, const Batch& batch, const Formula& property,
                    double lambda, double lr, Scope scope);

// Descriptor line, then shared and private values as little-endian float64.
void write_checkpoint(std::ostream& out, const ModelState& model);
ModelState read_checkpoint(std::istream& in);

}  // namespace fedstl
