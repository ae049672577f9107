#include "fedstl/error.hpp"
#include "fedstl/models.hpp"

#include "../support/generators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace fedstl {
namespace {

const std::vector<std::string> kX{"x"};
const std::vector<std::string> kXY{"x", "y"};

Arch linear(std::size_t in, std::size_t out, std::size_t vars) {
  return Arch{ArchKind::LinearAR, in, out, vars, 0};
}

Arch gru(std::size_t hidden, std::size_t in, std::size_t out, std::size_t vars) {
  return Arch{ArchKind::MiniGRU, in, out, vars, hidden};
}

Trace series(const std::vector<std::string>& schema, std::vector<double> v) {
  return Trace(schema, std::move(v));
}

TEST(Arch, Sizes) {
  EXPECT_EQ(linear(4, 2, 3).shared_size(), 6u * 12u);
  EXPECT_EQ(linear(4, 2, 3).private_size(), 6u);
  // 3 gates of (H*n + H*H + H), head (m*n)*H + m*n
  EXPECT_EQ(gru(5, 4, 2, 3).shared_size(), 3u * (15 + 25 + 5));
  EXPECT_EQ(gru(5, 4, 2, 3).private_size(), 6u * 5u + 6u);
}

TEST(Arch, DescriptorRoundTrip) {
  for (const Arch& a : {linear(12, 3, 2), gru(8, 120, 24, 1)}) {
    EXPECT_EQ(Arch::parse(a.describe()), a) << a.describe();
  }
  EXPECT_THROW(Arch::parse("Transformer input_len=2"), ShapeError);
  EXPECT_THROW(Arch::parse("LinearAR input_len=0 output_len=1 n_vars=1"), ShapeError);
  EXPECT_THROW(Arch::parse("MiniGRU input_len=2 output_len=1 n_vars=1"), ShapeError);
  EXPECT_THROW(Arch::parse("LinearAR depth=3"), ShapeError);
}

TEST(Forward, ZeroParametersPredictZero) {
  auto m = ModelState::zeros(linear(3, 2, 2));
  Trace y = forward(m, series(kXY, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(y.length(), 2u);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, PersistenceWeights) {
  const std::size_t in = 3, out = 4, n = 2;
  auto m = ModelState::zeros(linear(in, out, n));
  // Output (s, v) copies input (in-1, v).
  for (std::size_t s = 0; s < out; ++s) {
    for (std::size_t v = 0; v < n; ++v) m.shared[(s * n + v) * (in * n) + (in - 1) * n + v] = 1.0;
  }
  Trace y = forward(m, series(kXY, {1, 2, 3, 4, 5, 6}));
  for (std::size_t s = 0; s < out; ++s) {
    EXPECT_EQ(y.at(s, 0), 5.0);
    EXPECT_EQ(y.at(s, 1), 6.0);
  }
}

TEST(Forward, GruShape) {
  Stream rng(7);
  auto m = ModelState::init(gru(4, 5, 3, 2), rng);
  Trace y = forward(m, series(kXY, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  EXPECT_EQ(y.length(), 3u);
  EXPECT_EQ(y.n_vars(), 2u);
  EXPECT_EQ(y.schema(), kXY);
}

TEST(Forward, ShapeMismatch) {
  auto m = ModelState::zeros(linear(3, 1, 1));
  EXPECT_THROW(forward(m, series(kX, {1, 2})), ShapeError);
  EXPECT_THROW(forward(m, series(kXY, {1, 2, 3, 4, 5, 6})), ShapeError);
  m.priv.push_back(0.0);
  EXPECT_THROW(forward(m, series(kX, {1, 2, 3})), ShapeError);
}

TEST(Init, WithinFanInBounds) {
  Stream rng(1);
  auto m = ModelState::init(linear(4, 1, 1), rng);
  for (double v : m.shared) EXPECT_LE(std::fabs(v), 0.5);
  Stream rng2(1);
  auto g = ModelState::init(gru(16, 4, 1, 1), rng2);
  // First block is W_z with fan_in = n_vars = 1; U_z follows with fan_in = 16.
  for (std::size_t i = 16; i < 16 + 256; ++i) EXPECT_LE(std::fabs(g.shared[i]), 0.25);
}

TEST(LocalLoss, HandBuiltExample) {
  // Prediction (0, 0), target (1, 0): MSE 0.5. G[0,1](x >= 1) needs L1 cost 2.
  auto m = ModelState::zeros(linear(1, 2, 1));
  Batch b{{series(kX, {3})}, {series(kX, {1, 0})}};
  EXPECT_DOUBLE_EQ(local_loss(m, b, parse("G[0,1](x >= 1)"), 1.0), 2.5);
  EXPECT_DOUBLE_EQ(local_loss(m, b, parse("G[0,1](x >= 1)"), 0.0), 0.5);
}

TEST(LocalLoss, PerfectAndSatisfyingIsZero) {
  auto m = ModelState::zeros(linear(1, 2, 1));
  m.priv = {2.0, 2.0};
  Batch b{{series(kX, {3})}, {series(kX, {2, 2})}};
  EXPECT_EQ(local_loss(m, b, parse("G[0,1](x >= 1)"), 1.0), 0.0);
}

TEST(LocalLoss, BatchMismatch) {
  auto m = ModelState::zeros(linear(1, 2, 1));
  Batch b{{series(kX, {3})}, {}};
  EXPECT_THROW(local_loss(m, b, parse("x >= 0"), 1.0), ShapeError);
  Batch wrong{{series(kX, {3})}, {series(kX, {1, 2, 3})}};
  EXPECT_THROW(local_loss(m, wrong, parse("x >= 0"), 1.0), ShapeError);
}

TEST(SgdStep, LeastSquaresClosedForm) {
  const std::size_t in = 2, out = 2;
  auto m = ModelState::zeros(linear(in, out, 1));
  m.shared = {0.5, -1.0, 2.0, 0.25};
  m.priv = {0.1, -0.2};
  const double x[2] = {1.5, -2.0};
  const double y[2] = {0.3, 4.0};
  Batch b{{series(kX, {x[0], x[1]})}, {series(kX, {y[0], y[1]})}};
  const double lr = 0.05;
  ModelState next = sgd_step(m, b, parse("x >= 0"), 0.0, lr, Scope::All);
  for (std::size_t i = 0; i < out; ++i) {
    double pred = m.priv[i];
    for (std::size_t j = 0; j < in; ++j) pred += m.shared[i * in + j] * x[j];
    const double r = pred - y[i];
    EXPECT_NEAR(next.priv[i], m.priv[i] - lr * r, 1e-15);  // d/db of mean square = 2r/2
    for (std::size_t j = 0; j < in; ++j) {
      EXPECT_NEAR(next.shared[i * in + j], m.shared[i * in + j] - lr * r * x[j], 1e-15);
    }
  }
}

TEST(SgdStep, SatisfiedPredictionsGetNoPenaltyGradient) {
  Stream rng(3);
  auto m = ModelState::init(linear(2, 2, 1), rng);
  Batch b{{series(kX, {0.4, -0.1})}, {series(kX, {1.0, 1.0})}};
  CompiledProperty p(parse("G[0,1](x >= -100)"), kX, 2);
  Gradient with, without;
  loss_and_gradient(m, b, {&p, 3.0}, with);
  loss_and_gradient(m, b, {}, without);
  EXPECT_EQ(with.shared, without.shared);
  EXPECT_EQ(with.priv, without.priv);
}

TEST(SgdStep, ZeroLearningRateIsIdentity) {
  Stream rng(4);
  auto m = ModelState::init(gru(3, 2, 2, 1), rng);
  Batch b{{series(kX, {0.4, -0.1})}, {series(kX, {1.0, 1.0})}};
  EXPECT_EQ(sgd_step(m, b, parse("G[0,1](x >= 2)"), 1.0, 0.0, Scope::All), m);
}

TEST(SgdStep, NonFiniteGradientNamesParameter) {
  auto m = ModelState::zeros(linear(2, 1, 1));
  // The prediction overflows to +inf, so the first weight's gradient does too.
  Batch b{{series(kX, {1e200, 1.0})}, {series(kX, {0.0})}};
  m.shared = {1e200, 0.0};
  try {
    sgd_step(m, b, parse("x >= 0"), 0.0, 0.1, Scope::All);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.param_index(), 0u);
  }
}

// -- Properties -------------------------------------------------------------

struct Problem {
  ModelState model;
  Batch batch;
};

Problem random_problem(testing::Rng& rng, const Arch& arch, const std::vector<std::string>& schema,
                       std::size_t samples) {
  Stream init(static_cast<std::uint64_t>(rng.integer(0, 1 << 30)));
  Problem p{ModelState::init(arch, init), {}};
  for (double& v : p.model.shared) v *= 3.0;
  for (double& v : p.model.priv) v += rng.uniform(-1.0, 1.0);
  for (std::size_t s = 0; s < samples; ++s) {
    p.batch.inputs.push_back(testing::random_trace(rng, schema, arch.input_len, -2, 2, false));
    p.batch.targets.push_back(testing::random_trace(rng, schema, arch.output_len, -2, 2, false));
  }
  return p;
}

// True when some prediction coordinate sits within `eps` of its teacher
// value without matching it, i.e. near a kink of the L1 penalty.
bool near_kink(const ModelState& m, const Batch& b, const CompiledProperty& prop, double eps) {
  for (const Trace& x : b.inputs) {
    Trace y = forward(m, x);
    Trace t = prop.correct(y).trace;
    for (std::size_t i = 0; i < y.data().size(); ++i) {
      const double d = std::fabs(y.data()[i] - t.data()[i]);
      if (d > 0.0 && d < eps) return true;
    }
  }
  return false;
}

void gradient_check(const Arch& arch, const std::vector<std::string>& schema, const char* formula,
                    std::uint64_t seed) {
  testing::Rng rng(seed);
  CompiledProperty prop(parse(formula), schema, arch.output_len);
  int checked = 0;
  for (int attempt = 0; checked < 100 && attempt < 400; ++attempt) {
    Problem p = random_problem(rng, arch, schema, 3);
    if (near_kink(p.model, p.batch, prop, 1e-3)) continue;
    ++checked;
    Penalty pen{&prop, 0.7};
    Gradient g;
    loss_and_gradient(p.model, p.batch, pen, g);
    auto check_block = [&](std::vector<double>& theta, const std::vector<double>& grad,
                           const char* block) {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + 1e-5;
        const double up = local_loss(p.model, p.batch, pen);
        theta[i] = keep - 1e-5;
        const double down = local_loss(p.model, p.batch, pen);
        theta[i] = keep;
        const double numeric = (up - down) / 2e-5;
        const double scale = std::max({std::fabs(numeric), std::fabs(grad[i]), 1e-3});
        ASSERT_LT(std::fabs(numeric - grad[i]) / scale, 1e-4)
            << block << "[" << i << "] analytic " << grad[i] << " numeric " << numeric;
      }
    };
    check_block(p.model.shared, g.shared, "shared");
    check_block(p.model.priv, g.priv, "private");
  }
  EXPECT_EQ(checked, 100);
}

TEST(ModelProperty, GradientCheckLinear) {
  gradient_check(linear(3, 2, 2), kXY, "G[0,1](x >= 0.5) & G[0,1](y <= 0.2)", 11);
}

TEST(ModelProperty, GradientCheckGru) {
  gradient_check(gru(3, 3, 2, 2), kXY, "G[0,1](x >= 0.5) & G[0,1](y <= 0.2)", 12);
}

TEST(ModelProperty, ScopeLeavesOtherPartitionBitIdentical) {
  testing::Rng rng(21);
  CompiledProperty prop(parse("G[0,1](x >= 0.5)"), kXY, 2);
  for (const Arch& arch : {linear(3, 2, 2), gru(3, 3, 2, 2)}) {
    for (int trial = 0; trial < 20; ++trial) {
      Problem p = random_problem(rng, arch, kXY, 4);
      ModelState a = p.model;
      sgd_step(a, p.batch, {&prop, 1.0}, 0.05, Scope::SharedOnly);
      EXPECT_EQ(std::memcmp(a.priv.data(), p.model.priv.data(), a.priv.size() * 8), 0);
      EXPECT_NE(a.shared, p.model.shared);
      ModelState b = p.model;
      sgd_step(b, p.batch, {&prop, 1.0}, 0.05, Scope::PrivateOnly);
      EXPECT_EQ(std::memcmp(b.shared.data(), p.model.shared.data(), b.shared.size() * 8), 0);
      EXPECT_NE(b.priv, p.model.priv);
    }
  }
}

TEST(ModelProperty, DeterministicSteps) {
  for (const Arch& arch : {linear(3, 2, 2), gru(3, 3, 2, 2)}) {
    auto run = [&] {
      testing::Rng rng(31);
      Problem p = random_problem(rng, arch, kXY, 4);
      CompiledProperty prop(parse("G[0,1](x >= 0.5)"), kXY, 2);
      for (int k = 0; k < 10; ++k) {
        sgd_step(p.model, p.batch, {&prop, 1.0}, 0.02, k % 2 ? Scope::SharedOnly : Scope::All);
      }
      return p.model;
    };
    ModelState a = run(), b = run();
    EXPECT_EQ(std::memcmp(a.shared.data(), b.shared.data(), a.shared.size() * 8), 0);
    EXPECT_EQ(std::memcmp(a.priv.data(), b.priv.data(), a.priv.size() * 8), 0);
  }
}

TEST(ModelProperty, ConvexLossDoesNotIncrease) {
  testing::Rng rng(41);
  int feasible = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Formula f = testing::random_convex_formula(rng, "x", 3, 2);
    Problem p = random_problem(rng, linear(3, 3, 1), kX, 5);
    CompiledProperty prop(f, kX, 3);
    Penalty pen{&prop, 1.0};
    double prev = 0.0;
    try {
      prev = local_loss(p.model, p.batch, pen);
    } catch (const InfeasibleError&) {
      continue;
    }
    ++feasible;
    for (int k = 0; k < 50; ++k) {
      sgd_step(p.model, p.batch, pen, 1e-3, Scope::All);
      const double now = local_loss(p.model, p.batch, pen);
      ASSERT_LE(now, prev + 1e-9) << render(f) << " step " << k;
      prev = now;
    }
  }
  EXPECT_GE(feasible, 20);
}

TEST(Checkpoint, RoundTripIsExact) {
  Stream rng(5);
  for (const Arch& arch : {linear(3, 2, 2), gru(4, 3, 2, 2)}) {
    auto m = ModelState::init(arch, rng);
    std::stringstream buf;
    write_checkpoint(buf, m);
    EXPECT_EQ(read_checkpoint(buf), m);
  }
}

TEST(Checkpoint, LittleEndianLayout) {
  auto m = ModelState::zeros(linear(1, 1, 1));
  m.shared = {1.0};
  m.priv = {-2.0};
  std::stringstream buf;
  write_checkpoint(buf, m);
  const std::string bytes = buf.str();
  const std::string head = "LinearAR input_len=1 output_len=1 n_vars=1\n";
  ASSERT_EQ(bytes.size(), head.size() + 16);
  EXPECT_EQ(bytes.substr(0, head.size()), head);
  // 1.0 = 0x3FF0000000000000, -2.0 = 0xC000000000000000
  EXPECT_EQ(static_cast<unsigned char>(bytes[head.size() + 7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[head.size() + 6]), 0xF0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[head.size() + 15]), 0xC0);
}

TEST(Checkpoint, RejectsBadLengths) {
  auto m = ModelState::zeros(linear(2, 1, 1));
  std::stringstream buf;
  write_checkpoint(buf, m);
  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), IoError);
  std::stringstream extra(bytes + "12345678");
  EXPECT_THROW(read_checkpoint(extra), IoError);
}

}  // namespace
}  // namespace fedstl
