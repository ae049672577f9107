#include "fedstl/models.hpp"

#include "fedstl/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace fedstl {

// ---------------------------------------------------------------------------
// Architecture

namespace {

std::size_t gate_block(const Arch& a) { return a.hidden_dim * a.n_vars + a.hidden_dim * a.hidden_dim + a.hidden_dim; }
std::size_t out_dim(const Arch& a) { return a.output_len * a.n_vars; }
std::size_t in_dim(const Arch& a) { return a.input_len * a.n_vars; }

}  // namespace

std::size_t Arch::shared_size() const {
  return kind == ArchKind::LinearAR ? out_dim(*this) * in_dim(*this) : 3 * gate_block(*this);
}

std::size_t Arch::private_size() const {
  return kind == ArchKind::LinearAR ? out_dim(*this) : out_dim(*this) * hidden_dim + out_dim(*this);
}

std::string Arch::describe() const {
  std::ostringstream out;
  if (kind == ArchKind::LinearAR) {
    out << "LinearAR";
  } else {
    out << "MiniGRU hidden_dim=" << hidden_dim;
  }
  out << " input_len=" << input_len << " output_len=" << output_len << " n_vars=" << n_vars;
  return out.str();
}

Arch Arch::parse(std::string_view descriptor) {
  std::istringstream in{std::string(descriptor)};
  std::string name;
  in >> name;
  Arch a;
  if (name == "LinearAR") {
    a.kind = ArchKind::LinearAR;
  } else if (name == "MiniGRU") {
    a.kind = ArchKind::MiniGRU;
  } else {
    throw ShapeError("unknown architecture '" + name + "'");
  }
  std::string kv;
  while (in >> kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ShapeError("malformed architecture field '" + kv + "'");
    std::string key = kv.substr(0, eq);
    std::size_t value = 0;
    try {
      value = std::stoul(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw ShapeError("malformed architecture value '" + kv + "'");
    }
    if (key == "input_len") {
      a.input_len = value;
    } else if (key == "output_len") {
      a.output_len = value;
    } else if (key == "n_vars") {
      a.n_vars = value;
    } else if (key == "hidden_dim") {
      a.hidden_dim = value;
    } else {
      throw ShapeError("unknown architecture field '" + key + "'");
    }
  }
  a.validate();
  return a;
}

void Arch::validate() const {
  if (input_len == 0 || output_len == 0 || n_vars == 0) {
    throw ShapeError("architecture lengths must be positive: " + describe());
  }
  if (kind == ArchKind::MiniGRU && hidden_dim == 0) {
    throw ShapeError("MiniGRU needs hidden_dim >= 1");
  }
  if (kind == ArchKind::LinearAR && hidden_dim != 0) {
    throw ShapeError("LinearAR takes no hidden_dim");
  }
}

ModelState ModelState::zeros(const Arch& arch) {
  arch.validate();
  return {arch, std::vector<double>(arch.shared_size(), 0.0),
          std::vector<double>(arch.private_size(), 0.0)};
}

ModelState ModelState::init(const Arch& arch, Stream& rng) {
  ModelState m = zeros(arch);
  auto fill = [&](double* p, std::size_t count, std::size_t fan_in) {
    const double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) p[i] = rng.uniform(-r, r);
  };
  if (arch.kind == ArchKind::LinearAR) {
    fill(m.shared.data(), m.shared.size(), in_dim(arch));
    fill(m.priv.data(), m.priv.size(), in_dim(arch));
  } else {
    const std::size_t H = arch.hidden_dim, n = arch.n_vars;
    double* p = m.shared.data();
    for (int gate = 0; gate < 3; ++gate) {
      fill(p, H * n, n);
      p += H * n;
      fill(p, H * H, H);
      p += H * H;
      fill(p, H, H);
      p += H;
    }
    fill(m.priv.data(), m.priv.size(), H);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

void check_input(const ModelState& m, const Trace& x) {
  if (m.shared.size() != m.arch.shared_size() || m.priv.size() != m.arch.private_size()) {
    throw ShapeError("parameter vectors do not match " + m.arch.describe());
  }
  if (x.length() != m.arch.input_len || x.n_vars() != m.arch.n_vars) {
    throw ShapeError("input has " + std::to_string(x.length()) + "x" + std::to_string(x.n_vars()) +
                     " values, model expects " + std::to_string(m.arch.input_len) + "x" +
                     std::to_string(m.arch.n_vars));
  }
}

// y = M v + b for row-major M (rows x cols).
void affine(const double* M, const double* v, const double* b, std::size_t rows, std::size_t cols,
            double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    double s = b ? b[i] : 0.0;
    const double* row = M + i * cols;
    for (std::size_t j = 0; j < cols; ++j) s += row[j] * v[j];
    y[i] = s;
  }
}

struct GruView {
  const double *W[3], *U[3], *b[3];  // z, r, h
  explicit GruView(const ModelState& m) {
    const std::size_t H = m.arch.hidden_dim, n = m.arch.n_vars;
    const double* p = m.shared.data();
    for (int g = 0; g < 3; ++g) {
      W[g] = p;
      U[g] = p + H * n;
      b[g] = p + H * n + H * H;
      p += gate_block(m.arch);
    }
  }
};

// Per-step activations, step-major with hidden_dim values per step.
struct GruCache {
  std::size_t steps = 0;
  std::vector<double> h_prev, z, r, c;
};

// Runs the recurrence, keeping per-step activations when `cache` is set.
std::vector<double> gru_hidden(const ModelState& m, const Trace& x, GruCache* cache) {
  const std::size_t H = m.arch.hidden_dim, n = m.arch.n_vars, T = m.arch.input_len;
  GruView v(m);
  std::vector<double> h(H, 0.0), a(H), rh(H), tmp(H), z(H), r(H), c(H);
  if (cache) {
    cache->steps = T;
    for (auto* buf : {&cache->h_prev, &cache->z, &cache->r, &cache->c}) buf->resize(T * H);
  }
  for (std::size_t t = 0; t < T; ++t) {
    const double* xt = x.row(t).data();
    double* zt = cache ? cache->z.data() + t * H : z.data();
    double* rt = cache ? cache->r.data() + t * H : r.data();
    double* ct = cache ? cache->c.data() + t * H : c.data();
    if (cache) std::copy(h.begin(), h.end(), cache->h_prev.begin() + static_cast<std::ptrdiff_t>(t * H));
    affine(v.W[0], xt, v.b[0], H, n, a.data());
    affine(v.U[0], h.data(), nullptr, H, H, tmp.data());
    for (std::size_t i = 0; i < H; ++i) zt[i] = sigmoid(a[i] + tmp[i]);
    affine(v.W[1], xt, v.b[1], H, n, a.data());
    affine(v.U[1], h.data(), nullptr, H, H, tmp.data());
    for (std::size_t i = 0; i < H; ++i) rt[i] = sigmoid(a[i] + tmp[i]);
    for (std::size_t i = 0; i < H; ++i) rh[i] = rt[i] * h[i];
    affine(v.W[2], xt, v.b[2], H, n, a.data());
    affine(v.U[2], rh.data(), nullptr, H, H, tmp.data());
    for (std::size_t i = 0; i < H; ++i) ct[i] = std::tanh(a[i] + tmp[i]);
    for (std::size_t i = 0; i < H; ++i) h[i] = (1.0 - zt[i]) * h[i] + zt[i] * ct[i];
  }
  return h;
}

std::vector<double> predict_flat(const ModelState& m, const Trace& x, GruCache* cache,
                                 std::vector<double>* hidden) {
  const std::size_t M = out_dim(m.arch);
  std::vector<double> y(M);
  if (m.arch.kind == ArchKind::LinearAR) {
    affine(m.shared.data(), x.data().data(), m.priv.data(), M, in_dim(m.arch), y.data());
  } else {
    std::vector<double> h = gru_hidden(m, x, cache);
    affine(m.priv.data(), h.data(), m.priv.data() + M * m.arch.hidden_dim, M, m.arch.hidden_dim,
           y.data());
    if (hidden) *hidden = std::move(h);
  }
  return y;
}

// Accumulates d(objective)/d(theta) given dy = d(objective)/d(prediction).
void backward(const ModelState& m, const Trace& x, const std::vector<double>& dy,
              const GruCache& cache, const std::vector<double>& hT, Gradient& g) {
  const std::size_t M = out_dim(m.arch);
  if (m.arch.kind == ArchKind::LinearAR) {
    const std::size_t N = in_dim(m.arch);
    const double* xv = x.data().data();
    for (std::size_t i = 0; i < M; ++i) {
      g.priv[i] += dy[i];
      double* row = g.shared.data() + i * N;
      for (std::size_t j = 0; j < N; ++j) row[j] += dy[i] * xv[j];
    }
    return;
  }
  const std::size_t H = m.arch.hidden_dim, n = m.arch.n_vars;
  const double* Wo = m.priv.data();
  double* dWo = g.priv.data();
  double* dbo = g.priv.data() + M * H;
  std::vector<double> dh(H, 0.0);
  for (std::size_t i = 0; i < M; ++i) {
    dbo[i] += dy[i];
    for (std::size_t k = 0; k < H; ++k) {
      dWo[i * H + k] += dy[i] * hT[k];
      dh[k] += Wo[i * H + k] * dy[i];
    }
  }
  GruView v(m);
  double* dW[3];
  double* dU[3];
  double* db[3];
  for (int gi = 0; gi < 3; ++gi) {
    dW[gi] = g.shared.data() + gi * gate_block(m.arch);
    dU[gi] = dW[gi] + H * n;
    db[gi] = dU[gi] + H * H;
  }
  std::vector<double> da_z(H), da_r(H), da_h(H), drh(H), rh(H), dprev(H);
  for (std::size_t t = cache.steps; t-- > 0;) {
    const double* hp = cache.h_prev.data() + t * H;
    const double* z = cache.z.data() + t * H;
    const double* r = cache.r.data() + t * H;
    const double* c = cache.c.data() + t * H;
    const double* xt = x.row(t).data();
    for (std::size_t i = 0; i < H; ++i) {
      rh[i] = r[i] * hp[i];
      da_z[i] = dh[i] * (c[i] - hp[i]) * z[i] * (1.0 - z[i]);
      da_h[i] = dh[i] * z[i] * (1.0 - c[i] * c[i]);
      dprev[i] = dh[i] * (1.0 - z[i]);
    }
    std::fill(drh.begin(), drh.end(), 0.0);
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t k = 0; k < H; ++k) drh[k] += v.U[2][i * H + k] * da_h[i];
    }
    for (std::size_t i = 0; i < H; ++i) {
      da_r[i] = drh[i] * hp[i] * r[i] * (1.0 - r[i]);
      dprev[i] += drh[i] * r[i];
    }
    const double* da[3] = {da_z.data(), da_r.data(), da_h.data()};
    const double* hin[3] = {hp, hp, rh.data()};
    for (int gi = 0; gi < 3; ++gi) {
      for (std::size_t i = 0; i < H; ++i) {
        const double d = da[gi][i];
        db[gi][i] += d;
        for (std::size_t j = 0; j < n; ++j) dW[gi][i * n + j] += d * xt[j];
        for (std::size_t k = 0; k < H; ++k) dU[gi][i * H + k] += d * hin[gi][k];
      }
    }
    for (int gi = 0; gi < 2; ++gi) {
      for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t k = 0; k < H; ++k) dprev[k] += v.U[gi][i * H + k] * da[gi][i];
      }
    }
    dh = dprev;
  }
}

void check_batch(const ModelState& m, const Batch& b) {
  if (b.inputs.size() != b.targets.size()) throw ShapeError("batch inputs and targets differ in count");
  if (b.inputs.empty()) throw ShapeError("empty batch");
  for (std::size_t i = 0; i < b.inputs.size(); ++i) {
    check_input(m, b.inputs[i]);
    if (b.targets[i].length() != m.arch.output_len || b.targets[i].n_vars() != m.arch.n_vars) {
      throw ShapeError("target " + std::to_string(i) + " does not match the output shape");
    }
  }
}

Trace as_trace(const std::vector<double>& y, const Trace& like) {
  return Trace(like.schema(), y);
}

// Shared objective evaluation; fills `grad` when non-null.
double objective(const ModelState& m, const Batch& b, const Penalty& pen, Gradient* grad) {
  check_batch(m, b);
  const std::size_t M = out_dim(m.arch);
  const double inv_b = 1.0 / static_cast<double>(b.inputs.size());
  const bool use_pen = pen.property != nullptr && pen.lambda != 0.0;
  if (pen.lambda < 0.0) throw Error("lambda must be non-negative");
  if (grad) {
    grad->shared.assign(m.shared.size(), 0.0);
    grad->priv.assign(m.priv.size(), 0.0);
  }
  double total = 0.0;
  GruCache cache;
  std::vector<double> hT;
  std::vector<double> dy(M);
  for (std::size_t s = 0; s < b.inputs.size(); ++s) {
    std::vector<double> y = predict_flat(m, b.inputs[s], grad ? &cache : nullptr, &hT);
    auto target = b.targets[s].data();
    double mse = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      double d = y[i] - target[i];
      mse += d * d;
      dy[i] = 2.0 * d / static_cast<double>(M);
    }
    mse /= static_cast<double>(M);
    double lp = 0.0;
    if (use_pen) {
      Trace pred = as_trace(y, b.targets[s]);
      Projection fix = pen.property->correct(pred);
      lp = fix.cost;
      auto t = fix.trace.data();
      for (std::size_t i = 0; i < M; ++i) {
        double d = y[i] - t[i];
        dy[i] += pen.lambda * (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0);
      }
    }
    total += mse + pen.lambda * lp;
    if (grad) {
      for (double& d : dy) d *= inv_b;
      backward(m, b.inputs[s], dy, cache, hT, *grad);
    }
  }
  return total * inv_b;
}

}  // namespace

Trace forward(const ModelState& model, const Trace& x) {
  check_input(model, x);
  std::vector<double> y = predict_flat(model, x, nullptr, nullptr);
  return Trace(x.schema(), std::move(y));
}

double local_loss(const ModelState& model, const Batch& batch, const Penalty& penalty) {
  return objective(model, batch, penalty, nullptr);
}

double local_loss(const ModelState& model, const Batch& batch, const Formula& property,
                  double lambda) {
  if (batch.targets.empty()) throw ShapeError("empty batch");
  CompiledProperty p(property, batch.targets[0].schema(), model.arch.output_len);
  return objective(model, batch, {&p, lambda}, nullptr);
}

double loss_and_gradient(const ModelState& model, const Batch& batch, const Penalty& penalty,
                         Gradient& grad) {
  return objective(model, batch, penalty, &grad);
}

void sgd_step(ModelState& model, const Batch& batch, const Penalty& penalty, double lr,
              Scope scope) {
  if (!(lr >= 0.0)) throw Error("learning rate must be non-negative");
  Gradient g;
  objective(model, batch, penalty, &g);
  for (std::size_t i = 0; i < g.shared.size(); ++i) {
    if (!std::isfinite(g.shared[i])) throw NumericError("non-finite gradient", i);
  }
  for (std::size_t i = 0; i < g.priv.size(); ++i) {
    if (!std::isfinite(g.priv[i])) throw NumericError("non-finite gradient", g.shared.size() + i);
  }
  if (scope != Scope::PrivateOnly) {
    for (std::size_t i = 0; i < g.shared.size(); ++i) model.shared[i] -= lr * g.shared[i];
  }
  if (scope != Scope::SharedOnly) {
    for (std::size_t i = 0; i < g.priv.size(); ++i) model.priv[i] -= lr * g.priv[i];
  }
}

ModelState sgd_step(const ModelState& model, const Batch& batch, const Formula& property,
                    double lambda, double lr, Scope scope) {
  if (batch.targets.empty()) throw ShapeError("empty batch");
  CompiledProperty p(property, batch.targets[0].schema(), model.arch.output_len);
  ModelState next = model;
  sgd_step(next, batch, {&p, lambda}, lr, scope);
  return next;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double get_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw IoError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelState& model) {
  out << model.arch.describe() << "\n";
  for (double v : model.shared) put_f64(out, v);
  for (double v : model.priv) put_f64(out, v);
  if (!out) throw IoError("failed to write checkpoint");
}

ModelState read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("checkpoint has no descriptor line");
  ModelState m = ModelState::zeros(Arch::parse(line));
  for (double& v : m.shared) v = get_f64(in);
  for (double& v : m.priv) v = get_f64(in);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint has trailing bytes");
  return m;
}

}  // namespace fedstl
