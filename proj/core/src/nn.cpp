#include "solarlab/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "solarlab/errors.hpp"

namespace solarlab {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'N', 'N'};
constexpr uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
  }
  throw ContractError("unknown activation");
}

// derivative given pre-activation z and post-activation y
double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
  }
  throw ContractError("unknown activation");
}

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& is, const char* what) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw ParseError(std::string("truncated checkpoint reading ") + what);
  return v;
}

void write_f64s(std::ostream& os, const double* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_f64s(std::istream& is, double* p, size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw ParseError(std::string("truncated checkpoint reading ") + what);
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  throw ContractError("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation name: " + name);
}

int MlpParams::input_dim() const {
  if (layers.empty()) throw ContractError("empty net has no input dim");
  return static_cast<int>(layers.front().w.cols());
}

int MlpParams::output_dim() const {
  if (layers.empty()) throw ContractError("empty net has no output dim");
  return static_cast<int>(layers.back().w.rows());
}

size_t MlpParams::param_count() const {
  size_t n = 0;
  for (const Layer& l : layers) n += static_cast<size_t>(l.w.size()) + static_cast<size_t>(l.b.size());
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ConfigError("net needs at least one layer");
  for (size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.w.rows() == 0 || l.w.cols() == 0)
      throw ConfigError("layer " + std::to_string(i) + " has a zero dimension");
    if (l.b.size() != l.w.rows())
      throw ConfigError("layer " + std::to_string(i) + " bias size does not match rows");
    if (i > 0 && l.w.cols() != layers[i - 1].w.rows())
      throw ConfigError("layer " + std::to_string(i) + " input dim does not chain");
    if (!l.w.allFinite() || !l.b.allFinite())
      throw ValidationError("layer " + std::to_string(i) + " holds non-finite parameters");
  }
}

MlpParams MlpParams::make(const std::vector<int>& dims,
                          const std::vector<Activation>& acts, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("need at least input and output dims");
  if (acts.size() != dims.size() - 1)
    throw ConfigError("need one activation per layer");
  for (int d : dims)
    if (d <= 0) throw ConfigError("layer dims must be positive");

  MlpParams p;
  p.layers.resize(dims.size() - 1);
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    int in = dims[i], out = dims[i + 1];
    double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Layer& l = p.layers[i];
    l.w = Matrix(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) l.w(r, c) = rng.uniform(-bound, bound);
    l.b = Vector::Zero(out);
    l.act = acts[i];
  }
  return p;
}

Grads Grads::zeros_like(const MlpParams& p) {
  Grads g;
  g.dw.reserve(p.layers.size());
  g.db.reserve(p.layers.size());
  for (const Layer& l : p.layers) {
    g.dw.push_back(Matrix::Zero(l.w.rows(), l.w.cols()));
    g.db.push_back(Vector::Zero(l.b.size()));
  }
  return g;
}

void Grads::add(const Grads& other) {
  if (dw.size() != other.dw.size()) throw ContractError("grad shapes differ");
  for (size_t i = 0; i < dw.size(); ++i) {
    dw[i] += other.dw[i];
    db[i] += other.db[i];
  }
}

void Grads::scale(double s) {
  for (auto& m : dw) m *= s;
  for (auto& v : db) v *= s;
}

void Grads::set_zero() {
  for (auto& m : dw) m.setZero();
  for (auto& v : db) v.setZero();
}

bool Grads::finite() const {
  for (const auto& m : dw)
    if (!m.allFinite()) return false;
  for (const auto& v : db)
    if (!v.allFinite()) return false;
  return true;
}

Vector mlp_forward(const MlpParams& p, const Vector& input) {
  MlpCache scratch;
  return mlp_forward(p, input, scratch);
}

Vector mlp_forward(const MlpParams& p, const Vector& input, MlpCache& cache) {
  if (p.layers.empty()) throw ConfigError("forward on an empty net");
  if (input.size() != p.layers.front().w.cols())
    throw ConfigError("input size " + std::to_string(input.size()) +
                      " does not match net input dim " +
                      std::to_string(p.layers.front().w.cols()));
  cache.input = input;
  cache.pre.resize(p.layers.size());
  cache.post.resize(p.layers.size());
  Vector x = input;
  for (size_t i = 0; i < p.layers.size(); ++i) {
    const Layer& l = p.layers[i];
    Vector z = l.w * x + l.b;
    cache.pre[i] = z;
    Vector y(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) y[j] = activate(l.act, z[j]);
    cache.post[i] = y;
    x = std::move(y);
  }
  cache.valid = true;
  return cache.post.back();
}

Vector mlp_backward(const MlpParams& p, const MlpCache& cache,
                    const Vector& upstream, Grads& grads) {
  if (!cache.valid) throw ContractError("backward without a cached forward");
  if (cache.pre.size() != p.layers.size())
    throw ContractError("cache does not match net topology");
  if (upstream.size() != p.layers.back().w.rows())
    throw ContractError("upstream size does not match net output dim");
  if (grads.dw.size() != p.layers.size())
    throw ContractError("grad accumulator does not match net topology");

  Vector delta = upstream;
  for (size_t ii = p.layers.size(); ii-- > 0;) {
    const Layer& l = p.layers[ii];
    const Vector& z = cache.pre[ii];
    const Vector& y = cache.post[ii];
    Vector dz(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j)
      dz[j] = delta[j] * activate_grad(l.act, z[j], y[j]);
    const Vector& below = ii == 0 ? cache.input : cache.post[ii - 1];
    grads.dw[ii].noalias() += dz * below.transpose();
    grads.db[ii] += dz;
    delta = l.w.transpose() * dz;
  }
  return delta;
}

AdamState AdamState::init(const MlpParams& p, double lr) {
  AdamState s;
  s.lr = lr;
  s.mw.reserve(p.layers.size());
  for (const Layer& l : p.layers) {
    s.mw.push_back(Matrix::Zero(l.w.rows(), l.w.cols()));
    s.vw.push_back(Matrix::Zero(l.w.rows(), l.w.cols()));
    s.mb.push_back(Vector::Zero(l.b.size()));
    s.vb.push_back(Vector::Zero(l.b.size()));
  }
  return s;
}

bool adam_step(MlpParams& p, const Grads& g, AdamState& s) {
  if (g.dw.size() != p.layers.size() || s.mw.size() != p.layers.size())
    throw ContractError("adam state or grads do not match net topology");
  if (!g.finite()) return false;

  s.step += 1;
  double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (size_t i = 0; i < p.layers.size(); ++i) {
    s.mw[i] = s.beta1 * s.mw[i] + (1.0 - s.beta1) * g.dw[i];
    s.vw[i] = s.beta2 * s.vw[i] + (1.0 - s.beta2) * g.dw[i].cwiseProduct(g.dw[i]);
    s.mb[i] = s.beta1 * s.mb[i] + (1.0 - s.beta1) * g.db[i];
    s.vb[i] = s.beta2 * s.vb[i] + (1.0 - s.beta2) * g.db[i].cwiseProduct(g.db[i]);

    Matrix mhat = s.mw[i] / c1;
    Matrix denw = (s.vw[i] / c2).cwiseSqrt() +
                  Matrix::Constant(s.vw[i].rows(), s.vw[i].cols(), s.eps);
    p.layers[i].w -= s.lr * mhat.cwiseQuotient(denw);
    Vector mbh = s.mb[i] / c1;
    Vector denb = (s.vb[i] / c2).cwiseSqrt() + Vector::Constant(s.vb[i].size(), s.eps);
    p.layers[i].b -= s.lr * mbh.cwiseQuotient(denb);
  }
  return true;
}

Vector softmax(const Vector& logits) {
  if (logits.size() == 0) throw ContractError("softmax of an empty vector");
  double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  double sum = e.sum();
  return e / sum;
}

double entropy(const Vector& probs) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    double p = probs[i];
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::pair<int, double> categorical_sample(const Vector& probs, Rng& rng) {
  if (probs.size() == 0) throw ContractError("sampling from an empty vector");
  double total = probs.sum();
  if (!std::isfinite(total) || std::abs(total - 1.0) > 1e-6)
    throw ContractError("probabilities do not sum to 1");
  double u = rng.uniform();
  double acc = 0.0;
  int last_positive = -1;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0) throw ContractError("negative probability");
    if (probs[i] > 0.0) last_positive = static_cast<int>(i);
    acc += probs[i];
    if (u < acc && probs[i] > 0.0)
      return {static_cast<int>(i), std::log(probs[i])};
  }
  // u landed in the float-rounding sliver past the last bucket
  if (last_positive < 0) throw ContractError("all probabilities are zero");
  return {last_positive, std::log(probs[last_positive])};
}

MseResult mse_loss(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size())
    throw ConfigError("mse operands differ in size");
  if (pred.size() == 0) throw ConfigError("mse of empty vectors");
  MseResult r;
  Vector d = pred - target;
  double n = static_cast<double>(pred.size());
  r.loss = d.squaredNorm() / n;
  r.grad = (2.0 / n) * d;
  return r;
}

double finite_diff_check(const std::function<double()>& loss,
                         const std::vector<double*>& params,
                         const std::vector<double>& analytic, double step) {
  if (params.size() != analytic.size())
    throw ContractError("analytic gradient size does not match params");
  if (step <= 0.0) throw ConfigError("finite difference step must be positive");
  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    double* p = params[i];
    double saved = *p;
    *p = saved + step;
    double up = loss();
    *p = saved - step;
    double down = loss();
    *p = saved;
    double fd = (up - down) / (2.0 * step);
    double err = std::abs(analytic[i] - fd) / std::max(std::abs(fd), 1e-6);
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_diff_check(const std::function<double(const MlpParams&)>& loss,
                         const MlpParams& at, const Grads& analytic,
                         double step) {
  MlpParams work = at;
  std::vector<double*> ptrs = param_ptrs(work);
  std::vector<double> grad = flatten(analytic);
  auto eval = [&]() { return loss(work); };
  return finite_diff_check(eval, ptrs, grad, step);
}

std::vector<double*> param_ptrs(MlpParams& p) {
  std::vector<double*> out;
  out.reserve(p.param_count());
  for (Layer& l : p.layers) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) out.push_back(&l.w(r, c));
    for (Eigen::Index i = 0; i < l.b.size(); ++i) out.push_back(&l.b[i]);
  }
  return out;
}

std::vector<double> flatten(const Grads& g) {
  std::vector<double> out;
  for (size_t i = 0; i < g.dw.size(); ++i) {
    const Matrix& m = g.dw[i];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
    for (Eigen::Index j = 0; j < g.db[i].size(); ++j) out.push_back(g.db[i][j]);
  }
  return out;
}

void save_mlp(std::ostream& os, const MlpParams& p) {
  p.validate();
  os.write(kMagic, 4);
  write_u32(os, kFormatVersion);
  write_u32(os, static_cast<uint32_t>(p.layers.size()));
  for (const Layer& l : p.layers) {
    write_u32(os, static_cast<uint32_t>(l.w.rows()));
    write_u32(os, static_cast<uint32_t>(l.w.cols()));
    // row-major on disk; Eigen stores column-major so copy per row
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      std::vector<double> row(static_cast<size_t>(l.w.cols()));
      for (Eigen::Index c = 0; c < l.w.cols(); ++c)
        row[static_cast<size_t>(c)] = l.w(r, c);
      write_f64s(os, row.data(), row.size());
    }
    write_f64s(os, l.b.data(), static_cast<size_t>(l.b.size()));
  }
  if (!os) throw IoError("write failed while saving checkpoint");
}

MlpParams load_mlp(std::istream& is, const std::vector<Activation>& acts) {
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("bad checkpoint magic");
  uint32_t version = read_u32(is, "version");
  if (version != kFormatVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  uint32_t count = read_u32(is, "layer count");
  if (count == 0 || count > 1024) throw ParseError("implausible layer count");
  if (acts.size() != count)
    throw ConfigError("checkpoint has " + std::to_string(count) +
                      " layers but " + std::to_string(acts.size()) +
                      " activations were supplied");
  MlpParams p;
  p.layers.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t out = read_u32(is, "layer rows");
    uint32_t in = read_u32(is, "layer cols");
    if (out == 0 || in == 0 || out > (1u << 24) || in > (1u << 24))
      throw ParseError("implausible layer shape");
    Layer& l = p.layers[i];
    l.w = Matrix(out, in);
    std::vector<double> row(in);
    for (uint32_t r = 0; r < out; ++r) {
      read_f64s(is, row.data(), row.size(), "weights");
      for (uint32_t c = 0; c < in; ++c) l.w(r, c) = row[c];
    }
    l.b = Vector(out);
    read_f64s(is, l.b.data(), out, "biases");
    l.act = acts[i];
  }
  p.validate();
  return p;
}

void save_mlp_file(const std::string& path, const MlpParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  save_mlp(os, p);
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

MlpParams load_mlp_file(const std::string& path,
                        const std::vector<Activation>& acts) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  return load_mlp(is, acts);
}

}  // namespace solarlab
