#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "solarlab/rng.hpp"

namespace solarlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : uint8_t { Identity = 0, Tanh = 1, Relu = 2 };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
  Matrix w;  // out x in
  Vector b;  // out
  Activation act = Activation::Identity;
};

// Fixed-topology dense net. No autograd graph, just layers plus the
// hand-written backward below. Everything is double precision.
struct MlpParams {
  std::vector<Layer> layers;

  int input_dim() const;
  int output_dim() const;
  size_t param_count() const;

  // throws ConfigError when layer dims do not chain,
  // ValidationError when any weight is non-finite
  void validate() const;

  // uniform init in +-sqrt(6 / (fan_in + fan_out)), biases zero
  static MlpParams make(const std::vector<int>& dims,
                        const std::vector<Activation>& acts, Rng& rng);
};

struct Grads {
  std::vector<Matrix> dw;
  std::vector<Vector> db;

  static Grads zeros_like(const MlpParams& p);
  void add(const Grads& other);
  void scale(double s);
  void set_zero();
  bool finite() const;
};

// forward tape for a single input, consumed by mlp_backward
struct MlpCache {
  Vector input;
  std::vector<Vector> pre;   // pre-activation per layer
  std::vector<Vector> post;  // activated output per layer
  bool valid = false;
};

Vector mlp_forward(const MlpParams& p, const Vector& input);
Vector mlp_forward(const MlpParams& p, const Vector& input, MlpCache& cache);

// Backprop for the input that produced `cache`. Accumulates parameter
// gradients into `grads` (caller zeroes) and returns dloss/dinput.
// Calling it with an invalid cache is a ContractError.
Vector mlp_backward(const MlpParams& p, const MlpCache& cache,
                    const Vector& upstream, Grads& grads);

struct AdamState {
  std::vector<Matrix> mw, vw;
  std::vector<Vector> mb, vb;
  int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const MlpParams& p, double lr);
};

// Bias-corrected Adam. A non-finite gradient skips the whole step and
// returns false; parameters, moments and the step count stay untouched.
bool adam_step(MlpParams& p, const Grads& g, AdamState& s);

// numerically safe softmax (max subtraction), output sums to 1
Vector softmax(const Vector& logits);

// entropy of a probability vector, 0 log 0 taken as 0
double entropy(const Vector& probs);

// sample an index from `probs` using one uniform draw,
// returns (index, log probs[index])
std::pair<int, double> categorical_sample(const Vector& probs, Rng& rng);

struct MseResult {
  double loss = 0.0;
  Vector grad;  // dloss/dpred
};
MseResult mse_loss(const Vector& pred, const Vector& target);

// Central finite differences against a supplied analytic gradient.
// `params` points at the scalars to wiggle, `analytic` is the gradient to
// check (same order). Returns the worst relative error
//   |analytic - fd| / max(|fd|, 1e-6)
// so a gradient off by a factor of two reads as roughly 1.0.
double finite_diff_check(const std::function<double()>& loss,
                         const std::vector<double*>& params,
                         const std::vector<double>& analytic,
                         double step = 1e-5);

// convenience: wiggle every parameter of a whole net
double finite_diff_check(const std::function<double(const MlpParams&)>& loss,
                         const MlpParams& at, const Grads& analytic,
                         double step = 1e-5);

// addresses of every scalar parameter, layer by layer, weights row-major
// then biases; matches flatten() ordering
std::vector<double*> param_ptrs(MlpParams& p);
std::vector<double> flatten(const Grads& g);

// binary checkpoint: magic "SPNN", u32 version, u32 layer count, then per
// layer u32 out, u32 in, row-major weights and biases as little-endian f64.
// Activations are not stored; the loader is told what to expect.
void save_mlp(std::ostream& os, const MlpParams& p);
MlpParams load_mlp(std::istream& is, const std::vector<Activation>& acts);
void save_mlp_file(const std::string& path, const MlpParams& p);
MlpParams load_mlp_file(const std::string& path,
                        const std::vector<Activation>& acts);

}  // namespace solarlab
