#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "solarlab/agents.hpp"
#include "solarlab/dataio.hpp"
#include "solarlab/env.hpp"
#include "solarlab/nn.hpp"

namespace solarlab {

inline constexpr int kEmbedVocab = 366;  // day-of-year input range [0, 365]
inline constexpr double kEmbedInputScale = 1.0 / 366.0;

enum class EmbeddingKind : uint8_t { Table = 0, Soliton = 1 };
// how the additive tail of the wave kernel is read:
// sin_of_ratio = sin(c / cos(c)) exactly as parenthesized, tan = sin(c)/cos(c)
enum class SolitonTail : uint8_t { SinOfRatio = 0, Tan = 1 };
// trig secant as written, or the hyperbolic form classic wave packets use
enum class SolitonKernel : uint8_t { Trig = 0, Sech = 1 };

const char* embedding_kind_name(EmbeddingKind k);
EmbeddingKind embedding_kind_from_name(const std::string& name);
const char* soliton_tail_name(SolitonTail t);
SolitonTail soliton_tail_from_name(const std::string& name);
const char* soliton_kernel_name(SolitonKernel k);
SolitonKernel soliton_kernel_from_name(const std::string& name);

// Wave-packet positional code: a phase net (tanh-bounded) and an amplitude
// net both read the scaled day and each output dimension evaluates
//   A * sec^2(c) + sin(c / cos(c)),   c = phase output in (-1, 1)
// so cos(c) > cos(1) = 0.54 and nothing blows up.
struct SolitonEmbed {
  MlpParams amp_net;    // 1 -> hidden -> d, identity output
  MlpParams phase_net;  // 1 -> hidden -> d, tanh output
  int dim = 0;
  SolitonTail tail = SolitonTail::SinOfRatio;
  SolitonKernel kernel = SolitonKernel::Trig;

  static SolitonEmbed make(int dim, int hidden, SolitonTail tail,
                           SolitonKernel kernel, Rng& rng);
};

// Plain learned lookup over 366 day slots. Stored as a single linear layer
// (d x 366) so the optimizer and checkpoint machinery apply unchanged; a
// lookup reads column `day`.
struct TableEmbed {
  MlpParams lookup;
  int dim = 0;

  static TableEmbed make(int dim, Rng& rng);
};

struct MoEConfig {
  EmbeddingKind embedding = EmbeddingKind::Soliton;
  int dim = 128;
  int experts = 6;
  int topk = 2;
  int expert_hidden = 64;
  int embed_hidden = 64;
  int epochs = 2000;
  int minibatch = 32;
  double lr = 1e-3;
  uint64_t seed = 42;
  bool augment = true;  // soliton only; the table sees integer days
  SolitonTail tail = SolitonTail::SinOfRatio;
  SolitonKernel kernel = SolitonKernel::Trig;
  double test_fraction = 0.3;
  bool chrono_split = false;  // leak-free alternative to the random split
  double importance_coef = 0.0;  // optional gate load-balancing penalty

  void validate() const;
};

struct MoEModel {
  EmbeddingKind kind = EmbeddingKind::Soliton;
  SolitonEmbed soliton;  // populated when kind == Soliton
  TableEmbed table;      // populated when kind == Table
  MlpParams gate;        // d -> E logits, single linear layer
  std::vector<MlpParams> experts;  // each d -> hidden -> 1, relu hidden
  int topk = 1;

  int expert_count() const { return static_cast<int>(experts.size()); }
  static MoEModel make(const MoEConfig& cfg, Rng& rng);
};

// day + u with u ~ Uniform[0, 0.99); training-time diversity only
double augment_long(int day, Rng& rng);

struct SolitonCache {
  MlpCache amp;
  MlpCache phase;
  Vector a;    // amplitude-net output
  Vector c;    // phase-net output, in (-1, 1)
  bool valid = false;
};

Vector soliton_embed(double x, const SolitonEmbed& e);
Vector soliton_embed(double x, const SolitonEmbed& e, SolitonCache& cache);

// accumulates into amp/phase grad accumulators (caller zeroes)
void soliton_backward(const SolitonEmbed& e, const SolitonCache& cache,
                      const Vector& upstream, Grads& amp_grads,
                      Grads& phase_grads);

Vector table_embed(int day, const TableEmbed& t);

struct TopK {
  std::vector<int> idx;  // selected experts, ascending logit rank
  Vector weights;        // dense over E; exactly k nonzero entries
};

// softmax over the k largest logits only; unselected experts get an exact
// zero (and, downstream, no gradient); ties prefer the lower index
TopK gate_topk(const Vector& logits, int k);

double moe_forward(const MoEModel& m, double x);

struct MoEGrads {
  Grads gate;
  std::vector<Grads> experts;
  Grads amp, phase;  // soliton embedding
  Grads table;       // table embedding

  static MoEGrads zeros_like(const MoEModel& m);
  void set_zero();
  void scale(double s);
};

// forward pass kept for the importance-loss second backward
struct MoEExampleCache {
  SolitonCache soliton;
  Vector embedded;
  MlpCache gate;
  TopK top;
  std::vector<MlpCache> expert_caches;  // one per selected expert
  std::vector<double> expert_outs;
  double pred = 0.0;
  int day = 0;
  double x = 0.0;
};

// squared error (pred - target)^2 for one example; gradients accumulate
double moe_backward(const MoEModel& m, double x, double target, MoEGrads& g,
                    MoEExampleCache* keep = nullptr);

struct MoEMetrics {
  double train_mse_aug = 0.0;    // post-training loss on augmented inputs
  double train_mse_clean = 0.0;  // post-training loss on integer days
  double test_rmse = 0.0;
};

struct MoETrainResult {
  MoEModel model;
  MoEMetrics metrics;
  Dataset train;
  Dataset test;
};

MoETrainResult train_moe(const Dataset& data, const MoEConfig& cfg);

double predict_price(const MoEModel& m, int day);

// argmax of forecast prices over the window; ties take the earliest day
int best_day_index(const MoEModel& m, std::span<const int> days);

// holds until the forecast's best remaining day, sells there, re-plans on
// what is left of the episode
class BestDayPolicy final : public Policy {
 public:
  explicit BestDayPolicy(const MoEModel& model) : model_(&model) {}
  void begin_episode(const TradingEnv& env, Rng& rng) override;
  Action act(const Observation& obs, const TradingEnv& env, Rng& rng) override;

 private:
  void plan(const TradingEnv& env, int from_cursor);
  const MoEModel* model_;
  int planned_cursor_ = -1;
};

// checkpoint: one embedding-kind tag byte, a small header of counts, then
// the component networks in the dense-net binary format
void save_moe_file(const std::string& path, const MoEModel& m);
MoEModel load_moe_file(const std::string& path);

}  // namespace solarlab
