#include "solarlab/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "solarlab/errors.hpp"

namespace solarlab {

namespace {

struct KernelDerivs {
  double out = 0.0;
  double d_a = 0.0;  // d out / d amplitude
  double d_c = 0.0;  // d out / d phase
};

// one embedding dimension: amplitude a, bounded phase c
KernelDerivs kernel_eval(double a, double c, SolitonTail tail,
                         SolitonKernel kernel) {
  KernelDerivs k;
  if (kernel == SolitonKernel::Trig) {
    double cosc = std::cos(c);
    double sec2 = 1.0 / (cosc * cosc);
    k.d_a = sec2;
    k.out = a * sec2;
    k.d_c = 2.0 * a * sec2 * std::tan(c);
    if (tail == SolitonTail::SinOfRatio) {
      double ratio = c / cosc;
      k.out += std::sin(ratio);
      k.d_c += std::cos(ratio) * (cosc + c * std::sin(c)) / (cosc * cosc);
    } else {
      k.out += std::tan(c);
      k.d_c += sec2;
    }
  } else {
    double coshc = std::cosh(c);
    double sech2 = 1.0 / (coshc * coshc);
    k.d_a = sech2;
    k.out = a * sech2;
    k.d_c = -2.0 * a * sech2 * std::tanh(c);
    if (tail == SolitonTail::SinOfRatio) {
      double ratio = c / coshc;
      k.out += std::sin(ratio);
      k.d_c += std::cos(ratio) * (coshc - c * std::sinh(c)) / (coshc * coshc);
    } else {
      k.out += std::tanh(c);
      k.d_c += sech2;
    }
  }
  return k;
}

Vector scalar_input(double x) {
  Vector v(1);
  v[0] = x * kEmbedInputScale;
  return v;
}

int table_day(double x) {
  double flo = std::floor(x);
  if (flo != x)
    throw ValidationError("table embedding needs integer days, got a float");
  if (x < 0.0 || x > static_cast<double>(kEmbedVocab - 1))
    throw ValidationError("day outside the embedding table range [0, 365]");
  return static_cast<int>(flo);
}

}  // namespace

const char* embedding_kind_name(EmbeddingKind k) {
  return k == EmbeddingKind::Table ? "table" : "soliton";
}

EmbeddingKind embedding_kind_from_name(const std::string& name) {
  if (name == "table") return EmbeddingKind::Table;
  if (name == "soliton") return EmbeddingKind::Soliton;
  throw ConfigError("embedding must be 'table' or 'soliton', got '" + name + "'");
}

const char* soliton_tail_name(SolitonTail t) {
  return t == SolitonTail::SinOfRatio ? "sin_of_ratio" : "tan";
}

SolitonTail soliton_tail_from_name(const std::string& name) {
  if (name == "sin_of_ratio") return SolitonTail::SinOfRatio;
  if (name == "tan") return SolitonTail::Tan;
  throw ConfigError("tail must be 'sin_of_ratio' or 'tan', got '" + name + "'");
}

const char* soliton_kernel_name(SolitonKernel k) {
  return k == SolitonKernel::Trig ? "trig" : "sech";
}

SolitonKernel soliton_kernel_from_name(const std::string& name) {
  if (name == "trig") return SolitonKernel::Trig;
  if (name == "sech") return SolitonKernel::Sech;
  throw ConfigError("kernel must be 'trig' or 'sech', got '" + name + "'");
}

void MoEConfig::validate() const {
  if (dim < 1) throw ConfigError("embedding dim must be positive");
  if (experts < 1) throw ConfigError("need at least one expert");
  if (topk < 1 || topk > experts)
    throw ConfigError("top-k must be in [1, experts]");
  if (expert_hidden < 1 || embed_hidden < 1)
    throw ConfigError("hidden widths must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (minibatch < 1) throw ConfigError("minibatch size must be positive");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must be in (0, 1)");
  if (importance_coef < 0.0)
    throw ConfigError("importance coefficient must be non-negative");
}

SolitonEmbed SolitonEmbed::make(int dim, int hidden, SolitonTail tail,
                                SolitonKernel kernel, Rng& rng) {
  if (dim < 1 || hidden < 1) throw ConfigError("embedding dims must be positive");
  SolitonEmbed e;
  e.dim = dim;
  e.tail = tail;
  e.kernel = kernel;
  Rng amp_rng = rng.substream(1);
  Rng phase_rng = rng.substream(2);
  e.amp_net = MlpParams::make({1, hidden, dim},
                              {Activation::Tanh, Activation::Identity}, amp_rng);
  e.phase_net = MlpParams::make({1, hidden, dim},
                                {Activation::Tanh, Activation::Tanh}, phase_rng);
  return e;
}

TableEmbed TableEmbed::make(int dim, Rng& rng) {
  if (dim < 1) throw ConfigError("embedding dim must be positive");
  TableEmbed t;
  t.dim = dim;
  t.lookup = MlpParams::make({kEmbedVocab, dim}, {Activation::Identity}, rng);
  return t;
}

MoEModel MoEModel::make(const MoEConfig& cfg, Rng& rng) {
  cfg.validate();
  MoEModel m;
  m.kind = cfg.embedding;
  m.topk = cfg.topk;
  Rng gate_rng = rng.substream(1);
  Rng embed_rng = rng.substream(2);
  m.gate = MlpParams::make({cfg.dim, cfg.experts}, {Activation::Identity},
                           gate_rng);
  if (cfg.embedding == EmbeddingKind::Soliton)
    m.soliton = SolitonEmbed::make(cfg.dim, cfg.embed_hidden, cfg.tail,
                                   cfg.kernel, embed_rng);
  else
    m.table = TableEmbed::make(cfg.dim, embed_rng);
  m.experts.reserve(static_cast<size_t>(cfg.experts));
  for (int e = 0; e < cfg.experts; ++e) {
    Rng expert_rng = rng.substream(static_cast<uint64_t>(10 + e));
    m.experts.push_back(MlpParams::make(
        {cfg.dim, cfg.expert_hidden, 1},
        {Activation::Relu, Activation::Identity}, expert_rng));
  }
  return m;
}

double augment_long(int day, Rng& rng) {
  if (day < 0) throw ContractError("augmentation input day must be >= 0");
  return static_cast<double>(day) + rng.uniform(0.0, 0.99);
}

Vector soliton_embed(double x, const SolitonEmbed& e) {
  SolitonCache scratch;
  return soliton_embed(x, e, scratch);
}

Vector soliton_embed(double x, const SolitonEmbed& e, SolitonCache& cache) {
  if (!std::isfinite(x)) throw ValidationError("embedding input must be finite");
  Vector in = scalar_input(x);
  cache.a = mlp_forward(e.amp_net, in, cache.amp);
  cache.c = mlp_forward(e.phase_net, in, cache.phase);
  cache.valid = true;
  Vector out(e.dim);
  for (int i = 0; i < e.dim; ++i)
    out[i] = kernel_eval(cache.a[i], cache.c[i], e.tail, e.kernel).out;
  return out;
}

void soliton_backward(const SolitonEmbed& e, const SolitonCache& cache,
                      const Vector& upstream, Grads& amp_grads,
                      Grads& phase_grads) {
  if (!cache.valid) throw ContractError("backward without a cached forward");
  if (upstream.size() != e.dim)
    throw ContractError("upstream size does not match embedding dim");
  Vector da(e.dim), dc(e.dim);
  for (int i = 0; i < e.dim; ++i) {
    KernelDerivs k = kernel_eval(cache.a[i], cache.c[i], e.tail, e.kernel);
    da[i] = upstream[i] * k.d_a;
    dc[i] = upstream[i] * k.d_c;
  }
  mlp_backward(e.amp_net, cache.amp, da, amp_grads);
  mlp_backward(e.phase_net, cache.phase, dc, phase_grads);
}

Vector table_embed(int day, const TableEmbed& t) {
  if (day < 0 || day >= kEmbedVocab)
    throw ValidationError("day outside the embedding table range [0, 365]");
  return t.lookup.layers[0].w.col(day);
}

TopK gate_topk(const Vector& logits, int k) {
  int e_count = static_cast<int>(logits.size());
  if (k < 1 || k > e_count) throw ConfigError("top-k must be in [1, experts]");
  std::vector<int> order(static_cast<size_t>(e_count));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  TopK top;
  top.idx.assign(order.begin(), order.begin() + k);
  double m = logits[top.idx[0]];
  for (int i : top.idx) m = std::max(m, logits[i]);
  double sum = 0.0;
  std::vector<double> ex(top.idx.size());
  for (size_t r = 0; r < top.idx.size(); ++r) {
    ex[r] = std::exp(logits[top.idx[r]] - m);
    sum += ex[r];
  }
  top.weights = Vector::Zero(e_count);
  for (size_t r = 0; r < top.idx.size(); ++r)
    top.weights[top.idx[r]] = ex[r] / sum;
  return top;
}

MoEGrads MoEGrads::zeros_like(const MoEModel& m) {
  MoEGrads g;
  g.gate = Grads::zeros_like(m.gate);
  g.experts.reserve(m.experts.size());
  for (const MlpParams& e : m.experts) g.experts.push_back(Grads::zeros_like(e));
  if (m.kind == EmbeddingKind::Soliton) {
    g.amp = Grads::zeros_like(m.soliton.amp_net);
    g.phase = Grads::zeros_like(m.soliton.phase_net);
  } else {
    g.table = Grads::zeros_like(m.table.lookup);
  }
  return g;
}

void MoEGrads::set_zero() {
  gate.set_zero();
  for (Grads& e : experts) e.set_zero();
  amp.set_zero();
  phase.set_zero();
  table.set_zero();
}

void MoEGrads::scale(double s) {
  gate.scale(s);
  for (Grads& e : experts) e.scale(s);
  amp.scale(s);
  phase.scale(s);
  table.scale(s);
}

double moe_forward(const MoEModel& m, double x) {
  Vector embedded;
  if (m.kind == EmbeddingKind::Soliton)
    embedded = soliton_embed(x, m.soliton);
  else
    embedded = table_embed(table_day(x), m.table);
  Vector logits = mlp_forward(m.gate, embedded);
  TopK top = gate_topk(logits, m.topk);
  double pred = 0.0;
  for (int j : top.idx)
    pred += top.weights[j] * mlp_forward(m.experts[static_cast<size_t>(j)],
                                         embedded)[0];
  return pred;
}

double moe_backward(const MoEModel& m, double x, double target, MoEGrads& g,
                    MoEExampleCache* keep) {
  MoEExampleCache local;
  MoEExampleCache& c = keep ? *keep : local;
  c.x = x;

  if (m.kind == EmbeddingKind::Soliton) {
    c.embedded = soliton_embed(x, m.soliton, c.soliton);
  } else {
    c.day = table_day(x);
    c.embedded = table_embed(c.day, m.table);
  }

  Vector logits = mlp_forward(m.gate, c.embedded, c.gate);
  c.top = gate_topk(logits, m.topk);
  size_t k = c.top.idx.size();
  c.expert_caches.resize(k);
  c.expert_outs.resize(k);
  c.pred = 0.0;
  for (size_t r = 0; r < k; ++r) {
    int j = c.top.idx[r];
    c.expert_outs[r] = mlp_forward(m.experts[static_cast<size_t>(j)],
                                   c.embedded, c.expert_caches[r])[0];
    c.pred += c.top.weights[j] * c.expert_outs[r];
  }

  double diff = c.pred - target;
  double loss = diff * diff;
  double dpred = 2.0 * diff;

  Vector demb = Vector::Zero(c.embedded.size());
  std::vector<double> dw(k);
  for (size_t r = 0; r < k; ++r) {
    int j = c.top.idx[r];
    dw[r] = dpred * c.expert_outs[r];
    Vector dout(1);
    dout[0] = dpred * c.top.weights[j];
    demb += mlp_backward(m.experts[static_cast<size_t>(j)], c.expert_caches[r],
                         dout, g.experts[static_cast<size_t>(j)]);
  }

  // softmax over the selected logits only; unselected experts stay at
  // exactly zero gradient by construction
  double wsum = 0.0;
  for (size_t r = 0; r < k; ++r) wsum += c.top.weights[c.top.idx[r]] * dw[r];
  Vector dlogits = Vector::Zero(logits.size());
  for (size_t r = 0; r < k; ++r) {
    int j = c.top.idx[r];
    dlogits[j] = c.top.weights[j] * (dw[r] - wsum);
  }
  demb += mlp_backward(m.gate, c.gate, dlogits, g.gate);

  if (m.kind == EmbeddingKind::Soliton)
    soliton_backward(m.soliton, c.soliton, demb, g.amp, g.phase);
  else
    g.table.dw[0].col(c.day) += demb;

  return loss;
}

namespace {

struct MoEOptimizer {
  AdamState gate;
  std::vector<AdamState> experts;
  AdamState amp, phase, table;

  static MoEOptimizer init(const MoEModel& m, double lr) {
    MoEOptimizer o;
    o.gate = AdamState::init(m.gate, lr);
    for (const MlpParams& e : m.experts)
      o.experts.push_back(AdamState::init(e, lr));
    if (m.kind == EmbeddingKind::Soliton) {
      o.amp = AdamState::init(m.soliton.amp_net, lr);
      o.phase = AdamState::init(m.soliton.phase_net, lr);
    } else {
      o.table = AdamState::init(m.table.lookup, lr);
    }
    return o;
  }
};

void moe_step(MoEModel& m, const MoEGrads& g, MoEOptimizer& o) {
  adam_step(m.gate, g.gate, o.gate);
  for (size_t e = 0; e < m.experts.size(); ++e)
    adam_step(m.experts[e], g.experts[e], o.experts[e]);
  if (m.kind == EmbeddingKind::Soliton) {
    adam_step(m.soliton.amp_net, g.amp, o.amp);
    adam_step(m.soliton.phase_net, g.phase, o.phase);
  } else {
    adam_step(m.table.lookup, g.table, o.table);
  }
}

// gradient of coeff * CV^2(importance) pushed back through each example's
// selected-softmax, gate and embedding
void importance_backward(const MoEModel& m, double coef,
                         std::vector<MoEExampleCache>& caches, MoEGrads& g) {
  int e_count = m.expert_count();
  Vector imp = Vector::Zero(e_count);
  for (const MoEExampleCache& c : caches) imp += c.top.weights;
  double mean = imp.mean();
  if (std::abs(mean) < 1e-300) return;
  double var = (imp.array() - mean).square().mean();
  double inv_e = 1.0 / static_cast<double>(e_count);
  // d(var/mean^2)/dimp_j = (2/E) (imp_j - mean)/mean^2 - (2/E) var/mean^3
  Vector dimp(e_count);
  for (int j = 0; j < e_count; ++j)
    dimp[j] = coef * 2.0 * inv_e *
              ((imp[j] - mean) / (mean * mean) - var / (mean * mean * mean));

  for (MoEExampleCache& c : caches) {
    size_t k = c.top.idx.size();
    double wsum = 0.0;
    for (size_t r = 0; r < k; ++r) {
      int j = c.top.idx[r];
      wsum += c.top.weights[j] * dimp[j];
    }
    Vector dlogits = Vector::Zero(e_count);
    for (size_t r = 0; r < k; ++r) {
      int j = c.top.idx[r];
      dlogits[j] = c.top.weights[j] * (dimp[j] - wsum);
    }
    Vector demb = mlp_backward(m.gate, c.gate, dlogits, g.gate);
    if (m.kind == EmbeddingKind::Soliton)
      soliton_backward(m.soliton, c.soliton, demb, g.amp, g.phase);
    else
      g.table.dw[0].col(c.day) += demb;
  }
}

}  // namespace

MoETrainResult train_moe(const Dataset& data, const MoEConfig& cfg) {
  cfg.validate();
  if (data.size() < 2)
    throw ValidationError("forecaster training needs at least two days");

  Rng master(cfg.seed);
  auto [train, test] =
      cfg.chrono_split
          ? split_chronological(data, cfg.test_fraction)
          : split_random(data, cfg.test_fraction, master.substream(1).seed());
  if (train.empty()) throw ValidationError("train split is empty");

  MoETrainResult result;
  Rng init_rng = master.substream(2);
  result.model = MoEModel::make(cfg, init_rng);
  result.train = train;
  result.test = test;

  MoEOptimizer opt = MoEOptimizer::init(result.model, cfg.lr);
  MoEGrads grads = MoEGrads::zeros_like(result.model);
  Rng order_rng = master.substream(3);
  Rng aug_rng = master.substream(4);

  bool use_aug = cfg.augment && cfg.embedding == EmbeddingKind::Soliton;
  bool use_importance = cfg.importance_coef > 0.0;

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<MoEExampleCache> caches;

  double last_epoch_mse = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.minibatch)) {
      size_t stop =
          std::min(order.size(), start + static_cast<size_t>(cfg.minibatch));
      size_t batch = stop - start;
      grads.set_zero();
      if (use_importance) caches.assign(batch, MoEExampleCache{});
      for (size_t i = start; i < stop; ++i) {
        const DayRecord& rec = train.days[order[i]];
        double x = use_aug ? augment_long(rec.day, aug_rng)
                           : static_cast<double>(rec.day);
        MoEExampleCache* keep =
            use_importance ? &caches[i - start] : nullptr;
        epoch_loss += moe_backward(result.model, x, rec.price, grads, keep);
      }
      grads.scale(1.0 / static_cast<double>(batch));
      if (use_importance)
        importance_backward(result.model, cfg.importance_coef, caches, grads);
      moe_step(result.model, grads, opt);
    }
    last_epoch_mse = epoch_loss / static_cast<double>(train.size());
    if (!std::isfinite(last_epoch_mse))
      throw std::runtime_error(
          "forecaster training diverged (non-finite loss) at epoch " +
          std::to_string(epoch));
  }

  // both train losses are post-training passes over the same parameters, so
  // the aug/clean gap isolates what augmentation alone does; with
  // augmentation off the two are identical by construction
  Rng aug_eval_rng = master.substream(5);
  double aug_sq = 0.0, clean = 0.0;
  for (const DayRecord& rec : train.days) {
    double x = use_aug ? augment_long(rec.day, aug_eval_rng)
                       : static_cast<double>(rec.day);
    double da = moe_forward(result.model, x) - rec.price;
    aug_sq += da * da;
    double d = predict_price(result.model, rec.day) - rec.price;
    clean += d * d;
  }
  result.metrics.train_mse_aug = aug_sq / static_cast<double>(train.size());
  result.metrics.train_mse_clean = clean / static_cast<double>(train.size());
  double test_sq = 0.0;
  for (const DayRecord& rec : test.days) {
    double d = predict_price(result.model, rec.day) - rec.price;
    test_sq += d * d;
  }
  result.metrics.test_rmse =
      test.empty() ? 0.0 : std::sqrt(test_sq / static_cast<double>(test.size()));
  return result;
}

double predict_price(const MoEModel& m, int day) {
  return moe_forward(m, static_cast<double>(day));
}

int best_day_index(const MoEModel& m, std::span<const int> days) {
  if (days.empty()) throw ContractError("best-day lookup over an empty window");
  int best = 0;
  double best_pred = predict_price(m, days[0]);
  for (size_t i = 1; i < days.size(); ++i) {
    double p = predict_price(m, days[i]);
    if (p > best_pred) {
      best_pred = p;
      best = static_cast<int>(i);
    }
  }
  return best;
}

void BestDayPolicy::plan(const TradingEnv& env, int from_cursor) {
  std::vector<int> window;
  window.reserve(static_cast<size_t>(env.length() - from_cursor));
  for (int i = from_cursor; i < env.length(); ++i)
    window.push_back(env.data().days[static_cast<size_t>(i)].day);
  planned_cursor_ = from_cursor + best_day_index(*model_, window);
}

void BestDayPolicy::begin_episode(const TradingEnv& env, Rng&) {
  plan(env, 0);
}

Action BestDayPolicy::act(const Observation&, const TradingEnv& env, Rng&) {
  int cur = env.cursor();
  if (planned_cursor_ < cur) plan(env, cur);  // sold already, re-plan the rest
  return cur == planned_cursor_ ? Action::Sell : Action::Hold;
}

namespace {

void write_u8(std::ostream& os, uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), 1);
}

uint8_t read_u8(std::istream& is, const char* what) {
  uint8_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 1);
  if (!is) throw ParseError(std::string("truncated checkpoint reading ") + what);
  return v;
}

void write_u32f(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32f(std::istream& is, const char* what) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw ParseError(std::string("truncated checkpoint reading ") + what);
  return v;
}

}  // namespace

void save_moe_file(const std::string& path, const MoEModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_u8(os, static_cast<uint8_t>(m.kind));
  write_u8(os, static_cast<uint8_t>(m.soliton.tail));
  write_u8(os, static_cast<uint8_t>(m.soliton.kernel));
  write_u32f(os, static_cast<uint32_t>(m.expert_count()));
  write_u32f(os, static_cast<uint32_t>(m.topk));
  save_mlp(os, m.gate);
  for (const MlpParams& e : m.experts) save_mlp(os, e);
  if (m.kind == EmbeddingKind::Soliton) {
    save_mlp(os, m.soliton.amp_net);
    save_mlp(os, m.soliton.phase_net);
  } else {
    save_mlp(os, m.table.lookup);
  }
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

MoEModel load_moe_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  MoEModel m;
  uint8_t kind = read_u8(is, "embedding kind");
  if (kind > 1) throw ParseError("unknown embedding kind tag");
  m.kind = static_cast<EmbeddingKind>(kind);
  uint8_t tail = read_u8(is, "tail flag");
  uint8_t kernel = read_u8(is, "kernel flag");
  if (tail > 1 || kernel > 1) throw ParseError("unknown soliton variant flag");
  uint32_t experts = read_u32f(is, "expert count");
  uint32_t topk = read_u32f(is, "top-k");
  if (experts == 0 || experts > 4096) throw ParseError("implausible expert count");
  if (topk == 0 || topk > experts) throw ParseError("top-k outside [1, experts]");
  m.topk = static_cast<int>(topk);
  m.gate = load_mlp(is, {Activation::Identity});
  m.experts.reserve(experts);
  for (uint32_t e = 0; e < experts; ++e)
    m.experts.push_back(
        load_mlp(is, {Activation::Relu, Activation::Identity}));
  if (m.kind == EmbeddingKind::Soliton) {
    m.soliton.amp_net = load_mlp(is, {Activation::Tanh, Activation::Identity});
    m.soliton.phase_net = load_mlp(is, {Activation::Tanh, Activation::Tanh});
    m.soliton.dim = m.soliton.amp_net.output_dim();
    m.soliton.tail = static_cast<SolitonTail>(tail);
    m.soliton.kernel = static_cast<SolitonKernel>(kernel);
  } else {
    m.table.lookup = load_mlp(is, {Activation::Identity});
    m.table.dim = m.table.lookup.output_dim();
  }
  return m;
}

}  // namespace solarlab
