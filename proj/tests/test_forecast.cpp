#include <cmath>
#include <vector>

#include "doctest.h"
#include "solarlab/errors.hpp"
#include "solarlab/forecast.hpp"
#include "support.hpp"

using namespace solarlab;
using testsupport::make_dataset;

namespace {

// amp and phase nets that ignore their input and emit constants, so the
// kernel arithmetic can be checked against hand formulas
SolitonEmbed constant_embed(int dim, double a, double c, SolitonTail tail,
                            SolitonKernel kernel) {
  Rng rng(1);
  SolitonEmbed e = SolitonEmbed::make(dim, 4, tail, kernel, rng);
  for (auto& layer : e.amp_net.layers) {
    layer.w.setZero();
    layer.b.setZero();
  }
  for (auto& layer : e.phase_net.layers) {
    layer.w.setZero();
    layer.b.setZero();
  }
  e.amp_net.layers.back().b.setConstant(a);
  e.phase_net.layers.back().b.setConstant(std::atanh(c));
  return e;
}

MoEModel oracle_table_model(const std::vector<double>& prices) {
  MoEConfig cfg;
  cfg.embedding = EmbeddingKind::Table;
  cfg.dim = 1;
  cfg.experts = 1;
  cfg.topk = 1;
  cfg.expert_hidden = 1;
  Rng rng(2);
  MoEModel m = MoEModel::make(cfg, rng);
  m.table.lookup.layers[0].w.setZero();
  for (size_t d = 0; d < prices.size(); ++d)
    m.table.lookup.layers[0].w(0, static_cast<int>(d)) = prices[d];
  // expert relu(1*x) then 1*h: the identity on non-negative prices
  m.experts[0].layers[0].w.setConstant(1.0);
  m.experts[0].layers[0].b.setZero();
  m.experts[0].layers[1].w.setConstant(1.0);
  m.experts[0].layers[1].b.setZero();
  return m;
}

}  // namespace

TEST_CASE("augmentation jitters within the day and averages near 0.495") {
  Rng rng(3);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    double x = augment_long(5, rng);
    CHECK(x >= 5.0);
    CHECK(x < 5.99);
    double off = x - 5.0;
    lo = std::min(lo, off);
    hi = std::max(hi, off);
    sum += off;
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.98);
  CHECK(sum / n == doctest::Approx(0.495).epsilon(0.02));

  Rng r2(4);
  CHECK(augment_long(7, r2) != augment_long(7, r2));  // fresh draw per call
  CHECK_THROWS_AS(augment_long(-1, r2), ContractError);
}

TEST_CASE("a silent phase net reduces the embedding to the amplitude net") {
  Rng rng(5);
  SolitonEmbed e =
      SolitonEmbed::make(6, 8, SolitonTail::SinOfRatio, SolitonKernel::Trig, rng);
  for (auto& layer : e.phase_net.layers) {
    layer.w.setZero();
    layer.b.setZero();
  }
  Vector emb = soliton_embed(123.0, e);
  Vector amp = mlp_forward(e.amp_net, Vector::Constant(1, 123.0 / 366.0));
  REQUIRE(emb.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(emb[i] == amp[i]);
}

TEST_CASE("kernel arithmetic matches hand formulas for every variant") {
  const double a = 2.0, c = 0.5;
  double cosc = std::cos(c), coshc = std::cosh(c);
  double sec2 = 1.0 / (cosc * cosc), sech2 = 1.0 / (coshc * coshc);

  SolitonEmbed tsr = constant_embed(2, a, c, SolitonTail::SinOfRatio,
                                    SolitonKernel::Trig);
  double want_tsr = a * sec2 + std::sin(c / cosc);
  Vector out = soliton_embed(10.0, tsr);
  CHECK(out[0] == doctest::Approx(want_tsr).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(want_tsr).epsilon(1e-12));
  CHECK(want_tsr == doctest::Approx(3.13626).epsilon(1e-4));

  SolitonEmbed tt = constant_embed(1, a, c, SolitonTail::Tan, SolitonKernel::Trig);
  CHECK(soliton_embed(10.0, tt)[0] ==
        doctest::Approx(a * sec2 + std::tan(c)).epsilon(1e-12));

  SolitonEmbed ssr = constant_embed(1, a, c, SolitonTail::SinOfRatio,
                                    SolitonKernel::Sech);
  CHECK(soliton_embed(10.0, ssr)[0] ==
        doctest::Approx(a * sech2 + std::sin(c / coshc)).epsilon(1e-12));

  SolitonEmbed st = constant_embed(1, a, c, SolitonTail::Tan, SolitonKernel::Sech);
  CHECK(soliton_embed(10.0, st)[0] ==
        doctest::Approx(a * sech2 + std::tanh(c)).epsilon(1e-12));

  CHECK_THROWS_AS(soliton_embed(std::numeric_limits<double>::quiet_NaN(), tsr),
                  ValidationError);
}

TEST_CASE("soliton backward passes a finite-difference check") {
  Rng rng(6);
  SolitonEmbed e =
      SolitonEmbed::make(3, 5, SolitonTail::SinOfRatio, SolitonKernel::Trig, rng);
  SolitonCache cache;
  Vector up(3);
  up << 0.7, -1.1, 0.4;
  Vector out = soliton_embed(50.0, e, cache);
  (void)out;
  Grads ag = Grads::zeros_like(e.amp_net);
  Grads pg = Grads::zeros_like(e.phase_net);
  soliton_backward(e, cache, up, ag, pg);

  // loss = dot(up, embed); perturb amp and phase nets together
  std::vector<double*> ptrs = param_ptrs(e.amp_net);
  std::vector<double*> phase_ptrs = param_ptrs(e.phase_net);
  ptrs.insert(ptrs.end(), phase_ptrs.begin(), phase_ptrs.end());
  std::vector<double> analytic = flatten(ag);
  std::vector<double> phase_flat = flatten(pg);
  analytic.insert(analytic.end(), phase_flat.begin(), phase_flat.end());
  double err = finite_diff_check(
      [&]() { return up.dot(soliton_embed(50.0, e)); }, ptrs, analytic, 1e-5);
  CHECK(err < 1e-4);

  SolitonCache stale;
  CHECK_THROWS_AS(soliton_backward(e, stale, up, ag, pg), ContractError);
}

TEST_CASE("table embedding reads one column verbatim") {
  Rng rng(7);
  TableEmbed t = TableEmbed::make(4, rng);
  Vector col0 = table_embed(0, t);
  REQUIRE(col0.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(col0[i] == t.lookup.layers[0].w(i, 0));

  Vector col100 = table_embed(100, t);
  bool differs = false;
  for (int i = 0; i < 4 && !differs; ++i) differs = col100[i] != col0[i];
  CHECK(differs);  // slots are independent parameters

  CHECK_THROWS_AS(table_embed(366, t), ValidationError);
  CHECK_THROWS_AS(table_embed(-1, t), ValidationError);
}

TEST_CASE("top-k gate selects, normalizes, and zeroes the rest") {
  Vector logits(3);
  logits << 2.0, 1.0, 0.0;

  TopK one = gate_topk(logits, 1);
  CHECK(one.idx == std::vector<int>{0});
  CHECK(one.weights[0] == 1.0);
  CHECK(one.weights[1] == 0.0);
  CHECK(one.weights[2] == 0.0);

  TopK two = gate_topk(logits, 2);
  CHECK(two.idx == std::vector<int>{0, 1});
  CHECK(two.weights[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(two.weights[1] == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(two.weights[2] == 0.0);
  CHECK(two.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));

  TopK all = gate_topk(logits, 3);
  CHECK(all.weights.minCoeff() > 0.0);
  CHECK(all.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));

  Vector tied(3);
  tied << 1.0, 1.0, 1.0;
  TopK t = gate_topk(tied, 2);
  CHECK(t.idx == std::vector<int>{0, 1});  // ties prefer the lower index
  CHECK(t.weights[0] == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(gate_topk(logits, 0), ConfigError);
  CHECK_THROWS_AS(gate_topk(logits, 4), ConfigError);
}

TEST_CASE("sparse mixture forward equals the explicit weighted sum") {
  MoEConfig cfg;
  cfg.dim = 8;
  cfg.experts = 5;
  cfg.topk = 2;
  cfg.expert_hidden = 6;
  cfg.embed_hidden = 6;
  Rng rng(8);
  MoEModel m = MoEModel::make(cfg, rng);

  double x = 42.0;
  Vector emb = soliton_embed(x, m.soliton);
  Vector logits = mlp_forward(m.gate, emb);
  TopK top = gate_topk(logits, m.topk);
  double want = 0.0;
  for (int j : top.idx)
    want += top.weights[j] * mlp_forward(m.experts[size_t(j)], emb)[0];
  CHECK(moe_forward(m, x) == doctest::Approx(want).epsilon(1e-12));

  MoEModel k1 = m;
  k1.topk = 1;
  Vector e1 = soliton_embed(x, k1.soliton);
  TopK sel = gate_topk(mlp_forward(k1.gate, e1), 1);
  CHECK(moe_forward(k1, x) ==
        doctest::Approx(mlp_forward(k1.experts[size_t(sel.idx[0])], e1)[0])
            .epsilon(1e-12));
}

TEST_CASE("identical experts make the gate irrelevant") {
  MoEConfig cfg;
  cfg.dim = 6;
  cfg.experts = 4;
  cfg.topk = 2;
  cfg.expert_hidden = 5;
  cfg.embed_hidden = 5;
  Rng rng(9);
  MoEModel m = MoEModel::make(cfg, rng);
  for (size_t i = 1; i < m.experts.size(); ++i) m.experts[i] = m.experts[0];
  double x = 17.0;
  Vector emb = soliton_embed(x, m.soliton);
  double solo = mlp_forward(m.experts[0], emb)[0];
  CHECK(moe_forward(m, x) == doctest::Approx(solo).epsilon(1e-9));
}

TEST_CASE("unselected experts receive exactly zero gradient") {
  MoEConfig cfg;
  cfg.dim = 8;
  cfg.experts = 5;
  cfg.topk = 2;
  cfg.expert_hidden = 6;
  cfg.embed_hidden = 6;
  Rng rng(10);
  MoEModel m = MoEModel::make(cfg, rng);
  double x = 30.0;
  Vector emb = soliton_embed(x, m.soliton);
  TopK top = gate_topk(mlp_forward(m.gate, emb), m.topk);

  MoEGrads g = MoEGrads::zeros_like(m);
  MoEExampleCache cache;
  double loss = moe_backward(m, x, 5.0, g, &cache);
  CHECK(loss > 0.0);
  for (int j = 0; j < m.expert_count(); ++j) {
    bool selected = std::find(top.idx.begin(), top.idx.end(), j) != top.idx.end();
    double mag = 0.0;
    for (const Matrix& w : g.experts[size_t(j)].dw) mag += w.cwiseAbs().sum();
    for (const Vector& b : g.experts[size_t(j)].db) mag += b.cwiseAbs().sum();
    if (selected)
      CHECK(mag > 0.0);
    else
      CHECK(mag == 0.0);
  }
  CHECK(cache.pred == doctest::Approx(moe_forward(m, x)).epsilon(1e-12));
  CHECK(loss ==
        doctest::Approx((cache.pred - 5.0) * (cache.pred - 5.0)).epsilon(1e-12));
}

TEST_CASE("table models insist on integer days") {
  MoEModel m = oracle_table_model({3.0, 9.0, 5.0});
  CHECK_THROWS_AS(moe_forward(m, 1.5), ValidationError);
  CHECK_THROWS_AS(moe_forward(m, -1.0), ValidationError);
  CHECK(moe_forward(m, 1.0) == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("best day index follows the forecast argmax, earliest on ties") {
  MoEModel m = oracle_table_model({3.0, 9.0, 5.0, 9.0});
  std::vector<int> window = {0, 1, 2, 3};
  CHECK(best_day_index(m, window) == 1);  // strict > keeps the earliest peak
  std::vector<int> single = {2};
  CHECK(best_day_index(m, single) == 0);
  CHECK(predict_price(m, 2) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK_THROWS_AS(best_day_index(m, std::vector<int>{}), ContractError);
}

TEST_CASE("best-day policy sells exactly on the forecast peak") {
  MoEModel m = oracle_table_model({3.0, 9.0, 5.0, 2.0});
  Dataset d = make_dataset({{3.0, 1.0}, {9.0, 1.0}, {5.0, 1.0}, {2.0, 1.0}});
  TradingEnv env(d, NormStats::identity());
  BestDayPolicy policy(m);
  std::vector<double> totals = evaluate(policy, env, 2, Rng(11));
  // sells days 0-1 at 9, then re-plans: day 2 at 5, day 3 at 2
  CHECK(totals[0] == doctest::Approx(2.0 * 9.0 + 5.0 + 2.0).epsilon(1e-12));
  CHECK(totals[1] == totals[0]);  // deterministic policy, deterministic env

  double opt = testsupport::enumerate_optimum(d);
  CHECK(totals[0] == doctest::Approx(opt).epsilon(1e-9));
}

TEST_CASE("training fits a constant price series almost exactly") {
  std::vector<std::pair<double, double>> rows(40, {12.0, 1.0});
  Dataset d = make_dataset(rows);
  MoEConfig cfg;
  cfg.embedding = EmbeddingKind::Soliton;
  cfg.dim = 8;
  cfg.experts = 2;
  cfg.topk = 1;
  cfg.expert_hidden = 8;
  cfg.embed_hidden = 8;
  cfg.epochs = 800;
  cfg.minibatch = 16;
  cfg.seed = 12;
  MoETrainResult res = train_moe(d, cfg);
  CHECK(res.metrics.test_rmse < 0.5);
  CHECK(res.metrics.train_mse_clean < 0.5);
  CHECK(res.train.size() + res.test.size() == 40);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  Dataset d = synth_dataset(60, 13);
  MoEConfig cfg;
  cfg.embedding = EmbeddingKind::Soliton;
  cfg.dim = 6;
  cfg.experts = 3;
  cfg.topk = 2;
  cfg.expert_hidden = 6;
  cfg.embed_hidden = 6;
  cfg.epochs = 5;
  cfg.minibatch = 8;
  cfg.seed = 14;
  cfg.augment = true;  // augmentation draws come from a seeded substream
  MoETrainResult a = train_moe(d, cfg);
  MoETrainResult b = train_moe(d, cfg);
  CHECK(a.metrics.train_mse_aug == b.metrics.train_mse_aug);
  CHECK(a.metrics.test_rmse == b.metrics.test_rmse);
  for (int day = 0; day < 60; ++day)
    CHECK(predict_price(a.model, day) == predict_price(b.model, day));

  MoEConfig chrono = cfg;
  chrono.chrono_split = true;
  MoETrainResult c = train_moe(d, chrono);
  // chronological split trains on the first 70% only
  CHECK(c.train.days.front().day == 0);
  CHECK(c.train.days.back().day < c.test.days.front().day);
}

TEST_CASE("table training path rounds out the config space") {
  Dataset d = synth_dataset(50, 15);
  MoEConfig cfg;
  cfg.embedding = EmbeddingKind::Table;
  cfg.dim = 6;
  cfg.experts = 3;
  cfg.topk = 2;
  cfg.expert_hidden = 6;
  cfg.epochs = 5;
  cfg.minibatch = 8;
  cfg.seed = 16;
  MoETrainResult res = train_moe(d, cfg);
  CHECK(std::isfinite(res.metrics.test_rmse));
  CHECK(std::isfinite(res.metrics.train_mse_clean));
  // table inputs are never augmented, so the two train losses agree
  CHECK(res.metrics.train_mse_aug ==
        doctest::Approx(res.metrics.train_mse_clean).epsilon(1e-9));
}

TEST_CASE("mixture checkpoints round trip") {
  MoEConfig cfg;
  cfg.dim = 6;
  cfg.experts = 3;
  cfg.topk = 2;
  cfg.expert_hidden = 5;
  cfg.embed_hidden = 5;
  Rng rng(17);
  MoEModel m = MoEModel::make(cfg, rng);
  testsupport::TempDir td("moeckpt");
  std::string p = td.path("m.bin");
  save_moe_file(p, m);
  MoEModel back = load_moe_file(p);
  CHECK(back.kind == m.kind);
  CHECK(back.topk == m.topk);
  CHECK(back.expert_count() == m.expert_count());
  for (int day = 0; day < 366; day += 7)
    CHECK(predict_price(back, day) == predict_price(m, day));

  MoEConfig tcfg = cfg;
  tcfg.embedding = EmbeddingKind::Table;
  Rng trng(18);
  MoEModel tm = MoEModel::make(tcfg, trng);
  std::string tp = td.path("t.bin");
  save_moe_file(tp, tm);
  MoEModel tback = load_moe_file(tp);
  for (int day = 0; day < 366; day += 11)
    CHECK(predict_price(tback, day) == predict_price(tm, day));

  CHECK_THROWS_AS(load_moe_file(td.path("missing.bin")), IoError);
  std::string garbled = testsupport::read_file(p);
  garbled[0] = 'X';
  testsupport::write_file(p, garbled);
  CHECK_THROWS_AS(load_moe_file(p), ParseError);
}

TEST_CASE("mixture config validation") {
  MoEConfig bad;
  bad.topk = 7;  // more than experts
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = MoEConfig{};
  bad.dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = MoEConfig{};
  bad.test_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = MoEConfig{};
  bad.importance_coef = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(MoEConfig{}.validate());
}

TEST_CASE("kind and variant names round trip") {
  CHECK(embedding_kind_from_name("table") == EmbeddingKind::Table);
  CHECK(embedding_kind_from_name("soliton") == EmbeddingKind::Soliton);
  CHECK(soliton_tail_from_name("sin_of_ratio") == SolitonTail::SinOfRatio);
  CHECK(soliton_tail_from_name("tan") == SolitonTail::Tan);
  CHECK(soliton_kernel_from_name("trig") == SolitonKernel::Trig);
  CHECK(soliton_kernel_from_name("sech") == SolitonKernel::Sech);
  CHECK_THROWS_AS(embedding_kind_from_name("fourier"), ConfigError);
  CHECK_THROWS_AS(soliton_tail_from_name("cos"), ConfigError);
  CHECK_THROWS_AS(soliton_kernel_from_name("gauss"), ConfigError);
}
