#include "mads/errors.hpp"
#include "mads/training.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace mads;

namespace {

Dataset tiny_dataset(std::size_t n, std::uint64_t seed) {
  Dataset ds = build_regime_dataset(find_preset("B-SIN"), n, seed);
  for (auto& s : ds.series) {
    // shorter series keep these tests fast
    s.t = s.t.head(40).eval();
    s.values = s.values.topRows(40).eval();
    s.mask = s.mask.topRows(40).eval();
  }
  generate_mask(ds, {0.3, MaskMode::per_series, seed});
  return ds;
}

ModelSpec small(Variant v) {
  ModelSpec s = ModelSpec::defaults(v, 2, 8);
  s.siren.hidden_dim = 12;
  s.hypernet.hidden_dim = 16;
  s.sync();
  return s;
}

}  // namespace

TEST_CASE("loss hand cases") {
  const Tensor2 y = Tensor2::Random(2, 5);
  const LossTerms zero = total_loss(y, y, diff::Mask::Ones(2, 5), Tensor2::Zero(3, 1),
                                    Tensor2::Zero(4, 1), 0.1, 1e-4);
  CHECK(zero.total == 0.0);

  const LossTerms one = total_loss(Tensor2::Constant(1, 1, 3.0), Tensor2::Constant(1, 1, 1.0),
                                   diff::Mask::Ones(1, 1), Tensor2::Ones(1, 1), Tensor2(), 0.1, 1e-4);
  CHECK(one.mse == 4.0);
  CHECK(one.latent == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(one.weights == 0.0);
  CHECK(one.total == doctest::Approx(4.1).epsilon(1e-15));

  TrainConfig c;
  CHECK(c.lambda_latent == 1e-1);
  CHECK(c.lambda_weights == 1e-4);
}

TEST_CASE("loss pools squared error over every observed entry of a batch") {
  diff::Graph g;
  Tensor2 p1(1, 2), p2(1, 3), t1 = Tensor2::Zero(1, 2), t2 = Tensor2::Zero(1, 3);
  p1 << 1, 2;
  p2 << 3, 4, 5;
  diff::Mask m1(1, 2), m2(1, 3);
  m1 << 1, 1;
  m2 << 1, 0, 0;
  const NodeId preds[] = {g.constant(p1), g.constant(p2)};
  const Tensor2 truths[] = {t1, t2};
  const diff::Mask masks[] = {m1, m2};
  const NodeId z = g.constant(Tensor2::Zero(2, 2));
  const LossNodes n = build_loss(g, preds, truths, masks, z, {}, 0.1, 0.1);
  CHECK(g.scalar(n.mse) == doctest::Approx((1.0 + 4.0 + 9.0) / 3.0));
}

TEST_CASE("Adam") {
  AdamConfig cfg;
  Tensor2 x = Tensor2::Constant(2, 2, 1.5);
  const Tensor2* shape[] = {&x};
  AdamState st = AdamState::zeros_like(shape);
  Tensor2* leaf[] = {&x};
  const Tensor2 zero[] = {Tensor2::Zero(2, 2)};
  adam_update(st, leaf, zero, 0.1, cfg);
  CHECK(x == Tensor2::Constant(2, 2, 1.5));
  CHECK(st.step == 1);

  // First step moves by ~lr regardless of gradient scale.
  for (double g : {1e-3, 1.0, 1e3}) {
    Tensor2 y = Tensor2::Constant(1, 1, 0.0);
    const Tensor2* sh[] = {&y};
    AdamState s = AdamState::zeros_like(sh);
    Tensor2* l[] = {&y};
    const Tensor2 gr[] = {Tensor2::Constant(1, 1, g)};
    adam_update(s, l, gr, 1e-2, cfg);
    CHECK(y(0, 0) == doctest::Approx(-1e-2).epsilon(1e-4));
  }
}

TEST_CASE("Adam trajectory on x^2 matches a reference") {
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double xr = 2.0, m = 0.0, v = 0.0;
  Tensor2 x = Tensor2::Constant(1, 1, 2.0);
  const Tensor2* sh[] = {&x};
  AdamState st = AdamState::zeros_like(sh);
  Tensor2* leaf[] = {&x};
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * xr;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    xr -= lr * mh / (std::sqrt(vh) + eps);

    const Tensor2 grad[] = {2.0 * x};
    adam_update(st, leaf, grad, lr);
    CHECK(std::abs(x(0, 0) - xr) < 1e-12);
  }
}

TEST_CASE("gradient clipping") {
  diff::GradMap small{{0, Tensor2::Constant(1, 1, 0.5)}};
  CHECK(clip_grad_norm(small, 1.0).at(0)(0, 0) == 0.5);

  Tensor2 g(2, 1);
  g << 3, 4;
  const auto c = clip_grad_norm({{0, g}}, 1.0);
  CHECK(c.at(0)(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(c.at(0)(1, 0) == doctest::Approx(0.8).epsilon(1e-15));

  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    diff::GradMap m;
    for (NodeId k = 0; k < 4; ++k) {
      Tensor2 t(3, 2);
      for (Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal() * std::exp(rng.uniform(-3, 3));
      m[k] = t;
    }
    double sq = 0.0;
    for (const auto& [k, t] : m) sq += t.squaredNorm();
    const double before = std::sqrt(sq);
    const double limit = rng.uniform(0.1, 5.0);
    const auto out = clip_grad_norm(m, limit);
    double sq2 = 0.0;
    for (const auto& [k, t] : out) sq2 += t.squaredNorm();
    CHECK(std::abs(std::sqrt(sq2) - std::min(before, limit)) < 1e-12);
  }
}

TEST_CASE("latent bank") {
  const LatentBank a = init_latents(2500, 40, Variant::mads_base, 5);
  const LatentBank b = init_latents(2500, 40, Variant::mads_base, 5);
  double sq = 0.0;
  for (std::size_t i = 0; i < a.z_hyper.size(); ++i) {
    CHECK(a.z_hyper[i] == b.z_hyper[i]);
    sq += a.z_hyper[i].squaredNorm();
  }
  CHECK(sq / 100000.0 == doctest::Approx(0.025).epsilon(0.1));
  CHECK_FALSE(a.z_mod.has_value());
  for (Variant v : kAllVariants) {
    CHECK(init_latents(3, 4, v, 1).z_mod.has_value() == (v == Variant::mads_fixed));
  }
}

TEST_CASE("overfits a single noiseless sine") {
  Rng rng(1);
  Dataset ds;
  ds.series.push_back(toy_series_from({{1.0, 5.0, 0.0}}, 0.0, false, 200, rng));
  ModelSpec spec = ModelSpec::defaults(Variant::mod_siren, 1, 8);
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.lr_params = 1e-3;
  cfg.lr_latent = 1e-3;
  cfg.seed = 3;
  const FitResult r = fit(ds, spec, cfg);
  REQUIRE(r.history.size() == 2000);
  CHECK(r.history.back().loss.mse < 1e-3);
}

TEST_CASE("fit is deterministic, records every epoch and updates z_mod") {
  const Dataset ds = tiny_dataset(10, 4);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_series = 4;
  cfg.lr_params = 1e-3;
  cfg.seed = 9;
  const FitResult a = fit(ds, small(Variant::mads_fixed), cfg);
  const FitResult b = fit(ds, small(Variant::mads_fixed), cfg);
  REQUIRE(a.history.size() == 4);
  for (int e = 0; e < 4; ++e) {
    CHECK(a.history[static_cast<std::size_t>(e)].epoch == e + 1);
    CHECK(a.history[static_cast<std::size_t>(e)].loss.total == b.history[static_cast<std::size_t>(e)].loss.total);
  }
  const auto pa = a.model.params.tensors(), pb = b.model.params.tensors();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->cwiseEqual(*pb[i]).all());
  const LatentBank init = init_latents(10, 8, Variant::mads_fixed, 0);
  REQUIRE(a.model.latents.z_mod.has_value());
  CHECK(a.model.latents.z_hyper.size() == 10);
  CHECK(a.model.latents.series_ids[3] == ds.series[3].id);

  const std::string csv = format_history(a.history);
  CHECK(csv.rfind("epoch,L_total,L_mse,L_latent,L_weights,wall_ms\n", 0) == 0);
}

TEST_CASE("masked cells never influence training") {
  Dataset clean = tiny_dataset(9, 2);
  Dataset poisoned = clean;
  for (auto& s : poisoned.series) {
    for (Index k = 0; k < s.values.size(); ++k) {
      if (s.mask.data()[k] == 0) {
        s.values.data()[k] = k % 2 ? std::numeric_limits<double>::quiet_NaN() : 1e300;
      }
    }
  }
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_series = 4;
  cfg.seed = 1;
  for (Variant v : kAllVariants) {
    const FitResult a = fit(clean, small(v), cfg);
    const FitResult b = fit(poisoned, small(v), cfg);
    for (std::size_t e = 0; e < a.history.size(); ++e) {
      CHECK(a.history[e].loss.total == b.history[e].loss.total);
    }
    const auto pa = a.model.params.tensors(), pb = b.model.params.tensors();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->cwiseEqual(*pb[i]).all());
  }
}

TEST_CASE("divergence is reported with diagnostics") {
  Dataset ds = tiny_dataset(3, 1);
  ds.series[1].values(0, 0) = 1e200;
  ds.series[1].mask(0, 0) = 1;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 2;
  try {
    fit(ds, small(Variant::hn_siren), cfg);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 1") != std::string::npos);
    CHECK(what.find("L_mse") != std::string::npos);
  }
}

TEST_CASE("fit rejects bad input") {
  TrainConfig cfg;
  CHECK_THROWS_AS(fit(Dataset{}, small(Variant::hn_siren), cfg), ContractError);
  Dataset ds = tiny_dataset(2, 1);
  CHECK_THROWS_AS(fit(ds, ModelSpec::defaults(Variant::hn_siren, 3), cfg), ContractError);
  cfg.batch_series = 0;
  CHECK_THROWS_AS(fit(ds, small(Variant::hn_siren), cfg), ContractError);
}
