#include "mads/errors.hpp"
#include "mads/models.hpp"
#include "mads/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mads;

namespace {

// Straight-line reference implementations: scalar loops over flat row-major
// arrays, one timestep at a time.

using Vec = std::vector<double>;

Vec to_vec(const Vector& v) { return Vec(v.data(), v.data() + v.size()); }

Vec dense(const Vec& flat, std::size_t& k, const Vec& x, std::size_t out) {
  Vec y(out);
  std::vector<double> w(out * x.size());
  for (auto& e : w) e = flat[k++];
  for (std::size_t i = 0; i < out; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[i * x.size() + j] * x[j];
    y[i] = acc;
  }
  for (std::size_t i = 0; i < out; ++i) y[i] += flat[k++];
  return y;
}

Vec ref_siren(const SirenArch& a, const Vec& flat, const Vec& input, const std::vector<Vec>* alphas) {
  std::size_t k = 0;
  Vec h = input;
  for (int layer = 0; layer < a.n_hidden_layers; ++layer) {
    h = dense(flat, k, h, static_cast<std::size_t>(a.hidden_dim));
    const double w = layer == 0 ? a.omega_first : a.omega_hidden;
    for (std::size_t i = 0; i < h.size(); ++i) {
      h[i] = std::sin(w * h[i]);
      if (alphas) h[i] *= (*alphas)[static_cast<std::size_t>(layer)][i];
    }
  }
  return dense(flat, k, h, static_cast<std::size_t>(a.out_dim));
}

Vec flat_of(const Mlp& m) {
  Vec f;
  for (const auto& l : m) {
    for (Index r = 0; r < l.weight.rows(); ++r) {
      for (Index c = 0; c < l.weight.cols(); ++c) f.push_back(l.weight(r, c));
    }
    for (Index r = 0; r < l.bias.rows(); ++r) f.push_back(l.bias(r, 0));
  }
  return f;
}

std::vector<Vec> ref_modulator(const Mlp& m, const Vec& z) {
  const Vec flat = flat_of(m);
  std::size_t k = 0;
  std::vector<Vec> out;
  Vec h = z;
  for (const auto& l : m) {
    h = dense(flat, k, h, static_cast<std::size_t>(l.weight.rows()));
    for (auto& e : h) e = std::max(e, 0.0);
    out.push_back(h);
  }
  return out;
}

Vec ref_hypernet(const Mlp& m, const Vec& z) {
  const Vec flat = flat_of(m);
  std::size_t k = 0;
  Vec h = z;
  for (std::size_t i = 0; i < m.size(); ++i) {
    h = dense(flat, k, h, static_cast<std::size_t>(m[i].weight.rows()));
    if (i + 1 < m.size()) {
      for (auto& e : h) e = std::max(e, 0.0);
    }
  }
  return h;
}

Vec ref_predict(const ModelSpec& s, const ModelParams& p, const Vec& z, const Vec& zmod, double t) {
  switch (s.variant) {
    case Variant::auto_siren: {
      Vec in = z;
      in.push_back(t);
      return ref_siren(s.siren, flat_of(p.siren), in, nullptr);
    }
    case Variant::mod_siren: {
      const auto al = ref_modulator(p.modulator, z);
      return ref_siren(s.siren, flat_of(p.siren), {t}, &al);
    }
    case Variant::hn_siren:
      return ref_siren(s.siren, ref_hypernet(p.hypernet, z), {t}, nullptr);
    case Variant::mads_base: {
      const auto al = ref_modulator(p.modulator, z);
      return ref_siren(s.siren, ref_hypernet(p.hypernet, z), {t}, &al);
    }
    case Variant::mads_fixed: {
      const auto al = ref_modulator(p.modulator, zmod);
      return ref_siren(s.siren, ref_hypernet(p.hypernet, z), {t}, &al);
    }
  }
  return {};
}

Vector random_vector(Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Index k = 0; k < n; ++k) v(k) = scale * rng.normal();
  return v;
}

ModelSpec small_spec(Variant v, Rng& rng) {
  ModelSpec s = ModelSpec::defaults(v, 1 + static_cast<int>(rng.below(3)), 2 + static_cast<int>(rng.below(4)));
  s.siren.hidden_dim = 2 + static_cast<int>(rng.below(6));
  s.siren.n_hidden_layers = 1 + static_cast<int>(rng.below(3));
  s.hypernet.hidden_dim = 3 + static_cast<int>(rng.below(5));
  s.siren.omega_first = rng.uniform(0.5, 30.0);
  s.siren.omega_hidden = rng.uniform(0.5, 2.0);
  s.sync();
  return s;
}

void perturb(ModelParams& p, Rng& rng, double scale) {
  for (Tensor2* t : p.tensors()) {
    for (Index k = 0; k < t->size(); ++k) t->data()[k] += scale * rng.normal();
  }
}

}  // namespace

TEST_CASE("SIREN parameter count") {
  const ModelSpec s = ModelSpec::defaults(Variant::mads_base, 2);
  CHECK(s.siren.param_count() == 7562);
  CHECK(s.hypernet.out_dim == 7562);
  CHECK((1 * 60 + 60) + 2 * (60 * 60 + 60) + (60 * 2 + 2) == 7562);
  CHECK(ModelSpec::defaults(Variant::auto_siren, 2).siren.in_dim == 41);
}

TEST_CASE("hypernet output length equals SIREN size over random architectures") {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const ModelSpec s = small_spec(Variant::hn_siren, rng);
    const ModelParams p = init_params(s, rng.next());
    const Vector w = hypernet_weights(s.hypernet, p.hypernet, random_vector(s.latent_dim, rng));
    CHECK(static_cast<std::size_t>(w.size()) == s.siren.param_count());
    std::size_t manual = 0;
    for (const auto& l : s.siren.layers()) manual += static_cast<std::size_t>(l.out * l.in + l.out);
    CHECK(manual == s.siren.param_count());
  }
}

TEST_CASE("SIREN hand cases") {
  SirenArch a;
  a.hidden_dim = 1;
  a.n_hidden_layers = 1;
  a.omega_first = 1.0;
  Vector w(4);
  w << 1, 0, 1, 0;  // W1, b1, Wout, bout
  Tensor2 t(1, 1);
  t << std::numbers::pi / 2;
  CHECK(siren_forward(a, w, t)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  const SirenArch def;
  const Tensor2 ts = Tensor2::Random(1, 9);
  CHECK(siren_forward(def, Vector::Zero(static_cast<Index>(def.param_count())), ts).isZero(0.0));
  CHECK_THROWS_AS(siren_forward(def, Vector::Zero(3), ts), ArchitectureError);
}

TEST_CASE("SIREN, modulator and hypernet match the reference") {
  Rng rng(2);
  for (int rep = 0; rep < 30; ++rep) {
    const ModelSpec s = small_spec(Variant::mads_base, rng);
    ModelParams p = init_params(s, rng.next());
    perturb(p, rng, 0.3);
    const Vector z = random_vector(s.latent_dim, rng);
    const Vector w = random_vector(static_cast<Index>(s.siren.param_count()), rng, 0.5);
    Tensor2 t(1, 5);
    for (Index n = 0; n < 5; ++n) t(0, n) = rng.uniform(-1, 1);

    const Tensor2 y = siren_forward(s.siren, w, t);
    const auto alphas = modulator_alphas(s.modulator, p.modulator, z);
    const auto ref_alphas = ref_modulator(p.modulator, to_vec(z));
    REQUIRE(alphas.size() == ref_alphas.size());
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      for (Index k = 0; k < alphas[i].size(); ++k) {
        CHECK(std::abs(alphas[i](k) - ref_alphas[i][static_cast<std::size_t>(k)]) < 1e-12);
      }
    }
    const Tensor2 ym = modulated_siren_forward(s.siren, w, alphas, t);
    for (Index n = 0; n < 5; ++n) {
      const Vec r = ref_siren(s.siren, to_vec(w), {t(0, n)}, nullptr);
      const Vec rm = ref_siren(s.siren, to_vec(w), {t(0, n)}, &ref_alphas);
      for (Index d = 0; d < s.features; ++d) {
        CHECK(std::abs(y(d, n) - r[static_cast<std::size_t>(d)]) < 1e-12);
        CHECK(std::abs(ym(d, n) - rm[static_cast<std::size_t>(d)]) < 1e-12);
      }
    }
    const Vector hw = hypernet_weights(s.hypernet, p.hypernet, z);
    const Vec rh = ref_hypernet(p.hypernet, to_vec(z));
    for (Index k = 0; k < hw.size(); ++k) {
      CHECK(std::abs(hw(k) - rh[static_cast<std::size_t>(k)]) < 1e-12);
    }
  }
}

TEST_CASE("modulator hand cases") {
  const ModelSpec s = ModelSpec::defaults(Variant::mod_siren, 2, 4);
  ModelParams p = init_params(s, 3);
  for (Tensor2* t : p.tensors()) t->setZero();
  for (const auto& a : modulator_alphas(s.modulator, p.modulator, Vector::Ones(4))) {
    CHECK(a.isZero(0.0));
  }
  // First bias c, identity deeper layers: every amplitude equals c.
  const double c = 0.75;
  p.modulator[0].bias.setConstant(c);
  for (std::size_t i = 1; i < p.modulator.size(); ++i) p.modulator[i].weight.setIdentity();
  const auto al = modulator_alphas(s.modulator, p.modulator, Vector::Zero(4));
  for (const auto& a : al) CHECK((a.array() == c).all());
}

TEST_CASE("amplitudes of one and zero") {
  Rng rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    const ModelSpec s = small_spec(Variant::mod_siren, rng);
    const Vector w = random_vector(static_cast<Index>(s.siren.param_count()), rng);
    Tensor2 t(1, 7);
    for (Index n = 0; n < 7; ++n) t(0, n) = rng.uniform(-1, 1);
    std::vector<Vector> ones(static_cast<std::size_t>(s.siren.n_hidden_layers),
                             Vector::Ones(s.siren.hidden_dim));
    const Tensor2 a = siren_forward(s.siren, w, t);
    const Tensor2 b = modulated_siren_forward(s.siren, w, ones, t);
    CHECK(a.cwiseEqual(b).all());

    std::vector<Vector> zeros(ones.size(), Vector::Zero(s.siren.hidden_dim));
    const Tensor2 zc = modulated_siren_forward(s.siren, w, zeros, t);
    const Mlp mlp = unflatten(w, s.siren);
    for (Index n = 0; n < 7; ++n) CHECK(zc.col(n) == mlp.back().bias.col(0));
  }
}

TEST_CASE("hypernet with zero latent returns its bias-only pass") {
  const ModelSpec s = ModelSpec::defaults(Variant::hn_siren, 2, 5);
  ModelParams p = init_params(s, 6);
  Rng rng(6);
  perturb(p, rng, 0.1);
  const Vector w = hypernet_weights(s.hypernet, p.hypernet, Vector::Zero(5));
  const Vector hidden = p.hypernet[0].bias.col(0).cwiseMax(0.0);
  const Vector want = p.hypernet[1].weight * hidden + p.hypernet[1].bias.col(0);
  CHECK((w - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("every variant's prediction matches the reference") {
  Rng rng(7);
  for (Variant v : kAllVariants) {
    for (int rep = 0; rep < 8; ++rep) {
      const ModelSpec s = small_spec(v, rng);
      ModelParams p = init_params(s, rng.next());
      perturb(p, rng, 0.3);
      const Vector z = random_vector(s.latent_dim, rng);
      const Vector zm = random_vector(s.latent_dim, rng);
      Tensor2 t(1, 6);
      for (Index n = 0; n < 6; ++n) t(0, n) = rng.uniform(-1, 1);
      const Tensor2 y = predict(s, p, z, zm, t);
      REQUIRE(y.rows() == s.features);
      for (Index n = 0; n < 6; ++n) {
        const Vec r = ref_predict(s, p, to_vec(z), to_vec(zm), t(0, n));
        for (Index d = 0; d < s.features; ++d) {
          CHECK(std::abs(y(d, n) - r[static_cast<std::size_t>(d)]) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("mads_base with unit amplitudes equals hn_siren") {
  // Modulator crafted to output exactly 1: zero weights, unit biases.
  Rng rng(8);
  const ModelSpec base = ModelSpec::defaults(Variant::mads_base, 2, 6);
  ModelSpec hn = ModelSpec::defaults(Variant::hn_siren, 2, 6);
  ModelParams pb = init_params(base, 9);
  perturb(pb, rng, 0.05);
  for (auto& l : pb.modulator) {
    l.weight.setZero();
    l.bias.setOnes();
  }
  ModelParams ph;
  ph.hypernet = pb.hypernet;
  const Vector z = random_vector(6, rng);
  Tensor2 t(1, 11);
  for (Index n = 0; n < 11; ++n) t(0, n) = -1.0 + 0.2 * static_cast<double>(n);
  CHECK(predict(base, pb, z, std::nullopt, t).cwiseEqual(predict(hn, ph, z, std::nullopt, t)).all());
}

TEST_CASE("initialization") {
  const ModelSpec s = ModelSpec::defaults(Variant::mod_siren, 2);
  const ModelParams a = init_params(s, 42), b = init_params(s, 42);
  const auto ta = a.tensors(), tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i]->cwiseEqual(*tb[i]).all());

  // First SIREN layer within +-1/in_dim over >= 1e4 samples.
  double worst = 0.0;
  std::size_t samples = 0;
  for (std::uint64_t seed = 0; samples < 10000; ++seed) {
    const ModelParams p = init_params(s, seed);
    worst = std::max({worst, p.siren[0].weight.cwiseAbs().maxCoeff(),
                      p.siren[0].bias.cwiseAbs().maxCoeff()});
    samples += static_cast<std::size_t>(p.siren[0].weight.size() + p.siren[0].bias.size());
  }
  CHECK(worst <= 1.0 / s.siren.in_dim);
  CHECK(worst > 0.9 / s.siren.in_dim);

  // Hypernet head scaled by 1e-2: predicted weights at z ~ prior are small.
  const ModelSpec h = ModelSpec::defaults(Variant::hn_siren, 2);
  const ModelParams ph = init_params(h, 1);
  Rng rng(10);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const Vector w = hypernet_weights(h.hypernet, ph.hypernet,
                                      random_vector(40, rng, 1.0 / std::sqrt(40.0)));
    sum += w.sum();
    sq += w.squaredNorm();
    n += static_cast<std::size_t>(w.size());
  }
  const double mean = sum / static_cast<double>(n);
  CHECK(std::sqrt(sq / static_cast<double>(n) - mean * mean) < 0.1);
}

TEST_CASE("flatten and unflatten are inverse") {
  const ModelSpec s = ModelSpec::defaults(Variant::auto_siren, 3, 5);
  const ModelParams p = init_params(s, 12);
  const Vector flat = flatten(p.siren);
  CHECK(static_cast<std::size_t>(flat.size()) == s.siren.param_count());
  const Mlp back = unflatten(flat, s.siren);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].weight == p.siren[i].weight);
    CHECK(back[i].bias == p.siren[i].bias);
  }
  // Row-major: second flat entry is W0(0, 1).
  CHECK(flat(1) == p.siren[0].weight(0, 1));
}

TEST_CASE("variant names and contracts") {
  for (Variant v : kAllVariants) CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_variant("siren"), ContractError);
  const ModelSpec s = ModelSpec::defaults(Variant::mads_fixed, 2);
  const ModelParams p = init_params(s, 1);
  CHECK_THROWS_AS(predict(s, p, Vector::Zero(40), std::nullopt, Tensor2::Zero(1, 3)), ContractError);
  ModelSpec bad = s;
  bad.hypernet.out_dim = 5;
  CHECK_THROWS_AS(bad.validate(), ArchitectureError);
}
