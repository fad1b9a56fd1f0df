#include "mads/errors.hpp"
#include "mads/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

using namespace mads;

namespace {

Matrix rand_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double brute_w2(const Matrix& a, const Matrix& b, bool squared) {
  std::vector<int> perm(static_cast<std::size_t>(a.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double d2 = (a.row(i) - b.row(perm[static_cast<std::size_t>(i)])).squaredNorm();
      total += squared ? d2 : std::sqrt(d2);
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.rows());
}

}  // namespace

TEST_CASE("mse and max on hand values") {
  Matrix truth(3, 2), pred(3, 2);
  truth << 0, 0, 1, 1, 2, 2;
  pred << 9, 0, 3, 1, 2, 2.5;
  MaskMatrix mask(3, 2);
  mask << 1, 1, 0, 1, 0, 0;
  const Matrix p[] = {pred};
  const Matrix t[] = {truth};
  const MaskMatrix m[] = {mask};
  // missing cells: (1,0) err 2, (2,0) err 0, (2,1) err 0.5
  CHECK(mse_missing(p, t, m) == doctest::Approx((4.0 + 0.0 + 0.25) / 3.0));
  CHECK(max_error_avg(p, t, m) == 2.0);
}

TEST_CASE("mse pools cells, max averages series") {
  const Matrix t[] = {Matrix::Zero(2, 1), Matrix::Zero(4, 1), Matrix::Zero(2, 1)};
  Matrix p0(2, 1), p1(4, 1), p2(2, 1);
  p0 << 1, 0;
  p1 << -2, 0, 0, 0;
  p2 << 5, 5;
  const Matrix p[] = {p0, p1, p2};
  MaskMatrix m0(2, 1), m1(4, 1), m2(2, 1);
  m0 << 0, 1;
  m1 << 0, 0, 0, 0;
  m2 << 1, 1;  // nothing missing: ignored by both
  const MaskMatrix m[] = {m0, m1, m2};
  CHECK(mse_missing(p, t, m) == doctest::Approx((1.0 + 4.0) / 5.0));
  CHECK(max_error_avg(p, t, m) == doctest::Approx(1.5));
}

TEST_CASE("metrics ignore observed cells and compare with naive loops") {
  Rng rng(7);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<Matrix> p, t;
    std::vector<MaskMatrix> m;
    double se = 0.0, maxsum = 0.0;
    long cnt = 0, nser = 0;
    for (int s = 0; s < 4; ++s) {
      const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(6));
      p.push_back(rand_matrix(n, 3, rng));
      t.push_back(rand_matrix(n, 3, rng));
      MaskMatrix mk(n, 3);
      double mx = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index d = 0; d < 3; ++d) {
          mk(i, d) = rng.uniform() < 0.5 ? 1 : 0;
          if (mk(i, d) == 0) {
            const double e = p.back()(i, d) - t.back()(i, d);
            se += e * e;
            ++cnt;
            mx = std::max(mx, std::abs(e));
          } else {
            p.back()(i, d) = 1e6;  // observed cells are irrelevant
          }
        }
      }
      if (mx >= 0) {
        maxsum += mx;
        ++nser;
      }
      m.push_back(mk);
    }
    if (cnt == 0) continue;
    CHECK(mse_missing(p, t, m) == doctest::Approx(se / static_cast<double>(cnt)).epsilon(1e-12));
    CHECK(max_error_avg(p, t, m) == doctest::Approx(maxsum / static_cast<double>(nser)).epsilon(1e-12));
  }
}

TEST_CASE("metric contracts") {
  const Matrix a[] = {Matrix::Zero(2, 1)};
  const Matrix b[] = {Matrix::Zero(3, 1)};
  const MaskMatrix m[] = {MaskMatrix::Zero(2, 1)};
  CHECK_THROWS_AS(mse_missing(a, b, m), DimensionError);
  const MaskMatrix full[] = {MaskMatrix::Ones(2, 1)};
  CHECK_THROWS_AS(mse_missing(a, a, full), ContractError);
}

TEST_CASE("w2 matching") {
  Matrix a(2, 1), b(2, 1);
  a << 0, 1;
  b << 1, 0;
  CHECK(w2_matching(a, b) == 0.0);

  Rng rng(3);
  const Matrix x = rand_matrix(7, 4, rng);
  CHECK(w2_matching(x, x) == 0.0);

  Matrix c(2, 2), d(2, 2);
  c << 0, 0, 10, 0;
  d << 3, 4, 10, 1;
  CHECK(w2_matching(c, d) == doctest::Approx(3.0));
  CHECK(w2_matching(c, d, W2Cost::squared) == doctest::Approx(13.0));
}

TEST_CASE("w2 matches a permutation search") {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(6));
    const Eigen::Index dim = 1 + static_cast<Eigen::Index>(rng.below(10));
    const Matrix a = rand_matrix(n, dim, rng), b = rand_matrix(n, dim, rng);
    CHECK(std::abs(w2_matching(a, b) - brute_w2(a, b, false)) < 1e-10);
    CHECK(std::abs(w2_matching(a, b, W2Cost::squared) - brute_w2(a, b, true)) < 1e-10);
  }
}

TEST_CASE("assignment solver handles ties and constant costs") {
  CHECK(solve_assignment(Matrix::Constant(4, 4, 2.0)).size() == 4);
  Matrix cost(3, 3);
  cost << 4, 1, 3, 2, 0, 5, 3, 2, 2;
  const auto a = solve_assignment(cost);
  double total = 0.0;
  for (Eigen::Index i = 0; i < 3; ++i) total += cost(i, a[static_cast<std::size_t>(i)]);
  CHECK(total == 5.0);
}

TEST_CASE("w2 over missing points") {
  Matrix truth(3, 2), pred(3, 2);
  truth << 0, 0, 1, 1, 2, 2;
  pred << 0, 0, 1, 7, 5, 6;
  MaskMatrix mask(3, 2);
  mask << 1, 1, 1, 0, 0, 0;
  const Matrix p[] = {pred};
  const Matrix t[] = {truth};
  const MaskMatrix m[] = {mask};
  // points: truth {(1,1), (2,2)}; pred {(1,7), (5,6)} with the observed 1 kept
  Matrix tp(2, 2), pp(2, 2);
  tp << 1, 1, 2, 2;
  pp << 1, 7, 5, 6;
  CHECK(w2_missing(p, t, m) == doctest::Approx(w2_matching(pp, tp)));

  // blocking: two series of 2 points each, limit 2 -> matched separately
  const Matrix p2[] = {pred, pred};
  const Matrix t2[] = {truth, truth};
  const MaskMatrix m2[] = {mask, mask};
  CHECK(w2_missing(p2, t2, m2, W2Cost::euclidean, 2) == doctest::Approx(w2_matching(pp, tp)));
}

TEST_CASE("baselines") {
  Dataset ds;
  Series s;
  s.t = uniform_grid(4);
  s.values = Matrix(4, 1);
  s.values << 1, 2, 100, -50;
  s.mask = MaskMatrix(4, 1);
  s.mask << 1, 1, 1, 0;
  ds.series.push_back(s);
  CHECK(baseline_statistic(ds, BaselineKind::mean) == doctest::Approx(103.0 / 3.0));
  CHECK(baseline_statistic(ds, BaselineKind::median) == 2.0);
  ds.series[0].mask(3, 0) = 1;
  ds.series[0].values(3, 0) = 3;
  CHECK(baseline_statistic(ds, BaselineKind::median) == 2.5);
  const auto imp = baseline_impute(ds, BaselineKind::median);
  CHECK(imp[0] == Matrix::Constant(4, 1, 2.5));
}

TEST_CASE("mean baseline mse equals its closed form") {
  Dataset ds = build_regime_dataset(find_preset("B-SIN"), 40, 5);
  generate_mask(ds, {0.3, MaskMode::global_shared, 5});
  const double c = baseline_statistic(ds, BaselineKind::mean);
  double se = 0.0;
  long n = 0;
  for (const auto& s : ds.series) {
    for (Eigen::Index k = 0; k < s.values.size(); ++k) {
      if (s.mask.data()[k] == 0) {
        se += (s.values.data()[k] - c) * (s.values.data()[k] - c);
        ++n;
      }
    }
  }
  const auto imp = baseline_impute(ds, BaselineKind::mean);
  const MetricTriple r = score(imp, ds);
  CHECK(r.mse == doctest::Approx(se / static_cast<double>(n)).epsilon(1e-12));
  CHECK(r.w2 > 0.0);
}

TEST_CASE("ranks") {
  EvalReport rep;
  auto add = [&](const char* d, const char* m, double v) { rep.cells.push_back({d, m, {v, v, v}}); };
  add("A", "x", 1.0);
  add("A", "y", 2.0);
  add("A", "z", 2.0);
  add("A", "w", 3.0);
  add("B", "x", 4.0);
  add("B", "y", 3.0);
  add("B", "z", 2.0);
  add("B", "w", 1.0);
  auto r = dataset_ranks(rep, "A", Metric::mse);
  CHECK(r["x"] == 1);
  CHECK(r["y"] == 2);
  CHECK(r["z"] == 2);
  CHECK(r["w"] == 4);
  r = dataset_ranks(rep, "A", Metric::mse, TieMethod::mean);
  CHECK(r["y"] == 2.5);
  CHECK(r["w"] == 4);
  const auto avg = average_rank(rep, Metric::mse);
  CHECK(avg.at("x") == 2.5);
  CHECK(avg.at("w") == 2.5);
  CHECK(avg.at("z") == 2.0);

  CHECK(round1(2.25) == 2.3);
  CHECK(round1(2.875) == 2.9);
  CHECK(round1(4.0) == 4.0);

  EvalReport partial = rep;
  partial.cells.pop_back();
  CHECK_THROWS_AS(average_rank(partial, Metric::mse), ContractError);

  const std::string csv = format_report_csv(rep);
  CHECK(csv.rfind("dataset,model,metric,value,rank\n", 0) == 0);
  CHECK(csv.find("avg_rank,x,mse,2.5,") != std::string::npos);
  const std::string table = format_report_table(rep, Metric::mse);
  CHECK(table.find("Avg rank") != std::string::npos);
}
