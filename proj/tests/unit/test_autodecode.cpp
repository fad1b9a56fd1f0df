// Auto-decoding behaviour of a model trained with the default configuration
// on a small B-SIN draw (about two minutes on one core).

#include "mads/inference.hpp"
#include "mads/metrics.hpp"
#include "mads/pipeline.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace mads;

namespace {

struct Trained {
  RegimeSplit split;
  TrainedModel model;
};

const Trained& trained() {
  static const Trained t = [] {
    DataConfig data;
    data.n_series = 100;
    RegimeSplit split = prepare_regime(find_preset("B-SIN"), data, 31);
    TrainConfig cfg;
    cfg.seed = 32;
    TrainedModel m = fit(split.train, ModelSpec::defaults(Variant::mads_base, 2), cfg).model;
    return Trained{std::move(split), std::move(m)};
  }();
  return t;
}

double observed_mse(const Matrix& pred, const Series& s) {
  double se = 0.0;
  long n = 0;
  for (Eigen::Index k = 0; k < pred.size(); ++k) {
    if (s.mask.data()[k] == 0) continue;
    const double d = pred.data()[k] - s.values.data()[k];
    se += d * d;
    ++n;
  }
  return se / static_cast<double>(n);
}

}  // namespace

TEST_CASE("re-decoding a training series matches its trained code") {
  const Trained& t = trained();
  for (std::size_t i = 0; i < 10; ++i) {
    const Series& s = t.split.train.series[i];
    const double at_train = observed_mse(predict_series(t.model, t.model.latents.z_hyper[i], s.t), s);
    const LatentFit f = optimize_latent(t.model, s, InferConfig{});
    INFO("series " << s.id << ": trained code " << at_train << ", re-decoded " << f.observed_mse);
    CHECK(f.observed_mse <= 2.0 * at_train);
  }
}

TEST_CASE("held-out imputation beats the global mean") {
  const Trained& t = trained();
  const DatasetImputation imp = impute_dataset(t.model, t.split.test, InferConfig{});
  const double model = score(imp.predictions, t.split.test).mse;
  const double mean = score(baseline_impute(t.split.test, BaselineKind::mean), t.split.test).mse;
  INFO("model " << model << ", mean baseline " << mean);
  CHECK(model < mean);
}

TEST_CASE("observed error falls as inference runs longer") {
  const Trained& t = trained();
  std::vector<double> medians;
  for (int steps : {0, 50, 200, 1000}) {
    std::vector<double> errs;
    for (std::size_t i = 0; i < 5; ++i) {
      InferConfig cfg;
      cfg.steps = steps;
      errs.push_back(optimize_latent(t.model, t.split.test.series[i], cfg).observed_mse);
    }
    std::nth_element(errs.begin(), errs.begin() + 2, errs.end());
    medians.push_back(errs[2]);
  }
  INFO("medians " << medians[0] << " " << medians[1] << " " << medians[2] << " " << medians[3]);
  CHECK(medians[1] < medians[0]);
  CHECK(medians[2] < medians[1]);
  CHECK(medians[3] < medians[2]);
}
