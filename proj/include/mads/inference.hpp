#pragma once

#include "mads/data.hpp"
#include "mads/training.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mads {

struct InferConfig {
  int steps = 1000;
  double lr_latent = 1e-3;
  double init_std = 0.1;  // z ~ N(0, 0.01)
  double clip_norm = 1.0;
  int restarts = 1;
  std::uint64_t seed = 0;
  AdamConfig adam;

  void validate() const;
};

struct LatentFit {
  Vector z;
  double observed_mse = 0.0;  // prediction error on the observed points at z
};

/// Auto-decodes one series: a fresh code drawn from N(0, init_std^2) on the
/// stream derive_seed(seed, {series.id, restart}) is refined by Adam on
/// L_mse + L_latent (+ L_weights on predicted weights for hypernet variants)
/// with every model parameter frozen. mads_fixed keeps the trained z_mod.
/// With restarts > 1 the lowest observed-MSE result wins.
LatentFit optimize_latent(const TrainedModel& model, const Series& series,
                          const InferConfig& config);

/// Model output at timesteps t, shape N x D.
Matrix predict_series(const TrainedModel& model, const Vector& z, const Eigen::VectorXd& t);

/// Copy of `series` whose missing cells hold the model's predictions.
Series impute_series(const TrainedModel& model, const Vector& z, const Series& series);

struct DatasetImputation {
  std::vector<Vector> latents;
  std::vector<Matrix> predictions;  // N x D per series, every timestep
};

/// Runs optimize_latent + predict_series for every series. Series are
/// independent; up to `threads` workers run at once and results land in
/// input order, identical to a sequential run.
DatasetImputation impute_dataset(const TrainedModel& model, const Dataset& dataset,
                                 const InferConfig& config, unsigned threads = 1);

/// Worker cap from INR_IMPUTE_THREADS (default 1).
unsigned thread_cap();

/// Imputation CSV: series_id,t_index,feature_index,imputed_value,ground_truth,was_missing.
/// One row per cell; ground_truth is empty when the cell holds no finite value.
std::string format_imputations(const Dataset& dataset, std::span<const Matrix> predictions);

struct ImputationRow {
  long series_id = 0;
  long t_index = 0;
  long feature_index = 0;
  double imputed = 0.0;
  std::optional<double> truth;
  bool was_missing = false;
};
std::vector<ImputationRow> parse_imputations(std::string_view text);

}  // namespace mads
