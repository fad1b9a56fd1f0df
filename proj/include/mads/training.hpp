#pragma once

#include "mads/data.hpp"
#include "mads/diffengine.hpp"
#include "mads/errors.hpp"
#include "mads/models.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mads {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double lambda_latent = 1e-1;
  double lambda_weights = 1e-4;
  double lr_params = 5e-5;
  double lr_latent = 1e-3;
  double clip_norm = 1.0;
  int epochs = 500;
  int batch_series = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-series hypernet/modulator codes, plus the dataset-level modulator code
/// for mads_fixed.
struct LatentBank {
  std::vector<long> series_ids;
  std::vector<Vector> z_hyper;
  std::optional<Vector> z_mod;
};

/// z_hyper[i] ~ N(0, 1/N_Z) on stream derive_seed(seed, {i}); z_mod (only for
/// mads_fixed) ~ N(0, 1/N_Z) on its own stream.
LatentBank init_latents(std::size_t n_series, int latent_dim, Variant variant,
                        std::uint64_t seed);

struct AdamState {
  std::vector<Tensor2> m;
  std::vector<Tensor2> v;
  long step = 0;

  static AdamState zeros_like(std::span<const Tensor2* const> leaves);
};

/// One bias-corrected Adam step applied in place to `leaves`.
void adam_update(AdamState& state, std::span<Tensor2* const> leaves,
                 std::span<const Tensor2> grads, double lr, const AdamConfig& config = {});

double global_norm(const diff::GradMap& grads);
/// Scales every gradient by max_norm / norm when the global L2 norm exceeds max_norm.
diff::GradMap clip_grad_norm(diff::GradMap grads, double max_norm);

struct LossTerms {
  double total = 0.0;
  double mse = 0.0;
  double latent = 0.0;
  double weights = 0.0;
};

struct LossNodes {
  NodeId total = 0;
  NodeId mse = 0;
  NodeId latent = 0;
  NodeId weights = 0;
};

/// L = L_mse + L_latent + L_weights.
///   L_mse     pooled mean squared error over every observed entry
///   L_latent  lambda_latent * mean(z^2) over all entries of `latents`
///   L_weights lambda_weights * mean(w^2) over all entries of `weights`
/// Predictions, truths and masks are features x N per series.
LossNodes build_loss(diff::Graph& g, std::span<const NodeId> preds,
                     std::span<const Tensor2> truths, std::span<const diff::Mask> masks,
                     NodeId latents, std::span<const NodeId> weights, double lambda_latent,
                     double lambda_weights);

/// Value-level convenience over build_loss (single series). An empty
/// `weights` drops the weights term.
LossTerms total_loss(const Tensor2& pred, const Tensor2& truth, const diff::Mask& mask,
                     const Tensor2& latents, const Tensor2& weights, double lambda_latent,
                     double lambda_weights);

struct TrainedModel {
  ModelSpec spec;
  ModelParams params;
  LatentBank latents;
  TrainConfig config;
};

struct EpochRecord {
  int epoch = 0;
  LossTerms loss;
  double wall_ms = 0.0;
};

struct FitResult {
  TrainedModel model;
  std::vector<EpochRecord> history;
};

/// Raised when a loss or activation becomes non-finite during fit().
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Auto-decoding training: per epoch, shuffled mini-batches of whole series;
/// parameters step with lr_params and the batch's latents with lr_latent
/// (each latent keeps its own Adam moments).
FitResult fit(const Dataset& dataset, const ModelSpec& spec, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

/// Loss-history CSV: epoch,L_total,L_mse,L_latent,L_weights,wall_ms.
std::string format_history(std::span<const EpochRecord> history);

/// Series as graph operands: 1 x N timestep row, features x N truth and mask.
struct SeriesOperands {
  Tensor2 t;
  Tensor2 truth;
  diff::Mask mask;
};
SeriesOperands operands(const Series& s);

}  // namespace mads
