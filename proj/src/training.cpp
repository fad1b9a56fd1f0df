#include "mads/training.hpp"

#include "mads/errors.hpp"
#include "mads/rng.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mads {
namespace {

constexpr std::uint64_t kParamStream = 0x706172616dULL;
constexpr std::uint64_t kLatentStream = 0x6c6174656eULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kModStream = 0x7a6d6f64ULL;

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

Vector normal_vector(Index n, double stddev, Rng& rng) {
  Vector z(n);
  for (Index k = 0; k < n; ++k) z(k) = stddev * rng.normal();
  return z;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_params > 0.0) || !(lr_latent > 0.0)) throw ContractError("learning rates must be > 0");
  if (!(lambda_latent >= 0.0) || !(lambda_weights >= 0.0)) {
    throw ContractError("regularizer weights must be >= 0");
  }
  if (!(clip_norm > 0.0)) throw ContractError("clip_norm must be > 0");
  if (epochs < 0) throw ContractError("epochs must be >= 0");
  if (batch_series < 1) throw ContractError("batch_series must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw ContractError("invalid Adam moments");
  }
}

LatentBank init_latents(std::size_t n_series, int latent_dim, Variant variant,
                        std::uint64_t seed) {
  if (latent_dim < 1) throw ContractError("latent_dim must be >= 1");
  const double stddev = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  LatentBank bank;
  bank.series_ids.resize(n_series);
  std::iota(bank.series_ids.begin(), bank.series_ids.end(), 0L);
  for (std::size_t i = 0; i < n_series; ++i) {
    Rng rng(derive_seed(seed, {i}));
    bank.z_hyper.push_back(normal_vector(latent_dim, stddev, rng));
  }
  if (uses_dataset_latent(variant)) {
    Rng rng(derive_seed(seed, {kModStream}));
    bank.z_mod = normal_vector(latent_dim, stddev, rng);
  }
  return bank;
}

AdamState AdamState::zeros_like(std::span<const Tensor2* const> leaves) {
  AdamState s;
  for (const Tensor2* t : leaves) {
    s.m.push_back(Tensor2::Zero(t->rows(), t->cols()));
    s.v.push_back(Tensor2::Zero(t->rows(), t->cols()));
  }
  return s;
}

void adam_update(AdamState& state, std::span<Tensor2* const> leaves,
                 std::span<const Tensor2> grads, double lr, const AdamConfig& config) {
  if (leaves.size() != grads.size() || leaves.size() != state.m.size()) {
    throw ContractError("adam_update: state, leaves and gradients cover different sets");
  }
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, step);
  const double c2 = 1.0 - std::pow(config.beta2, step);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    Tensor2& x = *leaves[k];
    const Tensor2& g = grads[k];
    if (g.rows() != x.rows() || g.cols() != x.cols() || state.m[k].rows() != x.rows() ||
        state.m[k].cols() != x.cols()) {
      throw ContractError("adam_update: gradient shape differs from leaf shape");
    }
    auto m = state.m[k].array();
    auto v = state.v[k].array();
    m = config.beta1 * m + (1.0 - config.beta1) * g.array();
    v = config.beta2 * v + (1.0 - config.beta2) * g.array().square();
    x.array() -= lr * (m / c1) / ((v / c2).sqrt() + config.eps);
  }
}

double global_norm(const diff::GradMap& grads) {
  double sq = 0.0;
  for (const auto& [id, g] : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

diff::GradMap clip_grad_norm(diff::GradMap grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip max_norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [id, g] : grads) g *= factor;
  }
  return grads;
}

LossNodes build_loss(diff::Graph& g, std::span<const NodeId> preds,
                     std::span<const Tensor2> truths, std::span<const diff::Mask> masks,
                     NodeId latents, std::span<const NodeId> weights, double lambda_latent,
                     double lambda_weights) {
  if (preds.empty() || preds.size() != truths.size() || preds.size() != masks.size()) {
    throw ContractError("build_loss: predictions, truths and masks must pair up");
  }
  Index observed = 0;
  for (const auto& m : masks) observed += (m.array() != 0).count();
  if (observed == 0) throw ContractError("loss over an empty observed set");

  LossNodes out;
  const auto norm = static_cast<double>(observed);
  out.mse = g.mse(preds[0], truths[0], masks[0], norm);
  for (std::size_t j = 1; j < preds.size(); ++j) {
    out.mse = g.add(out.mse, g.mse(preds[j], truths[j], masks[j], norm));
  }

  const auto z_count = static_cast<double>(g.value(latents).size());
  out.latent = g.scale(g.sum_squares(latents), lambda_latent / z_count);

  if (weights.empty()) {
    out.weights = g.constant(Tensor2::Zero(1, 1));
  } else {
    double w_count = 0.0;
    NodeId acc = g.sum_squares(weights[0]);
    w_count += static_cast<double>(g.value(weights[0]).size());
    for (std::size_t k = 1; k < weights.size(); ++k) {
      acc = g.add(acc, g.sum_squares(weights[k]));
      w_count += static_cast<double>(g.value(weights[k]).size());
    }
    out.weights = g.scale(acc, lambda_weights / w_count);
  }
  out.total = g.add(g.add(out.mse, out.latent), out.weights);
  return out;
}

LossTerms total_loss(const Tensor2& pred, const Tensor2& truth, const diff::Mask& mask,
                     const Tensor2& latents, const Tensor2& weights, double lambda_latent,
                     double lambda_weights) {
  diff::Graph g;
  const NodeId p = g.constant(pred);
  const NodeId z = g.constant(latents);
  std::vector<NodeId> w;
  if (weights.size() > 0) w.push_back(g.constant(weights));
  const NodeId preds[] = {p};
  const Tensor2 truths[] = {truth};
  const diff::Mask masks[] = {mask};
  const LossNodes n = build_loss(g, preds, truths, masks, z, w, lambda_latent, lambda_weights);
  return {g.scalar(n.total), g.scalar(n.mse), g.scalar(n.latent), g.scalar(n.weights)};
}

SeriesOperands operands(const Series& s) {
  SeriesOperands o;
  o.t = s.t.transpose();
  o.truth = s.values.transpose();
  o.mask = s.mask.transpose();
  return o;
}

FitResult fit(const Dataset& dataset, const ModelSpec& spec, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  config.validate();
  spec.validate();
  if (dataset.empty()) throw ContractError("cannot fit an empty dataset");
  for (const auto& s : dataset.series) {
    if (s.features() != spec.features) {
      throw ContractError("series " + std::to_string(s.id) + " has " +
                          std::to_string(s.features()) + " features, model expects " +
                          std::to_string(spec.features));
    }
    if (s.observed_count() == 0) {
      throw ContractError("series " + std::to_string(s.id) + " has no observed points");
    }
  }

  const std::size_t n = dataset.size();
  FitResult result;
  TrainedModel& model = result.model;
  model.spec = spec;
  model.config = config;
  model.params = init_params(spec, derive_seed(config.seed, {kParamStream}));
  model.latents =
      init_latents(n, spec.latent_dim, spec.variant, derive_seed(config.seed, {kLatentStream}));
  for (std::size_t i = 0; i < n; ++i) model.latents.series_ids[i] = dataset.series[i].id;

  std::vector<SeriesOperands> ops;
  ops.reserve(n);
  for (const auto& s : dataset.series) ops.push_back(operands(s));

  const std::vector<Tensor2*> param_ptrs = model.params.tensors();
  AdamState param_state = AdamState::zeros_like(param_ptrs);
  const Tensor2 zero_latent = Tensor2::Zero(spec.latent_dim, 1);
  const Tensor2* zero_ptr[] = {&zero_latent};
  std::vector<AdamState> latent_state(n, AdamState::zeros_like(zero_ptr));
  AdamState mod_state = AdamState::zeros_like(zero_ptr);
  const bool fixed = uses_dataset_latent(spec.variant);
  const auto batch_size = static_cast<std::size_t>(config.batch_series);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = shuffled(n, derive_seed(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
    LossTerms sum;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++batch_no) {
      const std::size_t end = std::min(n, start + batch_size);
      const auto b = static_cast<Index>(end - start);

      diff::Graph g;
      const ParamLeaves leaves = add_param_leaves(g, model.params, true);
      Tensor2 z(spec.latent_dim, b);
      std::vector<Tensor2> times, truths;
      std::vector<diff::Mask> masks;
      for (Index j = 0; j < b; ++j) {
        const std::size_t i = order[start + static_cast<std::size_t>(j)];
        z.col(j) = model.latents.z_hyper[i];
        times.push_back(ops[i].t);
        truths.push_back(ops[i].truth);
        masks.push_back(ops[i].mask);
      }

      LossTerms terms;
      diff::GradMap grads;
      NodeId z_leaf = 0;
      std::optional<NodeId> zm_leaf;
      try {
        z_leaf = g.leaf(z, true);
        if (fixed) zm_leaf = g.leaf(*model.latents.z_mod, true);
        const ForwardNodes fw = build_forward(g, spec, leaves, z_leaf, zm_leaf, times);
        std::vector<NodeId> weights;
        if (fw.predicted_weights) {
          weights.push_back(*fw.predicted_weights);
        } else {
          weights = leaves.ids();
        }
        const LossNodes loss = build_loss(g, fw.outputs, truths, masks, z_leaf, weights,
                                          config.lambda_latent, config.lambda_weights);
        terms = {g.scalar(loss.total), g.scalar(loss.mse), g.scalar(loss.latent),
                 g.scalar(loss.weights)};
        if (!std::isfinite(terms.total)) throw NumericError("non-finite total loss");
        grads = clip_grad_norm(g.backward(loss.total), config.clip_norm);
      } catch (const NumericError& e) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ", batch " << batch_no << ": "
           << e.what() << " (L_total=" << terms.total << ", L_mse=" << terms.mse
           << ", L_latent=" << terms.latent << ", L_weights=" << terms.weights << ")";
        throw TrainingDiverged(os.str());
      }

      std::vector<Tensor2> param_grads;
      for (NodeId id : leaves.ids()) param_grads.push_back(std::move(grads.at(id)));
      adam_update(param_state, param_ptrs, param_grads, config.lr_params, config.adam);

      const Tensor2& gz = grads.at(z_leaf);
      for (Index j = 0; j < b; ++j) {
        const std::size_t i = order[start + static_cast<std::size_t>(j)];
        Tensor2 zi = model.latents.z_hyper[i];
        Tensor2* ptr[] = {&zi};
        const Tensor2 gi[] = {gz.col(j)};
        adam_update(latent_state[i], ptr, gi, config.lr_latent, config.adam);
        model.latents.z_hyper[i] = zi.col(0);
      }
      if (zm_leaf) {
        Tensor2 zm = *model.latents.z_mod;
        Tensor2* ptr[] = {&zm};
        const Tensor2 gm[] = {grads.at(*zm_leaf)};
        adam_update(mod_state, ptr, gm, config.lr_latent, config.adam);
        model.latents.z_mod = zm.col(0);
      }

      const auto w = static_cast<double>(b);
      sum.total += w * terms.total;
      sum.mse += w * terms.mse;
      sum.latent += w * terms.latent;
      sum.weights += w * terms.weights;
    }
    const auto dn = static_cast<double>(n);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = {sum.total / dn, sum.mse / dn, sum.latent / dn, sum.weights / dn};
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

std::string format_history(std::span<const EpochRecord> history) {
  std::string out = "epoch,L_total,L_mse,L_latent,L_weights,wall_ms\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + format_double(r.loss.total) + "," +
           format_double(r.loss.mse) + "," + format_double(r.loss.latent) + "," +
           format_double(r.loss.weights) + "," + format_double(r.wall_ms) + "\n";
  }
  return out;
}

}  // namespace mads
