#include "mads/inference.hpp"

#include "mads/errors.hpp"
#include "mads/rng.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace mads {

void InferConfig::validate() const {
  if (steps < 0) throw ContractError("inference steps must be >= 0");
  if (!(lr_latent > 0.0)) throw ContractError("inference learning rate must be > 0");
  if (!(init_std >= 0.0)) throw ContractError("init_std must be >= 0");
  if (!(clip_norm > 0.0)) throw ContractError("clip_norm must be > 0");
  if (restarts < 1) throw ContractError("restarts must be >= 1");
}

LatentFit optimize_latent(const TrainedModel& model, const Series& series,
                          const InferConfig& config) {
  config.validate();
  const ModelSpec& spec = model.spec;
  if (series.features() != spec.features) {
    throw ContractError("series feature count does not match the model");
  }
  if (series.observed_count() == 0) {
    throw ContractError("series " + std::to_string(series.id) + " has no observed points");
  }
  const bool fixed = uses_dataset_latent(spec.variant);
  if (fixed && !model.latents.z_mod) throw ContractError("mads_fixed model lacks z_mod");

  const SeriesOperands ops = operands(series);
  LatentFit best;
  best.observed_mse = std::numeric_limits<double>::infinity();

  for (int r = 0; r < config.restarts; ++r) {
    Rng rng(derive_seed(config.seed,
                        {static_cast<std::uint64_t>(series.id), static_cast<std::uint64_t>(r)}));
    Tensor2 z(spec.latent_dim, 1);
    for (Index k = 0; k < z.rows(); ++k) z(k, 0) = config.init_std * rng.normal();

    diff::Graph g;
    const ParamLeaves leaves = add_param_leaves(g, model.params, false);
    const NodeId z_leaf = g.leaf(z, true);
    std::optional<NodeId> zm;
    if (fixed) zm = g.constant(*model.latents.z_mod);
    const Tensor2 times[] = {ops.t};
    const ForwardNodes fw = build_forward(g, spec, leaves, z_leaf, zm, times);
    std::vector<NodeId> weights;
    if (fw.predicted_weights) weights.push_back(*fw.predicted_weights);
    const Tensor2 truths[] = {ops.truth};
    const diff::Mask masks[] = {ops.mask};
    const LossNodes loss = build_loss(g, fw.outputs, truths, masks, z_leaf, weights,
                                      model.config.lambda_latent, model.config.lambda_weights);

    const Tensor2* shape[] = {&z};
    AdamState state = AdamState::zeros_like(shape);
    Tensor2* leaf_ptr[] = {&z};
    for (int step = 0; step < config.steps; ++step) {
      diff::GradMap grads = clip_grad_norm(g.backward(loss.total), config.clip_norm);
      const Tensor2 grad[] = {std::move(grads.at(z_leaf))};
      adam_update(state, leaf_ptr, grad, config.lr_latent, config.adam);
      g.set_leaf(z_leaf, z);
      g.forward();
    }
    const double mse = g.scalar(loss.mse);
    if (mse < best.observed_mse) {
      best.observed_mse = mse;
      best.z = z.col(0);
    }
  }
  return best;
}

Matrix predict_series(const TrainedModel& model, const Vector& z, const Eigen::VectorXd& t) {
  std::optional<Vector> zm;
  if (uses_dataset_latent(model.spec.variant)) zm = model.latents.z_mod;
  return predict(model.spec, model.params, z, zm, t.transpose()).transpose();
}

Series impute_series(const TrainedModel& model, const Vector& z, const Series& series) {
  const Matrix pred = predict_series(model, z, series.t);
  Series out = series;
  for (Index n = 0; n < series.length(); ++n) {
    for (Index f = 0; f < series.features(); ++f) {
      if (series.mask(n, f) == 0) out.values(n, f) = pred(n, f);
    }
  }
  return out;
}

unsigned thread_cap() {
  const char* env = std::getenv("INR_IMPUTE_THREADS");
  if (env == nullptr) return 1;
  unsigned v = 0;
  const std::string_view s(env);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) return 1;
  return v;
}

DatasetImputation impute_dataset(const TrainedModel& model, const Dataset& dataset,
                                 const InferConfig& config, unsigned threads) {
  config.validate();
  const std::size_t n = dataset.size();
  DatasetImputation out;
  out.latents.resize(n);
  out.predictions.resize(n);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const Series& s = dataset.series[i];
        const LatentFit fit = optimize_latent(model, s, config);
        out.predictions[i] = predict_series(model, fit.z, s.t);
        out.latents[i] = fit.z;
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::string format_imputations(const Dataset& dataset, std::span<const Matrix> predictions) {
  if (predictions.size() != dataset.size()) {
    throw ContractError("one prediction matrix per series is required");
  }
  std::string out = "series_id,t_index,feature_index,imputed_value,ground_truth,was_missing\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Series& s = dataset.series[i];
    const Matrix& p = predictions[i];
    if (p.rows() != s.length() || p.cols() != s.features()) {
      throw DimensionError("prediction shape differs from series " + std::to_string(s.id));
    }
    for (Index n = 0; n < s.length(); ++n) {
      for (Index f = 0; f < s.features(); ++f) {
        const double truth = s.values(n, f);
        out += std::to_string(s.id) + "," + std::to_string(n) + "," + std::to_string(f) + "," +
               format_double(p(n, f)) + "," + (std::isfinite(truth) ? format_double(truth) : "") +
               "," + (s.mask(n, f) == 0 ? "1" : "0") + "\n";
      }
    }
  }
  return out;
}

namespace {

template <class T>
T parse_field(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("cannot parse field '" + std::string(s) + "'", line);
  }
  return v;
}

}  // namespace

std::vector<ImputationRow> parse_imputations(std::string_view text) {
  std::vector<ImputationRow> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    while (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "series_id,t_index,feature_index,imputed_value,ground_truth,was_missing") {
        throw ParseError("unexpected imputation header", line_no);
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (f.size() != 6) throw ParseError("expected 6 fields", line_no);
    ImputationRow r;
    r.series_id = parse_field<long>(f[0], line_no);
    r.t_index = parse_field<long>(f[1], line_no);
    r.feature_index = parse_field<long>(f[2], line_no);
    r.imputed = parse_field<double>(f[3], line_no);
    if (!f[4].empty()) r.truth = parse_field<double>(f[4], line_no);
    const int missing = parse_field<int>(f[5], line_no);
    if (missing != 0 && missing != 1) throw ValidationError("was_missing must be 0 or 1");
    r.was_missing = missing == 1;
    if (r.t_index < 0 || r.feature_index < 0) throw ParseError("negative index", line_no);
    rows.push_back(r);
  }
  if (!header_seen) throw ParseError("empty imputation file", 1);
  return rows;
}

}  // namespace mads
