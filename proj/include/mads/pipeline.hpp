#pragma once

// generate -> split -> train -> infer -> score, shared by the CLI and the
// acceptance runs.

#include "mads/data.hpp"
#include "mads/inference.hpp"
#include "mads/metrics.hpp"
#include "mads/training.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mads {

struct RegimeSplit {
  Dataset train;
  Dataset test;
};

struct DataConfig {
  std::size_t n_series = 500;
  double fraction = 0.3;
  MaskMode mask_mode = MaskMode::global_shared;
  double test_fraction = 0.2;
};

/// Draws the regime's series, masks them and splits train/test, all from
/// streams of `seed`.
RegimeSplit prepare_regime(const RegimePreset& preset, const DataConfig& config,
                           std::uint64_t seed);

/// Stable 64-bit label for a name (FNV-1a), used to derive per-cell seeds.
std::uint64_t name_label(std::string_view name);

/// Model names accepted by the benchmark: the five variants plus "mean" and
/// "median".
bool is_known_model(std::string_view name);

struct CellResult {
  std::string regime;
  std::string model;
  std::uint64_t data_seed = 0;
  std::uint64_t model_seed = 0;
  std::optional<MetricTriple> metrics;
  std::string error;
  std::vector<EpochRecord> history;
  std::optional<TrainedModel> trained;  // INR models only
  std::vector<Matrix> predictions;
  double train_seconds = 0.0;
  double infer_seconds = 0.0;
};

/// Architecture knobs exposed on the command line; unset fields keep the
/// variant's defaults.
struct ArchConfig {
  int latent_dim = 40;
  std::optional<int> hidden_dim;
  std::optional<double> omega_first;
  std::optional<double> omega_hidden;
};

ModelSpec make_spec(Variant variant, int features, const ArchConfig& arch);

struct CellConfig {
  ArchConfig arch;
  TrainConfig train;
  InferConfig infer;
  ScoreOptions score;
  unsigned threads = 1;
};

/// Trains `model` on split.train (seeded from model_seed), auto-decodes each
/// test series from its observed cells and scores the missing ones.
/// Failures are caught and reported in CellResult::error.
CellResult run_cell(const RegimeSplit& split, const std::string& regime, const std::string& model,
                    std::uint64_t model_seed, const CellConfig& config,
                    const EpochCallback& on_epoch = {});

struct BenchmarkConfig {
  std::vector<std::string> regimes;
  std::vector<std::string> models;
  std::uint64_t seed = 0;
  DataConfig data;
  CellConfig cell;
  std::optional<std::filesystem::path> out;  // per-cell artifacts when set
  bool record_timings = true;
  bool save_checkpoints = false;
};

struct BenchmarkResult {
  EvalReport report;
  std::vector<CellResult> cells;
  bool all_ok() const;
};

using CellCallback = std::function<void(const CellResult&)>;

/// Every (regime, model) cell. The data seed is derive(seed, {regime}) and is
/// shared by all models of a regime; the model seed is
/// derive(seed, {regime, model}). Failed cells are recorded and skipped.
BenchmarkResult run_benchmark(const BenchmarkConfig& config, const CellCallback& on_cell = {});

/// Writes report.csv, table_{mse,max,w2}.txt and failures.txt (when any).
void write_benchmark_report(const BenchmarkResult& result, const std::filesystem::path& dir,
                            TieMethod ties = TieMethod::min);

}  // namespace mads
