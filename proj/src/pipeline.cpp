#include "mads/pipeline.hpp"

#include "mads/checkpoint.hpp"
#include "mads/errors.hpp"

#include <chrono>
#include <fstream>

namespace mads {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string cell_summary(const CellResult& c) {
  std::string s = "regime," + c.regime + "\nmodel," + c.model +
                  "\ndata_seed," + std::to_string(c.data_seed) +
                  "\nmodel_seed," + std::to_string(c.model_seed) + "\n";
  if (c.metrics) {
    s += "mse," + format_double(c.metrics->mse) + "\nmax," + format_double(c.metrics->max_err) +
         "\nw2," + format_double(c.metrics->w2) + "\n";
  } else {
    s += "error," + c.error + "\n";
  }
  return s;
}

}  // namespace

RegimeSplit prepare_regime(const RegimePreset& preset, const DataConfig& config,
                           std::uint64_t seed) {
  if (config.n_series < 2) throw ContractError("need at least two series to split");
  Dataset all = build_regime_dataset(preset, config.n_series, seed);
  generate_mask(all, MaskPolicy{config.fraction, config.mask_mode, seed});
  auto [train, test] = split_dataset(all, config.test_fraction, seed);
  if (train.empty() || test.empty()) throw ContractError("split left one side empty");
  return {std::move(train), std::move(test)};
}

std::uint64_t name_label(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_known_model(std::string_view name) {
  if (name == "mean" || name == "median") return true;
  for (Variant v : kAllVariants) {
    if (to_string(v) == name) return true;
  }
  return false;
}

ModelSpec make_spec(Variant variant, int features, const ArchConfig& arch) {
  ModelSpec spec = ModelSpec::defaults(variant, features, arch.latent_dim);
  if (arch.hidden_dim) spec.siren.hidden_dim = *arch.hidden_dim;
  if (arch.omega_first) spec.siren.omega_first = *arch.omega_first;
  if (arch.omega_hidden) spec.siren.omega_hidden = *arch.omega_hidden;
  spec.sync();
  spec.validate();
  return spec;
}

CellResult run_cell(const RegimeSplit& split, const std::string& regime, const std::string& model,
                    std::uint64_t model_seed, const CellConfig& config,
                    const EpochCallback& on_epoch) {
  CellResult r;
  r.regime = regime;
  r.model = model;
  r.model_seed = model_seed;
  try {
    if (model == "mean" || model == "median") {
      const auto t0 = std::chrono::steady_clock::now();
      r.predictions =
          baseline_impute(split.test, model == "mean" ? BaselineKind::mean : BaselineKind::median);
      r.infer_seconds = seconds_since(t0);
    } else {
      const Variant v = parse_variant(model);
      const ModelSpec spec =
          make_spec(v, static_cast<int>(split.train.features()), config.arch);
      TrainConfig tc = config.train;
      tc.seed = derive_seed(model_seed, {1});
      auto t0 = std::chrono::steady_clock::now();
      FitResult fitted = fit(split.train, spec, tc, on_epoch);
      r.train_seconds = seconds_since(t0);
      r.history = std::move(fitted.history);

      InferConfig ic = config.infer;
      ic.seed = derive_seed(model_seed, {2});
      t0 = std::chrono::steady_clock::now();
      DatasetImputation imp = impute_dataset(fitted.model, split.test, ic, config.threads);
      r.infer_seconds = seconds_since(t0);
      r.predictions = std::move(imp.predictions);
      r.trained = std::move(fitted.model);
    }
    r.metrics = score(r.predictions, split.test, config.score);
  } catch (const std::exception& e) {
    r.metrics.reset();
    r.error = e.what();
  }
  return r;
}

bool BenchmarkResult::all_ok() const {
  for (const auto& c : cells) {
    if (!c.metrics) return false;
  }
  return true;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config, const CellCallback& on_cell) {
  for (const auto& m : config.models) {
    if (!is_known_model(m)) throw ContractError("unknown model '" + m + "'");
  }
  std::vector<RegimePreset> presets;
  for (const auto& name : config.regimes) presets.push_back(find_preset(name));

  BenchmarkResult result;
  for (const auto& preset : presets) {
    const std::uint64_t data_seed = derive_seed(config.seed, {name_label(preset.name)});
    std::optional<RegimeSplit> split;
    std::string data_error;
    try {
      split = prepare_regime(preset, config.data, data_seed);
    } catch (const std::exception& e) {
      data_error = e.what();
    }
    for (const auto& model : config.models) {
      const std::uint64_t model_seed =
          derive_seed(config.seed, {name_label(preset.name), name_label(model)});
      CellResult cell;
      if (split) {
        cell = run_cell(*split, preset.name, model, model_seed, config.cell);
      } else {
        cell.regime = preset.name;
        cell.model = model;
        cell.model_seed = model_seed;
        cell.error = "data generation failed: " + data_error;
      }
      cell.data_seed = data_seed;

      if (config.out) {
        try {
          const auto dir = *config.out / preset.name / model;
          std::filesystem::create_directories(dir);
          write_text(dir / "cell.csv", cell_summary(cell));
          if (cell.metrics && split) {
            write_text(dir / "imputations.csv", format_imputations(split->test, cell.predictions));
          }
          if (!cell.history.empty()) {
            std::vector<EpochRecord> h = cell.history;
            if (!config.record_timings) {
              for (auto& e : h) e.wall_ms = 0.0;
            }
            write_text(dir / "loss_history.csv", format_history(h));
          }
          if (config.save_checkpoints && cell.trained) {
            save_checkpoint(*cell.trained, dir / "checkpoint.json");
          }
        } catch (const std::exception& e) {
          if (cell.metrics) {
            cell.metrics.reset();
            cell.error = std::string("writing artifacts failed: ") + e.what();
          }
        }
      }
      if (cell.metrics) result.report.cells.push_back({preset.name, model, *cell.metrics});
      if (on_cell) on_cell(cell);
      // Large buffers are not needed once the cell is written.
      cell.trained.reset();
      cell.predictions.clear();
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

void write_benchmark_report(const BenchmarkResult& result, const std::filesystem::path& dir,
                            TieMethod ties) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.csv", format_report_csv(result.report, ties));
  for (Metric m : {Metric::mse, Metric::max_err, Metric::w2}) {
    write_text(dir / ("table_" + std::string(to_string(m)) + ".txt"),
               format_report_table(result.report, m, ties));
  }
  std::string failures;
  for (const auto& c : result.cells) {
    if (!c.metrics) failures += c.regime + "," + c.model + "," + c.error + "\n";
  }
  const auto path = dir / "failures.txt";
  if (!failures.empty()) {
    write_text(path, "regime,model,error\n" + failures);
  } else {
    std::filesystem::remove(path);
  }
}

}  // namespace mads
