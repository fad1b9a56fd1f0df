// mads: command-line front end.
//
//   mads generate  --preset B-SIN --n 500 --fraction 0.3 --seed 7 --out data/
//   mads train     --data data/train.csv --variant mads_base --seed 1 --out run/
//   mads impute    --checkpoint run/checkpoint.json --data data/test.csv --out imp/
//   mads evaluate  --imputations imp/imputations.csv --out eval/
//   mads benchmark --regimes B-SIN,M-SIN --models mads_base,mean --seed 3 --out bench/
//   mads gradcheck --seed 0
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include "mads/checkpoint.hpp"
#include "mads/errors.hpp"
#include "mads/gradcheck.hpp"
#include "mads/inference.hpp"
#include "mads/metrics.hpp"
#include "mads/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mads;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The timestamp is the only field that differs between identical runs.
void write_manifest(const fs::path& dir, const std::string& command, json config) {
  const json doc = {{"command", command}, {"timestamp", utc_now()}, {"config", std::move(config)}};
  write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

json to_json(const TrainConfig& c) {
  return {{"lambda_latent", c.lambda_latent}, {"lambda_weights", c.lambda_weights},
          {"lr_params", c.lr_params},         {"lr_latent", c.lr_latent},
          {"clip_norm", c.clip_norm},         {"epochs", c.epochs},
          {"batch_series", c.batch_series},   {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},       {"adam_eps", c.adam.eps},
          {"seed", c.seed}};
}

json to_json(const InferConfig& c) {
  return {{"steps", c.steps},         {"lr_latent", c.lr_latent},   {"init_std", c.init_std},
          {"clip_norm", c.clip_norm}, {"restarts", c.restarts},     {"seed", c.seed},
          {"adam_beta1", c.adam.beta1}, {"adam_beta2", c.adam.beta2}, {"adam_eps", c.adam.eps}};
}

json to_json(const ModelSpec& s) {
  return {{"variant", std::string(to_string(s.variant))},
          {"latent_dim", s.latent_dim},
          {"features", s.features},
          {"siren_hidden_dim", s.siren.hidden_dim},
          {"siren_hidden_layers", s.siren.n_hidden_layers},
          {"omega_first", s.siren.omega_first},
          {"omega_hidden", s.siren.omega_hidden},
          {"hypernet_hidden_dim", s.hypernet.hidden_dim},
          {"hypernet_out_dim", s.hypernet.out_dim},
          {"modulator_hidden_dim", s.modulator.hidden_dim}};
}

json to_json(const DataConfig& d) {
  return {{"n_series", d.n_series},
          {"fraction", d.fraction},
          {"mask_mode", std::string(to_string(d.mask_mode))},
          {"test_fraction", d.test_fraction}};
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : regime_presets()) out.push_back(p.name);
  return out;
}

std::vector<std::string> variant_names() {
  std::vector<std::string> out;
  for (Variant v : kAllVariants) out.emplace_back(to_string(v));
  return out;
}

void add_train_flags(CLI::App* app, TrainConfig& c) {
  app->add_option("--lambda-latent", c.lambda_latent, "latent regularizer weight")->capture_default_str();
  app->add_option("--lambda-weights", c.lambda_weights, "weight regularizer")->capture_default_str();
  app->add_option("--lr-params", c.lr_params, "parameter learning rate")->capture_default_str();
  app->add_option("--lr-latent", c.lr_latent, "latent learning rate")->capture_default_str();
  app->add_option("--clip-norm", c.clip_norm, "global gradient-norm clip")->capture_default_str();
  app->add_option("--epochs", c.epochs)->capture_default_str();
  app->add_option("--batch-series", c.batch_series, "series per mini-batch")->capture_default_str();
  app->add_option("--adam-beta1", c.adam.beta1)->capture_default_str();
  app->add_option("--adam-beta2", c.adam.beta2)->capture_default_str();
  app->add_option("--adam-eps", c.adam.eps)->capture_default_str();
}

void add_infer_flags(CLI::App* app, InferConfig& c, const std::string& prefix) {
  app->add_option("--" + prefix + "steps", c.steps, "Adam steps per series")->capture_default_str();
  app->add_option("--" + prefix + "lr-latent", c.lr_latent)->capture_default_str();
  app->add_option("--" + prefix + "init-std", c.init_std)->capture_default_str();
  app->add_option("--" + prefix + "clip-norm", c.clip_norm)->capture_default_str();
  app->add_option("--" + prefix + "restarts", c.restarts)->capture_default_str();
}

struct ArchFlags {
  int latent_dim = 40;
  int hidden_dim = 0;
  double omega_first = 0.0;
  double omega_hidden = 0.0;

  ArchConfig resolve() const {
    ArchConfig a;
    a.latent_dim = latent_dim;
    if (hidden_dim > 0) a.hidden_dim = hidden_dim;
    if (omega_first > 0.0) a.omega_first = omega_first;
    if (omega_hidden > 0.0) a.omega_hidden = omega_hidden;
    return a;
  }
};

void add_arch_flags(CLI::App* app, ArchFlags& a) {
  app->add_option("--latent-dim", a.latent_dim)->capture_default_str();
  app->add_option("--hidden-dim", a.hidden_dim, "SIREN width (0: default 60)");
  app->add_option("--omega-first", a.omega_first, "first-layer omega (0: variant default)");
  app->add_option("--omega-hidden", a.omega_hidden, "hidden-layer omega (0: variant default)");
}

void add_data_flags(CLI::App* app, DataConfig& d, std::string& mask_mode) {
  app->add_option("--n,--n-series", d.n_series, "number of series")->capture_default_str();
  app->add_option("--fraction", d.fraction, "share of timesteps hidden")->capture_default_str();
  app->add_option("--mask-mode", mask_mode)
      ->check(CLI::IsMember({"global_shared", "per_series"}))
      ->capture_default_str();
  app->add_option("--test-fraction", d.test_fraction)->capture_default_str();
}

// Imputation CSV back to per-series prediction/truth/mask matrices.
struct EvalInput {
  std::vector<Matrix> pred;
  std::vector<Matrix> truth;
  std::vector<MaskMatrix> mask;
};

EvalInput eval_input(const std::vector<ImputationRow>& rows) {
  std::vector<long> order;
  std::map<long, std::vector<const ImputationRow*>> by_series;
  for (const auto& r : rows) {
    if (!by_series.contains(r.series_id)) order.push_back(r.series_id);
    by_series[r.series_id].push_back(&r);
  }
  EvalInput in;
  for (long id : order) {
    const auto& cells = by_series[id];
    long n = 0, d = 0;
    for (const auto* r : cells) {
      n = std::max(n, r->t_index + 1);
      d = std::max(d, r->feature_index + 1);
    }
    if (static_cast<long>(cells.size()) != n * d) {
      throw ValidationError("series " + std::to_string(id) + " does not cover a full grid");
    }
    Matrix p(n, d), t(n, d);
    MaskMatrix m(n, d);
    std::vector<bool> seen(static_cast<std::size_t>(n * d), false);
    for (const auto* r : cells) {
      const auto k = static_cast<std::size_t>(r->t_index * d + r->feature_index);
      if (seen[k]) throw ValidationError("duplicate cell in series " + std::to_string(id));
      seen[k] = true;
      if (!r->truth) throw ValidationError("series " + std::to_string(id) + " lacks ground truth");
      p(r->t_index, r->feature_index) = r->imputed;
      t(r->t_index, r->feature_index) = *r->truth;
      m(r->t_index, r->feature_index) = r->was_missing ? 0 : 1;
    }
    in.pred.push_back(std::move(p));
    in.truth.push_back(std::move(t));
    in.mask.push_back(std::move(m));
  }
  return in;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MADS: modulated auto-decoding SIREN imputation"};
  app.require_subcommand(1, 1);

  // generate
  std::string preset_name;
  DataConfig data;
  std::string mask_mode = "global_shared";
  std::uint64_t seed = 0;
  fs::path out;
  auto* gen = app.add_subcommand("generate", "draw a toy regime and write train/test CSVs");
  gen->add_option("--preset", preset_name)->required()->check(CLI::IsMember(preset_names()));
  add_data_flags(gen, data, mask_mode);
  gen->add_option("--seed", seed)->required();
  gen->add_option("--out", out)->required();

  // train
  fs::path data_path;
  std::string variant_name = "mads_base";
  ArchFlags arch;
  TrainConfig train_cfg;
  bool no_timings = false;
  int log_every = 50;
  auto* tr = app.add_subcommand("train", "fit a model on a dataset CSV");
  tr->add_option("--data", data_path)->required();
  tr->add_option("--variant", variant_name)->check(CLI::IsMember(variant_names()))->capture_default_str();
  add_arch_flags(tr, arch);
  add_train_flags(tr, train_cfg);
  tr->add_option("--seed", seed)->required();
  tr->add_option("--out", out)->required();
  tr->add_flag("--no-timings", no_timings, "write 0 in the wall_ms column");
  tr->add_option("--log-every", log_every, "progress line every k epochs (0: silent)")->capture_default_str();

  // impute
  fs::path checkpoint_path;
  InferConfig infer_cfg;
  auto* im = app.add_subcommand("impute", "auto-decode each series and fill its missing cells");
  im->add_option("--checkpoint", checkpoint_path)->required();
  im->add_option("--data", data_path)->required();
  add_infer_flags(im, infer_cfg, "");
  im->add_option("--seed", seed)->capture_default_str();
  im->add_option("--out", out)->required();

  // evaluate
  fs::path imputations_path;
  std::string dataset_label = "dataset", model_label = "model", w2_cost = "euclidean";
  std::size_t w2_block = 2000;
  auto* ev = app.add_subcommand("evaluate", "score an imputation CSV");
  ev->add_option("--imputations", imputations_path)->required();
  ev->add_option("--dataset-name", dataset_label)->capture_default_str();
  ev->add_option("--model-name", model_label)->capture_default_str();
  ev->add_option("--w2-cost", w2_cost)->check(CLI::IsMember({"euclidean", "squared"}))->capture_default_str();
  ev->add_option("--w2-block-limit", w2_block)->capture_default_str();
  ev->add_option("--out", out)->required();

  // benchmark
  std::vector<std::string> regimes = preset_names();
  std::vector<std::string> models = variant_names();
  InferConfig bench_infer;
  std::string ties = "min";
  bool save_checkpoints = false;
  auto* bm = app.add_subcommand("benchmark", "regimes x models grid with rank tables");
  bm->add_option("--regimes", regimes)->delimiter(',')->check(CLI::IsMember(preset_names()))->capture_default_str();
  bm->add_option("--models", models)
      ->delimiter(',')
      ->check([](const std::string& m) {
        return is_known_model(m) ? std::string() : "unknown model '" + m + "'";
      })
      ->capture_default_str();
  add_data_flags(bm, data, mask_mode);
  add_arch_flags(bm, arch);
  add_train_flags(bm, train_cfg);
  add_infer_flags(bm, bench_infer, "infer-");
  bm->add_option("--w2-cost", w2_cost)->check(CLI::IsMember({"euclidean", "squared"}))->capture_default_str();
  bm->add_option("--ties", ties)->check(CLI::IsMember({"min", "mean"}))->capture_default_str();
  bm->add_option("--seed", seed)->required();
  bm->add_option("--out", out)->required();
  bm->add_flag("--no-timings", no_timings, "write 0 in the wall_ms column");
  bm->add_flag("--save-checkpoints", save_checkpoints);

  // gradcheck
  GradcheckOptions gc;
  auto* gcmd = app.add_subcommand("gradcheck", "reverse-mode vs finite-difference gradients");
  gcmd->add_option("--seed", gc.seed)->capture_default_str();
  gcmd->add_option("--n-seeds", gc.n_seeds)->capture_default_str();
  gcmd->add_option("--step", gc.step)->capture_default_str();
  gcmd->add_option("--tolerance", gc.tolerance)->capture_default_str();
  gcmd->add_option("--floor", gc.floor)->capture_default_str();
  gcmd->add_flag("--flip-sine-gradient", gc.flip_sine_gradient)->group("");  // test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*gen) {
      const RegimePreset preset = find_preset(preset_name);
      data.mask_mode = parse_mask_mode(mask_mode);
      const RegimeSplit split = prepare_regime(preset, data, seed);
      fs::create_directories(out);
      write_dataset(split.train, out / "train.csv");
      write_dataset(split.test, out / "test.csv");
      json cfg = to_json(data);
      cfg["preset"] = preset.name;
      cfg["omega"] = preset.omega;
      cfg["gamma"] = preset.gamma;
      cfg["features"] = preset.features;
      cfg["noise"] = preset.noise;
      cfg["n_timesteps"] = preset.n_timesteps;
      cfg["seed"] = seed;
      cfg["train_series"] = split.train.size();
      cfg["test_series"] = split.test.size();
      write_manifest(out, "generate", cfg);
      std::printf("wrote %zu train and %zu test series to %s\n", split.train.size(),
                  split.test.size(), out.string().c_str());
      return kExitOk;
    }

    if (*tr) {
      const Dataset ds = read_dataset(data_path);
      const ModelSpec spec =
          make_spec(parse_variant(variant_name), static_cast<int>(ds.features()), arch.resolve());
      train_cfg.seed = seed;
      const FitResult res = fit(ds, spec, train_cfg, [&](const EpochRecord& r) {
        if (log_every > 0 && (r.epoch % log_every == 0 || r.epoch == 1)) {
          std::fprintf(stderr, "epoch %d  L_total %.4e  L_mse %.4e\n", r.epoch, r.loss.total,
                       r.loss.mse);
        }
      });
      fs::create_directories(out);
      save_checkpoint(res.model, out / "checkpoint.json");
      std::vector<EpochRecord> history = res.history;
      if (no_timings) {
        for (auto& e : history) e.wall_ms = 0.0;
      }
      write_text(out / "loss_history.csv", format_history(history));
      write_manifest(out, "train",
                     {{"data", data_path.string()},
                      {"spec", to_json(spec)},
                      {"train_config", to_json(train_cfg)},
                      {"series", ds.size()}});
      return kExitOk;
    }

    if (*im) {
      const TrainedModel model = load_checkpoint(checkpoint_path);
      const Dataset ds = read_dataset(data_path);
      infer_cfg.seed = seed;
      const unsigned threads = thread_cap();
      const DatasetImputation imp = impute_dataset(model, ds, infer_cfg, threads);
      fs::create_directories(out);
      write_text(out / "imputations.csv", format_imputations(ds, imp.predictions));
      write_manifest(out, "impute",
                     {{"checkpoint", checkpoint_path.string()},
                      {"data", data_path.string()},
                      {"infer_config", to_json(infer_cfg)},
                      {"threads", threads},
                      {"series", ds.size()}});
      return kExitOk;
    }

    if (*ev) {
      const EvalInput in = eval_input(parse_imputations(read_text(imputations_path)));
      ScoreOptions opts;
      opts.w2_cost = parse_w2_cost(w2_cost);
      opts.w2_block_limit = w2_block;
      EvalReport report;
      report.cells.push_back({dataset_label, model_label, score(in.pred, in.truth, in.mask, opts)});
      fs::create_directories(out);
      write_text(out / "report.csv", format_report_csv(report));
      const std::string table = format_report_table(report, Metric::mse);
      write_text(out / "table_mse.txt", table);
      write_manifest(out, "evaluate",
                     {{"imputations", imputations_path.string()},
                      {"dataset_name", dataset_label},
                      {"model_name", model_label},
                      {"w2_cost", w2_cost},
                      {"w2_block_limit", w2_block}});
      const auto& m = report.cells.front().metrics;
      std::printf("mse %.6e  max %.6e  w2 %.6e\n", m.mse, m.max_err, m.w2);
      return kExitOk;
    }

    if (*bm) {
      BenchmarkConfig cfg;
      cfg.regimes = regimes;
      cfg.models = models;
      cfg.seed = seed;
      data.mask_mode = parse_mask_mode(mask_mode);
      cfg.data = data;
      cfg.cell.arch = arch.resolve();
      cfg.cell.train = train_cfg;
      cfg.cell.infer = bench_infer;
      cfg.cell.score.w2_cost = parse_w2_cost(w2_cost);
      cfg.cell.threads = thread_cap();
      cfg.out = out;
      cfg.record_timings = !no_timings;
      cfg.save_checkpoints = save_checkpoints;
      fs::create_directories(out);
      const BenchmarkResult res = run_benchmark(cfg, [](const CellResult& c) {
        if (c.metrics) {
          std::fprintf(stderr, "%-7s %-10s mse %.3e  max %.3e  w2 %.3e  (%.0fs + %.0fs)\n",
                       c.regime.c_str(), c.model.c_str(), c.metrics->mse, c.metrics->max_err,
                       c.metrics->w2, c.train_seconds, c.infer_seconds);
        } else {
          std::fprintf(stderr, "%-7s %-10s FAILED: %s\n", c.regime.c_str(), c.model.c_str(),
                       c.error.c_str());
        }
      });
      const TieMethod tie = ties == "mean" ? TieMethod::mean : TieMethod::min;
      write_benchmark_report(res, out, tie);
      json jcfg = {{"regimes", regimes},
                   {"models", models},
                   {"seed", seed},
                   {"data", to_json(data)},
                   {"train_config", to_json(train_cfg)},
                   {"infer_config", to_json(bench_infer)},
                   {"latent_dim", arch.latent_dim},
                   {"hidden_dim", arch.hidden_dim},
                   {"omega_first", arch.omega_first},
                   {"omega_hidden", arch.omega_hidden},
                   {"w2_cost", w2_cost},
                   {"ties", ties},
                   {"threads", cfg.cell.threads}};
      write_manifest(out, "benchmark", jcfg);
      std::fputs(format_report_table(res.report, Metric::mse, tie).c_str(), stdout);
      return res.all_ok() ? kExitOk : kExitFailure;
    }

    if (*gcmd) {
      const GradcheckReport rep = run_gradcheck(gc);
      std::fputs(format_gradcheck(rep).c_str(), stdout);
      return rep.passed ? kExitOk : kExitFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
