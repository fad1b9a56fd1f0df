#include "mads/checkpoint.hpp"

#include "mads/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace mads {
namespace {

using nlohmann::json;

json tensor_json(const Tensor2& t) {
  json data = json::array();
  for (Index r = 0; r < t.rows(); ++r) {
    for (Index c = 0; c < t.cols(); ++c) {
      if (!std::isfinite(t(r, c))) throw NumericError("cannot checkpoint a non-finite value");
      data.push_back(t(r, c));
    }
  }
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::move(data)}};
}

Tensor2 tensor_from(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw ValidationError("tensor data length does not match its declared shape");
  }
  Tensor2 t(rows, cols);
  for (Index k = 0; k < rows * cols; ++k) t(k / cols, k % cols) = data[static_cast<std::size_t>(k)].get<double>();
  return t;
}

json vector_json(const Vector& v) {
  json a = json::array();
  for (Index k = 0; k < v.size(); ++k) {
    if (!std::isfinite(v(k))) throw NumericError("cannot checkpoint a non-finite latent");
    a.push_back(v(k));
  }
  return a;
}

Vector vector_from(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Index>(k)) = j[k].get<double>();
  return v;
}

json mlp_json(const Mlp& mlp) {
  json a = json::array();
  for (const auto& l : mlp) a.push_back({{"weight", tensor_json(l.weight)}, {"bias", tensor_json(l.bias)}});
  return a;
}

Mlp mlp_from(const json& j) {
  Mlp out;
  for (const auto& l : j) out.push_back({tensor_from(l.at("weight")), tensor_from(l.at("bias"))});
  return out;
}

json spec_json(const ModelSpec& s) {
  return {
      {"variant", std::string(to_string(s.variant))},
      {"latent_dim", s.latent_dim},
      {"features", s.features},
      {"siren",
       {{"in_dim", s.siren.in_dim},
        {"hidden_dim", s.siren.hidden_dim},
        {"n_hidden_layers", s.siren.n_hidden_layers},
        {"out_dim", s.siren.out_dim},
        {"omega_first", s.siren.omega_first},
        {"omega_hidden", s.siren.omega_hidden}}},
      {"hypernet",
       {{"latent_dim", s.hypernet.latent_dim},
        {"hidden_dim", s.hypernet.hidden_dim},
        {"n_hidden_layers", s.hypernet.n_hidden_layers},
        {"out_dim", s.hypernet.out_dim}}},
      {"modulator",
       {{"latent_dim", s.modulator.latent_dim},
        {"hidden_dim", s.modulator.hidden_dim},
        {"n_layers", s.modulator.n_layers}}},
  };
}

ModelSpec spec_from(const json& j) {
  ModelSpec s;
  s.variant = parse_variant(j.at("variant").get<std::string>());
  s.latent_dim = j.at("latent_dim").get<int>();
  s.features = j.at("features").get<int>();
  const auto& si = j.at("siren");
  s.siren.in_dim = si.at("in_dim").get<int>();
  s.siren.hidden_dim = si.at("hidden_dim").get<int>();
  s.siren.n_hidden_layers = si.at("n_hidden_layers").get<int>();
  s.siren.out_dim = si.at("out_dim").get<int>();
  s.siren.omega_first = si.at("omega_first").get<double>();
  s.siren.omega_hidden = si.at("omega_hidden").get<double>();
  const auto& h = j.at("hypernet");
  s.hypernet.latent_dim = h.at("latent_dim").get<int>();
  s.hypernet.hidden_dim = h.at("hidden_dim").get<int>();
  s.hypernet.n_hidden_layers = h.at("n_hidden_layers").get<int>();
  s.hypernet.out_dim = h.at("out_dim").get<std::size_t>();
  const auto& m = j.at("modulator");
  s.modulator.latent_dim = m.at("latent_dim").get<int>();
  s.modulator.hidden_dim = m.at("hidden_dim").get<int>();
  s.modulator.n_layers = m.at("n_layers").get<int>();
  return s;
}

json config_json(const TrainConfig& c) {
  return {{"lambda_latent", c.lambda_latent},
          {"lambda_weights", c.lambda_weights},
          {"lr_params", c.lr_params},
          {"lr_latent", c.lr_latent},
          {"clip_norm", c.clip_norm},
          {"epochs", c.epochs},
          {"batch_series", c.batch_series},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"seed", c.seed}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.lambda_latent = j.at("lambda_latent").get<double>();
  c.lambda_weights = j.at("lambda_weights").get<double>();
  c.lr_params = j.at("lr_params").get<double>();
  c.lr_latent = j.at("lr_latent").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_series = j.at("batch_series").get<int>();
  c.adam.beta1 = j.at("adam_beta1").get<double>();
  c.adam.beta2 = j.at("adam_beta2").get<double>();
  c.adam.eps = j.at("adam_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void check_same_shapes(const ModelParams& got, const ModelParams& want) {
  const auto a = got.tensors();
  const auto b = want.tensors();
  if (a.size() != b.size()) throw ValidationError("checkpoint has the wrong number of tensors");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols()) {
      throw ValidationError("checkpoint tensor #" + std::to_string(i) +
                            " does not match the architecture");
    }
  }
}

}  // namespace

std::string format_checkpoint(const TrainedModel& model) {
  json latents = {{"series_ids", model.latents.series_ids}, {"z_hyper", json::array()}};
  for (const Vector& z : model.latents.z_hyper) latents["z_hyper"].push_back(vector_json(z));
  latents["z_mod"] = model.latents.z_mod ? vector_json(*model.latents.z_mod) : json(nullptr);
  const json doc = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"spec", spec_json(model.spec)},
      {"train_config", config_json(model.config)},
      {"params",
       {{"hypernet", mlp_json(model.params.hypernet)},
        {"modulator", mlp_json(model.params.modulator)},
        {"siren", mlp_json(model.params.siren)}}},
      {"latents", std::move(latents)},
  };
  return doc.dump() + "\n";
}

TrainedModel parse_checkpoint(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what(), 0);
  }
  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) {
      throw ValidationError("not a checkpoint document");
    }
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ValidationError("unsupported checkpoint version");
    }
    TrainedModel m;
    m.spec = spec_from(doc.at("spec"));
    m.spec.validate();
    m.config = config_from(doc.at("train_config"));
    const auto& p = doc.at("params");
    m.params.hypernet = mlp_from(p.at("hypernet"));
    m.params.modulator = mlp_from(p.at("modulator"));
    m.params.siren = mlp_from(p.at("siren"));
    check_same_shapes(m.params, init_params(m.spec, 0));

    const auto& l = doc.at("latents");
    m.latents.series_ids = l.at("series_ids").get<std::vector<long>>();
    for (const auto& z : l.at("z_hyper")) {
      m.latents.z_hyper.push_back(vector_from(z));
      if (m.latents.z_hyper.back().size() != m.spec.latent_dim) {
        throw ValidationError("latent code has the wrong length");
      }
    }
    if (m.latents.z_hyper.size() != m.latents.series_ids.size()) {
      throw ValidationError("latent bank ids and codes differ in count");
    }
    if (!l.at("z_mod").is_null()) m.latents.z_mod = vector_from(l.at("z_mod"));
    if (uses_dataset_latent(m.spec.variant) &&
        (!m.latents.z_mod || m.latents.z_mod->size() != m.spec.latent_dim)) {
      throw ValidationError("mads_fixed checkpoint needs a dataset-level modulator code");
    }
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  const std::string text = format_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace mads
