#include "mads/models.hpp"

#include "mads/errors.hpp"
#include "mads/rng.hpp"

#include <cmath>
#include <string>

namespace mads {
namespace {

std::vector<LayerShape> chain(int in, int hidden, int n_hidden, std::optional<int> out) {
  std::vector<LayerShape> shapes;
  int prev = in;
  for (int i = 0; i < n_hidden; ++i) {
    shapes.push_back({hidden, prev});
    prev = hidden;
  }
  if (out) shapes.push_back({*out, prev});
  return shapes;
}

std::size_t count(const std::vector<LayerShape>& shapes) {
  std::size_t n = 0;
  for (const auto& s : shapes) n += static_cast<std::size_t>(s.out * s.in + s.out);
  return n;
}

Tensor2 uniform_matrix(Rng& rng, Index rows, Index cols, double bound) {
  Tensor2 m(rows, cols);
  // Row-major draw order so the stream does not depend on storage order.
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  }
  return m;
}

Mlp relu_mlp_init(Rng& rng, const std::vector<LayerShape>& shapes, double last_scale,
                  bool has_output_layer) {
  Mlp mlp;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    double bound = std::sqrt(6.0 / static_cast<double>(s.in));
    if (has_output_layer && i + 1 == shapes.size()) bound *= last_scale;
    mlp.push_back({uniform_matrix(rng, s.out, s.in, bound), Tensor2::Zero(s.out, 1)});
  }
  return mlp;
}

Mlp siren_init(Rng& rng, const SirenArch& arch) {
  Mlp mlp;
  const auto shapes = arch.layers();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    const double fan_in = static_cast<double>(s.in);
    const double bound =
        i == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / arch.omega_hidden;
    Tensor2 w = uniform_matrix(rng, s.out, s.in, bound);
    Tensor2 b = uniform_matrix(rng, s.out, 1, bound);
    mlp.push_back({std::move(w), std::move(b)});
  }
  return mlp;
}

void check_layers(const Mlp& mlp, const std::vector<LayerShape>& shapes, const char* what) {
  if (mlp.size() != shapes.size()) {
    throw ArchitectureError(std::string(what) + ": expected " + std::to_string(shapes.size()) +
                            " layers, got " + std::to_string(mlp.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (mlp[i].weight.rows() != shapes[i].out || mlp[i].weight.cols() != shapes[i].in ||
        mlp[i].bias.rows() != shapes[i].out || mlp[i].bias.cols() != 1) {
      throw ArchitectureError(std::string(what) + ": layer " + std::to_string(i) +
                              " shape mismatch");
    }
  }
}

std::vector<LayerNodes> leaves_for(diff::Graph& g, const Mlp& mlp, bool trainable) {
  std::vector<LayerNodes> out;
  for (const auto& layer : mlp) {
    const NodeId w = g.leaf(layer.weight, trainable);
    const NodeId b = g.leaf(layer.bias, trainable);
    out.push_back({w, b});
  }
  return out;
}

/// Hidden ReLU activations of an MLP, one node per layer.
std::vector<NodeId> relu_stack(diff::Graph& g, std::span<const LayerNodes> layers, NodeId x) {
  std::vector<NodeId> hidden;
  for (const auto& l : layers) {
    x = g.relu(g.affine(x, l.weight, l.bias));
    hidden.push_back(x);
  }
  return hidden;
}

/// Full hypernet: ReLU hidden layers then a linear output layer.
NodeId hypernet_stack(diff::Graph& g, std::span<const LayerNodes> layers, NodeId z) {
  const auto hidden = relu_stack(g, layers.first(layers.size() - 1), z);
  const NodeId last = hidden.empty() ? z : hidden.back();
  return g.affine(last, layers.back().weight, layers.back().bias);
}

/// Per-series SIREN layer nodes cut out of the P x B hypernet output.
std::vector<LayerNodes> predicted_layers(diff::Graph& g, const SirenArch& arch, NodeId flat,
                                         Index column) {
  std::vector<LayerNodes> out;
  Index offset = 0;
  for (const auto& s : arch.layers()) {
    const Index nw = s.out * s.in;
    const NodeId w = g.reshape(g.block(flat, offset, column, nw, 1), s.out, s.in);
    offset += nw;
    const NodeId b = g.block(flat, offset, column, s.out, 1);
    offset += s.out;
    out.push_back({w, b});
  }
  return out;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::auto_siren: return "auto_siren";
    case Variant::mod_siren: return "mod_siren";
    case Variant::hn_siren: return "hn_siren";
    case Variant::mads_base: return "mads_base";
    case Variant::mads_fixed: return "mads_fixed";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw ContractError("unknown model variant '" + std::string(name) + "'");
}

bool uses_hypernet(Variant v) {
  return v == Variant::hn_siren || v == Variant::mads_base || v == Variant::mads_fixed;
}

bool uses_modulator(Variant v) {
  return v == Variant::mod_siren || v == Variant::mads_base || v == Variant::mads_fixed;
}

bool uses_dataset_latent(Variant v) { return v == Variant::mads_fixed; }

std::vector<LayerShape> SirenArch::layers() const {
  return chain(in_dim, hidden_dim, n_hidden_layers, out_dim);
}

std::size_t SirenArch::param_count() const { return count(layers()); }

void SirenArch::validate() const {
  if (in_dim < 1 || hidden_dim < 1 || n_hidden_layers < 1 || out_dim < 1) {
    throw ArchitectureError("SIREN dimensions must all be >= 1");
  }
  if (!(omega_first > 0.0) || !(omega_hidden > 0.0)) {
    throw ArchitectureError("SIREN omega factors must be > 0");
  }
}

std::vector<LayerShape> HypernetArch::layers() const {
  return chain(latent_dim, hidden_dim, n_hidden_layers, static_cast<int>(out_dim));
}

void HypernetArch::validate() const {
  if (latent_dim < 1 || hidden_dim < 1 || n_hidden_layers < 1 || out_dim < 1) {
    throw ArchitectureError("hypernet dimensions must all be >= 1");
  }
}

std::vector<LayerShape> ModulatorArch::layers() const {
  return chain(latent_dim, hidden_dim, n_layers, std::nullopt);
}

void ModulatorArch::validate() const {
  if (latent_dim < 1 || hidden_dim < 1 || n_layers < 1) {
    throw ArchitectureError("modulator dimensions must all be >= 1");
  }
}

ModelSpec ModelSpec::defaults(Variant variant, int features, int latent_dim) {
  ModelSpec spec;
  spec.variant = variant;
  spec.features = features;
  spec.latent_dim = latent_dim;
  if (uses_hypernet(variant)) {
    spec.siren.omega_first = 1.0;
    spec.siren.omega_hidden = 1.0;
  }
  spec.sync();
  spec.validate();
  return spec;
}

void ModelSpec::sync() {
  siren.in_dim = variant == Variant::auto_siren ? latent_dim + 1 : 1;
  siren.out_dim = features;
  hypernet.latent_dim = latent_dim;
  hypernet.out_dim = siren.param_count();
  modulator.latent_dim = latent_dim;
  modulator.hidden_dim = siren.hidden_dim;
  modulator.n_layers = siren.n_hidden_layers;
}

void ModelSpec::validate() const {
  if (latent_dim < 1) throw ArchitectureError("latent_dim must be >= 1");
  if (features < 1) throw ArchitectureError("features must be >= 1");
  siren.validate();
  if (siren.out_dim != features) throw ArchitectureError("SIREN out_dim must equal features");
  const int expected_in = variant == Variant::auto_siren ? latent_dim + 1 : 1;
  if (siren.in_dim != expected_in) throw ArchitectureError("SIREN in_dim inconsistent");
  if (uses_hypernet(variant)) {
    hypernet.validate();
    if (hypernet.out_dim != siren.param_count() || hypernet.latent_dim != latent_dim) {
      throw ArchitectureError("hypernet output must equal the SIREN parameter count");
    }
  }
  if (uses_modulator(variant)) {
    modulator.validate();
    if (modulator.hidden_dim != siren.hidden_dim ||
        modulator.n_layers != siren.n_hidden_layers || modulator.latent_dim != latent_dim) {
      throw ArchitectureError("modulator widths must mirror the SIREN hidden layers");
    }
  }
}

std::vector<Tensor2*> ModelParams::tensors() {
  std::vector<Tensor2*> out;
  for (Mlp* mlp : {&hypernet, &modulator, &siren}) {
    for (auto& l : *mlp) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

std::vector<const Tensor2*> ModelParams::tensors() const {
  std::vector<const Tensor2*> out;
  for (const Mlp* mlp : {&hypernet, &modulator, &siren}) {
    for (const auto& l : *mlp) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor2* t : tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  if (uses_hypernet(spec.variant)) {
    Rng rng(derive_seed(seed, {1}));
    p.hypernet = relu_mlp_init(rng, spec.hypernet.layers(), 1e-2, true);
  }
  if (uses_modulator(spec.variant)) {
    Rng rng(derive_seed(seed, {2}));
    p.modulator = relu_mlp_init(rng, spec.modulator.layers(), 1.0, false);
  }
  if (!uses_hypernet(spec.variant)) {
    Rng rng(derive_seed(seed, {3}));
    p.siren = siren_init(rng, spec.siren);
  }
  return p;
}

Vector flatten(const Mlp& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  Vector flat(static_cast<Index>(n));
  Index k = 0;
  for (const auto& l : layers) {
    for (Index r = 0; r < l.weight.rows(); ++r) {
      for (Index c = 0; c < l.weight.cols(); ++c) flat(k++) = l.weight(r, c);
    }
    for (Index r = 0; r < l.bias.rows(); ++r) flat(k++) = l.bias(r, 0);
  }
  return flat;
}

Mlp unflatten(const Vector& flat, const SirenArch& arch) {
  if (static_cast<std::size_t>(flat.size()) != arch.param_count()) {
    throw ArchitectureError("SIREN weight vector has " + std::to_string(flat.size()) +
                            " entries, architecture needs " +
                            std::to_string(arch.param_count()));
  }
  Mlp mlp;
  Index k = 0;
  for (const auto& s : arch.layers()) {
    DenseLayer l{Tensor2(s.out, s.in), Tensor2(s.out, 1)};
    for (Index r = 0; r < s.out; ++r) {
      for (Index c = 0; c < s.in; ++c) l.weight(r, c) = flat(k++);
    }
    for (Index r = 0; r < s.out; ++r) l.bias(r, 0) = flat(k++);
    mlp.push_back(std::move(l));
  }
  return mlp;
}

NodeId build_siren(diff::Graph& g, const SirenArch& arch, std::span<const LayerNodes> layers,
                   NodeId input, std::span<const NodeId> alphas) {
  const auto n_hidden = static_cast<std::size_t>(arch.n_hidden_layers);
  if (layers.size() != n_hidden + 1) throw ArchitectureError("SIREN layer count mismatch");
  if (!alphas.empty() && alphas.size() != n_hidden) {
    throw DimensionError("expected one amplitude vector per sine layer");
  }
  NodeId h = input;
  for (std::size_t i = 0; i < n_hidden; ++i) {
    const double omega = i == 0 ? arch.omega_first : arch.omega_hidden;
    h = g.sine(g.affine(h, layers[i].weight, layers[i].bias), omega);
    if (!alphas.empty()) h = g.hadamard(h, alphas[i]);
  }
  return g.affine(h, layers.back().weight, layers.back().bias);
}

std::vector<NodeId> ParamLeaves::ids() const {
  std::vector<NodeId> out;
  for (const auto* group : {&hypernet, &modulator, &siren}) {
    for (const auto& l : *group) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
  }
  return out;
}

ParamLeaves add_param_leaves(diff::Graph& g, const ModelParams& params, bool trainable) {
  ParamLeaves leaves;
  leaves.hypernet = leaves_for(g, params.hypernet, trainable);
  leaves.modulator = leaves_for(g, params.modulator, trainable);
  leaves.siren = leaves_for(g, params.siren, trainable);
  return leaves;
}

ForwardNodes build_forward(diff::Graph& g, const ModelSpec& spec, const ParamLeaves& params,
                           NodeId latents, std::optional<NodeId> z_mod,
                           std::span<const Tensor2> times) {
  const Tensor2& z = g.value(latents);
  if (z.rows() != spec.latent_dim || z.cols() != static_cast<Index>(times.size())) {
    throw DimensionError("latent batch must be latent_dim x n_series");
  }
  const Variant v = spec.variant;
  if (uses_dataset_latent(v) && !z_mod) {
    throw ContractError("mads_fixed requires the dataset-level modulator latent");
  }
  const Index batch = z.cols();
  ForwardNodes out;

  // Amplitudes: either per-series columns or one shared set.
  std::vector<NodeId> alpha_batch;
  if (uses_modulator(v)) {
    const NodeId mod_in = uses_dataset_latent(v) ? *z_mod : latents;
    alpha_batch = relu_stack(g, params.modulator, mod_in);
  }
  if (uses_hypernet(v)) out.predicted_weights = hypernet_stack(g, params.hypernet, latents);

  std::optional<NodeId> first_bias;
  std::vector<LayerNodes> shared = params.siren;
  SirenArch arch = spec.siren;
  if (v == Variant::auto_siren) {
    // W [z; t] + b == W_t t + (W_z z + b): the latent enters as a per-series bias.
    const LayerNodes l0 = params.siren.front();
    const NodeId w_z = g.block(l0.weight, 0, 0, spec.siren.hidden_dim, spec.latent_dim);
    const NodeId w_t = g.block(l0.weight, 0, spec.latent_dim, spec.siren.hidden_dim, 1);
    first_bias = g.affine(latents, w_z, l0.bias);
    shared.front().weight = w_t;
    arch.in_dim = 1;
  }

  for (Index j = 0; j < batch; ++j) {
    const Tensor2& t = times[static_cast<std::size_t>(j)];
    if (t.rows() != 1) throw DimensionError("timesteps must be a 1 x N row");
    const NodeId input = g.constant(t);

    std::vector<LayerNodes> layers;
    if (uses_hypernet(v)) {
      layers = predicted_layers(g, spec.siren, *out.predicted_weights, j);
    } else {
      layers = shared;
      if (first_bias) layers.front().bias = g.block(*first_bias, 0, j, arch.hidden_dim, 1);
    }

    std::vector<NodeId> alphas;
    for (NodeId a : alpha_batch) {
      alphas.push_back(uses_dataset_latent(v) ? a : g.block(a, 0, j, arch.hidden_dim, 1));
    }
    out.outputs.push_back(build_siren(g, arch, layers, input, alphas));
  }
  return out;
}

Tensor2 siren_forward(const SirenArch& arch, const Vector& weights, const Tensor2& t) {
  arch.validate();
  const Mlp mlp = unflatten(weights, arch);
  if (t.rows() != arch.in_dim) throw DimensionError("SIREN input rows must equal in_dim");
  diff::Graph g;
  const ModelParams p{{}, {}, mlp};
  const ParamLeaves leaves = add_param_leaves(g, p, false);
  return g.value(build_siren(g, arch, leaves.siren, g.constant(t)));
}

std::vector<Vector> modulator_alphas(const ModulatorArch& arch, const Mlp& modulator,
                                     const Vector& z_mod) {
  arch.validate();
  check_layers(modulator, arch.layers(), "modulator");
  if (z_mod.size() != arch.latent_dim) throw DimensionError("modulator latent size mismatch");
  diff::Graph g;
  const auto leaves = leaves_for(g, modulator, false);
  std::vector<Vector> out;
  for (NodeId h : relu_stack(g, leaves, g.constant(z_mod))) out.emplace_back(g.value(h).col(0));
  return out;
}

Tensor2 modulated_siren_forward(const SirenArch& arch, const Vector& weights,
                                std::span<const Vector> alphas, const Tensor2& t) {
  arch.validate();
  const Mlp mlp = unflatten(weights, arch);
  if (t.rows() != arch.in_dim) throw DimensionError("SIREN input rows must equal in_dim");
  if (alphas.size() != static_cast<std::size_t>(arch.n_hidden_layers)) {
    throw DimensionError("expected one amplitude vector per sine layer");
  }
  diff::Graph g;
  const ParamLeaves leaves = add_param_leaves(g, ModelParams{{}, {}, mlp}, false);
  std::vector<NodeId> alpha_nodes;
  for (const Vector& a : alphas) {
    if (a.size() != arch.hidden_dim) throw DimensionError("amplitude width mismatch");
    alpha_nodes.push_back(g.constant(a));
  }
  return g.value(build_siren(g, arch, leaves.siren, g.constant(t), alpha_nodes));
}

Vector hypernet_weights(const HypernetArch& arch, const Mlp& hypernet, const Vector& z) {
  arch.validate();
  check_layers(hypernet, arch.layers(), "hypernet");
  if (z.size() != arch.latent_dim) throw DimensionError("hypernet latent size mismatch");
  diff::Graph g;
  const auto leaves = leaves_for(g, hypernet, false);
  return g.value(hypernet_stack(g, leaves, g.constant(z))).col(0);
}

Tensor2 predict(const ModelSpec& spec, const ModelParams& params, const Vector& z_hyper,
                const std::optional<Vector>& z_mod, const Tensor2& t) {
  spec.validate();
  if (z_hyper.size() != spec.latent_dim) throw ContractError("z_hyper has the wrong length");
  if (uses_dataset_latent(spec.variant) && !z_mod) {
    throw ContractError("mads_fixed prediction requires z_mod");
  }
  if (uses_hypernet(spec.variant)) check_layers(params.hypernet, spec.hypernet.layers(), "hypernet");
  if (uses_modulator(spec.variant)) {
    check_layers(params.modulator, spec.modulator.layers(), "modulator");
  }
  if (!uses_hypernet(spec.variant)) check_layers(params.siren, spec.siren.layers(), "siren");

  diff::Graph g;
  const ParamLeaves leaves = add_param_leaves(g, params, false);
  const NodeId z = g.constant(z_hyper);
  std::optional<NodeId> zm;
  if (uses_dataset_latent(spec.variant)) zm = g.constant(*z_mod);
  const Tensor2 times[] = {t};
  return g.value(build_forward(g, spec, leaves, z, zm, times).outputs.front());
}

}  // namespace mads
