#pragma once

// Forward passes of the sine-activated INR family:
//
//   auto_siren  one SIREN fed concat(z, t)
//   mod_siren   shared SIREN, sine amplitudes from a ReLU modulator of z
//   hn_siren    SIREN weights predicted from z by a hypernetwork
//   mads_base   hypernet weights + modulator amplitudes, both from z
//   mads_fixed  hypernet weights from z, modulator fed one dataset-level code
//
// Everything is built on diff::Graph so the same code serves training,
// latent inference, and plain prediction.

#include "mads/diffengine.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mads {

using diff::Index;
using diff::NodeId;
using diff::Tensor2;
using Vector = Eigen::VectorXd;

enum class Variant { auto_siren, mod_siren, hn_siren, mads_base, mads_fixed };

inline constexpr std::array<Variant, 5> kAllVariants = {
    Variant::auto_siren, Variant::mod_siren, Variant::hn_siren, Variant::mads_base,
    Variant::mads_fixed};

std::string_view to_string(Variant v);
/// Accepts the tag names above; throws ContractError otherwise.
Variant parse_variant(std::string_view name);

bool uses_hypernet(Variant v);
bool uses_modulator(Variant v);
/// True when the modulator is fed the dataset-level code instead of z.
bool uses_dataset_latent(Variant v);

struct LayerShape {
  Index out = 0;
  Index in = 0;
};

struct SirenArch {
  int in_dim = 1;
  int hidden_dim = 60;
  int n_hidden_layers = 3;
  int out_dim = 1;
  double omega_first = 30.0;
  double omega_hidden = 1.0;

  /// n_hidden_layers sine layers followed by the linear output layer.
  std::vector<LayerShape> layers() const;
  /// (in*h + h) + (n-1)(h*h + h) + (h*out + out)
  std::size_t param_count() const;
  void validate() const;
};

struct HypernetArch {
  int latent_dim = 40;
  int hidden_dim = 128;
  int n_hidden_layers = 1;
  std::size_t out_dim = 0;

  std::vector<LayerShape> layers() const;
  void validate() const;
};

/// ReLU MLP mirroring the SIREN's hidden widths; only its hidden outputs are
/// used (one amplitude vector per SIREN sine layer), so it has no output layer.
struct ModulatorArch {
  int latent_dim = 40;
  int hidden_dim = 60;
  int n_layers = 3;

  std::vector<LayerShape> layers() const;
  void validate() const;
};

struct ModelSpec {
  Variant variant = Variant::mads_base;
  int latent_dim = 40;
  int features = 1;
  SirenArch siren;
  HypernetArch hypernet;
  ModulatorArch modulator;

  /// Default architecture for a variant with D output features.
  static ModelSpec defaults(Variant variant, int features, int latent_dim = 40);
  /// Re-derives the dependent fields (SIREN in/out dims, hypernet output
  /// width, modulator topology) after any manual edit.
  void sync();
  void validate() const;
};

struct DenseLayer {
  Tensor2 weight;  // out x in
  Tensor2 bias;    // out x 1
};
using Mlp = std::vector<DenseLayer>;

struct ModelParams {
  Mlp hypernet;
  Mlp modulator;
  Mlp siren;  // shared SIREN (auto_siren, mod_siren only)

  /// Canonical order: hypernet, modulator, siren; weight before bias.
  std::vector<Tensor2*> tensors();
  std::vector<const Tensor2*> tensors() const;
  std::size_t scalar_count() const;
};

/// Deterministic initialization:
///   shared SIREN   layer 0 U(+-1/fan_in), later layers U(+-sqrt(6/fan_in)/omega_hidden)
///   hypernet       U(+-sqrt(6/fan_in)), output layer scaled by 1e-2, zero biases
///   modulator      U(+-sqrt(6/fan_in)), zero biases
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

/// SIREN weights in row-major layer order (W_0, b_0, W_1, b_1, ...).
Vector flatten(const Mlp& layers);
Mlp unflatten(const Vector& flat, const SirenArch& arch);

// Standalone evaluations. Inputs are column batches: t is in_dim x B.
Tensor2 siren_forward(const SirenArch& arch, const Vector& weights, const Tensor2& t);
std::vector<Vector> modulator_alphas(const ModulatorArch& arch, const Mlp& modulator,
                                     const Vector& z_mod);
Tensor2 modulated_siren_forward(const SirenArch& arch, const Vector& weights,
                                std::span<const Vector> alphas, const Tensor2& t);
Vector hypernet_weights(const HypernetArch& arch, const Mlp& hypernet, const Vector& z);

/// Output of the variant at timesteps t (1 x B), shape features x B.
Tensor2 predict(const ModelSpec& spec, const ModelParams& params, const Vector& z_hyper,
                const std::optional<Vector>& z_mod, const Tensor2& t);

// Graph construction.

struct LayerNodes {
  NodeId weight = 0;
  NodeId bias = 0;
};

struct ParamLeaves {
  std::vector<LayerNodes> hypernet;
  std::vector<LayerNodes> modulator;
  std::vector<LayerNodes> siren;

  /// Leaf ids in ModelParams::tensors() order.
  std::vector<NodeId> ids() const;
};

ParamLeaves add_param_leaves(diff::Graph& g, const ModelParams& params, bool trainable);

struct ForwardNodes {
  std::vector<NodeId> outputs;              // per series, features x N_j
  std::optional<NodeId> predicted_weights;  // hypernet variants: P x B
};

/// Builds every series' prediction. `latents` is an N_Z x B node (column j is
/// series j); `times[j]` is the 1 x N_j timestep row of series j.
ForwardNodes build_forward(diff::Graph& g, const ModelSpec& spec, const ParamLeaves& params,
                           NodeId latents, std::optional<NodeId> z_mod,
                           std::span<const Tensor2> times);

/// Sine stack over explicit layer nodes; alphas (one per sine layer) optional.
NodeId build_siren(diff::Graph& g, const SirenArch& arch, std::span<const LayerNodes> layers,
                   NodeId input, std::span<const NodeId> alphas = {});

}  // namespace mads
