#pragma once

#include "mads/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mads {

using Matrix = Eigen::MatrixXd;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// One multivariate series: N timesteps, D features. mask(n, d) == 1 marks an
/// observed value; masked cells may still carry ground truth for evaluation.
struct Series {
  long id = 0;
  Eigen::VectorXd t;  // strictly increasing
  Matrix values;      // N x D
  MaskMatrix mask;    // N x D, binary

  Eigen::Index length() const { return t.size(); }
  Eigen::Index features() const { return values.cols(); }
  Eigen::Index observed_count() const;
  Eigen::Index missing_count() const;
  void validate() const;
};

struct Dataset {
  std::vector<Series> series;

  bool empty() const { return series.empty(); }
  std::size_t size() const { return series.size(); }
  /// Feature count shared by every series (0 when empty).
  Eigen::Index features() const;
  void validate() const;
};

/// One sinusoidal component of a toy feature.
struct ToyComponent {
  double amplitude = 1.0;
  double frequency = 1.0;  // Omega
  double phase = 0.0;      // phi
};

/// Uniform grid of n points on [-1, 1].
Eigen::VectorXd uniform_grid(Eigen::Index n);

/// A * exp(-gamma (t + 1)) * sin(Omega t + phi), without noise.
double toy_value(const ToyComponent& c, double gamma, double t);

/// Draws phi ~ N(0,1), Omega ~ omega * Beta(2,2) and A ~ Beta(2,2) per feature
/// (in that order), rescales amplitudes so the largest is exactly 1, then adds
/// 0.2 * N(0,1) per point when noise is on.
Series sample_toy_series(double omega, double gamma, bool noise, int features,
                         Eigen::Index n_timesteps, Rng& rng);

/// Same as above with the per-feature components already chosen.
Series toy_series_from(const std::vector<ToyComponent>& components, double gamma, bool noise,
                       Eigen::Index n_timesteps, Rng& rng);

struct RegimePreset {
  std::string name;
  double omega = 5.0;
  double gamma = 0.0;
  int features = 2;
  bool noise = false;
  Eigen::Index n_timesteps = 200;
  std::size_t n_series = 3000;
};

/// B-SIN, M-SIN, F-SIN, D-SIN, MD-SIN, FD-SIN, N-SIN, L-SIN.
const std::vector<RegimePreset>& regime_presets();
/// Throws ContractError for an unknown name.
RegimePreset find_preset(std::string_view name);

/// n_series independent draws; series i uses stream derive_seed(seed, {i}).
Dataset build_regime_dataset(const RegimePreset& preset, std::size_t n_series,
                             std::uint64_t seed);

enum class MaskMode { global_shared, per_series };

struct MaskPolicy {
  double fraction = 0.3;
  MaskMode mode = MaskMode::global_shared;
  std::uint64_t seed = 0;
};

std::string_view to_string(MaskMode mode);
MaskMode parse_mask_mode(std::string_view name);

/// Hides round(fraction * N) whole timesteps (all features) per series.
/// global_shared reuses one index set for every series (all series must then
/// share N); per_series draws a fresh set per series.
void generate_mask(Dataset& dataset, const MaskPolicy& policy);

/// Random disjoint partition; the test side gets round(test_fraction * n)
/// series. Both sides keep the original series order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double test_fraction,
                                          std::uint64_t seed);

// CSV codec. Header: series_id,t,f0..f{D-1},m0..m{D-1}; one row per
// (series, timestep); rows of a series are contiguous. A ".gz" suffix selects
// gzip compression on both read and write.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);
std::string format_dataset(const Dataset& dataset);
Dataset parse_dataset(std::string_view text);

/// Shortest-safe decimal for a double: 17 significant digits.
std::string format_double(double x);

}  // namespace mads
