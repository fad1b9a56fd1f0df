#include "mads/data.hpp"

#include "mads/errors.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace mads {

using Eigen::Index;

Index Series::observed_count() const { return (mask.array() != 0).count(); }

Index Series::missing_count() const { return mask.size() - observed_count(); }

void Series::validate() const {
  const Index n = t.size();
  if (values.rows() != n || mask.rows() != n || mask.cols() != values.cols()) {
    throw ValidationError("series " + std::to_string(id) + ": inconsistent shapes");
  }
  for (Index i = 1; i < n; ++i) {
    if (!(t(i) > t(i - 1))) {
      throw ValidationError("series " + std::to_string(id) + ": timesteps not increasing");
    }
  }
  for (Index i = 0; i < mask.size(); ++i) {
    const auto m = mask.data()[i];
    if (m > 1) throw ValidationError("series " + std::to_string(id) + ": mask not binary");
    if (m == 1 && !std::isfinite(values.data()[i])) {
      throw ValidationError("series " + std::to_string(id) + ": non-finite observed value");
    }
  }
}

Index Dataset::features() const { return series.empty() ? 0 : series.front().features(); }

void Dataset::validate() const {
  for (const auto& s : series) {
    s.validate();
    if (s.features() != features()) throw ValidationError("series have differing feature counts");
  }
}

Eigen::VectorXd uniform_grid(Index n) {
  if (n < 2) throw ContractError("a timestep grid needs at least 2 points");
  Eigen::VectorXd t(n);
  for (Index i = 0; i < n; ++i) {
    t(i) = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return t;
}

double toy_value(const ToyComponent& c, double gamma, double t) {
  return c.amplitude * std::exp(-gamma * (t + 1.0)) * std::sin(c.frequency * t + c.phase);
}

Series toy_series_from(const std::vector<ToyComponent>& components, double gamma, bool noise,
                       Index n_timesteps, Rng& rng) {
  if (components.empty()) throw ContractError("toy series needs at least one feature");
  if (!(gamma >= 0.0)) throw ContractError("toy decay gamma must be >= 0");
  const auto d = static_cast<Index>(components.size());
  Series s;
  s.t = uniform_grid(n_timesteps);
  s.values.resize(n_timesteps, d);
  s.mask = MaskMatrix::Ones(n_timesteps, d);
  for (Index n = 0; n < n_timesteps; ++n) {
    for (Index f = 0; f < d; ++f) {
      s.values(n, f) = toy_value(components[static_cast<std::size_t>(f)], gamma, s.t(n));
      if (noise) s.values(n, f) += 0.2 * rng.normal();
    }
  }
  return s;
}

Series sample_toy_series(double omega, double gamma, bool noise, int features,
                         Index n_timesteps, Rng& rng) {
  if (!(omega > 0.0)) throw ContractError("toy frequency scale omega must be > 0");
  if (features < 1) throw ContractError("toy series needs at least one feature");
  std::vector<ToyComponent> comps(static_cast<std::size_t>(features));
  for (auto& c : comps) {
    c.phase = rng.normal();
    c.frequency = omega * rng.beta22();
    c.amplitude = rng.beta22();
  }
  const double peak =
      std::max_element(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
        return a.amplitude < b.amplitude;
      })->amplitude;
  for (auto& c : comps) c.amplitude /= peak;
  return toy_series_from(comps, gamma, noise, n_timesteps, rng);
}

const std::vector<RegimePreset>& regime_presets() {
  static const std::vector<RegimePreset> presets = {
      {"B-SIN", 5.0, 0.0, 2, false},    {"M-SIN", 30.0, 0.0, 2, false},
      {"F-SIN", 100.0, 0.0, 2, false},  {"D-SIN", 5.0, 0.0, 10, false},
      {"MD-SIN", 30.0, 0.0, 10, false}, {"FD-SIN", 100.0, 0.0, 10, false},
      {"N-SIN", 5.0, 0.0, 2, true},     {"L-SIN", 100.0, 1.0, 2, false},
  };
  return presets;
}

RegimePreset find_preset(std::string_view name) {
  for (const auto& p : regime_presets()) {
    if (p.name == name) return p;
  }
  throw ContractError("unknown regime preset '" + std::string(name) + "'");
}

Dataset build_regime_dataset(const RegimePreset& preset, std::size_t n_series,
                             std::uint64_t seed) {
  Dataset ds;
  ds.series.reserve(n_series);
  for (std::size_t i = 0; i < n_series; ++i) {
    Rng rng(derive_seed(seed, {i}));
    Series s = sample_toy_series(preset.omega, preset.gamma, preset.noise, preset.features,
                                 preset.n_timesteps, rng);
    s.id = static_cast<long>(i);
    ds.series.push_back(std::move(s));
  }
  return ds;
}

std::string_view to_string(MaskMode mode) {
  return mode == MaskMode::global_shared ? "global_shared" : "per_series";
}

MaskMode parse_mask_mode(std::string_view name) {
  if (name == "global_shared") return MaskMode::global_shared;
  if (name == "per_series") return MaskMode::per_series;
  throw ContractError("unknown mask mode '" + std::string(name) + "'");
}

namespace {

std::vector<Index> sample_indices(Index n, Index k, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  // Partial Fisher-Yates: the first k slots are the sample.
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Index masked_count(double fraction, Index n) {
  return static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

void generate_mask(Dataset& dataset, const MaskPolicy& policy) {
  if (!(policy.fraction >= 0.0 && policy.fraction < 1.0)) {
    throw ContractError("mask fraction must lie in [0, 1)");
  }
  if (dataset.empty()) return;
  std::vector<Index> shared;
  if (policy.mode == MaskMode::global_shared) {
    const Index n = dataset.series.front().length();
    for (const auto& s : dataset.series) {
      if (s.length() != n) {
        throw ContractError("global_shared masking needs equal-length series");
      }
    }
    Rng rng(derive_seed(policy.seed, {0x6d61736bULL}));
    shared = sample_indices(n, masked_count(policy.fraction, n), rng);
  }
  for (std::size_t i = 0; i < dataset.series.size(); ++i) {
    Series& s = dataset.series[i];
    s.mask = MaskMatrix::Ones(s.length(), s.features());
    std::vector<Index> hide = shared;
    if (policy.mode == MaskMode::per_series) {
      Rng rng(derive_seed(policy.seed, {0x6d61736bULL, i}));
      hide = sample_indices(s.length(), masked_count(policy.fraction, s.length()), rng);
    }
    for (Index n : hide) s.mask.row(n).setZero();
  }
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double test_fraction,
                                          std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError("test fraction must lie in (0, 1)");
  }
  const Index n = static_cast<Index>(dataset.size());
  Rng rng(derive_seed(seed, {0x73706c6974ULL}));
  const std::vector<Index> test_idx = sample_indices(n, masked_count(test_fraction, n), rng);
  std::vector<bool> is_test(dataset.size(), false);
  for (Index i : test_idx) is_test[static_cast<std::size_t>(i)] = true;
  Dataset train, test;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (is_test[i] ? test : train).series.push_back(dataset.series[i]);
  }
  return {std::move(train), std::move(test)};
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_dataset(const Dataset& dataset) {
  const Index d = dataset.features();
  std::string out = "series_id,t";
  for (Index f = 0; f < d; ++f) out += ",f" + std::to_string(f);
  for (Index f = 0; f < d; ++f) out += ",m" + std::to_string(f);
  out += '\n';
  for (const auto& s : dataset.series) {
    for (Index n = 0; n < s.length(); ++n) {
      out += std::to_string(s.id);
      out += ',';
      out += format_double(s.t(n));
      for (Index f = 0; f < d; ++f) {
        out += ',';
        out += format_double(s.values(n, f));
      }
      for (Index f = 0; f < d; ++f) {
        out += ',';
        out += s.mask(n, f) ? '1' : '0';
      }
      out += '\n';
    }
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

double parse_real(std::string_view s, std::size_t line) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("cannot parse number '" + std::string(s) + "'", line);
  }
  return v;
}

long parse_long(std::string_view s, std::size_t line) {
  s = trim(s);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("cannot parse series id '" + std::string(s) + "'", line);
  }
  return v;
}

bool has_gz_suffix(const std::filesystem::path& path) { return path.extension() == ".gz"; }

}  // namespace

Dataset parse_dataset(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    while (pos < text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      line = trim(text.substr(pos, end - pos));
      pos = end + 1;
      ++line_no;
      if (!line.empty()) return true;
    }
    return false;
  };

  std::string_view line;
  if (!next_line(line)) throw ParseError("empty dataset file", 1);
  const auto header = split_fields(line);
  if (header.size() < 4 || header.size() % 2 != 0 || trim(header[0]) != "series_id" ||
      trim(header[1]) != "t") {
    throw ParseError("header must be series_id,t,f0..,m0..", line_no);
  }
  const std::size_t d = (header.size() - 2) / 2;
  for (std::size_t f = 0; f < d; ++f) {
    if (trim(header[2 + f]) != "f" + std::to_string(f) ||
        trim(header[2 + d + f]) != "m" + std::to_string(f)) {
      throw ParseError("unexpected header column", line_no);
    }
  }

  struct Rows {
    long id;
    std::vector<double> t;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;
  };
  std::vector<Rows> groups;
  std::vector<long> seen;
  while (next_line(line)) {
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const long id = parse_long(fields[0], line_no);
    if (groups.empty() || groups.back().id != id) {
      if (std::find(seen.begin(), seen.end(), id) != seen.end()) {
        throw ParseError("rows of series " + std::to_string(id) + " are not contiguous",
                         line_no);
      }
      seen.push_back(id);
      groups.push_back({id, {}, {}, {}});
    }
    Rows& g = groups.back();
    g.t.push_back(parse_real(fields[1], line_no));
    for (std::size_t f = 0; f < d; ++f) {
      // an empty value means no ground truth; only allowed where the mask is 0
      const std::string_view v = trim(fields[2 + f]);
      g.values.push_back(v.empty() ? std::numeric_limits<double>::quiet_NaN() : parse_real(v, line_no));
    }
    for (std::size_t f = 0; f < d; ++f) {
      const std::string_view m = trim(fields[2 + d + f]);
      if (m == "0") {
        g.mask.push_back(0);
      } else if (m == "1") {
        g.mask.push_back(1);
      } else {
        throw ValidationError("line " + std::to_string(line_no) + ": mask value '" +
                              std::string(m) + "' is not 0 or 1");
      }
    }
  }

  Dataset ds;
  for (auto& g : groups) {
    const auto n = static_cast<Index>(g.t.size());
    const auto dd = static_cast<Index>(d);
    Series s;
    s.id = g.id;
    s.t = Eigen::Map<Eigen::VectorXd>(g.t.data(), n);
    s.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        g.values.data(), n, dd);
    s.mask =
        Eigen::Map<Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            g.mask.data(), n, dd);
    s.validate();
    ds.series.push_back(std::move(s));
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  const std::string text = format_dataset(dataset);
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (f == nullptr) throw Error("cannot open " + path.string() + " for writing");
    const int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    gzclose(f);
    if (written != static_cast<int>(text.size())) throw Error("short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::string text;
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw Error("cannot open " + path.string());
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
    gzclose(f);
    if (n < 0) throw Error("gzip read failed: " + path.string());
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_dataset(text);
}

}  // namespace mads
