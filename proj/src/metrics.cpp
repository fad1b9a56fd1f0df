#include "mads/metrics.hpp"

#include "mads/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace mads {

using Eigen::Index;

namespace {

void check_triplet(std::span<const Matrix> pred, std::span<const Matrix> truth,
                   std::span<const MaskMatrix> mask) {
  if (pred.size() != truth.size() || pred.size() != mask.size()) {
    throw ContractError("metric inputs must cover the same series");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].rows() != truth[i].rows() || pred[i].cols() != truth[i].cols() ||
        mask[i].rows() != truth[i].rows() || mask[i].cols() != truth[i].cols()) {
      throw DimensionError("metric inputs disagree in shape for series #" + std::to_string(i));
    }
  }
}

}  // namespace

double mse_missing(std::span<const Matrix> pred, std::span<const Matrix> truth,
                   std::span<const MaskMatrix> mask) {
  check_triplet(pred, truth, mask);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (Index k = 0; k < pred[i].size(); ++k) {
      if (mask[i].data()[k] != 0) continue;
      const double d = pred[i].data()[k] - truth[i].data()[k];
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) throw ContractError("mse_missing: no missing entries to score");
  return sum / static_cast<double>(count);
}

double max_error_avg(std::span<const Matrix> pred, std::span<const Matrix> truth,
                     std::span<const MaskMatrix> mask) {
  check_triplet(pred, truth, mask);
  double sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double worst = -1.0;
    for (Index k = 0; k < pred[i].size(); ++k) {
      if (mask[i].data()[k] != 0) continue;
      worst = std::max(worst, std::abs(pred[i].data()[k] - truth[i].data()[k]));
    }
    if (worst >= 0.0) {
      sum += worst;
      ++scored;
    }
  }
  if (scored == 0) throw ContractError("max_error_avg: no missing entries to score");
  return sum / static_cast<double>(scored);
}

std::string_view to_string(W2Cost c) { return c == W2Cost::euclidean ? "euclidean" : "squared"; }

W2Cost parse_w2_cost(std::string_view name) {
  if (name == "euclidean") return W2Cost::euclidean;
  if (name == "squared") return W2Cost::squared;
  throw ContractError("unknown W2 cost '" + std::string(name) + "'");
}

std::vector<Index> solve_assignment(const Matrix& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n) throw DimensionError("assignment needs a square cost matrix");
  if (n == 0) return {};
  // Shortest augmenting paths with row/column potentials; arrays are 1-based
  // with column 0 as the virtual start.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> assignment(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return assignment;
}

double w2_matching(const Matrix& pred_points, const Matrix& truth_points, W2Cost cost) {
  if (pred_points.rows() != truth_points.rows()) {
    throw ContractError("w2_matching needs equal point counts (" +
                        std::to_string(pred_points.rows()) + " vs " +
                        std::to_string(truth_points.rows()) + ")");
  }
  if (pred_points.cols() != truth_points.cols()) {
    throw DimensionError("w2_matching points differ in dimension");
  }
  const Index n = pred_points.rows();
  if (n == 0) throw ContractError("w2_matching over empty point sets");
  Matrix c(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double sq = (truth_points.row(i) - pred_points.row(j)).squaredNorm();
      c(i, j) = cost == W2Cost::euclidean ? std::sqrt(sq) : sq;
    }
  }
  const auto match = solve_assignment(c);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += c(i, match[static_cast<std::size_t>(i)]);
  return total / static_cast<double>(n);
}

double w2_missing(std::span<const Matrix> pred, std::span<const Matrix> truth,
                  std::span<const MaskMatrix> mask, W2Cost cost, std::size_t block_limit) {
  check_triplet(pred, truth, mask);
  if (block_limit == 0) throw ContractError("w2 block limit must be >= 1");
  // Points per series.
  std::vector<std::pair<Matrix, Matrix>> per_series;
  std::size_t total_points = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::vector<Index> rows;
    for (Index n = 0; n < mask[i].rows(); ++n) {
      if ((mask[i].row(n).array() == 0).any()) rows.push_back(n);
    }
    if (rows.empty()) continue;
    const auto k = static_cast<Index>(rows.size());
    Matrix p(k, truth[i].cols()), t(k, truth[i].cols());
    for (Index r = 0; r < k; ++r) {
      const Index n = rows[static_cast<std::size_t>(r)];
      t.row(r) = truth[i].row(n);
      for (Index f = 0; f < truth[i].cols(); ++f) {
        p(r, f) = mask[i](n, f) == 0 ? pred[i](n, f) : truth[i](n, f);
      }
    }
    total_points += rows.size();
    per_series.emplace_back(std::move(p), std::move(t));
  }
  if (total_points == 0) throw ContractError("w2_missing: no missing points");

  double total_cost = 0.0;
  std::size_t start = 0;
  while (start < per_series.size()) {
    std::size_t end = start;
    std::size_t points = 0;
    // Pack whole series; a single oversized series forms its own block.
    while (end < per_series.size() &&
           (end == start ||
            points + static_cast<std::size_t>(per_series[end].first.rows()) <= block_limit)) {
      points += static_cast<std::size_t>(per_series[end].first.rows());
      ++end;
    }
    const Index dims = per_series[start].first.cols();
    Matrix p(static_cast<Index>(points), dims), t(static_cast<Index>(points), dims);
    Index row = 0;
    for (std::size_t s = start; s < end; ++s) {
      const Index k = per_series[s].first.rows();
      p.middleRows(row, k) = per_series[s].first;
      t.middleRows(row, k) = per_series[s].second;
      row += k;
    }
    total_cost += w2_matching(p, t, cost) * static_cast<double>(points);
    start = end;
  }
  return total_cost / static_cast<double>(total_points);
}

MetricTriple score(std::span<const Matrix> pred, std::span<const Matrix> truth,
                   std::span<const MaskMatrix> mask, const ScoreOptions& options) {
  MetricTriple m;
  m.mse = mse_missing(pred, truth, mask);
  m.max_err = max_error_avg(pred, truth, mask);
  m.w2 = options.with_w2 ? w2_missing(pred, truth, mask, options.w2_cost, options.w2_block_limit)
                         : std::numeric_limits<double>::quiet_NaN();
  return m;
}

MetricTriple score(std::span<const Matrix> pred, const Dataset& truth,
                   const ScoreOptions& options) {
  std::vector<Matrix> values;
  std::vector<MaskMatrix> masks;
  for (const auto& s : truth.series) {
    values.push_back(s.values);
    masks.push_back(s.mask);
  }
  return score(pred, values, masks, options);
}

double baseline_statistic(const Dataset& dataset, BaselineKind kind) {
  std::vector<double> observed;
  for (const auto& s : dataset.series) {
    for (Index k = 0; k < s.values.size(); ++k) {
      if (s.mask.data()[k] != 0) observed.push_back(s.values.data()[k]);
    }
  }
  if (observed.empty()) throw ContractError("baseline needs at least one observed value");
  if (kind == BaselineKind::mean) {
    return std::accumulate(observed.begin(), observed.end(), 0.0) /
           static_cast<double>(observed.size());
  }
  const std::size_t mid = observed.size() / 2;
  std::nth_element(observed.begin(), observed.begin() + static_cast<std::ptrdiff_t>(mid),
                   observed.end());
  const double upper = observed[mid];
  if (observed.size() % 2 == 1) return upper;
  const double lower = *std::max_element(observed.begin(),
                                         observed.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<Matrix> baseline_impute(const Dataset& dataset, BaselineKind kind) {
  const double stat = baseline_statistic(dataset, kind);
  std::vector<Matrix> out;
  for (const auto& s : dataset.series) out.push_back(Matrix::Constant(s.length(), s.features(), stat));
  return out;
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::mse: return "mse";
    case Metric::max_err: return "max";
    case Metric::w2: return "w2";
  }
  return "?";
}

std::vector<std::string> EvalReport::datasets() const {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.dataset) == out.end()) out.push_back(c.dataset);
  }
  return out;
}

std::vector<std::string> EvalReport::models() const {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.model) == out.end()) out.push_back(c.model);
  }
  return out;
}

const EvalCell* EvalReport::find(std::string_view dataset, std::string_view model) const {
  for (const auto& c : cells) {
    if (c.dataset == dataset && c.model == model) return &c;
  }
  return nullptr;
}

double metric_value(const MetricTriple& m, Metric metric) {
  switch (metric) {
    case Metric::mse: return m.mse;
    case Metric::max_err: return m.max_err;
    case Metric::w2: return m.w2;
  }
  return m.mse;
}

std::map<std::string, double> dataset_ranks(const EvalReport& report, std::string_view dataset,
                                            Metric metric, TieMethod ties) {
  std::vector<std::pair<double, std::string>> entries;
  for (const auto& model : report.models()) {
    const EvalCell* c = report.find(dataset, model);
    if (c == nullptr) {
      throw ContractError("missing cell (" + std::string(dataset) + ", " + model + ")");
    }
    entries.emplace_back(metric_value(c->metrics, metric), model);
  }
  std::map<std::string, double> ranks;
  for (const auto& [value, model] : entries) {
    std::size_t below = 0, equal = 0;
    for (const auto& [other, name] : entries) {
      if (other < value) ++below;
      if (other == value) ++equal;
    }
    const double r = ties == TieMethod::min
                         ? static_cast<double>(below + 1)
                         : static_cast<double>(below) + (static_cast<double>(equal) + 1.0) / 2.0;
    ranks[model] = r;
  }
  return ranks;
}

std::map<std::string, double> average_rank(const EvalReport& report, Metric metric,
                                           TieMethod ties) {
  const auto datasets = report.datasets();
  if (datasets.empty()) throw ContractError("average_rank over an empty report");
  std::map<std::string, double> sum;
  for (const auto& model : report.models()) sum[model] = 0.0;
  for (const auto& d : datasets) {
    for (const auto& [model, r] : dataset_ranks(report, d, metric, ties)) sum[model] += r;
  }
  for (auto& [model, s] : sum) s /= static_cast<double>(datasets.size());
  return sum;
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }

std::string format_report_csv(const EvalReport& report, TieMethod ties) {
  std::string out = "dataset,model,metric,value,rank\n";
  const Metric metrics[] = {Metric::mse, Metric::max_err, Metric::w2};
  bool complete = true;
  for (const auto& d : report.datasets()) {
    for (const auto& m : report.models()) complete = complete && report.find(d, m) != nullptr;
  }
  for (const auto& d : report.datasets()) {
    for (Metric metric : metrics) {
      std::map<std::string, double> ranks;
      if (complete) ranks = dataset_ranks(report, d, metric, ties);
      for (const auto& m : report.models()) {
        const EvalCell* c = report.find(d, m);
        if (c == nullptr) continue;
        const double v = metric_value(c->metrics, metric);
        out += d + "," + m + "," + std::string(to_string(metric)) + "," +
               (std::isnan(v) ? std::string() : format_double(v)) + "," +
               (complete ? format_double(ranks[m]) : std::string()) + "\n";
      }
    }
  }
  if (complete && !report.cells.empty()) {
    for (Metric metric : metrics) {
      const auto avg = average_rank(report, metric, ties);
      for (const auto& m : report.models()) {
        out += "avg_rank," + m + "," + std::string(to_string(metric)) + "," +
               format_double(avg.at(m)) + ",\n";
      }
    }
  }
  return out;
}

std::string format_report_table(const EvalReport& report, Metric metric, TieMethod ties) {
  const auto datasets = report.datasets();
  const auto models = report.models();
  std::size_t first = 8;
  for (const auto& d : datasets) first = std::max(first, d.size());
  std::vector<std::size_t> width;
  for (const auto& m : models) width.push_back(std::max<std::size_t>(9, m.size()));

  std::ostringstream os;
  auto cell = [&](const std::string& s, std::size_t w) { os << ' ' << std::setw(static_cast<int>(w)) << s; };
  os << std::left << std::setw(static_cast<int>(first)) << "Dataset" << std::right;
  for (std::size_t k = 0; k < models.size(); ++k) cell(models[k], width[k]);
  os << '\n';
  for (const auto& d : datasets) {
    os << std::left << std::setw(static_cast<int>(first)) << d << std::right;
    for (std::size_t k = 0; k < models.size(); ++k) {
      const EvalCell* c = report.find(d, models[k]);
      std::string text = "-";
      if (c != nullptr) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1e", metric_value(c->metrics, metric));
        text = buf;
      }
      cell(text, width[k]);
    }
    os << '\n';
  }
  bool complete = !datasets.empty();
  for (const auto& d : datasets) {
    for (const auto& m : models) complete = complete && report.find(d, m) != nullptr;
  }
  if (complete) {
    const auto avg = average_rank(report, metric, ties);
    os << std::left << std::setw(static_cast<int>(first)) << "Avg rank" << std::right;
    for (std::size_t k = 0; k < models.size(); ++k) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.1f", round1(avg.at(models[k])));
      cell(buf, width[k]);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace mads
