#pragma once

#include "mads/data.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mads {

// All metrics look only at cells whose mask is 0. Inputs are one N x D
// matrix per series.

/// Pooled mean squared error over every missing cell.
double mse_missing(std::span<const Matrix> pred, std::span<const Matrix> truth,
                   std::span<const MaskMatrix> mask);

/// Mean over series of the largest absolute error among a series' missing
/// cells; series without missing cells are skipped.
double max_error_avg(std::span<const Matrix> pred, std::span<const Matrix> truth,
                     std::span<const MaskMatrix> mask);

enum class W2Cost { euclidean, squared };

std::string_view to_string(W2Cost c);
W2Cost parse_w2_cost(std::string_view name);

/// Exact minimum-cost perfect matching (Hungarian method) between the rows of
/// two equally sized point sets; returns total matched cost / number of pairs.
double w2_matching(const Matrix& pred_points, const Matrix& truth_points,
                   W2Cost cost = W2Cost::euclidean);

/// Minimum-cost assignment over a dense n x n cost matrix: assignment[i] is
/// the column matched to row i.
std::vector<Eigen::Index> solve_assignment(const Matrix& cost);

/// W2 over missing points. Each timestep with at least one missing feature is
/// a D-vector point; observed coordinates take the ground truth in both sets.
/// Whole series are packed into blocks of at most `block_limit` points and
/// matched exactly within each block (blocking only when the pooled set is
/// larger than the limit); the result is total cost / total pairs.
double w2_missing(std::span<const Matrix> pred, std::span<const Matrix> truth,
                  std::span<const MaskMatrix> mask, W2Cost cost = W2Cost::euclidean,
                  std::size_t block_limit = 2000);

struct MetricTriple {
  double mse = 0.0;
  double max_err = 0.0;
  double w2 = 0.0;
};

struct ScoreOptions {
  W2Cost w2_cost = W2Cost::euclidean;
  std::size_t w2_block_limit = 2000;
  bool with_w2 = true;
};

MetricTriple score(std::span<const Matrix> pred, std::span<const Matrix> truth,
                   std::span<const MaskMatrix> mask, const ScoreOptions& options = {});
MetricTriple score(std::span<const Matrix> pred, const Dataset& truth,
                   const ScoreOptions& options = {});

enum class BaselineKind { mean, median };

/// Global mean/median over every observed value of the dataset, written into
/// every cell of one N x D matrix per series.
std::vector<Matrix> baseline_impute(const Dataset& dataset, BaselineKind kind);
double baseline_statistic(const Dataset& dataset, BaselineKind kind);

enum class Metric { mse, max_err, w2 };
enum class TieMethod { min, mean };

std::string_view to_string(Metric m);

struct EvalCell {
  std::string dataset;
  std::string model;
  MetricTriple metrics;
};

struct EvalReport {
  std::vector<EvalCell> cells;

  /// Distinct names in first-seen order.
  std::vector<std::string> datasets() const;
  std::vector<std::string> models() const;
  const EvalCell* find(std::string_view dataset, std::string_view model) const;
};

double metric_value(const MetricTriple& m, Metric metric);

/// Rank of each model within one dataset, ascending by metric (1 = best).
/// `min` gives tied models the lowest shared rank (1, 2, 2, 4); `mean` gives
/// them the average of the positions they span (1, 2.5, 2.5, 4).
std::map<std::string, double> dataset_ranks(const EvalReport& report, std::string_view dataset,
                                            Metric metric, TieMethod ties = TieMethod::min);

/// Mean of dataset_ranks over every dataset. Throws ContractError when any
/// (dataset, model) cell is missing.
std::map<std::string, double> average_rank(const EvalReport& report, Metric metric,
                                           TieMethod ties = TieMethod::min);

/// Half-away-from-zero rounding to one decimal, as in published rank rows.
double round1(double x);

/// Long form: dataset,model,metric,value,rank.
std::string format_report_csv(const EvalReport& report, TieMethod ties = TieMethod::min);
/// Aligned table: one row per dataset, one column per model, plus an
/// "Avg rank" row.
std::string format_report_table(const EvalReport& report, Metric metric,
                                 TieMethod ties = TieMethod::min);

}  // namespace mads
