#pragma once

// Tape-based reverse-mode differentiation over small dense 2-D tensors.
//
// A Graph is built eagerly: every builder call evaluates its node immediately
// and appends it to the tape, so inputs always precede their consumers. Leaf
// values can later be replaced and the whole tape replayed with forward(),
// which is what the finite-difference oracle and the latent inference loop do.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

namespace mads::diff {

using Tensor2 = Eigen::MatrixXd;
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;
using NodeId = std::size_t;

enum class ActivationKind { sine, relu, identity };

struct Activation {
  ActivationKind kind = ActivationKind::identity;
  double omega = 1.0;  // only used by sine

  static Activation sine(double omega) { return {ActivationKind::sine, omega}; }
  static Activation relu() { return {ActivationKind::relu, 1.0}; }
  static Activation identity() { return {ActivationKind::identity, 1.0}; }
};

// Eager helpers, no tape.
Tensor2 affine(const Tensor2& x, const Tensor2& weight, const Tensor2& bias);
Tensor2 activation(const Tensor2& x, Activation act);

/// Gradient of the root with respect to each trainable leaf.
using GradMap = std::map<NodeId, Tensor2>;

struct GraphOptions {
  /// Permit NaN/Inf in node values (used by mask-poisoning tests).
  bool allow_non_finite = false;
  /// Fault injection for negative controls: negate the sine derivative.
  bool flip_sine_gradient = false;
};

enum class OpKind {
  leaf,
  affine,
  sine,
  relu,
  hadamard,
  mse,
  sum_squares,
  scale,
  add,
  block,
  reshape,
};

std::string_view op_name(OpKind kind);

class Graph {
 public:
  explicit Graph(GraphOptions options = {});

  NodeId leaf(Tensor2 value, bool trainable);
  NodeId constant(Tensor2 value) { return leaf(std::move(value), false); }

  /// weight * x + bias; bias is either full-shape or a column broadcast over x's columns.
  NodeId affine(NodeId x, NodeId weight, NodeId bias);
  /// sin(omega * x); omega is a graph constant, never a leaf.
  NodeId sine(NodeId x, double omega);
  NodeId relu(NodeId x);
  /// Applies the activation; identity returns x itself.
  NodeId activation(NodeId x, Activation act);
  /// Elementwise product; b may be a column vector broadcast over a's columns.
  NodeId hadamard(NodeId a, NodeId b);
  /// Sum of squared residuals over entries with mask == 1, divided by the
  /// observed count (or by `normalizer` when given). Masked truth cells are
  /// never read.
  NodeId mse(NodeId pred, Tensor2 truth, Mask mask,
             std::optional<double> normalizer = std::nullopt);
  NodeId sum_squares(NodeId x);
  NodeId scale(NodeId x, double factor);
  NodeId add(NodeId a, NodeId b);
  /// Contiguous sub-block copy.
  NodeId block(NodeId x, Index row, Index col, Index rows, Index cols);
  /// Reinterprets x in row-major element order as rows x cols.
  NodeId reshape(NodeId x, Index rows, Index cols);

  const Tensor2& value(NodeId id) const;
  double scalar(NodeId id) const;
  bool trainable(NodeId id) const;
  OpKind kind(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  std::vector<NodeId> trainable_leaves() const;

  /// Replaces a leaf value; call forward() afterwards to refresh dependents.
  void set_leaf(NodeId id, const Tensor2& value);
  /// Re-evaluates every non-leaf node in tape order.
  void forward();

  /// Reverse accumulation from a scalar root. Every trainable leaf appears in
  /// the result; leaves the root does not depend on get an all-zero gradient.
  GradMap backward(NodeId root) const;

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<NodeId> inputs;
    Tensor2 value;
    bool trainable = false;
    bool needs_grad = false;
    double param = 0.0;
    Index r0 = 0, c0 = 0, rows = 0, cols = 0;
    std::optional<double> normalizer;
    Tensor2 truth;
    Mask mask;
  };

  NodeId push(Node node);
  void evaluate(Node& node) const;
  void check_finite(const Node& node) const;
  const Node& at(NodeId id) const;

  GraphOptions options_;
  std::vector<Node> nodes_;
};

/// Central differences (f(theta + h) - f(theta - h)) / 2h for every entry of
/// `leaf`. Replays the tape; the leaf value is restored on return.
Tensor2 finite_difference_gradient(Graph& graph, NodeId root, NodeId leaf, double h = 1e-6);

/// max |a - b| / max(|a|, |b|, floor) over all entries.
double max_relative_error(const Tensor2& a, const Tensor2& b, double floor = 1e-8);

}  // namespace mads::diff
