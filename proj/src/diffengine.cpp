#include "mads/diffengine.hpp"

#include "mads/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace mads::diff {
namespace {

std::string shape(const Tensor2& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

void check_affine_shapes(const Tensor2& x, const Tensor2& w, const Tensor2& b) {
  const bool bias_ok = b.rows() == w.rows() && (b.cols() == 1 || b.cols() == x.cols());
  if (w.cols() != x.rows() || !bias_ok) {
    throw DimensionError("affine: weight " + shape(w) + ", input " + shape(x) + ", bias " +
                         shape(b));
  }
}

void add_into(Tensor2& slot, const Tensor2& g) {
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::affine: return "affine";
    case OpKind::sine: return "sine";
    case OpKind::relu: return "relu";
    case OpKind::hadamard: return "hadamard";
    case OpKind::mse: return "mse";
    case OpKind::sum_squares: return "sum_squares";
    case OpKind::scale: return "scale";
    case OpKind::add: return "add";
    case OpKind::block: return "block";
    case OpKind::reshape: return "reshape";
  }
  return "?";
}

Tensor2 affine(const Tensor2& x, const Tensor2& weight, const Tensor2& bias) {
  check_affine_shapes(x, weight, bias);
  Tensor2 out(weight.rows(), x.cols());
  out.noalias() = weight * x;
  if (bias.cols() == 1) {
    out.colwise() += bias.col(0);
  } else {
    out += bias;
  }
  return out;
}

Tensor2 activation(const Tensor2& x, Activation act) {
  switch (act.kind) {
    case ActivationKind::sine:
      if (!(act.omega > 0.0)) throw ContractError("sine activation requires omega > 0");
      return (act.omega * x.array()).sin().matrix();
    case ActivationKind::relu:
      return x.cwiseMax(0.0);
    case ActivationKind::identity:
      return x;
  }
  return x;
}

Graph::Graph(GraphOptions options) : options_(options) {}

const Graph::Node& Graph::at(NodeId id) const {
  if (id >= nodes_.size()) throw ContractError("unknown node id " + std::to_string(id));
  return nodes_[id];
}

NodeId Graph::push(Node node) {
  node.needs_grad = node.trainable;
  for (NodeId in : node.inputs) node.needs_grad = node.needs_grad || at(in).needs_grad;
  evaluate(node);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

void Graph::check_finite(const Node& node) const {
  if (options_.allow_non_finite) return;
  if (!node.value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") +
                       std::string(op_name(node.kind)) + " node");
  }
}

void Graph::evaluate(Node& node) const {
  auto in = [&](std::size_t k) -> const Tensor2& { return nodes_[node.inputs[k]].value; };
  switch (node.kind) {
    case OpKind::leaf:
      break;
    case OpKind::affine:
      node.value = diff::affine(in(0), in(1), in(2));
      break;
    case OpKind::sine:
      node.value = (node.param * in(0).array()).sin().matrix();
      break;
    case OpKind::relu:
      node.value = in(0).cwiseMax(0.0);
      break;
    case OpKind::hadamard: {
      const Tensor2& a = in(0);
      const Tensor2& b = in(1);
      if (b.cols() == 1 && a.cols() != 1) {
        node.value = a.array().colwise() * b.col(0).array();
      } else {
        node.value = a.cwiseProduct(b);
      }
      break;
    }
    case OpKind::mse: {
      const Tensor2& pred = in(0);
      double sum = 0.0;
      Index count = 0;
      for (Index c = 0; c < pred.cols(); ++c) {
        for (Index r = 0; r < pred.rows(); ++r) {
          if (node.mask(r, c) != 0) {
            const double d = pred(r, c) - node.truth(r, c);
            sum += d * d;
            ++count;
          }
        }
      }
      const double denom = node.normalizer ? *node.normalizer : static_cast<double>(count);
      node.value = Tensor2::Constant(1, 1, sum / denom);
      break;
    }
    case OpKind::sum_squares:
      node.value = Tensor2::Constant(1, 1, in(0).squaredNorm());
      break;
    case OpKind::scale:
      node.value = node.param * in(0);
      break;
    case OpKind::add:
      node.value = in(0) + in(1);
      break;
    case OpKind::block:
      node.value = in(0).block(node.r0, node.c0, node.rows, node.cols);
      break;
    case OpKind::reshape: {
      const Tensor2& x = in(0);
      node.value.resize(node.rows, node.cols);
      const Index src_cols = x.cols();
      for (Index k = 0; k < node.rows * node.cols; ++k) {
        node.value(k / node.cols, k % node.cols) = x(k / src_cols, k % src_cols);
      }
      break;
    }
  }
  check_finite(node);
}

NodeId Graph::leaf(Tensor2 value, bool trainable) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(value);
  n.trainable = trainable;
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, NodeId weight, NodeId bias) {
  check_affine_shapes(at(x).value, at(weight).value, at(bias).value);
  Node n;
  n.kind = OpKind::affine;
  n.inputs = {x, weight, bias};
  return push(std::move(n));
}

NodeId Graph::sine(NodeId x, double omega) {
  if (!(omega > 0.0)) throw ContractError("sine requires omega > 0");
  Node n;
  n.kind = OpKind::sine;
  n.inputs = {x};
  n.param = omega;
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  Node n;
  n.kind = OpKind::relu;
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::activation(NodeId x, Activation act) {
  switch (act.kind) {
    case ActivationKind::sine: return sine(x, act.omega);
    case ActivationKind::relu: return relu(x);
    case ActivationKind::identity: return x;
  }
  return x;
}

NodeId Graph::hadamard(NodeId a, NodeId b) {
  const Tensor2& va = at(a).value;
  const Tensor2& vb = at(b).value;
  const bool same = va.rows() == vb.rows() && va.cols() == vb.cols();
  const bool broadcast = va.rows() == vb.rows() && vb.cols() == 1;
  if (!same && !broadcast) {
    throw DimensionError("hadamard: " + shape(va) + " vs " + shape(vb));
  }
  Node n;
  n.kind = OpKind::hadamard;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::mse(NodeId pred, Tensor2 truth, Mask mask, std::optional<double> normalizer) {
  const Tensor2& vp = at(pred).value;
  if (truth.rows() != vp.rows() || truth.cols() != vp.cols() || mask.rows() != vp.rows() ||
      mask.cols() != vp.cols()) {
    throw DimensionError("mse: prediction " + shape(vp) + ", truth " + shape(truth) +
                         ", mask " + std::to_string(mask.rows()) + "x" +
                         std::to_string(mask.cols()));
  }
  if (normalizer && !(*normalizer > 0.0)) throw ContractError("mse normalizer must be > 0");
  if (!normalizer && (mask.array() != 0).count() == 0) {
    throw ContractError("mse over an empty observed set");
  }
  Node n;
  n.kind = OpKind::mse;
  n.inputs = {pred};
  n.truth = std::move(truth);
  n.mask = std::move(mask);
  n.normalizer = normalizer;
  return push(std::move(n));
}

NodeId Graph::sum_squares(NodeId x) {
  Node n;
  n.kind = OpKind::sum_squares;
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double factor) {
  Node n;
  n.kind = OpKind::scale;
  n.inputs = {x};
  n.param = factor;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor2& va = at(a).value;
  const Tensor2& vb = at(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw DimensionError("add: " + shape(va) + " vs " + shape(vb));
  }
  Node n;
  n.kind = OpKind::add;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::block(NodeId x, Index row, Index col, Index rows, Index cols) {
  const Tensor2& v = at(x).value;
  if (row < 0 || col < 0 || rows < 1 || cols < 1 || row + rows > v.rows() ||
      col + cols > v.cols()) {
    throw DimensionError("block: " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " at (" + std::to_string(row) + "," + std::to_string(col) +
                         ") outside " + shape(v));
  }
  Node n;
  n.kind = OpKind::block;
  n.inputs = {x};
  n.r0 = row;
  n.c0 = col;
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, Index rows, Index cols) {
  const Tensor2& v = at(x).value;
  if (rows < 1 || cols < 1 || rows * cols != v.size()) {
    throw DimensionError("reshape: " + shape(v) + " to " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  Node n;
  n.kind = OpKind::reshape;
  n.inputs = {x};
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

const Tensor2& Graph::value(NodeId id) const { return at(id).value; }

double Graph::scalar(NodeId id) const {
  const Tensor2& v = at(id).value;
  if (v.rows() != 1 || v.cols() != 1) throw ContractError("node is not a scalar: " + shape(v));
  return v(0, 0);
}

bool Graph::trainable(NodeId id) const { return at(id).trainable; }

OpKind Graph::kind(NodeId id) const { return at(id).kind; }

std::vector<NodeId> Graph::trainable_leaves() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::leaf && nodes_[i].trainable) out.push_back(i);
  }
  return out;
}

void Graph::set_leaf(NodeId id, const Tensor2& value) {
  Node& n = nodes_.at(id);
  if (n.kind != OpKind::leaf) throw ContractError("set_leaf on a non-leaf node");
  if (value.rows() != n.value.rows() || value.cols() != n.value.cols()) {
    throw DimensionError("set_leaf: " + shape(n.value) + " vs " + shape(value));
  }
  n.value = value;
  check_finite(n);
}

void Graph::forward() {
  for (Node& n : nodes_) {
    if (n.kind != OpKind::leaf) evaluate(n);
  }
}

GradMap Graph::backward(NodeId root) const {
  const Tensor2& rv = at(root).value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ContractError("backward requires a scalar root, got " + shape(rv));
  }
  std::vector<Tensor2> grads(root + 1);
  grads[root] = Tensor2::Ones(1, 1);

  for (NodeId id = root + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (grads[id].size() == 0 || n.kind == OpKind::leaf) continue;
    const Tensor2& g = grads[id];
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
    auto in = [&](std::size_t k) -> const Tensor2& { return nodes_[n.inputs[k]].value; };
    auto slot = [&](std::size_t k) -> Tensor2& { return grads[n.inputs[k]]; };

    switch (n.kind) {
      case OpKind::leaf:
        break;
      case OpKind::affine: {
        const Tensor2& x = in(0);
        const Tensor2& w = in(1);
        if (wants(0)) {
          Tensor2 dx(w.cols(), g.cols());
          dx.noalias() = w.transpose() * g;
          add_into(slot(0), dx);
        }
        if (wants(1)) {
          Tensor2 dw(g.rows(), x.rows());
          dw.noalias() = g * x.transpose();
          add_into(slot(1), dw);
        }
        if (wants(2)) {
          if (in(2).cols() == 1) {
            add_into(slot(2), g.rowwise().sum());
          } else {
            add_into(slot(2), g);
          }
        }
        break;
      }
      case OpKind::sine: {
        if (!wants(0)) break;
        const double sign = options_.flip_sine_gradient ? -1.0 : 1.0;
        Tensor2 dx = (sign * n.param) * ((n.param * in(0).array()).cos() * g.array()).matrix();
        add_into(slot(0), dx);
        break;
      }
      case OpKind::relu: {
        if (!wants(0)) break;
        Tensor2 dx = (in(0).array() > 0.0).select(g, 0.0);
        add_into(slot(0), dx);
        break;
      }
      case OpKind::hadamard: {
        const Tensor2& a = in(0);
        const Tensor2& b = in(1);
        const bool broadcast = b.cols() == 1 && a.cols() != 1;
        if (wants(0)) {
          if (broadcast) {
            add_into(slot(0), (g.array().colwise() * b.col(0).array()).matrix());
          } else {
            add_into(slot(0), g.cwiseProduct(b));
          }
        }
        if (wants(1)) {
          if (broadcast) {
            add_into(slot(1), g.cwiseProduct(a).rowwise().sum());
          } else {
            add_into(slot(1), g.cwiseProduct(a));
          }
        }
        break;
      }
      case OpKind::mse: {
        if (!wants(0)) break;
        const Tensor2& pred = in(0);
        Index count = (n.mask.array() != 0).count();
        const double denom = n.normalizer ? *n.normalizer : static_cast<double>(count);
        const double k = 2.0 * g(0, 0) / denom;
        Tensor2 dp = Tensor2::Zero(pred.rows(), pred.cols());
        for (Index c = 0; c < pred.cols(); ++c) {
          for (Index r = 0; r < pred.rows(); ++r) {
            if (n.mask(r, c) != 0) dp(r, c) = k * (pred(r, c) - n.truth(r, c));
          }
        }
        add_into(slot(0), dp);
        break;
      }
      case OpKind::sum_squares:
        if (wants(0)) add_into(slot(0), (2.0 * g(0, 0)) * in(0));
        break;
      case OpKind::scale:
        if (wants(0)) add_into(slot(0), n.param * g);
        break;
      case OpKind::add:
        if (wants(0)) add_into(slot(0), g);
        if (wants(1)) add_into(slot(1), g);
        break;
      case OpKind::block: {
        if (!wants(0)) break;
        Tensor2& s = slot(0);
        if (s.size() == 0) s = Tensor2::Zero(in(0).rows(), in(0).cols());
        s.block(n.r0, n.c0, n.rows, n.cols) += g;
        break;
      }
      case OpKind::reshape: {
        if (!wants(0)) break;
        const Tensor2& x = in(0);
        Tensor2 dx(x.rows(), x.cols());
        const Index src_cols = x.cols();
        for (Index k = 0; k < n.rows * n.cols; ++k) {
          dx(k / src_cols, k % src_cols) = g(k / n.cols, k % n.cols);
        }
        add_into(slot(0), dx);
        break;
      }
    }
  }

  GradMap out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.kind != OpKind::leaf || !n.trainable) continue;
    if (id <= root && grads[id].size() != 0) {
      out.emplace(id, std::move(grads[id]));
    } else {
      out.emplace(id, Tensor2::Zero(n.value.rows(), n.value.cols()));
    }
  }
  return out;
}

Tensor2 finite_difference_gradient(Graph& graph, NodeId root, NodeId leaf, double h) {
  if (!(h > 0.0)) throw ContractError("finite difference step must be > 0");
  const Tensor2 base = graph.value(leaf);
  Tensor2 grad(base.rows(), base.cols());
  Tensor2 probe = base;
  for (Index c = 0; c < base.cols(); ++c) {
    for (Index r = 0; r < base.rows(); ++r) {
      probe(r, c) = base(r, c) + h;
      graph.set_leaf(leaf, probe);
      graph.forward();
      const double up = graph.scalar(root);
      probe(r, c) = base(r, c) - h;
      graph.set_leaf(leaf, probe);
      graph.forward();
      const double down = graph.scalar(root);
      probe(r, c) = base(r, c);
      grad(r, c) = (up - down) / (2.0 * h);
    }
  }
  graph.set_leaf(leaf, base);
  graph.forward();
  return grad;
}

double max_relative_error(const Tensor2& a, const Tensor2& b, double floor) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_relative_error: " + shape(a) + " vs " + shape(b));
  }
  double worst = 0.0;
  for (Index k = 0; k < a.size(); ++k) {
    const double x = a.data()[k];
    const double y = b.data()[k];
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

}  // namespace mads::diff
