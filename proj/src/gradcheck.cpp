#include "mads/gradcheck.hpp"

#include "mads/rng.hpp"
#include "mads/training.hpp"

#include <algorithm>
#include <cstdio>

namespace mads {

GradcheckCase gradcheck_case(Variant variant, std::uint64_t seed, const GradcheckOptions& options) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(variant)}));
  ModelSpec spec = ModelSpec::defaults(variant, 2, 3);
  spec.siren.hidden_dim = 4;
  spec.hypernet.hidden_dim = 5;
  spec.sync();
  ModelParams params = init_params(spec, rng.next());
  // Move away from the structured init (zero biases, tiny hypernet head).
  for (Tensor2* t : params.tensors()) {
    for (Index k = 0; k < t->size(); ++k) t->data()[k] += 0.1 * rng.normal();
  }

  diff::Graph g(diff::GraphOptions{false, options.flip_sine_gradient});
  const ParamLeaves leaves = add_param_leaves(g, params, true);
  Tensor2 z(spec.latent_dim, 2);
  for (Index k = 0; k < z.size(); ++k) z.data()[k] = 0.5 * rng.normal();
  const NodeId z_leaf = g.leaf(z, true);
  std::optional<NodeId> zm;
  if (uses_dataset_latent(variant)) {
    Tensor2 m(spec.latent_dim, 1);
    for (Index k = 0; k < m.size(); ++k) m(k, 0) = 0.5 * rng.normal();
    zm = g.leaf(m, true);
  }

  std::vector<Tensor2> times, truths;
  std::vector<diff::Mask> masks;
  for (Index len : {Index{4}, Index{6}}) {
    std::vector<double> ts;
    for (Index n = 0; n < len; ++n) ts.push_back(rng.uniform(-1.0, 1.0));
    std::sort(ts.begin(), ts.end());
    Tensor2 t(1, len), y(spec.features, len);
    diff::Mask m(spec.features, len);
    for (Index n = 0; n < len; ++n) t(0, n) = ts[static_cast<std::size_t>(n)];
    for (Index k = 0; k < y.size(); ++k) {
      y.data()[k] = rng.normal();
      m.data()[k] = rng.uniform() < 0.7 ? 1 : 0;
    }
    m(0, 0) = 1;
    times.push_back(t);
    truths.push_back(y);
    masks.push_back(m);
  }

  const ForwardNodes fw = build_forward(g, spec, leaves, z_leaf, zm, times);
  std::vector<NodeId> weights;
  if (fw.predicted_weights) {
    weights.push_back(*fw.predicted_weights);
  } else {
    weights = leaves.ids();
  }
  const LossNodes loss = build_loss(g, fw.outputs, truths, masks, z_leaf, weights, 0.1, 0.05);

  const diff::GradMap grads = g.backward(loss.total);
  GradcheckCase out;
  out.variant = variant;
  out.seed = seed;
  for (const auto& [leaf, grad] : grads) {
    const Tensor2 fd = diff::finite_difference_gradient(g, loss.total, leaf, options.step);
    out.max_rel_error =
        std::max(out.max_rel_error, diff::max_relative_error(grad, fd, options.floor));
    out.entries += static_cast<std::size_t>(grad.size());
  }
  out.passed = out.max_rel_error < options.tolerance;
  return out;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  GradcheckReport report;
  report.passed = true;
  for (int s = 0; s < options.n_seeds; ++s) {
    const std::uint64_t case_seed = derive_seed(options.seed, {static_cast<std::uint64_t>(s)});
    for (Variant v : kAllVariants) {
      GradcheckCase c = gradcheck_case(v, case_seed, options);
      report.max_rel_error = std::max(report.max_rel_error, c.max_rel_error);
      report.passed = report.passed && c.passed;
      report.cases.push_back(c);
    }
  }
  return report;
}

std::string format_gradcheck(const GradcheckReport& report) {
  std::string out;
  char line[160];
  for (const auto& c : report.cases) {
    std::snprintf(line, sizeof line, "%-10s seed=%020llu entries=%4zu max_rel_err=%.3e %s\n",
                  std::string(to_string(c.variant)).c_str(),
                  static_cast<unsigned long long>(c.seed), c.entries, c.max_rel_error,
                  c.passed ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof line, "%zu cases, max relative error %.3e: %s\n", report.cases.size(),
                report.max_rel_error, report.passed ? "PASS" : "FAIL");
  out += line;
  return out;
}

}  // namespace mads
