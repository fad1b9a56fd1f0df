#pragma once

#include "mads/models.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mads {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int n_seeds = 20;
  double step = 1e-6;
  double tolerance = 1e-5;
  // Denominator floor of the relative error. Central differences at h = 1e-6
  // on an O(1) loss carry ~1e-10 round-off, so smaller entries are judged
  // against this floor instead of their own magnitude.
  double floor = 1e-4;
  // Test hook: negates the sine backward rule, which every case must catch.
  bool flip_sine_gradient = false;
};

struct GradcheckCase {
  Variant variant = Variant::mads_base;
  std::uint64_t seed = 0;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Small random instance of every variant, two series with partial masks,
/// full training loss; each trainable leaf (parameters, latents, z_mod) is
/// compared entrywise against central differences.
GradcheckCase gradcheck_case(Variant variant, std::uint64_t seed, const GradcheckOptions& options);
GradcheckReport run_gradcheck(const GradcheckOptions& options);

std::string format_gradcheck(const GradcheckReport& report);

}  // namespace mads
