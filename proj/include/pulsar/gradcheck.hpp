#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pulsar/network.hpp"
#include "pulsar/tape.hpp"

namespace pulsar {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  std::uint64_t seed = 7;
  int rounds = 10;              // independent random draws per case
  double fd_epsilon = 1e-5;     // central-difference step
  double tolerance = 1e-4;      // max relative error
  int sampled_coords = 100;     // coordinate sample size for composite cases
  std::string corrupt = "";     // test hook: perturb this case's analytic gradient
};

// Central finite differences against the recorded adjoints, for every
// differentiable primitive plus both block modes and the full network.
// The oracle side uses forward evaluations only.
std::vector<GradCheckResult> run_gradient_checks(const GradCheckOptions& options);

// relative error with a unit floor, so near-zero gradients compare absolutely
inline double gradcheck_rel_err(double analytic, double numeric) {
  const double scale = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / scale;
}

}  // namespace pulsar
