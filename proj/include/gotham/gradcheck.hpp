#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gotham/model.hpp"

namespace gotham {

// Records a scalar loss for the given bound model. Must be deterministic.
using LossBuilder = std::function<ad::Var(ad::Tape&, const BoundModel&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  std::size_t checked = 0;
  std::size_t kinks_skipped = 0;
  bool passed = true;
};

// Compares reverse-mode gradients against central differences
// (f(x+h) - f(x-h)) / 2h on a random subsample of at least 50 coordinates
// (all of them when the model is smaller). Relative error uses the denominator
// max(|fd|, |analytic|, 1e-4). A coordinate whose mismatch is explained by a
// second difference of matching size, i.e. a hinge or ReLU kink inside
// [x-h, x+h], is counted in kinks_skipped instead of failing.
// `analytic` overrides the tape gradient (used for negative controls).
GradCheckReport finite_diff_check(const Model& model, const LossBuilder& loss, double h, double tol,
                                  std::size_t coordinates = 64, std::uint64_t seed = 0,
                                  const std::optional<GradientSet>& analytic = std::nullopt);

struct GradcheckSuiteConfig {
  std::uint64_t seed = 0;
  double h = 1e-4;
  double tol = 1e-4;
  std::size_t coordinates = 64;
  // Negative control: scales every analytic gradient by 1.01 before comparing.
  bool force_bug = false;
};

struct LossCheck {
  std::string loss;
  GradCheckReport report;
};

// Checks every loss (cluster in both variants, seg, sem, emb, align and the two
// totals) on a 12-node, 3-class synthetic stream with one zero-shot class, a
// small GNN/MLP and a teacher drawn independently of the student.
std::vector<LossCheck> run_gradcheck_suite(const GradcheckSuiteConfig& cfg);

}  // namespace gotham
