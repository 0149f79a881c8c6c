#include "gotham/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gotham {

namespace {

double evaluate(const Model& model, const LossBuilder& loss) {
  ad::Tape tape;
  auto bound = bind(tape, model, false);
  return loss(tape, bound).scalar();
}

}  // namespace

GradCheckReport finite_diff_check(const Model& model, const LossBuilder& loss, double h, double tol,
                                  std::size_t coordinates, std::uint64_t seed,
                                  const std::optional<GradientSet>& analytic) {
  GradientSet grads;
  if (analytic) {
    grads = *analytic;
  } else {
    ad::Tape tape;
    auto bound = bind(tape, model, true);
    grads = compute_gradients(tape, bound, model, loss(tape, bound));
  }

  const auto names = model.parameter_names();
  const auto params = model.parameters();
  std::vector<std::size_t> offsets{0};
  for (const Matrix* p : params) offsets.push_back(offsets.back() + p->size());
  const std::size_t total = offsets.back();

  std::vector<std::size_t> flat(total);
  std::iota(flat.begin(), flat.end(), 0);
  const std::size_t want = std::min(total, std::max<std::size_t>(coordinates, 50));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < want; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(flat[i], flat[pick(rng)]);
  }
  flat.resize(want);
  std::sort(flat.begin(), flat.end());

  const double f0 = evaluate(model, loss);
  GradCheckReport report;
  Model probe = model;
  auto probe_params = probe.parameters();
  for (std::size_t c : flat) {
    const std::size_t t = std::upper_bound(offsets.begin(), offsets.end(), c) - offsets.begin() - 1;
    const Eigen::Index idx = static_cast<Eigen::Index>(c - offsets[t]);
    double& x = probe_params[t]->data()[idx];
    const double x0 = x;
    x = x0 + h;
    const double fp = evaluate(probe, loss);
    x = x0 - h;
    const double fm = evaluate(probe, loss);
    x = x0;

    const double fd = (fp - fm) / (2.0 * h);
    const double g = grads.tensors[t].data()[idx];
    const double mismatch = std::abs(fd - g);
    const double denom = std::max({std::abs(fd), std::abs(g), 1e-4});
    const double rel = mismatch / denom;
    ++report.checked;
    if (rel > tol) {
      const double second = std::abs(fp - 2.0 * f0 + fm) / (2.0 * h);
      if (second >= 0.5 * mismatch) {
        ++report.kinks_skipped;
        continue;
      }
    }
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_parameter = names[t];
      report.worst_index = idx;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace gotham
