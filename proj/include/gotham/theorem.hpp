#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gotham/graph.hpp"

namespace gotham::theorem {

// Growing graph around a tracked super-node. The super-node stands for a
// prototype: its neighbourhood N_t is the union of the closed neighbourhoods
// of `support` seed nodes (ids 0..support-1), and d_t = |N_t|.
struct GrowthConfig {
  std::uint64_t seed = 0;
  int n0 = 20;                  // base nodes
  double base_edge_prob = 0.25;  // Erdos-Renyi density of the base graph
  int steps = 1;
  int new_per_step = 4;
  double attach_prob = 0.5;  // chance that a new node also links to a seed node
  int dim = 8;
  int support = 1;
  // Base features are N(feature_mean * 1, I); arriving nodes get N(0, I).
  double feature_mean = 1.0;

  void validate() const;
};

struct GrowthTrace {
  Matrix features;                                // rows for every node ever created
  std::vector<GraphSnapshot> snapshots;           // G^0..G^steps (empty for hand-built traces)
  std::vector<std::vector<NodeId>> neighborhoods;  // N_t, sorted

  std::size_t steps() const { return neighborhoods.empty() ? 0 : neighborhoods.size() - 1; }
  std::size_t degree(std::size_t t) const { return neighborhoods.at(t).size(); }
};

// Every new node links to one uniformly chosen non-seed node already present
// and, with probability attach_prob, to a uniformly chosen seed. Existing
// edges are never removed.
GrowthTrace simulate_growth(const GrowthConfig& cfg);

// Hand-built trace from explicit neighbourhoods over a feature matrix.
GrowthTrace make_trace(Matrix features, std::vector<std::vector<NodeId>> neighborhoods);

// f(i; theta) = sum_j a_j sigma(m . W_j + b_j), m the mean feature over N_t,
// sigma leaky ReLU with slope beta. a and W are perturbed uniformly on
// [theta* - xi, theta* + xi]; b stays at its optimum.
struct WidthNNet {
  int width = 1;
  double xi = 0.1;
  double beta = 0.01;
  Vector a_star;  // width
  Matrix w_star;  // width x dim
  Vector b;       // width
};

// theta* entries drawn from N(0, 1).
WidthNNet make_net(int width, int dim, double xi, double beta, std::uint64_t seed);

double net_output(const Vector& a, const Matrix& w, const Vector& b, double beta, const RowVector& mean_feature);
RowVector mean_feature(const GrowthTrace& trace, std::size_t t);

enum class Randomize { params, growth, both };

struct DistortionEstimate {
  double delta_hat = 0;
  double se = 0;
  double rhs_term = 0;  // mean of (1/d_{t+1} - 1/d_t)^2 sum_{k in N_t} ||x_k||^2 over the same trials
  std::size_t trials = 0;
};

// Monte-Carlo estimate of E[(f_{T}(i) - f_{T-1}(i))^2] over the last growth
// step. Growth randomness re-simulates the trace from a per-trial seed;
// parameter randomness draws a fresh perturbation per trial (otherwise one
// perturbation is drawn and reused). Throws NumericError on a non-finite sample.
DistortionEstimate empirical_distortion(const GrowthConfig& growth, const WidthNNet& net, std::size_t trials,
                                        std::uint64_t seed, Randomize randomize = Randomize::both);

// Same estimate over one fixed trace with parameter randomness only.
DistortionEstimate empirical_distortion(const GrowthTrace& trace, const WidthNNet& net, std::size_t trials,
                                        std::uint64_t seed);

struct BoundValue {
  double scaled = 0;  // (N beta^2 xi^4 / 9) * term
  double unscaled = 0;  // term alone
};

// (1/d_{T} - 1/d_{T-1})^2 sum_{k in N_{T-1}} ||x_k||^2 for the last step of a trace.
double rhs_term(const GrowthTrace& trace);
BoundValue bound_rhs(const GrowthTrace& trace, const WidthNNet& net);
BoundValue bound_from_term(double term, const WidthNNet& net);

struct VerifyConfig {
  GrowthConfig growth;
  int width = 1;
  double xi = 0.1;
  double beta = 0.01;
  std::size_t trials = 1000;
  std::size_t repetitions = 20;
  std::uint64_t seed = 0;
  Randomize randomize = Randomize::both;
};

struct VerifyReport {
  VerifyConfig config;
  double delta_hat = 0;  // pooled over repetitions
  double se = 0;
  double rhs_scaled = 0;
  double rhs_unscaled = 0;
  double margin = 0;  // delta_hat + 2 se - rhs_scaled
  std::size_t violations = 0;
  bool pass = false;
};

// Each repetition checks delta_hat + 2 se >= scaled RHS; passes when at most
// 5% of repetitions violate it.
VerifyReport verify_bound(const VerifyConfig& cfg);

struct SweepReport {
  std::vector<VerifyReport> runs;
  double rank_correlation = 0;  // Spearman between width and delta_hat
  bool pass = false;            // every run passes and rank_correlation > 0
};

// Width x xi x beta grid sharing every other setting with `base`.
SweepReport verify_sweep(const VerifyConfig& base, const std::vector<int>& widths, const std::vector<double>& xis,
                         const std::vector<double>& betas);

double spearman(const std::vector<double>& x, const std::vector<double>& y);

std::string to_json(const VerifyReport& r);
std::string to_json(const SweepReport& r);

std::string to_string(Randomize r);
Randomize randomize_from_string(const std::string& s);

}  // namespace gotham::theorem
