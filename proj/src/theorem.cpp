#include "gotham/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>

#include <json.hpp>

namespace gotham::theorem {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

double leaky(double u, double beta) { return u >= 0 ? u : beta * u; }

std::vector<NodeId> closed_neighborhood(const GraphSnapshot& g, int support) {
  std::vector<NodeId> out;
  for (NodeId s = 0; s < support; ++s) {
    auto nb = g.neighbors(s);
    out.insert(out.end(), nb.begin(), nb.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct Perturbed {
  Vector a;
  Matrix w;
};

Perturbed perturb(const WidthNNet& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Perturbed p{net.a_star, net.w_star};
  if (net.xi == 0.0) return p;
  for (Eigen::Index j = 0; j < p.a.size(); ++j) p.a[j] += net.xi * u(rng);
  for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w.data()[i] += net.xi * u(rng);
  return p;
}

DistortionEstimate summarize(const std::vector<double>& samples, const std::vector<double>& terms) {
  DistortionEstimate e;
  e.trials = samples.size();
  const double n = static_cast<double>(samples.size());
  e.delta_hat = pairwise_sum(samples) / n;
  std::vector<double> sq(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) sq[i] = (samples[i] - e.delta_hat) * (samples[i] - e.delta_hat);
  e.se = samples.size() > 1 ? std::sqrt(pairwise_sum(sq) / (n - 1.0) / n) : 0.0;
  e.rhs_term = pairwise_sum(terms) / n;
  return e;
}

double sample_of(const GrowthTrace& trace, const Perturbed& p, const WidthNNet& net, std::size_t trial) {
  const std::size_t T = trace.steps();
  const double before = net_output(p.a, p.w, net.b, net.beta, mean_feature(trace, T - 1));
  const double after = net_output(p.a, p.w, net.b, net.beta, mean_feature(trace, T));
  const double s = (after - before) * (after - before);
  if (!std::isfinite(s)) throw NumericError("empirical_distortion: non-finite sample at trial " + std::to_string(trial));
  return s;
}

void check_trials(std::size_t trials) {
  if (trials < 100) throw ValidationError("empirical_distortion: need at least 100 trials");
}

}  // namespace

void GrowthConfig::validate() const {
  if (n0 < 2) throw ValidationError("growth: n0 must be >= 2");
  if (support < 1 || support >= n0) throw ValidationError("growth: support must lie in [1, n0)");
  if (!(attach_prob > 0.0 && attach_prob <= 1.0)) throw ValidationError("growth: attach_prob must lie in (0, 1]");
  if (!(base_edge_prob >= 0.0 && base_edge_prob <= 1.0)) throw ValidationError("growth: base_edge_prob must lie in [0, 1]");
  if (steps < 1) throw ValidationError("growth: steps must be >= 1");
  if (new_per_step < 0) throw ValidationError("growth: new_per_step must be >= 0");
  if (dim < 1) throw ValidationError("growth: dim must be >= 1");
}

GrowthTrace simulate_growth(const GrowthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution base_edge(cfg.base_edge_prob), attach(cfg.attach_prob);

  const std::size_t total = static_cast<std::size_t>(cfg.n0) + static_cast<std::size_t>(cfg.steps) * cfg.new_per_step;
  auto features = std::make_shared<Matrix>(total, cfg.dim);
  for (std::size_t v = 0; v < total; ++v) {
    const double mean = static_cast<int>(v) < cfg.n0 ? cfg.feature_mean : 0.0;
    for (int k = 0; k < cfg.dim; ++k) (*features)(v, k) = mean + normal(rng);
  }

  std::vector<Edge> edges;
  for (int u = 0; u < cfg.n0; ++u)
    for (int v = u + 1; v < cfg.n0; ++v)
      if (base_edge(rng)) edges.emplace_back(u, v);

  GrowthTrace trace;
  trace.features = *features;
  std::vector<bool> visible(total, false);
  std::fill(visible.begin(), visible.begin() + cfg.n0, true);
  std::shared_ptr<const Matrix> shared = features;
  auto snapshot = [&] {
    trace.snapshots.push_back(GraphSnapshot::build(total, edges, shared, visible));
    trace.neighborhoods.push_back(closed_neighborhood(trace.snapshots.back(), cfg.support));
  };
  snapshot();
  NodeId next = cfg.n0;
  for (int s = 0; s < cfg.steps; ++s) {
    const NodeId existing = next;
    std::uniform_int_distribution<NodeId> target(cfg.support, existing - 1);
    std::uniform_int_distribution<NodeId> seed_pick(0, cfg.support - 1);
    for (int r = 0; r < cfg.new_per_step; ++r, ++next) {
      visible[next] = true;
      edges.emplace_back(target(rng), next);
      if (attach(rng)) edges.emplace_back(seed_pick(rng), next);
    }
    snapshot();
  }
  return trace;
}

GrowthTrace make_trace(Matrix features, std::vector<std::vector<NodeId>> neighborhoods) {
  if (neighborhoods.size() < 2) throw ValidationError("trace needs at least two neighbourhoods");
  for (auto& n : neighborhoods) {
    if (n.empty()) throw ValidationError("trace neighbourhoods must be nonempty");
    std::sort(n.begin(), n.end());
    for (NodeId v : n)
      if (v < 0 || v >= features.rows()) throw ValidationError("trace neighbourhood node out of range");
  }
  GrowthTrace t;
  t.features = std::move(features);
  t.neighborhoods = std::move(neighborhoods);
  return t;
}

WidthNNet make_net(int width, int dim, double xi, double beta, std::uint64_t seed) {
  if (width < 1) throw ValidationError("net: width must be >= 1");
  if (!(xi >= 0.0)) throw ValidationError("net: xi must be >= 0");
  if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("net: beta must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  WidthNNet n;
  n.width = width;
  n.xi = xi;
  n.beta = beta;
  n.a_star.resize(width);
  n.w_star.resize(width, dim);
  n.b.resize(width);
  for (int j = 0; j < width; ++j) n.a_star[j] = normal(rng);
  for (Eigen::Index i = 0; i < n.w_star.size(); ++i) n.w_star.data()[i] = normal(rng);
  for (int j = 0; j < width; ++j) n.b[j] = normal(rng);
  return n;
}

double net_output(const Vector& a, const Matrix& w, const Vector& b, double beta, const RowVector& m) {
  const Vector pre = w * m.transpose() + b;
  double out = 0;
  for (Eigen::Index j = 0; j < a.size(); ++j) out += a[j] * leaky(pre[j], beta);
  return out;
}

RowVector mean_feature(const GrowthTrace& trace, std::size_t t) {
  const auto& n = trace.neighborhoods.at(t);
  RowVector m = RowVector::Zero(trace.features.cols());
  for (NodeId k : n) m += trace.features.row(k);
  return m / static_cast<double>(n.size());
}

double rhs_term(const GrowthTrace& trace) {
  const std::size_t T = trace.steps();
  if (T == 0) throw ValidationError("rhs_term: trace has no growth step");
  const double diff = 1.0 / static_cast<double>(trace.degree(T)) - 1.0 / static_cast<double>(trace.degree(T - 1));
  double norms = 0;
  for (NodeId k : trace.neighborhoods[T - 1]) norms += trace.features.row(k).squaredNorm();
  return diff * diff * norms;
}

BoundValue bound_from_term(double term, const WidthNNet& net) {
  BoundValue v;
  v.unscaled = term;
  v.scaled = net.width * net.beta * net.beta * std::pow(net.xi, 4) / 9.0 * term;
  return v;
}

BoundValue bound_rhs(const GrowthTrace& trace, const WidthNNet& net) { return bound_from_term(rhs_term(trace), net); }

DistortionEstimate empirical_distortion(const GrowthConfig& growth, const WidthNNet& net, std::size_t trials,
                                        std::uint64_t seed, Randomize randomize) {
  check_trials(trials);
  const bool fresh_growth = randomize != Randomize::params;
  const bool fresh_params = randomize != Randomize::growth;
  std::mt19937_64 rng(seed);
  const GrowthTrace fixed_trace = fresh_growth ? GrowthTrace() : simulate_growth(growth);
  const Perturbed fixed_params = perturb(net, rng);

  std::vector<double> samples(trials), terms(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    GrowthTrace fresh;
    if (fresh_growth) {
      GrowthConfig g = growth;
      g.seed = mix(mix(growth.seed, seed), i);
      fresh = simulate_growth(g);
    }
    const GrowthTrace& trace = fresh_growth ? fresh : fixed_trace;
    const Perturbed p = fresh_params ? perturb(net, rng) : fixed_params;
    samples[i] = sample_of(trace, p, net, i);
    terms[i] = rhs_term(trace);
  }
  return summarize(samples, terms);
}

DistortionEstimate empirical_distortion(const GrowthTrace& trace, const WidthNNet& net, std::size_t trials,
                                        std::uint64_t seed) {
  check_trials(trials);
  std::mt19937_64 rng(seed);
  const double term = rhs_term(trace);
  std::vector<double> samples(trials), terms(trials, term);
  for (std::size_t i = 0; i < trials; ++i) samples[i] = sample_of(trace, perturb(net, rng), net, i);
  return summarize(samples, terms);
}

VerifyReport verify_bound(const VerifyConfig& cfg) {
  if (cfg.repetitions < 1) throw ValidationError("verify_bound: repetitions must be >= 1");
  const WidthNNet net = make_net(cfg.width, cfg.growth.dim, cfg.xi, cfg.beta, mix(cfg.seed, 0x6e6574));
  VerifyReport r;
  r.config = cfg;
  double se2 = 0;
  for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
    const DistortionEstimate e = empirical_distortion(cfg.growth, net, cfg.trials, mix(cfg.seed, rep + 1), cfg.randomize);
    const BoundValue b = bound_from_term(e.rhs_term, net);
    if (e.delta_hat + 2.0 * e.se < b.scaled) ++r.violations;
    r.delta_hat += e.delta_hat;
    se2 += e.se * e.se;
    r.rhs_scaled += b.scaled;
    r.rhs_unscaled += b.unscaled;
  }
  const double n = static_cast<double>(cfg.repetitions);
  r.delta_hat /= n;
  r.se = std::sqrt(se2) / n;
  r.rhs_scaled /= n;
  r.rhs_unscaled /= n;
  r.margin = r.delta_hat + 2.0 * r.se - r.rhs_scaled;
  r.pass = static_cast<double>(r.violations) <= 0.05 * n;
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman: need two equal-length samples");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

SweepReport verify_sweep(const VerifyConfig& base, const std::vector<int>& widths, const std::vector<double>& xis,
                         const std::vector<double>& betas) {
  SweepReport s;
  std::vector<double> w, d;
  for (int width : widths)
    for (double xi : xis)
      for (double beta : betas) {
        VerifyConfig c = base;
        c.width = width;
        c.xi = xi;
        c.beta = beta;
        s.runs.push_back(verify_bound(c));
        w.push_back(width);
        d.push_back(s.runs.back().delta_hat);
      }
  s.rank_correlation = s.runs.size() >= 2 ? spearman(w, d) : 0.0;
  s.pass = std::all_of(s.runs.begin(), s.runs.end(), [](const VerifyReport& r) { return r.pass; });
  if (widths.size() > 1) s.pass = s.pass && s.rank_correlation > 0;
  return s;
}

namespace {

nlohmann::ordered_json report_json(const VerifyReport& r) {
  const auto& c = r.config;
  nlohmann::ordered_json cfg = {{"width", c.width},
                                {"xi", c.xi},
                                {"beta", c.beta},
                                {"trials", c.trials},
                                {"repetitions", c.repetitions},
                                {"seed", c.seed},
                                {"randomize", to_string(c.randomize)},
                                {"n0", c.growth.n0},
                                {"base_edge_prob", c.growth.base_edge_prob},
                                {"steps", c.growth.steps},
                                {"new_per_step", c.growth.new_per_step},
                                {"attach_prob", c.growth.attach_prob},
                                {"dim", c.growth.dim},
                                {"support", c.growth.support},
                                {"feature_mean", c.growth.feature_mean},
                                {"growth_seed", c.growth.seed}};
  return {{"delta_hat", r.delta_hat}, {"se", r.se},           {"rhs_appendix", r.rhs_scaled},
          {"rhs_eq7", r.rhs_unscaled},     {"margin", r.margin},   {"violations", r.violations},
          {"pass", r.pass},           {"config", cfg}};
}

}  // namespace

std::string to_json(const VerifyReport& r) { return report_json(r).dump(2) + "\n"; }

std::string to_json(const SweepReport& s) {
  nlohmann::ordered_json j;
  j["pass"] = s.pass;
  j["rank_correlation"] = s.rank_correlation;
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : s.runs) j["runs"].push_back(report_json(r));
  return j.dump(2) + "\n";
}

std::string to_string(Randomize r) {
  switch (r) {
    case Randomize::params: return "params";
    case Randomize::growth: return "growth";
    case Randomize::both: return "both";
  }
  return "?";
}

Randomize randomize_from_string(const std::string& s) {
  if (s == "params") return Randomize::params;
  if (s == "growth") return Randomize::growth;
  if (s == "both") return Randomize::both;
  throw ValidationError("unknown randomize '" + s + "' (expected params, growth or both)");
}

}  // namespace gotham::theorem
