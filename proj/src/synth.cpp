#include "gotham/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace gotham {

namespace {

void check(const SynthConfig& c) {
  if (c.blocks < 1 || c.nodes_per_block < 1) throw ValidationError("synth: blocks and nodes_per_block must be >= 1");
  if (c.dim < 1) throw ValidationError("synth: feature dimension must be >= 1");
  if (!(c.p_out >= 0.0 && c.p_out < c.p_in && c.p_in <= 1.0))
    throw ValidationError("synth: require 0 <= p_out < p_in <= 1");
  if (!(c.sigma >= 0.0) || !(c.separation >= 0.0)) throw ValidationError("synth: sigma and separation must be >= 0");
}

}  // namespace

Matrix synth_class_means(const SynthConfig& cfg) {
  check(cfg);
  const double target = cfg.separation * (cfg.sigma > 0 ? cfg.sigma : 1.0);
  Matrix means = Matrix::Zero(cfg.blocks, cfg.dim);
  if (cfg.blocks == 1) return means;
  if (cfg.dim >= cfg.blocks) {
    for (int c = 0; c < cfg.blocks; ++c) means(c, c) = target / std::sqrt(2.0);
    return means;
  }
  // Fewer dimensions than classes: random directions rescaled to the target spacing.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int c = 0; c < cfg.blocks; ++c)
    for (int j = 0; j < cfg.dim; ++j) means(c, j) = normal(rng);
  double min_dist = std::numeric_limits<double>::infinity();
  for (int a = 0; a < cfg.blocks; ++a)
    for (int b = a + 1; b < cfg.blocks; ++b) min_dist = std::min(min_dist, (means.row(a) - means.row(b)).norm());
  if (min_dist > 0) means *= target / min_dist;
  return means;
}

DatasetBundle synth_generate(const SynthConfig& cfg) {
  check(cfg);
  const std::size_t n = static_cast<std::size_t>(cfg.blocks) * cfg.nodes_per_block;
  Matrix means = synth_class_means(cfg);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  DatasetBundle b;
  b.num_nodes = n;
  auto block = [&](std::size_t v) { return static_cast<ClassId>(v / cfg.nodes_per_block); };

  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) {
      double p = block(u) == block(v) ? cfg.p_in : cfg.p_out;
      if (unit(rng) < p) b.edges.emplace_back(u, v);
    }

  Matrix x(n, cfg.dim);
  for (std::size_t v = 0; v < n; ++v)
    for (int j = 0; j < cfg.dim; ++j) x(v, j) = means(block(v), j) + cfg.sigma * normal(rng);
  b.features = std::make_shared<const Matrix>(std::move(x));

  for (std::size_t v = 0; v < n; ++v) b.labels.entries.emplace(v, block(v));
  for (int c = 0; c < cfg.blocks; ++c) b.csd.vectors.emplace(c, means.row(c).transpose());
  for (int c = 0; c < cfg.blocks; ++c) b.schedule.base_classes.push_back(c);
  b.schedule.mode = StreamMode::gfscil;
  validate_bundle(b);
  return b;
}

void apply_split(DatasetBundle& b, const SplitConfig& split) {
  auto classes = b.labels.classes();
  for (const auto& [c, v] : b.csd.vectors)
    if (std::find(classes.begin(), classes.end(), c) == classes.end()) classes.push_back(c);
  std::sort(classes.begin(), classes.end());
  if (split.base_classes < 1 || static_cast<std::size_t>(split.base_classes) > classes.size())
    throw ValidationError("split: base_classes must be in [1, " + std::to_string(classes.size()) + "]");
  if (split.few_shot_per_session < 0 || split.zero_shot_per_session < 0 ||
      split.few_shot_per_session + split.zero_shot_per_session == 0)
    throw ValidationError("split: each session must introduce at least one class");

  StreamSchedule s;
  s.mode = split.mode;
  std::size_t next = 0;
  for (; next < static_cast<std::size_t>(split.base_classes); ++next) s.base_classes.push_back(classes[next]);
  while (next < classes.size()) {
    SessionSpec spec;
    spec.k = split.k;
    for (int i = 0; i < split.few_shot_per_session && next < classes.size(); ++i)
      spec.few_shot.push_back(classes[next++]);
    for (int i = 0; i < split.zero_shot_per_session && next < classes.size(); ++i)
      spec.zero_shot.push_back(classes[next++]);
    if (split.arrivals_by_class) {
      for (auto [v, c] : b.labels.entries) {
        bool introduced = std::find(spec.few_shot.begin(), spec.few_shot.end(), c) != spec.few_shot.end() ||
                          std::find(spec.zero_shot.begin(), spec.zero_shot.end(), c) != spec.zero_shot.end();
        if (introduced) spec.arrivals.push_back(v);
      }
    }
    s.sessions.push_back(std::move(spec));
  }
  b.schedule = std::move(s);
  validate_bundle(b);
}

}  // namespace gotham
