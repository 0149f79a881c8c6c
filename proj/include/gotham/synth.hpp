#pragma once

#include <cstdint>

#include "gotham/dataset.hpp"

namespace gotham {

// Class-separable stochastic block model with Gaussian class-mean features.
struct SynthConfig {
  std::uint64_t seed = 1;
  int blocks = 3;
  int nodes_per_block = 30;
  double p_in = 0.3;
  double p_out = 0.02;
  int dim = 16;
  double sigma = 1.0;       // per-coordinate feature noise
  double separation = 4.0;  // minimum pairwise distance between class means, in units of sigma
};

// Node v belongs to block v / nodes_per_block; every node is labelled with its
// block, and each class descriptor is the class feature mean. The schedule puts
// every class in base_classes; use apply_split to stream some of them.
DatasetBundle synth_generate(const SynthConfig& cfg);

// Class means used by synth_generate (blocks x dim).
Matrix synth_class_means(const SynthConfig& cfg);

struct SplitConfig {
  int base_classes = 1;
  int few_shot_per_session = 1;
  int zero_shot_per_session = 0;
  int k = 5;
  // Nodes of a streamed class become visible at the session introducing it.
  bool arrivals_by_class = true;
  StreamMode mode = StreamMode::gfscil;
};

// Rewrites the schedule: classes are taken in increasing id order, the first
// base_classes form the base set and each session takes the next
// few_shot_per_session few-shot classes then zero_shot_per_session zero-shot ones.
void apply_split(DatasetBundle& bundle, const SplitConfig& split);

}  // namespace gotham
