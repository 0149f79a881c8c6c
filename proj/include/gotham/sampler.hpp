#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "gotham/dataset.hpp"

namespace gotham {

struct WalkConfig {
  int walk_length = 3;
  int walks_per_seed = 5;
};

// seeds ∪ every node visited by `walks_per_seed` uniform random walks of
// `walk_length` hops from each seed. A step picks uniformly among neighbours
// other than the node itself; a node whose only neighbour is its self-loop
// stays put. Result is sorted and deduplicated.
std::vector<NodeId> extend_support(const GraphSnapshot& graph, std::span<const NodeId> seeds,
                                   int walk_length, int walks_per_seed, std::uint64_t rng_seed);

// Fixed for a whole run: which labelled nodes are training shots and which are
// held out for evaluation. Zero-shot classes get no shots.
struct LabelSplit {
  std::map<ClassId, std::vector<NodeId>> shots;
  std::map<ClassId, std::vector<NodeId>> held_out;
};

// Shots of a class are drawn among its labelled nodes visible at the session
// introducing it; base classes take base_k shots, streamed classes their
// session's k. held_out keeps the remaining labelled nodes, capped at
// eval_per_class per class when eval_per_class > 0.
LabelSplit make_label_split(const DatasetBundle& bundle, int base_k, std::uint64_t seed,
                            int eval_per_class = 0);

struct Episode {
  std::size_t session = 0;
  std::map<ClassId, std::vector<NodeId>> support;
  std::map<ClassId, std::vector<NodeId>> extended_support;
  std::vector<std::pair<NodeId, ClassId>> query;
};

enum class ClassPool { all_seen, novel_only };

struct EpisodeConfig {
  int n_way = 0;  // classes per episode; 0 takes the whole pool
  int query_per_class = 5;
  WalkConfig walk;
  ClassPool pool = ClassPool::all_seen;
};

// Classes eligible for episode support at session t.
std::vector<ClassId> episode_pool(const StreamSchedule& schedule, std::size_t t, ClassPool pool);

// `graph` must be graph_at(bundle, t). Support draws exactly k shots per sampled
// class; queries come from held-out labels and, in gcl mode, include every
// zero-shot class available at t.
Episode sample_episode(const DatasetBundle& bundle, const GraphSnapshot& graph, const LabelSplit& split,
                       std::size_t t, const EpisodeConfig& cfg, std::uint64_t rng_seed);

// Every seen class at t with all of its shots as support and no queries; used to
// build the prototypes a session is evaluated with.
Episode support_episode(const DatasetBundle& bundle, const GraphSnapshot& graph, const LabelSplit& split,
                        std::size_t t, const WalkConfig& walk, std::uint64_t rng_seed);

std::string to_string(ClassPool pool);
ClassPool class_pool_from_string(const std::string& s);

}  // namespace gotham
