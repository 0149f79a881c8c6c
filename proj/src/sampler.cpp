#include "gotham/sampler.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace gotham {

std::vector<NodeId> extend_support(const GraphSnapshot& graph, std::span<const NodeId> seeds,
                                   int walk_length, int walks_per_seed, std::uint64_t rng_seed) {
  if (seeds.empty()) throw ValidationError("extend_support: seed set is empty");
  if (walk_length < 0 || walks_per_seed < 0)
    throw ValidationError("extend_support: walk_length and walks_per_seed must be >= 0");
  for (NodeId s : seeds)
    if (!graph.contains(s)) throw ValidationError("extend_support: seed node " + std::to_string(s) + " is not in the graph");

  std::vector<NodeId> ordered(seeds.begin(), seeds.end());
  std::sort(ordered.begin(), ordered.end());
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

  std::mt19937_64 rng(rng_seed);
  std::vector<NodeId> visited = ordered;
  for (NodeId s : ordered) {
    for (int w = 0; w < walks_per_seed; ++w) {
      NodeId cur = s;
      for (int step = 0; step < walk_length; ++step) {
        auto nbrs = graph.neighbors(cur);
        if (nbrs.size() <= 1) break;  // only the self-loop
        std::uniform_int_distribution<std::size_t> pick(0, nbrs.size() - 2);
        std::size_t i = pick(rng);
        // Skip over the self-loop entry in the sorted list.
        auto self = std::lower_bound(nbrs.begin(), nbrs.end(), cur) - nbrs.begin();
        if (static_cast<std::ptrdiff_t>(i) >= self) ++i;
        cur = nbrs[i];
        visited.push_back(cur);
      }
    }
  }
  std::sort(visited.begin(), visited.end());
  visited.erase(std::unique(visited.begin(), visited.end()), visited.end());
  return visited;
}

namespace {

template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t count, std::mt19937_64& rng) {
  // Partial Fisher-Yates; keeps the draw order so results are reproducible.
  for (std::size_t i = 0; i < count && i < pool.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(std::min(count, pool.size()));
  return pool;
}

}  // namespace

LabelSplit make_label_split(const DatasetBundle& b, int base_k, std::uint64_t seed, int eval_per_class) {
  if (base_k < 1) throw ValidationError("label split: base k must be >= 1");
  const auto& sched = b.schedule;
  LabelSplit split;
  std::mt19937_64 rng(seed);
  for (ClassId c : sched.classes_at(sched.num_sessions())) {
    auto labelled = b.labels.nodes_of(c);
    std::size_t session = *sched.session_of(c);
    std::vector<NodeId> shots;
    if (!sched.is_zero_shot(c)) {
      int k = session == 0 ? base_k : sched.sessions[session - 1].k;
      auto vis = visible_at(b, session);
      std::vector<NodeId> candidates;
      for (NodeId v : labelled)
        if (vis[v]) candidates.push_back(v);
      if (candidates.size() < static_cast<std::size_t>(k))
        throw ValidationError("label split: class " + std::to_string(c) + " has " +
                              std::to_string(candidates.size()) + " labelled visible node(s), needs k = " +
                              std::to_string(k));
      shots = sample_without_replacement(candidates, k, rng);
      std::sort(shots.begin(), shots.end());
    }
    std::vector<NodeId> rest;
    for (NodeId v : labelled)
      if (!std::binary_search(shots.begin(), shots.end(), v)) rest.push_back(v);
    if (eval_per_class > 0 && rest.size() > static_cast<std::size_t>(eval_per_class)) {
      rest = sample_without_replacement(rest, eval_per_class, rng);
      std::sort(rest.begin(), rest.end());
    }
    split.shots[c] = std::move(shots);
    split.held_out[c] = std::move(rest);
  }
  return split;
}

std::vector<ClassId> episode_pool(const StreamSchedule& s, std::size_t t, ClassPool pool) {
  if (t == 0 || pool == ClassPool::all_seen) return s.seen_classes_at(t);
  return s.novel_seen_at(t);
}

Episode sample_episode(const DatasetBundle& b, const GraphSnapshot& graph, const LabelSplit& split,
                       std::size_t t, const EpisodeConfig& cfg, std::uint64_t rng_seed) {
  const auto& sched = b.schedule;
  if (t > sched.num_sessions()) throw ValidationError("sample_episode: session index out of range");
  if (cfg.query_per_class < 0) throw ValidationError("sample_episode: query_per_class must be >= 0");
  auto pool = episode_pool(sched, t, cfg.pool);
  if (pool.empty()) throw ValidationError("sample_episode: no seen classes available at session " + std::to_string(t));
  if (cfg.n_way < 0 || static_cast<std::size_t>(cfg.n_way) > pool.size())
    throw ValidationError("sample_episode: n_way = " + std::to_string(cfg.n_way) + " exceeds the " +
                          std::to_string(pool.size()) + " classes available at session " + std::to_string(t));

  std::mt19937_64 rng(rng_seed);
  std::vector<ClassId> classes = cfg.n_way == 0 ? pool : sample_without_replacement(pool, cfg.n_way, rng);
  std::sort(classes.begin(), classes.end());

  auto visible_held_out = [&](ClassId c) {
    std::vector<NodeId> out;
    auto it = split.held_out.find(c);
    if (it != split.held_out.end())
      for (NodeId v : it->second)
        if (graph.contains(v)) out.push_back(v);
    return out;
  };

  Episode ep;
  ep.session = t;
  for (ClassId c : classes) {
    if (sched.is_zero_shot(c)) throw ValidationError("sample_episode: zero-shot class " + std::to_string(c) + " in support pool");
    auto it = split.shots.find(c);
    const std::size_t session = *sched.session_of(c);
    const std::size_t k = session == 0 ? (it == split.shots.end() ? 0 : it->second.size())
                                       : static_cast<std::size_t>(sched.sessions[session - 1].k);
    auto held = visible_held_out(c);
    std::size_t shots = it == split.shots.end() ? 0 : it->second.size();
    if (shots < k || shots == 0 || held.size() < static_cast<std::size_t>(cfg.query_per_class))
      throw ValidationError("sample_episode: class " + std::to_string(c) + " has " + std::to_string(shots) +
                            " shot(s) and " + std::to_string(held.size()) + " held-out node(s); needs k + query_per_class = " +
                            std::to_string(k) + " + " + std::to_string(cfg.query_per_class));
    auto support = sample_without_replacement(it->second, k, rng);
    std::sort(support.begin(), support.end());
    for (NodeId v : support)
      if (!graph.contains(v)) throw ValidationError("sample_episode: support node " + std::to_string(v) + " not visible at session " + std::to_string(t));
    ep.extended_support[c] = extend_support(graph, support, cfg.walk.walk_length, cfg.walk.walks_per_seed, rng());
    ep.support[c] = std::move(support);
    for (NodeId v : sample_without_replacement(held, cfg.query_per_class, rng)) ep.query.emplace_back(v, c);
  }
  if (sched.mode == StreamMode::gcl) {
    for (ClassId c : sched.unseen_classes_at(t)) {
      auto held = visible_held_out(c);
      if (held.size() < static_cast<std::size_t>(cfg.query_per_class))
        throw ValidationError("sample_episode: zero-shot class " + std::to_string(c) + " has only " +
                              std::to_string(held.size()) + " visible labelled node(s)");
      for (NodeId v : sample_without_replacement(held, cfg.query_per_class, rng)) ep.query.emplace_back(v, c);
    }
  }
  return ep;
}

Episode support_episode(const DatasetBundle& b, const GraphSnapshot& graph, const LabelSplit& split, std::size_t t,
                        const WalkConfig& walk, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  Episode ep;
  ep.session = t;
  for (ClassId c : b.schedule.seen_classes_at(t)) {
    auto it = split.shots.find(c);
    if (it == split.shots.end() || it->second.empty())
      throw ValidationError("support set: class " + std::to_string(c) + " has no shots");
    for (NodeId v : it->second)
      if (!graph.contains(v))
        throw ValidationError("support set: node " + std::to_string(v) + " not visible at session " + std::to_string(t));
    ep.extended_support[c] = extend_support(graph, it->second, walk.walk_length, walk.walks_per_seed, rng());
    ep.support[c] = it->second;
  }
  return ep;
}

std::string to_string(ClassPool pool) { return pool == ClassPool::novel_only ? "novel_only" : "all_seen"; }

ClassPool class_pool_from_string(const std::string& s) {
  if (s == "all_seen") return ClassPool::all_seen;
  if (s == "novel_only") return ClassPool::novel_only;
  throw ValidationError("unknown episode_class_pool '" + s + "' (expected all_seen or novel_only)");
}

}  // namespace gotham
