#include "gotham/graph.hpp"

#include <algorithm>

namespace gotham {

GraphSnapshot GraphSnapshot::build(std::size_t id_space, std::span<const Edge> edges,
                                   std::shared_ptr<const Matrix> features,
                                   std::vector<bool> visible) {
  if (!features) throw ValidationError("graph: feature matrix is missing");
  if (static_cast<std::size_t>(features->rows()) != id_space) {
    throw ValidationError("graph: feature rows (" + std::to_string(features->rows()) +
                          ") != number of nodes (" + std::to_string(id_space) + ")");
  }
  if (!features->allFinite()) throw ValidationError("graph: non-finite feature value");
  if (visible.empty()) visible.assign(id_space, true);
  if (visible.size() != id_space) throw ValidationError("graph: visibility mask size mismatch");

  std::vector<std::vector<NodeId>> lists(id_space);
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= id_space ||
        static_cast<std::size_t>(v) >= id_space) {
      throw ValidationError("graph: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") references a node outside [0, " + std::to_string(id_space) + ")");
    }
    if (u == v || !visible[u] || !visible[v]) continue;
    lists[u].push_back(v);
    lists[v].push_back(u);
  }

  GraphSnapshot g;
  g.features_ = std::move(features);
  g.visible_ = std::move(visible);
  g.offsets_.assign(id_space + 1, 0);
  for (std::size_t v = 0; v < id_space; ++v) {
    auto& l = lists[v];
    if (g.visible_[v]) {
      l.push_back(static_cast<NodeId>(v));
      ++g.num_visible_;
    }
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    g.offsets_[v + 1] = g.offsets_[v] + l.size();
  }
  g.adjacency_.reserve(g.offsets_.back());
  for (auto& l : lists) g.adjacency_.insert(g.adjacency_.end(), l.begin(), l.end());
  return g;
}

bool GraphSnapshot::has_edge(NodeId u, NodeId v) const {
  if (!contains(u) || !contains(v)) return false;
  auto n = neighbors(u);
  return std::binary_search(n.begin(), n.end(), v);
}

std::vector<NodeId> GraphSnapshot::nodes() const {
  std::vector<NodeId> out;
  out.reserve(num_visible_);
  for (std::size_t v = 0; v < id_space(); ++v)
    if (visible_[v]) out.push_back(static_cast<NodeId>(v));
  return out;
}

std::vector<Edge> GraphSnapshot::edge_list() const {
  std::vector<Edge> out;
  for (std::size_t u = 0; u < id_space(); ++u)
    for (NodeId v : neighbors(static_cast<NodeId>(u)))
      if (static_cast<NodeId>(u) < v) out.emplace_back(static_cast<NodeId>(u), v);
  return out;
}

std::size_t GraphSnapshot::num_edges() const {
  return (adjacency_.size() - num_visible_) / 2;
}

}  // namespace gotham
