#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "gotham/common.hpp"

namespace gotham {

using Edge = std::pair<NodeId, NodeId>;

// Immutable undirected graph in CSR form. Node ids live in a fixed id space
// shared by every snapshot of a stream; only visible nodes carry adjacency.
// Every visible node has a self-loop, so degree(v) >= 1.
class GraphSnapshot {
 public:
  GraphSnapshot() = default;

  // Edges may be given in either or both directions; duplicates and input
  // self-loops are dropped and each visible node receives one self-loop.
  // Edges touching an invisible node are ignored. An empty `visible` mask
  // means every node is visible.
  static GraphSnapshot build(std::size_t id_space, std::span<const Edge> edges,
                             std::shared_ptr<const Matrix> features,
                             std::vector<bool> visible = {});

  std::size_t id_space() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_nodes() const { return num_visible_; }
  bool contains(NodeId v) const {
    return v >= 0 && static_cast<std::size_t>(v) < id_space() && visible_[v];
  }

  // Sorted neighbor list of v, self-loop included. Empty for invisible nodes.
  std::span<const NodeId> neighbors(NodeId v) const {
    return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
  }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }
  bool has_edge(NodeId u, NodeId v) const;

  const Matrix& features() const { return *features_; }
  std::shared_ptr<const Matrix> shared_features() const { return features_; }
  std::size_t feature_dim() const { return features_ ? features_->cols() : 0; }

  // Visible node ids in increasing order.
  std::vector<NodeId> nodes() const;
  // Undirected edges (u < v), self-loops excluded, sorted.
  std::vector<Edge> edge_list() const;
  std::size_t num_edges() const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> adjacency_;
  std::vector<bool> visible_;
  std::size_t num_visible_ = 0;
  std::shared_ptr<const Matrix> features_;
};

}  // namespace gotham
