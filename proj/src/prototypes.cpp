#include "gotham/prototypes.hpp"

#include <algorithm>
#include <fstream>

#include "text_util.hpp"

namespace gotham {

namespace {

std::shared_ptr<const SparseMatrix> averaging_matrix(const std::vector<std::vector<int>>& groups, std::size_t cols) {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t r = 0; r < groups.size(); ++r)
    for (int c : groups[r]) trip.emplace_back(r, c, 1.0 / static_cast<double>(groups[r].size()));
  auto m = std::make_shared<SparseMatrix>(groups.size(), cols);
  m->setFromTriplets(trip.begin(), trip.end());
  return m;
}

// A graph of n isolated nodes (self-loops only) holding `rows` as features.
GraphSnapshot self_loop_graph(Matrix rows) {
  const std::size_t n = rows.rows();
  return GraphSnapshot::build(n, {}, std::make_shared<const Matrix>(std::move(rows)));
}

const Vector& require_csd(const DatasetBundle& bundle, ClassId c, PrototypeMode mode) {
  if (!bundle.csd.has(c))
    throw ValidationError("prototype mode " + to_string(mode) + " needs a class descriptor for class " +
                          std::to_string(c));
  return bundle.csd.at(c);
}

}  // namespace

Prototype prototype_seen(const GnnParams& gnn, const GraphSnapshot& graph, std::span<const NodeId> extended_support,
                         ClassId class_id) {
  if (extended_support.empty())
    throw ValidationError("prototype_seen: empty support set for class " + std::to_string(class_id));
  const Matrix emb = gnn_forward(gnn, graph, extended_support);
  Prototype p;
  p.class_id = class_id;
  p.vector = emb.colwise().mean().transpose();
  p.kind = PrototypeKind::seen;
  p.support_size = extended_support.size();
  return p;
}

Prototype prototype_merged(const Prototype& seen, const Vector& encoded_csd) {
  if (seen.vector.size() != encoded_csd.size())
    throw ValidationError("prototype_merged: prototype has dimension " + std::to_string(seen.vector.size()) +
                          " but encoded descriptor has " + std::to_string(encoded_csd.size()));
  Prototype p = seen;
  p.vector = (seen.vector + encoded_csd) / 2.0;
  p.kind = PrototypeKind::merged;
  return p;
}

Prototype prototype_unseen(const GnnParams& gnn, const Vector& csd, ClassId class_id, const Matrix& projection) {
  if (csd.size() == 0) throw ValidationError("prototype_unseen: missing descriptor for class " + std::to_string(class_id));
  Matrix row = csd.transpose();
  if (projection.size() > 0) row = row * projection;
  const GraphSnapshot g = self_loop_graph(std::move(row));
  const NodeId only = 0;
  Prototype p;
  p.class_id = class_id;
  p.vector = gnn_forward(gnn, g, std::span<const NodeId>(&only, 1)).row(0).transpose();
  p.kind = PrototypeKind::unseen_semantic;
  p.support_size = 0;
  return p;
}

RowVector project_csd(const Model& model, const Vector& csd) {
  if (model.csd_projection.size() > 0) {
    if (csd.size() != model.csd_projection.rows())
      throw ValidationError("descriptor dimension " + std::to_string(csd.size()) + " does not match projection input " +
                            std::to_string(model.csd_projection.rows()));
    return csd.transpose() * model.csd_projection;
  }
  return csd.transpose();
}

PrototypeBatch record_prototypes(ad::Tape& tape, const BoundModel& bound, const Model& model,
                                 const DatasetBundle& bundle, const GraphSnapshot& graph, const Episode& episode,
                                 PrototypeMode mode, UnseenEncoder unseen_encoder) {
  PrototypeBatch batch;
  const bool semantic = mode != PrototypeMode::gfscil_plain;

  // Seen classes: one forward pass over the union of extended supports.
  std::vector<NodeId> all_nodes;
  for (const auto& [c, nodes] : episode.extended_support) {
    if (nodes.empty()) throw ValidationError("prototype: empty extended support for class " + std::to_string(c));
    all_nodes.insert(all_nodes.end(), nodes.begin(), nodes.end());
  }
  std::sort(all_nodes.begin(), all_nodes.end());
  all_nodes.erase(std::unique(all_nodes.begin(), all_nodes.end()), all_nodes.end());

  std::vector<std::vector<int>> groups;
  std::vector<int> membership;
  for (const auto& [c, nodes] : episode.extended_support) {
    batch.seen_classes.push_back(c);
    std::vector<int> rows;
    for (NodeId v : nodes) {
      const int r = static_cast<int>(std::lower_bound(all_nodes.begin(), all_nodes.end(), v) - all_nodes.begin());
      rows.push_back(r);
      membership.push_back(r);
      batch.owner.push_back(static_cast<int>(groups.size()));
    }
    groups.push_back(std::move(rows));
  }

  ad::Var merged;
  if (!all_nodes.empty()) {
    const ad::Var emb = gnn_forward(tape, bound.gnn, graph, all_nodes);
    batch.seen = ad::spmm(averaging_matrix(groups, all_nodes.size()), emb);
    batch.support_embeddings =
        ad::spmm(ad::selection_matrix(membership.size(), all_nodes.size(), membership), emb);
    merged = batch.seen;
    if (semantic) {
      Matrix csd(static_cast<Eigen::Index>(batch.seen_classes.size()), static_cast<Eigen::Index>(bundle.csd.dim()));
      for (std::size_t i = 0; i < batch.seen_classes.size(); ++i)
        csd.row(i) = require_csd(bundle, batch.seen_classes[i], mode).transpose();
      batch.encoded = mlp_forward(tape, bound.mlp, tape.constant(std::move(csd)));
      merged = ad::scale(ad::add(batch.seen, batch.encoded), 0.5);
    }
    for (std::size_t i = 0; i < batch.seen_classes.size(); ++i) {
      batch.classes.push_back(batch.seen_classes[i]);
      batch.kinds.push_back(semantic ? PrototypeKind::merged : PrototypeKind::seen);
      batch.support_sizes.push_back(groups[i].size());
    }
  }

  std::vector<ClassId> unseen;
  if (mode == PrototypeMode::gcl) unseen = bundle.schedule.unseen_classes_at(episode.session);
  if (!unseen.empty()) {
    ad::Var sem;
    if (unseen_encoder == UnseenEncoder::gnn) {
      Matrix rows(static_cast<Eigen::Index>(unseen.size()), static_cast<Eigen::Index>(graph.feature_dim()));
      for (std::size_t i = 0; i < unseen.size(); ++i) rows.row(i) = project_csd(model, require_csd(bundle, unseen[i], mode));
      const GraphSnapshot g = self_loop_graph(std::move(rows));
      sem = gnn_forward(tape, bound.gnn, g, g.nodes());
    } else {
      Matrix rows(static_cast<Eigen::Index>(unseen.size()), static_cast<Eigen::Index>(bundle.csd.dim()));
      for (std::size_t i = 0; i < unseen.size(); ++i) rows.row(i) = require_csd(bundle, unseen[i], mode).transpose();
      sem = mlp_forward(tape, bound.mlp, tape.constant(std::move(rows)));
    }
    merged = merged.valid() ? ad::vstack(merged, sem) : sem;
    for (ClassId c : unseen) {
      batch.classes.push_back(c);
      batch.kinds.push_back(PrototypeKind::unseen_semantic);
      batch.support_sizes.push_back(0);
    }
  }
  if (!merged.valid()) throw ValidationError("prototype: episode has no classes");
  batch.prototypes = merged;
  return batch;
}

PrototypeSet build_prototype_set(const Model& model, const DatasetBundle& bundle, const GraphSnapshot& graph,
                                 const Episode& episode, PrototypeMode mode, UnseenEncoder unseen_encoder) {
  ad::Tape tape;
  const auto bound = bind(tape, model, false);
  const auto batch = record_prototypes(tape, bound, model, bundle, graph, episode, mode, unseen_encoder);
  PrototypeSet out;
  const Matrix& values = batch.prototypes.value();
  for (std::size_t i = 0; i < batch.classes.size(); ++i) {
    Prototype p;
    p.class_id = batch.classes[i];
    p.vector = values.row(i).transpose();
    p.kind = batch.kinds[i];
    p.support_size = batch.support_sizes[i];
    out.emplace(p.class_id, std::move(p));
  }
  return out;
}

void write_prototypes_tsv(const PrototypeSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "class_id\tkind\tvector\n";
  for (const auto& [c, p] : set) {
    out << c << '\t' << to_string(p.kind) << '\t';
    for (Eigen::Index i = 0; i < p.vector.size(); ++i) {
      if (i) out << ' ';
      out << detail::format_double(p.vector[i]);
    }
    out << '\n';
  }
}

std::string to_string(PrototypeKind kind) {
  switch (kind) {
    case PrototypeKind::seen: return "seen";
    case PrototypeKind::merged: return "merged";
    case PrototypeKind::unseen_semantic: return "unseen_semantic";
  }
  return "?";
}

std::string to_string(PrototypeMode mode) {
  switch (mode) {
    case PrototypeMode::gfscil_plain: return "gfscil_plain";
    case PrototypeMode::gfscil_semantic: return "gfscil_semantic";
    case PrototypeMode::gcl: return "gcl";
  }
  return "?";
}

PrototypeMode prototype_mode_from_string(const std::string& s) {
  if (s == "gfscil_plain") return PrototypeMode::gfscil_plain;
  if (s == "gfscil_semantic") return PrototypeMode::gfscil_semantic;
  if (s == "gcl") return PrototypeMode::gcl;
  throw ValidationError("unknown mode '" + s + "' (expected gfscil_plain, gfscil_semantic or gcl)");
}

std::string to_string(UnseenEncoder e) { return e == UnseenEncoder::mlp ? "mlp" : "gnn"; }

UnseenEncoder unseen_encoder_from_string(const std::string& s) {
  if (s == "gnn") return UnseenEncoder::gnn;
  if (s == "mlp") return UnseenEncoder::mlp;
  throw ValidationError("unknown unseen_encoder '" + s + "' (expected gnn or mlp)");
}

}  // namespace gotham
