#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "gotham/model.hpp"
#include "gotham/sampler.hpp"

namespace gotham {

enum class PrototypeKind { seen, merged, unseen_semantic };

// gfscil_plain: feature prototypes only. gfscil_semantic: merged prototypes.
// gcl: merged prototypes for seen classes, semantic ones for zero-shot classes.
enum class PrototypeMode { gfscil_plain, gfscil_semantic, gcl };

// Which network turns a zero-shot descriptor into a prototype.
enum class UnseenEncoder { gnn, mlp };

struct Prototype {
  ClassId class_id = 0;
  Vector vector;
  PrototypeKind kind = PrototypeKind::seen;
  std::size_t support_size = 0;
};

using PrototypeSet = std::map<ClassId, Prototype>;

// Mean GNN embedding over the extended support set.
Prototype prototype_seen(const GnnParams& gnn, const GraphSnapshot& graph, std::span<const NodeId> extended_support,
                         ClassId class_id = 0);

// (seen + encoded) / 2.
Prototype prototype_merged(const Prototype& seen, const Vector& encoded_csd);

// The GNN applied to a one-node graph holding `csd` (after `projection`, when
// non-empty) with only its self-loop.
Prototype prototype_unseen(const GnnParams& gnn, const Vector& csd, ClassId class_id = 0,
                           const Matrix& projection = Matrix());

// Descriptor as fed to the GNN: csd^T projection, or csd itself.
RowVector project_csd(const Model& model, const Vector& csd);

// Tape-recorded prototypes for one episode. Rows of `prototypes` follow
// `classes` (every support class of the episode, then the zero-shot classes in
// gcl mode). `seen`/`encoded` hold P_{j,S} and MLP(a_sj) for the support
// classes; `support_embeddings` has one row per (class, extended-support node)
// pair with `owner` giving the row of its class in `seen`.
struct PrototypeBatch {
  std::vector<ClassId> classes;
  std::vector<PrototypeKind> kinds;
  std::vector<std::size_t> support_sizes;
  ad::Var prototypes;
  std::vector<ClassId> seen_classes;
  ad::Var seen;
  ad::Var encoded;  // invalid in gfscil_plain mode
  ad::Var support_embeddings;
  std::vector<int> owner;
};

// `graph` must be graph_at(bundle, episode.session). Throws ValidationError when
// a semantic mode lacks a descriptor for a class it needs.
PrototypeBatch record_prototypes(ad::Tape& tape, const BoundModel& bound, const Model& model,
                                 const DatasetBundle& bundle, const GraphSnapshot& graph, const Episode& episode,
                                 PrototypeMode mode, UnseenEncoder unseen_encoder = UnseenEncoder::gnn);

// Plain-value counterpart of record_prototypes.
PrototypeSet build_prototype_set(const Model& model, const DatasetBundle& bundle, const GraphSnapshot& graph,
                                 const Episode& episode, PrototypeMode mode,
                                 UnseenEncoder unseen_encoder = UnseenEncoder::gnn);

// One row per prototype: class_id<TAB>kind<TAB>space-separated vector.
void write_prototypes_tsv(const PrototypeSet& set, const std::filesystem::path& path);

std::string to_string(PrototypeKind kind);
std::string to_string(PrototypeMode mode);
PrototypeMode prototype_mode_from_string(const std::string& s);
std::string to_string(UnseenEncoder e);
UnseenEncoder unseen_encoder_from_string(const std::string& s);

}  // namespace gotham
