#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gotham/graph.hpp"

namespace gotham {

// Partial node labelling: node id -> class id.
struct LabelTable {
  std::map<NodeId, ClassId> entries;

  std::optional<ClassId> class_of(NodeId v) const;
  // Labelled nodes of class c in increasing id order.
  std::vector<NodeId> nodes_of(ClassId c) const;
  std::vector<ClassId> classes() const;
};

// Class-semantic descriptors, one real vector per class.
struct CsdTable {
  std::map<ClassId, Vector> vectors;

  bool empty() const { return vectors.empty(); }
  bool has(ClassId c) const { return vectors.count(c) != 0; }
  const Vector& at(ClassId c) const;
  std::size_t dim() const { return vectors.empty() ? 0 : vectors.begin()->second.size(); }
};

enum class StreamMode { gfscil, gcl };

struct SessionSpec {
  std::vector<ClassId> few_shot;
  std::vector<ClassId> zero_shot;
  int k = 0;
  std::vector<NodeId> arrivals;
};

// Base classes plus an ordered list of streaming sessions. Session index t = 0
// is base training; t = 1..T are the streaming sessions.
struct StreamSchedule {
  std::vector<ClassId> base_classes;
  std::vector<SessionSpec> sessions;
  StreamMode mode = StreamMode::gfscil;

  std::size_t num_sessions() const { return sessions.size(); }

  // C^t, C^{t,S}, C^{t,U} (sorted).
  std::vector<ClassId> classes_at(std::size_t t) const;
  std::vector<ClassId> seen_classes_at(std::size_t t) const;
  std::vector<ClassId> unseen_classes_at(std::size_t t) const;
  // Few-shot classes introduced exactly at t (base classes for t = 0).
  std::vector<ClassId> novel_seen_at(std::size_t t) const;

  // Session at which c is introduced, if any.
  std::optional<std::size_t> session_of(ClassId c) const;
  bool is_zero_shot(ClassId c) const;

  // Throws ValidationError when class sets overlap or k is negative.
  void validate() const;
};

struct DatasetBundle {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;  // canonical (u < v), sorted, deduplicated
  std::shared_ptr<const Matrix> features;
  LabelTable labels;
  CsdTable csd;
  StreamSchedule schedule;
  std::vector<std::string> warnings;

  std::size_t feature_dim() const { return features ? features->cols() : 0; }
};

// Checks every cross-table invariant; throws ValidationError on the first failure.
void validate_bundle(const DatasetBundle& bundle);

// Reads edges.tsv, features.tsv, labels.tsv, schedule.json and the optional csd.tsv.
DatasetBundle load_dataset(const std::filesystem::path& dir);

// Writes the same file set. Edges are written in both directions; floats use
// shortest round-trip formatting.
void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);

// Nodes visible at session t: every node not listed in any arrivals set, plus
// the arrivals of sessions 1..t.
std::vector<bool> visible_at(const DatasetBundle& bundle, std::size_t t);

GraphSnapshot graph_at(const DatasetBundle& bundle, std::size_t t);

std::string to_string(StreamMode mode);
StreamMode stream_mode_from_string(const std::string& s);

}  // namespace gotham
