#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "gotham/config.hpp"

namespace gotham {

struct ClassAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct SessionReport {
  std::size_t session = 0;
  std::vector<ClassId> classes;  // C^t
  std::map<ClassId, ClassAccuracy> per_class;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  std::optional<double> seen_accuracy;    // pooled over C^{t,S} queries
  std::optional<double> unseen_accuracy;  // pooled over C^{t,U} queries
  std::size_t episodes = 0;
  std::vector<LossRecord> losses;
  double wall_seconds = 0.0;

  std::size_t num_classes() const { return classes.size(); }
  // Pooled accuracy over queries of the given classes; nullopt without queries.
  std::optional<double> accuracy_over(const std::vector<ClassId>& classes) const;
};

// Frozen copy of the model at the end of a session, with the classes it has
// seen and the shot nodes it distils on.
struct TeacherSnapshot {
  Model model;
  std::size_t session = 0;
  std::vector<ClassId> classes;
  std::vector<NodeId> distill_nodes;
};

TeacherSnapshot capture_teacher(const Model& model, const DatasetBundle& bundle, const LabelSplit& split,
                                std::size_t session);

// Nearest prototype by Euclidean distance, ties to the smallest class id.
std::vector<ClassId> classify(const Matrix& queries, const PrototypeSet& prototypes);

// Classifies every held-out node of C^t visible in `graph`.
SessionReport evaluate_session(const Model& model, const DatasetBundle& bundle, const GraphSnapshot& graph,
                               std::size_t t, const PrototypeSet& prototypes, const LabelSplit& split);

// Prototypes a session is evaluated with: every seen class with all of its shots.
PrototypeSet session_prototypes(const Model& model, const DatasetBundle& bundle, const GraphSnapshot& graph,
                                std::size_t t, const LabelSplit& split, const RunConfig& cfg);

// Derived seeds for the independent random streams of a run.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

// Class descriptors fed to the semantic encoder, one row per class.
Matrix csd_rows(const DatasetBundle& bundle, const std::vector<ClassId>& classes);

struct SessionContext {
  const DatasetBundle& bundle;
  const RunConfig& cfg;
  const LabelSplit& split;
  std::ostream* loss_log = nullptr;
};

// Both train on sampled episodes, then evaluate on the held-out split with
// session_prototypes; `prototypes_out` receives those prototypes.
SessionReport base_train(const SessionContext& ctx, Model& model, PrototypeSet* prototypes_out = nullptr);
SessionReport finetune_session(const SessionContext& ctx, Model& model, const TeacherSnapshot& teacher, std::size_t t,
                               PrototypeSet* prototypes_out = nullptr);

struct StreamResult {
  std::vector<SessionReport> reports;
  std::vector<PrototypeSet> prototypes;  // evaluation prototypes per session
  Model model;
  LabelSplit split;
};

// Base training then one finetuning session per scheduled session. With `out`,
// writes config.json, losses.jsonl, reports/session_<t>.json, summary.tsv,
// prototypes/session_<t>.tsv and checkpoints/session_<t>.ckpt under it.
StreamResult run_stream(const DatasetBundle& bundle, const RunConfig& cfg,
                        const std::optional<std::filesystem::path>& out = std::nullopt);

// Checks that the run configuration is usable with the bundle.
void check_run_compatible(const DatasetBundle& bundle, const RunConfig& cfg);

// Report files.
std::string report_to_json(const SessionReport& r);
// Metric rows x session columns.
std::string summary_tsv(const std::vector<SessionReport>& reports, const std::vector<ClassId>& base_classes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gotham
