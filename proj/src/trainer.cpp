#include "gotham/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>

namespace gotham {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::optional<double> ratio(std::size_t correct, std::size_t total) {
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

bool semantic(const RunConfig& cfg) { return cfg.mode != PrototypeMode::gfscil_plain; }

SessionReport train_session(const SessionContext& ctx, Model& model, const TeacherSnapshot* teacher, std::size_t t,
                            int episodes, double lr, PrototypeSet* prototypes_out) {
  const auto start = std::chrono::steady_clock::now();
  const auto& b = ctx.bundle;
  const auto& cfg = ctx.cfg;
  const GraphSnapshot graph = graph_at(b, t);
  const EpisodeConfig ecfg = cfg.episode_config();
  const bool use_sem = semantic(cfg);

  Matrix teacher_emb, teacher_csd, teacher_enc;
  if (teacher) {
    if (!teacher->distill_nodes.empty()) teacher_emb = gnn_forward(teacher->model.gnn, graph, teacher->distill_nodes);
    if (use_sem && !teacher->classes.empty()) {
      teacher_csd = csd_rows(b, teacher->classes);
      teacher_enc = mlp_forward(teacher->model.mlp, teacher_csd);
    }
  }

  std::vector<LossRecord> log;
  for (int e = 0; e < episodes; ++e) {
    const Episode ep = sample_episode(b, graph, ctx.split, t, ecfg,
                                      derive_seed(cfg.seed, 3, (static_cast<std::uint64_t>(t) << 32) | e));
    for (const auto& [c, nodes] : ep.support)
      if (b.schedule.is_zero_shot(c))
        throw ValidationError("zero-shot class " + std::to_string(c) + " appeared in a support set");

    ad::Tape tape;
    const BoundModel bound = bind(tape, model, true);
    const PrototypeBatch batch = record_prototypes(tape, bound, model, b, graph, ep, cfg.mode, cfg.unseen_encoder);
    LossParts parts;
    parts.cls = loss_cluster(tape, batch.support_embeddings, batch.owner, batch.seen, cfg.weights.gamma,
                             cfg.cluster_variant);
    parts.seg = loss_seg(tape, batch.prototypes, cfg.weights.epsilon_log);
    if (use_sem) parts.sem = loss_sem(tape, batch.encoded, batch.seen);
    ad::Var total;
    if (teacher) {
      if (teacher_emb.rows() > 0)
        parts.emb = loss_kd_emb(tape, teacher_emb, gnn_forward(tape, bound.gnn, graph, teacher->distill_nodes));
      if (teacher_enc.rows() > 0)
        parts.align = loss_kd_align(tape, teacher_enc, mlp_forward(tape, bound.mlp, tape.constant(teacher_csd)),
                                    cfg.weights.epsilon_log);
      total = loss_finetune_total(tape, parts, cfg.weights, use_sem);
    } else {
      total = loss_train_total(tape, parts, cfg.weights, use_sem);
    }

    LossRecord rec;
    rec.step = static_cast<std::size_t>(e);
    rec.session = t;
    auto val = [](const ad::Var& v) { return v.valid() ? v.scalar() : 0.0; };
    rec.parts = {val(parts.cls), val(parts.seg), val(parts.sem), val(parts.emb), val(parts.align)};
    rec.total = total.scalar();
    if (ctx.loss_log) write_loss_record(*ctx.loss_log, rec);
    log.push_back(rec);

    const GradientSet grads = compute_gradients(tape, bound, model, total);
    apply_update(model, grads, lr, cfg.weight_decay);
  }

  const PrototypeSet protos = session_prototypes(model, b, graph, t, ctx.split, cfg);
  SessionReport report = evaluate_session(model, b, graph, t, protos, ctx.split);
  if (prototypes_out) *prototypes_out = protos;
  report.episodes = static_cast<std::size_t>(episodes);
  report.losses = std::move(log);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

std::optional<double> SessionReport::accuracy_over(const std::vector<ClassId>& subset) const {
  std::size_t correct = 0, total = 0;
  for (ClassId c : subset) {
    auto it = per_class.find(c);
    if (it == per_class.end()) continue;
    correct += it->second.correct;
    total += it->second.total;
  }
  return ratio(correct, total);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

Matrix csd_rows(const DatasetBundle& bundle, const std::vector<ClassId>& classes) {
  Matrix out(static_cast<Eigen::Index>(classes.size()), static_cast<Eigen::Index>(bundle.csd.dim()));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!bundle.csd.has(classes[i]))
      throw ValidationError("missing class descriptor for class " + std::to_string(classes[i]));
    out.row(i) = bundle.csd.at(classes[i]).transpose();
  }
  return out;
}

TeacherSnapshot capture_teacher(const Model& model, const DatasetBundle& bundle, const LabelSplit& split,
                                std::size_t session) {
  TeacherSnapshot s{model, session, bundle.schedule.seen_classes_at(session), {}};
  for (ClassId c : s.classes) {
    auto it = split.shots.find(c);
    if (it != split.shots.end()) s.distill_nodes.insert(s.distill_nodes.end(), it->second.begin(), it->second.end());
  }
  std::sort(s.distill_nodes.begin(), s.distill_nodes.end());
  s.distill_nodes.erase(std::unique(s.distill_nodes.begin(), s.distill_nodes.end()), s.distill_nodes.end());
  return s;
}

std::vector<ClassId> classify(const Matrix& queries, const PrototypeSet& prototypes) {
  if (prototypes.empty()) throw ValidationError("classify: empty prototype set");
  for (const auto& [c, p] : prototypes)
    if (p.vector.size() != queries.cols())
      throw ValidationError("classify: prototype of class " + std::to_string(c) + " has dimension " +
                            std::to_string(p.vector.size()) + ", queries have " + std::to_string(queries.cols()));
  std::vector<ClassId> out(queries.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    ClassId arg = prototypes.begin()->first;
    for (const auto& [c, p] : prototypes) {
      const double d = (queries.row(i) - p.vector.transpose()).squaredNorm();
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    out[i] = arg;
  }
  return out;
}

SessionReport evaluate_session(const Model& model, const DatasetBundle& bundle, const GraphSnapshot& graph,
                               std::size_t t, const PrototypeSet& prototypes, const LabelSplit& split) {
  SessionReport r;
  r.session = t;
  r.classes = bundle.schedule.classes_at(t);
  std::vector<NodeId> nodes;
  std::vector<ClassId> truth;
  for (ClassId c : r.classes) {
    r.per_class[c] = {};
    auto it = split.held_out.find(c);
    if (it == split.held_out.end()) continue;
    for (NodeId v : it->second)
      if (graph.contains(v)) {
        nodes.push_back(v);
        truth.push_back(c);
      }
  }
  if (nodes.empty()) throw ValidationError("evaluate_session: no held-out query nodes at session " + std::to_string(t));

  const auto predicted = classify(gnn_forward(model.gnn, graph, nodes), prototypes);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& acc = r.per_class[truth[i]];
    ++acc.total;
    if (predicted[i] == truth[i]) ++acc.correct;
  }
  for (const auto& [c, acc] : r.per_class) {
    r.correct += acc.correct;
    r.total += acc.total;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  r.seen_accuracy = r.accuracy_over(bundle.schedule.seen_classes_at(t));
  r.unseen_accuracy = r.accuracy_over(bundle.schedule.unseen_classes_at(t));
  return r;
}

PrototypeSet session_prototypes(const Model& model, const DatasetBundle& bundle, const GraphSnapshot& graph,
                                std::size_t t, const LabelSplit& split, const RunConfig& cfg) {
  const Episode ep = support_episode(bundle, graph, split, t, {cfg.walk_length, cfg.walks_per_seed},
                                     derive_seed(cfg.seed, 4, t));
  return build_prototype_set(model, bundle, graph, ep, cfg.mode, cfg.unseen_encoder);
}

void check_run_compatible(const DatasetBundle& bundle, const RunConfig& cfg) {
  const auto& s = bundle.schedule;
  const auto all = s.classes_at(s.num_sessions());
  bool has_unseen = false;
  for (ClassId c : all) has_unseen = has_unseen || s.is_zero_shot(c);
  if (has_unseen && cfg.mode != PrototypeMode::gcl)
    throw ValidationError("schedule has zero-shot classes; mode must be gcl (got " + to_string(cfg.mode) + ")");
  if (semantic(cfg)) {
    if (bundle.csd.empty())
      throw ValidationError("mode " + to_string(cfg.mode) + " needs class descriptors (csd.tsv)");
    for (ClassId c : all)
      if (!bundle.csd.has(c))
        throw ValidationError("mode " + to_string(cfg.mode) + " needs a descriptor for class " + std::to_string(c));
  }
}

SessionReport base_train(const SessionContext& ctx, Model& model, PrototypeSet* prototypes_out) {
  return train_session(ctx, model, nullptr, 0, ctx.cfg.episodes_base, ctx.cfg.meta_lr, prototypes_out);
}

SessionReport finetune_session(const SessionContext& ctx, Model& model, const TeacherSnapshot& teacher, std::size_t t,
                               PrototypeSet* prototypes_out) {
  if (t == 0 || t > ctx.bundle.schedule.num_sessions())
    throw ValidationError("finetune_session: session index " + std::to_string(t) + " out of range");
  if (teacher.session + 1 != t)
    throw ValidationError("finetune_session: teacher from session " + std::to_string(teacher.session) +
                          " cannot supervise session " + std::to_string(t));
  return train_session(ctx, model, &teacher, t, ctx.cfg.episodes_finetune, ctx.cfg.ft_lr, prototypes_out);
}

StreamResult run_stream(const DatasetBundle& bundle, const RunConfig& cfg,
                        const std::optional<std::filesystem::path>& out) {
  cfg.validate();
  check_run_compatible(bundle, cfg);

  StreamResult res;
  res.split = make_label_split(bundle, cfg.k_shot, derive_seed(cfg.seed, 2), cfg.eval_per_class);
  ModelSpec spec = cfg.model_spec(bundle.feature_dim(), semantic(cfg) ? bundle.csd.dim() : 0);
  spec.seed = derive_seed(cfg.seed, 1);
  res.model = init_model(spec);

  std::ofstream loss_log;
  if (out) {
    for (const char* sub : {"reports", "checkpoints", "prototypes"}) std::filesystem::create_directories(*out / sub);
    save_config(cfg, *out / "config.json");
    loss_log.open(*out / "losses.jsonl");
    if (!loss_log) throw ValidationError("cannot write " + (*out / "losses.jsonl").string());
  }
  const SessionContext ctx{bundle, cfg, res.split, out ? &loss_log : nullptr};

  PrototypeSet protos;
  auto finish = [&](SessionReport report) {
    const std::size_t t = report.session;
    res.prototypes.push_back(std::move(protos));
    if (out) {
      const std::string name = "session_" + std::to_string(t);
      write_text(*out / "reports" / (name + ".json"), report_to_json(report));
      write_prototypes_tsv(res.prototypes.back(), *out / "prototypes" / (name + ".tsv"));
      if (cfg.save_checkpoints) save_checkpoint(res.model, *out / "checkpoints" / (name + ".ckpt"));
    }
    res.reports.push_back(std::move(report));
  };

  finish(base_train(ctx, res.model, &protos));
  TeacherSnapshot teacher = capture_teacher(res.model, bundle, res.split, 0);
  for (std::size_t t = 1; t <= bundle.schedule.num_sessions(); ++t) {
    finish(finetune_session(ctx, res.model, teacher, t, &protos));
    teacher = capture_teacher(res.model, bundle, res.split, t);
  }
  if (out) write_text(*out / "summary.tsv", summary_tsv(res.reports, bundle.schedule.base_classes));
  return res;
}

}  // namespace gotham
