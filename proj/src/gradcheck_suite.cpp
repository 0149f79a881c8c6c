#include "gotham/gradcheck.hpp"
#include "gotham/losses.hpp"
#include "gotham/prototypes.hpp"
#include "gotham/synth.hpp"
#include "gotham/trainer.hpp"

namespace gotham {

namespace {

struct Fixture {
  DatasetBundle bundle;
  GraphSnapshot graph;
  LabelSplit split;
  Episode episode;
  Model model;
  TeacherSnapshot teacher;
  Matrix teacher_emb, teacher_csd, teacher_enc;
  LossWeights weights;
};

Fixture make_fixture(std::uint64_t seed) {
  Fixture f;
  SynthConfig sc;
  sc.seed = seed + 1;
  sc.blocks = 3;
  sc.nodes_per_block = 4;
  sc.p_in = 0.6;
  sc.p_out = 0.1;
  sc.dim = 5;
  f.bundle = synth_generate(sc);
  SplitConfig sp;
  sp.base_classes = 2;
  sp.few_shot_per_session = 0;
  sp.zero_shot_per_session = 1;
  sp.mode = StreamMode::gcl;
  apply_split(f.bundle, sp);

  const std::size_t t = 1;
  f.graph = graph_at(f.bundle, t);
  f.split = make_label_split(f.bundle, 2, derive_seed(seed, 2));
  EpisodeConfig ec;
  ec.query_per_class = 1;
  ec.walk = {2, 2};
  f.episode = sample_episode(f.bundle, f.graph, f.split, t, ec, derive_seed(seed, 3));

  ModelSpec ms;
  ms.feature_dim = 5;
  ms.csd_dim = 5;
  ms.gnn_widths = {6, 4};
  ms.mlp_hidden = {6};
  ms.slope = 0.2;
  ms.seed = derive_seed(seed, 1);
  f.model = init_model(ms);
  ms.seed = derive_seed(seed, 5);
  f.teacher = capture_teacher(init_model(ms), f.bundle, f.split, t - 1);
  f.teacher_emb = gnn_forward(f.teacher.model.gnn, f.graph, f.teacher.distill_nodes);
  f.teacher_csd = csd_rows(f.bundle, f.teacher.classes);
  f.teacher_enc = mlp_forward(f.teacher.model.mlp, f.teacher_csd);
  f.weights.gamma = 0.01;
  return f;
}

}  // namespace

std::vector<LossCheck> run_gradcheck_suite(const GradcheckSuiteConfig& cfg) {
  const Fixture f = make_fixture(cfg.seed);
  auto protos = [&f](ad::Tape& tape, const BoundModel& b) {
    return record_prototypes(tape, b, f.model, f.bundle, f.graph, f.episode, PrototypeMode::gcl);
  };
  auto parts = [&](ad::Tape& tape, const BoundModel& b, bool kd) {
    const auto batch = protos(tape, b);
    LossParts p;
    p.cls = loss_cluster(tape, batch.support_embeddings, batch.owner, batch.seen, f.weights.gamma);
    p.seg = loss_seg(tape, batch.prototypes, f.weights.epsilon_log);
    p.sem = loss_sem(tape, batch.encoded, batch.seen);
    if (kd) {
      p.emb = loss_kd_emb(tape, f.teacher_emb, gnn_forward(tape, b.gnn, f.graph, f.teacher.distill_nodes));
      p.align = loss_kd_align(tape, f.teacher_enc, mlp_forward(tape, b.mlp, tape.constant(f.teacher_csd)),
                              f.weights.epsilon_log);
    }
    return p;
  };

  std::vector<std::pair<std::string, LossBuilder>> losses = {
      {"cls_mean_hinge",
       [&](ad::Tape& t, const BoundModel& b) {
         const auto batch = protos(t, b);
         return loss_cluster(t, batch.support_embeddings, batch.owner, batch.seen, f.weights.gamma,
                             ClusterVariant::mean_hinge);
       }},
      {"cls_self_normalized",
       [&](ad::Tape& t, const BoundModel& b) {
         const auto batch = protos(t, b);
         return loss_cluster(t, batch.support_embeddings, batch.owner, batch.seen, f.weights.gamma,
                             ClusterVariant::self_normalized);
       }},
      {"seg", [&](ad::Tape& t, const BoundModel& b) { return parts(t, b, false).seg; }},
      {"sem", [&](ad::Tape& t, const BoundModel& b) { return parts(t, b, false).sem; }},
      {"emb", [&](ad::Tape& t, const BoundModel& b) { return parts(t, b, true).emb; }},
      {"align", [&](ad::Tape& t, const BoundModel& b) { return parts(t, b, true).align; }},
      {"train", [&](ad::Tape& t, const BoundModel& b) { return loss_train_total(t, parts(t, b, false), f.weights, true); }},
      {"finetune",
       [&](ad::Tape& t, const BoundModel& b) { return loss_finetune_total(t, parts(t, b, true), f.weights, true); }},
  };

  std::vector<LossCheck> out;
  std::uint64_t k = 0;
  for (const auto& [name, fn] : losses) {
    std::optional<GradientSet> analytic;
    if (cfg.force_bug) {
      ad::Tape tape;
      const auto bound = bind(tape, f.model, true);
      GradientSet g = compute_gradients(tape, bound, f.model, fn(tape, bound));
      for (auto& m : g.tensors) m *= 1.01;
      analytic = std::move(g);
    }
    out.push_back({name, finite_diff_check(f.model, fn, cfg.h, cfg.tol, cfg.coordinates, derive_seed(cfg.seed, 7, k++),
                                           analytic)});
  }
  return out;
}

}  // namespace gotham
