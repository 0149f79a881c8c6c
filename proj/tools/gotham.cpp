// Command-line driver: training runs, theorem verification, gradient checks,
// synthetic datasets and prototype export.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gotham/config.hpp"
#include "gotham/gradcheck.hpp"
#include "gotham/synth.hpp"
#include "gotham/theorem.hpp"
#include "gotham/trainer.hpp"

namespace fs = std::filesystem;
using namespace gotham;

namespace {

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("GOTHAM_SEED");
  if (!s || !*s) return std::nullopt;
  std::uint64_t v = 0;
  std::istringstream in(s);
  if (!(in >> v) || !in.eof()) throw ValidationError(std::string("GOTHAM_SEED is not an unsigned integer: ") + s);
  return v;
}

std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value) {
  if (flag->count()) return flag_value;
  return env_seed().value_or(0);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("file not found: " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunArgs {
  std::string config, dataset, out, mode, backbone;
  std::uint64_t seed = 0;
  int episodes_base = 0, episodes_finetune = 0, k_shot = 0, walk_length = 0, n_way = 0;
  double meta_lr = 0, ft_lr = 0, alpha4 = 0;
  std::vector<std::string> sets;
};

int cmd_run(const RunArgs& a, const CLI::App& sub) {
  RunConfig cfg;
  bool file_has_seed = false;
  if (!a.config.empty()) {
    const std::string text = read_file(a.config);
    cfg = config_from_json(text);
    try {
      file_has_seed = nlohmann::json::parse(text).contains("seed");
    } catch (...) {
    }
  }
  if (!file_has_seed)
    if (auto s = env_seed()) cfg.seed = *s;

  nlohmann::json o = nlohmann::json::object();
  auto given = [&](const char* flag) { return sub.get_option(flag)->count() > 0; };
  if (given("--dataset")) o["dataset"] = a.dataset;
  if (given("--out")) o["out"] = a.out;
  if (given("--mode")) o["mode"] = a.mode;
  if (given("--backbone")) o["backbone"] = a.backbone;
  if (given("--seed")) o["seed"] = a.seed;
  if (given("--episodes-base")) o["episodes_base"] = a.episodes_base;
  if (given("--episodes-finetune")) o["episodes_finetune"] = a.episodes_finetune;
  if (given("--k-shot")) o["k_shot"] = a.k_shot;
  if (given("--walk-length")) o["walk_length"] = a.walk_length;
  if (given("--n-way")) o["n_way"] = a.n_way;
  if (given("--meta-lr")) o["meta_lr"] = a.meta_lr;
  if (given("--ft-lr")) o["ft_lr"] = a.ft_lr;
  if (given("--alpha4")) o["alpha4"] = a.alpha4;
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    try {
      o[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      o[key] = value;
    }
  }
  cfg = config_from_json(o.dump(), cfg);
  cfg.validate();
  if (cfg.dataset.empty()) throw ValidationError("run: no dataset given (use --dataset or the config key 'dataset')");

  const DatasetBundle bundle = load_dataset(cfg.dataset);
  for (const auto& w : bundle.warnings) std::cerr << "warning: " << w << '\n';
  const auto res = run_stream(bundle, cfg, fs::path(cfg.out));
  std::cout << summary_tsv(res.reports, bundle.schedule.base_classes);
  std::cout << "artifacts written to " << cfg.out << '\n';
  return 0;
}

struct TheoremArgs {
  std::vector<int> widths{1, 4, 16};
  std::vector<double> xis{0.1, 0.5};
  std::vector<double> betas{0.01, 0.2};
  std::size_t trials = 1000, repetitions = 20;
  std::string randomize = "both";
  theorem::GrowthConfig growth;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_verify_theorem(const TheoremArgs& a, const CLI::Option* seed_flag) {
  theorem::VerifyConfig base;
  base.growth = a.growth;
  base.trials = a.trials;
  base.repetitions = a.repetitions;
  base.randomize = theorem::randomize_from_string(a.randomize);
  base.seed = resolve_seed(seed_flag, a.seed);
  base.growth.seed = base.seed;
  base.growth.validate();
  if (a.trials < 100) throw ValidationError("--trials must be >= 100");
  const auto sweep = theorem::verify_sweep(base, a.widths, a.xis, a.betas);
  const std::string json = theorem::to_json(sweep);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "theorem.json", json);
  }
  std::cout << json;
  return sweep.pass ? 0 : 1;
}

struct GradArgs {
  double h = 1e-4, tol = 1e-4;
  std::size_t coordinates = 64;
  bool force_bug = false;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gradcheck(const GradArgs& a, const CLI::Option* seed_flag) {
  GradcheckSuiteConfig cfg;
  cfg.seed = resolve_seed(seed_flag, a.seed);
  cfg.h = a.h;
  cfg.tol = a.tol;
  cfg.coordinates = a.coordinates;
  cfg.force_bug = a.force_bug;
  if (!(cfg.h > 0) || !(cfg.tol > 0)) throw ValidationError("--step and --tol must be positive");
  const auto checks = run_gradcheck_suite(cfg);
  std::ostringstream tsv;
  tsv << "loss\tmax_rel_error\tworst_parameter\tworst_index\tchecked\tkinks_skipped\tstatus\n";
  bool ok = true;
  for (const auto& c : checks) {
    const auto& r = c.report;
    ok = ok && r.passed;
    tsv << c.loss << '\t' << r.max_rel_error << '\t' << (r.worst_parameter.empty() ? "-" : r.worst_parameter) << '\t'
        << r.worst_index << '\t' << r.checked << '\t' << r.kinks_skipped << '\t' << (r.passed ? "pass" : "FAIL")
        << '\n';
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "gradcheck.tsv", tsv.str());
  }
  std::cout << tsv.str() << (ok ? "all gradients agree" : "gradient mismatch") << " (tol " << cfg.tol << ")\n";
  return ok ? 0 : 1;
}

struct SynthArgs {
  SynthConfig synth;
  SplitConfig split;
  std::string mode = "gfscil";
  std::string out;
};

int cmd_synth(SynthArgs a, const CLI::Option* seed_flag) {
  a.synth.seed = resolve_seed(seed_flag, a.synth.seed);
  a.split.mode = stream_mode_from_string(a.mode);
  if (a.synth.blocks < 1 || a.synth.nodes_per_block < 1 || a.synth.dim < 1)
    throw ValidationError("synth: blocks, nodes-per-block and dim must be positive");
  if (!(0.0 <= a.synth.p_out && a.synth.p_out < a.synth.p_in && a.synth.p_in <= 1.0))
    throw ValidationError("synth: need 0 <= p_out < p_in <= 1");
  DatasetBundle b = synth_generate(a.synth);
  if (a.split.base_classes < a.synth.blocks) apply_split(b, a.split);
  write_dataset(b, a.out);
  std::cout << "wrote " << b.num_nodes << " nodes, " << b.edges.size() << " edges, " << a.synth.blocks
            << " classes to " << a.out << '\n';
  return 0;
}

struct ExportArgs {
  std::string config, checkpoint, dataset, out = "out";
  std::size_t session = 0;
};

int cmd_export(const ExportArgs& a) {
  RunConfig cfg = load_config(a.config);
  if (!a.dataset.empty()) cfg.dataset = a.dataset;
  const DatasetBundle bundle = load_dataset(cfg.dataset);
  check_run_compatible(bundle, cfg);
  if (a.session > bundle.schedule.num_sessions())
    throw ValidationError("--session " + std::to_string(a.session) + " exceeds the " +
                          std::to_string(bundle.schedule.num_sessions()) + " scheduled sessions");
  const Model model = load_checkpoint(a.checkpoint);
  const LabelSplit split = make_label_split(bundle, cfg.k_shot, derive_seed(cfg.seed, 2), cfg.eval_per_class);
  const GraphSnapshot graph = graph_at(bundle, a.session);
  const PrototypeSet set = session_prototypes(model, bundle, graph, a.session, split, cfg);
  fs::create_directories(a.out);
  const fs::path path = fs::path(a.out) / ("prototypes_session_" + std::to_string(a.session) + ".tsv");
  write_prototypes_tsv(set, path);
  std::cout << "wrote " << set.size() << " prototypes to " << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-based class-incremental node classification"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "train and evaluate over a session stream");
  run_cmd->add_option("--config", run.config, "JSON run configuration");
  run_cmd->add_option("--dataset", run.dataset, "dataset directory");
  run_cmd->add_option("--out", run.out, "output directory");
  run_cmd->add_option("--mode", run.mode, "gfscil_plain | gfscil_semantic | gcl");
  run_cmd->add_option("--backbone", run.backbone, "gcn | gat");
  auto* run_seed = run_cmd->add_option("--seed", run.seed, "master seed (falls back to GOTHAM_SEED)");
  run_cmd->add_option("--episodes-base", run.episodes_base);
  run_cmd->add_option("--episodes-finetune", run.episodes_finetune);
  run_cmd->add_option("--k-shot", run.k_shot);
  run_cmd->add_option("--walk-length", run.walk_length);
  run_cmd->add_option("--n-way", run.n_way);
  run_cmd->add_option("--meta-lr", run.meta_lr);
  run_cmd->add_option("--ft-lr", run.ft_lr);
  run_cmd->add_option("--alpha4", run.alpha4);
  run_cmd->add_option("--set", run.sets, "override any config key: key=value");
  (void)run_seed;

  TheoremArgs th;
  auto* th_cmd = app.add_subcommand("verify-theorem", "Monte-Carlo check of the prototype distortion bound");
  th_cmd->add_option("--width", th.widths, "network widths N")->capture_default_str();
  th_cmd->add_option("--xi", th.xis, "perturbation half-widths")->capture_default_str();
  th_cmd->add_option("--beta", th.betas, "leaky ReLU slopes")->capture_default_str();
  th_cmd->add_option("--trials", th.trials)->capture_default_str();
  th_cmd->add_option("--repetitions", th.repetitions)->capture_default_str();
  th_cmd->add_option("--randomize", th.randomize, "params | growth | both")->capture_default_str();
  th_cmd->add_option("--n0", th.growth.n0)->capture_default_str();
  th_cmd->add_option("--base-edge-prob", th.growth.base_edge_prob)->capture_default_str();
  th_cmd->add_option("--steps", th.growth.steps)->capture_default_str();
  th_cmd->add_option("--new-per-step", th.growth.new_per_step)->capture_default_str();
  th_cmd->add_option("--attach-prob", th.growth.attach_prob)->capture_default_str();
  th_cmd->add_option("--dim", th.growth.dim)->capture_default_str();
  th_cmd->add_option("--support", th.growth.support)->capture_default_str();
  th_cmd->add_option("--feature-mean", th.growth.feature_mean)->capture_default_str();
  auto* th_seed = th_cmd->add_option("--seed", th.seed);
  th_cmd->add_option("--out", th.out, "directory for theorem.json");

  GradArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every loss gradient");
  gc_cmd->add_option("--step", gc.h, "finite-difference step")->capture_default_str();
  gc_cmd->add_option("--tol", gc.tol)->capture_default_str();
  gc_cmd->add_option("--coords", gc.coordinates, "coordinates sampled per loss")->capture_default_str();
  gc_cmd->add_flag("--force-bug", gc.force_bug, "perturb analytic gradients (negative control)");
  auto* gc_seed = gc_cmd->add_option("--seed", gc.seed);
  gc_cmd->add_option("--out", gc.out, "directory for gradcheck.tsv");

  SynthArgs sy;
  auto* sy_cmd = app.add_subcommand("synth", "write a stochastic block model dataset");
  auto* sy_seed = sy_cmd->add_option("--seed", sy.synth.seed);
  sy_cmd->add_option("--blocks", sy.synth.blocks)->capture_default_str();
  sy_cmd->add_option("--nodes-per-block", sy.synth.nodes_per_block)->capture_default_str();
  sy_cmd->add_option("--p-in", sy.synth.p_in)->capture_default_str();
  sy_cmd->add_option("--p-out", sy.synth.p_out)->capture_default_str();
  sy_cmd->add_option("--dim", sy.synth.dim)->capture_default_str();
  sy_cmd->add_option("--sigma", sy.synth.sigma)->capture_default_str();
  sy_cmd->add_option("--separation", sy.synth.separation, "class-mean distance in units of sigma")->capture_default_str();
  sy_cmd->add_option("--base-classes", sy.split.base_classes)->capture_default_str();
  sy_cmd->add_option("--few-shot-per-session", sy.split.few_shot_per_session)->capture_default_str();
  sy_cmd->add_option("--zero-shot-per-session", sy.split.zero_shot_per_session)->capture_default_str();
  sy_cmd->add_option("--k", sy.split.k)->capture_default_str();
  sy_cmd->add_option("--mode", sy.mode, "gfscil | gcl")->capture_default_str();
  sy_cmd->add_option("--out", sy.out, "dataset directory")->required();

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export-prototypes", "write evaluation prototypes of a checkpoint as TSV");
  ex_cmd->add_option("--config", ex.config, "run configuration (config.json of a run)")->required();
  ex_cmd->add_option("--checkpoint", ex.checkpoint)->required();
  ex_cmd->add_option("--dataset", ex.dataset, "dataset directory (overrides the config)");
  ex_cmd->add_option("--session", ex.session)->capture_default_str();
  ex_cmd->add_option("--out", ex.out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run_cmd) return cmd_run(run, *run_cmd);
    if (*th_cmd) return cmd_verify_theorem(th, th_seed);
    if (*gc_cmd) return cmd_gradcheck(gc, gc_seed);
    if (*sy_cmd) return cmd_synth(sy, sy_seed);
    if (*ex_cmd) return cmd_export(ex);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
