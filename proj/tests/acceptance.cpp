// End-to-end acceptance checks. Each criterion prints one PASS/FAIL/SKIP line.
#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <map>

#include "gotham/gradcheck.hpp"
#include "gotham/losses.hpp"
#include "gotham/theorem.hpp"
#include "gotham/trainer.hpp"
#include "helpers.hpp"

using namespace gotham;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void verdict(int n, bool pass, const std::string& detail) {
  std::printf("[acceptance] criterion %d: %s  %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  EXPECT_TRUE(pass) << "criterion " << n << ": " << detail;
}

void skipped(int n, const std::string& why) {
  std::printf("[acceptance] criterion %d: SKIP  %s\n", n, why.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

// 5 base + 3 streamed SBM classes, 1-way 5-shot.
DatasetBundle sbm_fixture(std::uint64_t seed) { return testutil::sbm_stream(seed, 8, 5, 1, 0, 5, 30, 16); }

// Same fixture with the last streamed class zero-shot.
DatasetBundle zero_shot_fixture(std::uint64_t seed) {
  DatasetBundle b = sbm_fixture(seed);
  auto& last = b.schedule.sessions.back();
  last.zero_shot = last.few_shot;
  last.few_shot.clear();
  b.schedule.mode = StreamMode::gcl;
  validate_bundle(b);
  return b;
}

RunConfig gfscil_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.mode = PrototypeMode::gfscil_plain;
  c.n_way = 1;
  c.k_shot = 5;
  c.save_checkpoints = false;
  return c;
}

RunConfig gcl_config(std::uint64_t seed) {
  RunConfig c = gfscil_config(seed);
  c.mode = PrototypeMode::gcl;
  c.gnn_layers = 1;
  return c;
}

RunConfig kd_config(std::uint64_t seed, double alpha4) {
  RunConfig c = gfscil_config(seed);
  c.ft_lr = 1e-2;
  c.episode_class_pool = ClassPool::novel_only;
  c.weights.alpha4 = alpha4;
  return c;
}

// Runs are repeated for the determinism criterion; summaries are kept here.
struct Recorded {
  std::string label;
  std::function<DatasetBundle()> bundle;
  RunConfig cfg;
  std::string summary;
};
std::vector<Recorded>& recorded() {
  static std::vector<Recorded> r;
  return r;
}

std::string summary_of(const DatasetBundle& b, const RunConfig& cfg, std::vector<SessionReport>* reports = nullptr) {
  testutil::TempDir d("acc");
  auto res = run_stream(b, cfg, d.path());
  if (reports) *reports = res.reports;
  return testutil::read_file(d / "summary.tsv");
}

std::optional<fs::path> env_dir(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

}  // namespace

TEST(Acceptance, C1_GradientCorrectness) {
  const auto t0 = Clock::now();
  GradcheckSuiteConfig cfg;
  cfg.h = 1e-4;
  cfg.tol = 1e-4;
  const auto checks = run_gradcheck_suite(cfg);
  const double secs = seconds_since(t0);
  bool ok = checks.size() == 8 && secs < 30;
  double worst = 0;
  std::string names;
  for (const auto& c : checks) {
    ok = ok && c.report.passed && c.report.max_rel_error < 1e-4;
    worst = std::max(worst, c.report.max_rel_error);
    names += (names.empty() ? "" : ",") + c.loss;
  }
  verdict(1, ok, "max rel error " + fmt("%.3g", worst) + " < 1e-4 over {" + names + "}, " + fmt("%.2f", secs) + " s < 30 s");
}

TEST(Acceptance, C2_LossOracles) {
  Matrix p(2, 2);
  p << 0, 0, std::exp(1.0), 0;
  const double seg = loss_seg(p, 1e-8);
  Matrix v(1, 3), w(1, 3);
  v << 1, 2, 3;
  w << 3, 0, -1;
  const double same = loss_kd_align(v, v, 1e-8), orth = loss_kd_align(v, w, 1e-8), anti = loss_kd_align(v, -v, 1e-8);
  Matrix protos(2, 2), emb(4, 2);
  protos << 0, 0, 1, 1;
  emb << 0.009, 0, 0, -0.005, 1, 1.005, 1.007, 1.007;
  const double cls = loss_cluster(emb, {0, 0, 1, 1}, protos, 0.01);
  const bool ok = std::abs(seg + 1) <= 1e-9 && std::abs(same) <= 1e-12 && std::abs(orth - 1) <= 1e-12 &&
                  std::abs(anti - 2) <= 1e-12 && cls == 0.0;
  verdict(2, ok,
          "seg(e) = " + fmt("%.12f", seg) + ", align = " + fmt("%.1e", same) + "/" + fmt("%.12f", orth) + "/" +
              fmt("%.12f", anti) + ", cluster inside gamma = " + fmt("%g", cls));
}

TEST(Acceptance, C3_TheoremSweep) {
  const auto t0 = Clock::now();
  theorem::VerifyConfig base;
  base.trials = 1000;
  const auto sweep = theorem::verify_sweep(base, {1, 4, 16}, {0.1, 0.5}, {0.01, 0.2});
  const double secs = seconds_since(t0);
  bool every = sweep.runs.size() == 12;
  double min_margin = std::numeric_limits<double>::infinity();
  for (const auto& r : sweep.runs) {
    every = every && r.pass && r.delta_hat + 2 * r.se >= r.rhs_scaled && r.config.trials >= 1000;
    min_margin = std::min(min_margin, r.margin);
  }
  const bool ok = every && sweep.rank_correlation > 0 && secs < 120;
  verdict(3, ok,
          "12 configs, min(delta_hat + 2se - rhs) = " + fmt("%.4g", min_margin) + ", rank corr(N, delta_hat) = " +
              fmt("%.3f", sweep.rank_correlation) + " > 0, " + fmt("%.1f", secs) + " s < 120 s");
}

TEST(Acceptance, C4_SyntheticGfscil) {
  const auto t0 = Clock::now();
  double base = 0, final_acc = 0;
  for (auto seed : kSeeds) {
    const auto b = sbm_fixture(seed);
    std::vector<SessionReport> reps;
    const RunConfig cfg = gfscil_config(seed);
    const std::string s = summary_of(b, cfg, &reps);
    recorded().push_back({"c4 seed " + std::to_string(seed), [seed] { return sbm_fixture(seed); }, cfg, s});
    base += reps.front().accuracy;
    final_acc += reps.back().accuracy;
  }
  base /= 5;
  final_acc /= 5;
  const double secs = seconds_since(t0);
  verdict(4, base >= 0.95 && final_acc >= 0.80 && secs < 120,
          "mean base acc " + fmt("%.4f", base) + " >= 0.95, mean final acc " + fmt("%.4f", final_acc) +
              " >= 0.80 over 5 seeds, " + fmt("%.1f", secs) + " s < 120 s");
}

TEST(Acceptance, C5_SyntheticZeroShot) {
  double unseen = 0;
  std::size_t classes = 0;
  for (auto seed : kSeeds) {
    const auto b = zero_shot_fixture(seed);
    std::vector<SessionReport> reps;
    const RunConfig cfg = gcl_config(seed);
    const std::string s = summary_of(b, cfg, &reps);
    recorded().push_back({"c5 seed " + std::to_string(seed), [seed] { return zero_shot_fixture(seed); }, cfg, s});
    unseen += reps.back().unseen_accuracy.value_or(0.0);
    classes = reps.back().num_classes();
  }
  unseen /= 5;
  const double floor = 3.0 / static_cast<double>(classes);
  // Default depth, reported for reference only.
  double deep = 0;
  for (auto seed : kSeeds) {
    RunConfig cfg = gcl_config(seed);
    cfg.gnn_layers = 2;
    cfg.save_checkpoints = false;
    deep += run_stream(zero_shot_fixture(seed), cfg).reports.back().unseen_accuracy.value_or(0.0);
  }
  verdict(5, unseen >= floor,
          "mean unseen acc " + fmt("%.4f", unseen) + " >= 3/|C^t| = " + fmt("%.4f", floor) +
              " (1-layer GNN; 2-layer default gives " + fmt("%.4f", deep / 5) + ")");
}

TEST(Acceptance, C6_CoraMl) {
  const auto dir = env_dir("GOTHAM_CORA_DIR");
  if (!dir) {
    skipped(6, "GOTHAM_CORA_DIR not set; the Cora-ML export is not bundled (see tools/prepare_cora.py)");
    GTEST_SKIP();
  }
  const auto t0 = Clock::now();
  const auto b = load_dataset(*dir);
  RunConfig cfg = gfscil_config(1);
  cfg.mode = b.csd.empty() ? PrototypeMode::gfscil_plain : PrototypeMode::gfscil_semantic;
  std::vector<SessionReport> reps;
  const std::string s = summary_of(b, cfg, &reps);
  recorded().push_back({"c6", [d = *dir] { return load_dataset(d); }, cfg, s});
  const double secs = seconds_since(t0);
  double drift = 0;
  for (std::size_t t = 1; t < reps.size(); ++t) drift += reps[t].accuracy - reps[t - 1].accuracy;
  drift /= std::max<std::size_t>(1, reps.size() - 1);
  const bool ok = reps.size() == 6 && reps.front().accuracy >= 0.90 && reps.back().accuracy >= 0.55 && drift <= 0 &&
                  secs < 900;
  verdict(6, ok,
          std::to_string(reps.size()) + " sessions, base " + fmt("%.4f", reps.front().accuracy) + " >= 0.90, final " +
              fmt("%.4f", reps.back().accuracy) + " >= 0.55, mean change per session " + fmt("%.4f", drift) +
              " <= 0, " + fmt("%.0f", secs) + " s < 900 s");
}

TEST(Acceptance, C7_DistillationReducesForgetting) {
  double with = 0, without = 0;
  for (auto seed : kSeeds) {
    const auto b = sbm_fixture(seed);
    RunConfig on = kd_config(seed, 1.0), off = kd_config(seed, 0.0);
    with += *run_stream(b, on).reports.back().accuracy_over(b.schedule.base_classes);
    without += *run_stream(b, off).reports.back().accuracy_over(b.schedule.base_classes);
  }
  with /= 5;
  without /= 5;
  verdict(7, with - without > 0,
          "final base-class acc alpha4=1: " + fmt("%.4f", with) + ", alpha4=0: " + fmt("%.4f", without) +
              ", margin " + fmt("%.4f", with - without) + " > 0");
}

TEST(Acceptance, C8_ArxivProtocolSlice) {
  const auto real = env_dir("GOTHAM_ARXIV_DIR");
  testutil::TempDir d("arxiv");
  bool ok = true;
  std::string detail;
  for (bool gcl : {false, true}) {
    DatasetBundle b;
    int way = 3, zero = 0;
    if (gcl) way = 2, zero = 1;
    if (real) {
      b = load_dataset(*real);
    } else {
      SynthConfig sc;
      sc.seed = 8;
      sc.blocks = 40;
      sc.nodes_per_block = 125;
      sc.dim = 128;
      sc.p_in = 0.05;
      sc.p_out = 0.0005;
      b = synth_generate(sc);
    }
    SplitConfig sp;
    sp.base_classes = 10;
    sp.few_shot_per_session = way;
    sp.zero_shot_per_session = zero;
    sp.k = 10;
    sp.mode = gcl ? StreamMode::gcl : StreamMode::gfscil;
    apply_split(b, sp);
    const auto data = d / (gcl ? "gcl_data" : "gfscil_data");
    write_dataset(b, data);
    const auto loaded = load_dataset(data);

    RunConfig cfg;
    cfg.seed = 3;
    cfg.mode = gcl ? PrototypeMode::gcl : PrototypeMode::gfscil_semantic;
    cfg.n_way = way;
    cfg.k_shot = 10;
    cfg.hidden_dim = cfg.out_dim = cfg.mlp_hidden = 128;
    cfg.episodes_base = 20;
    cfg.episodes_finetune = 5;
    cfg.eval_per_class = 40;
    const auto out = d / (gcl ? "gcl_run" : "gfscil_run");
    const auto t0 = Clock::now();
    std::string err;
    std::size_t sessions = 0;
    try {
      sessions = run_stream(loaded, cfg, out).reports.size();
    } catch (const std::exception& e) {
      err = e.what();
    }
    const bool tsv = fs::exists(out / "summary.tsv");
    std::size_t cols = 0;
    if (tsv) {
      const std::string s = testutil::read_file(out / "summary.tsv");
      const std::string head = s.substr(0, s.find('\n'));
      cols = std::count(head.begin(), head.end(), '\t');
    }
    const bool this_ok = err.empty() && sessions == 11 && tsv && cols == 11;
    ok = ok && this_ok;
    detail += std::string(detail.empty() ? "" : "; ") + (gcl ? "2-way 10-shot + 1-way 0-shot" : "3-way 10-shot") +
              ": " + std::to_string(sessions) + " sessions, summary.tsv " + (tsv ? "written" : "missing") + ", " +
              fmt("%.1f", seconds_since(t0)) + " s" + (err.empty() ? "" : ", error: " + err);
  }
  verdict(8, ok, std::string(real ? "GOTHAM_ARXIV_DIR slice" : "synthetic 5000-node/128-d/40-class slice") + "; " +
                     detail);
}

TEST(Acceptance, C9_Determinism) {
  if (recorded().empty()) {
    for (auto seed : {1u, 2u}) {
      recorded().push_back({"c4 seed " + std::to_string(seed), [seed] { return sbm_fixture(seed); },
                            gfscil_config(seed), summary_of(sbm_fixture(seed), gfscil_config(seed))});
      recorded().push_back({"c5 seed " + std::to_string(seed), [seed] { return zero_shot_fixture(seed); },
                            gcl_config(seed), summary_of(zero_shot_fixture(seed), gcl_config(seed))});
    }
  }
  std::size_t identical = 0;
  std::string bad;
  for (const auto& r : recorded()) {
    if (summary_of(r.bundle(), r.cfg) == r.summary && !r.summary.empty())
      ++identical;
    else
      bad += " " + r.label;
  }
  verdict(9, identical == recorded().size(),
          std::to_string(identical) + "/" + std::to_string(recorded().size()) +
              " repeated runs gave bit-identical summary TSVs" + (bad.empty() ? "" : "; differing:" + bad));
}
