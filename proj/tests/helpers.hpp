#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "gotham/config.hpp"
#include "gotham/dataset.hpp"
#include "gotham/model.hpp"
#include "gotham/synth.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("gotham_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline gotham::Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  gotham::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

// SBM stream: `blocks` classes, the first `base` of them base classes, then
// sessions of `few` few-shot and `zero` zero-shot classes.
inline gotham::DatasetBundle sbm_stream(std::uint64_t seed, int blocks, int base, int few, int zero, int k = 5,
                                        int per_block = 30, int dim = 16) {
  gotham::SynthConfig sc;
  sc.seed = seed;
  sc.blocks = blocks;
  sc.nodes_per_block = per_block;
  sc.dim = dim;
  gotham::DatasetBundle b = gotham::synth_generate(sc);
  if (base < blocks) {
    gotham::SplitConfig sp;
    sp.base_classes = base;
    sp.few_shot_per_session = few;
    sp.zero_shot_per_session = zero;
    sp.k = k;
    sp.mode = zero > 0 ? gotham::StreamMode::gcl : gotham::StreamMode::gfscil;
    gotham::apply_split(b, sp);
  }
  return b;
}

// Small, fast model configuration for unit tests.
inline gotham::RunConfig small_config(std::uint64_t seed = 1) {
  gotham::RunConfig cfg;
  cfg.seed = seed;
  cfg.hidden_dim = 32;
  cfg.out_dim = 32;
  cfg.mlp_hidden = 32;
  cfg.episodes_base = 20;
  cfg.episodes_finetune = 5;
  return cfg;
}

}  // namespace testutil
