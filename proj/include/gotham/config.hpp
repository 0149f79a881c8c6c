#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gotham/losses.hpp"
#include "gotham/model.hpp"
#include "gotham/prototypes.hpp"
#include "gotham/sampler.hpp"

namespace gotham {

// Every knob of a training run. Stored as a flat JSON object whose keys are
// the field names below.
struct RunConfig {
  std::string dataset;
  std::string out = "out";
  PrototypeMode mode = PrototypeMode::gfscil_semantic;
  Backbone backbone = Backbone::gcn;
  UnseenEncoder unseen_encoder = UnseenEncoder::gnn;
  ClusterVariant cluster_variant = ClusterVariant::mean_hinge;
  ClassPool episode_class_pool = ClassPool::all_seen;

  int n_way = 0;  // classes per training episode, 0 = every eligible class
  int k_shot = 5; // shots per base class; streamed classes use their session's k
  int walk_length = 3;
  int walks_per_seed = 5;
  int query_per_class = 5;
  int eval_per_class = 0;  // cap on held-out evaluation nodes per class, 0 = all

  LossWeights weights;

  double meta_lr = 1e-3;
  double ft_lr = 1e-3;
  double weight_decay = 5e-3;
  int episodes_base = 200;
  int episodes_finetune = 50;

  int gnn_layers = 2;
  int hidden_dim = 512;
  int out_dim = 512;
  int mlp_hidden = 512;
  double slope = 0.01;

  std::uint64_t seed = 0;
  bool save_checkpoints = true;

  // Throws ValidationError naming the first offending key.
  void validate() const;

  EpisodeConfig episode_config() const;
  ModelSpec model_spec(std::size_t feature_dim, std::size_t csd_dim) const;
};

std::string config_to_json(const RunConfig& cfg);
// Unknown keys and ill-typed values are rejected; missing keys keep defaults.
RunConfig config_from_json(const std::string& text, RunConfig base = RunConfig());
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace gotham
