#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gotham/graph.hpp"
#include "gotham/tape.hpp"

namespace gotham {

enum class Backbone { gcn, gat };

// Affine map x -> x W + b with W: d_in x d_out and b: 1 x d_out.
struct DenseLayer {
  Matrix weight;
  Matrix bias;
};

// Message-passing stack. GCN layers compute H' = σ(D^{-1} A H W + b) with A
// carrying self-loops. GAT layers replace the mean by attention weights
// softmax_j(LeakyReLU_{0.2}(a_dst·z_i + a_src·z_j)) over the same neighbourhood.
// σ is leaky ReLU on hidden layers; the last layer is linear.
struct GnnParams {
  std::vector<DenseLayer> layers;
  std::vector<Matrix> attn_src;  // GAT only, one d_out x 1 column per layer
  std::vector<Matrix> attn_dst;
  double slope = 0.01;
  Backbone backbone = Backbone::gcn;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }
};

// Semantic encoder: affine + leaky ReLU chain with a linear final layer.
struct MlpParams {
  std::vector<DenseLayer> layers;
  double slope = 0.01;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }
};

struct ModelSpec {
  std::size_t feature_dim = 0;
  std::size_t csd_dim = 0;  // 0: no semantic encoder
  std::vector<int> gnn_widths{512, 512};
  std::vector<int> mlp_hidden{512};
  double slope = 0.01;
  Backbone backbone = Backbone::gcn;
  std::uint64_t seed = 0;
};

struct Model {
  GnnParams gnn;
  MlpParams mlp;
  // Fixed d_s x d map applied to descriptors before they enter the GNN; empty
  // when descriptors already have the feature dimension.
  Matrix csd_projection;
  std::uint64_t seed = 0;

  // Trainable tensors in a fixed order: GNN layers (W, b[, a_src, a_dst]) then MLP layers (W, b).
  std::vector<std::string> parameter_names() const;
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::size_t parameter_count() const;
};

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from spec.seed.
Model init_model(const ModelSpec& spec);

struct GradientSet {
  std::vector<std::string> names;
  std::vector<Matrix> tensors;
};

struct BoundGnn {
  std::vector<ad::Var> weights, biases, attn_src, attn_dst;
  double slope = 0.01;
  Backbone backbone = Backbone::gcn;
};

struct BoundMlp {
  std::vector<ad::Var> weights, biases;
  double slope = 0.01;
};

// A model's tensors recorded on a tape, as parameters (trainable) or constants.
struct BoundModel {
  BoundGnn gnn;
  BoundMlp mlp;
  std::vector<ad::Var> params;  // same order as Model::parameters()
};

BoundModel bind(ad::Tape& tape, const Model& model, bool trainable = true);
BoundGnn bind_gnn(ad::Tape& tape, const GnnParams& gnn, bool trainable = false);

// Embeddings of `nodes` (rows in request order). Touches only the L-hop
// neighbourhood of the requested nodes.
ad::Var gnn_forward(ad::Tape& tape, const BoundGnn& gnn, const GraphSnapshot& graph,
                    std::span<const NodeId> nodes);
Matrix gnn_forward(const GnnParams& gnn, const GraphSnapshot& graph, std::span<const NodeId> nodes);

ad::Var mlp_forward(ad::Tape& tape, const BoundMlp& mlp, ad::Var input);
Matrix mlp_forward(const MlpParams& mlp, const Matrix& input);

// Reverse-mode gradient of `loss` for every parameter in `bound`.
GradientSet compute_gradients(ad::Tape& tape, const BoundModel& bound, const Model& model, ad::Var loss);

// θ <- θ - lr (g + weight_decay θ) for every trainable tensor.
void apply_update(Model& model, const GradientSet& grads, double lr, double weight_decay);

// Checkpoint: 8-byte magic, little-endian u64 header length, JSON header,
// then every tensor as little-endian IEEE-754 doubles in header order.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

std::string to_string(Backbone b);
Backbone backbone_from_string(const std::string& s);

}  // namespace gotham
