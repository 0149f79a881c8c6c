#include "gotham/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace gotham {

namespace {

constexpr double kAttentionSlope = 0.2;

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

DenseLayer dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  DenseLayer l;
  l.weight = uniform_matrix(in, out, bound, rng);
  l.bias = uniform_matrix(1, out, bound, rng);
  return l;
}

}  // namespace

std::string to_string(Backbone b) { return b == Backbone::gat ? "gat" : "gcn"; }

Backbone backbone_from_string(const std::string& s) {
  if (s == "gcn") return Backbone::gcn;
  if (s == "gat") return Backbone::gat;
  throw ValidationError("unknown backbone '" + s + "' (expected gcn or gat)");
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < gnn.layers.size(); ++l) {
    names.push_back("gnn.W" + std::to_string(l));
    names.push_back("gnn.b" + std::to_string(l));
    if (gnn.backbone == Backbone::gat) {
      names.push_back("gnn.att_src" + std::to_string(l));
      names.push_back("gnn.att_dst" + std::to_string(l));
    }
  }
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    names.push_back("mlp.W" + std::to_string(l));
    names.push_back("mlp.b" + std::to_string(l));
  }
  return names;
}

std::vector<Matrix*> Model::parameters() {
  std::vector<Matrix*> out;
  for (std::size_t l = 0; l < gnn.layers.size(); ++l) {
    out.push_back(&gnn.layers[l].weight);
    out.push_back(&gnn.layers[l].bias);
    if (gnn.backbone == Backbone::gat) {
      out.push_back(&gnn.attn_src[l]);
      out.push_back(&gnn.attn_dst[l]);
    }
  }
  for (auto& layer : mlp.layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Matrix*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : parameters()) n += m->size();
  return n;
}

Model init_model(const ModelSpec& spec) {
  if (spec.feature_dim == 0) throw ValidationError("model: feature dimension must be positive");
  if (spec.gnn_widths.empty()) throw ValidationError("model: GNN needs at least one layer");
  for (int w : spec.gnn_widths)
    if (w < 1) throw ValidationError("model: layer widths must be positive");
  for (int w : spec.mlp_hidden)
    if (w < 1) throw ValidationError("model: layer widths must be positive");

  std::mt19937_64 rng(spec.seed);
  Model m;
  m.seed = spec.seed;
  m.gnn.slope = spec.slope;
  m.gnn.backbone = spec.backbone;
  std::size_t in = spec.feature_dim;
  for (int w : spec.gnn_widths) {
    m.gnn.layers.push_back(dense(in, w, rng));
    if (spec.backbone == Backbone::gat) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(w));
      m.gnn.attn_src.push_back(uniform_matrix(w, 1, bound, rng));
      m.gnn.attn_dst.push_back(uniform_matrix(w, 1, bound, rng));
    }
    in = w;
  }
  m.mlp.slope = spec.slope;
  if (spec.csd_dim > 0) {
    std::size_t mi = spec.csd_dim;
    for (int w : spec.mlp_hidden) {
      m.mlp.layers.push_back(dense(mi, w, rng));
      mi = w;
    }
    m.mlp.layers.push_back(dense(mi, m.gnn.out_dim(), rng));
    if (spec.csd_dim != spec.feature_dim) {
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.csd_dim)));
      m.csd_projection.resize(spec.csd_dim, spec.feature_dim);
      for (Eigen::Index i = 0; i < m.csd_projection.size(); ++i) m.csd_projection.data()[i] = normal(rng);
    }
  }
  return m;
}

BoundGnn bind_gnn(ad::Tape& tape, const GnnParams& gnn, bool trainable) {
  auto leaf = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
  BoundGnn b;
  b.slope = gnn.slope;
  b.backbone = gnn.backbone;
  for (std::size_t l = 0; l < gnn.layers.size(); ++l) {
    b.weights.push_back(leaf(gnn.layers[l].weight));
    b.biases.push_back(leaf(gnn.layers[l].bias));
    if (gnn.backbone == Backbone::gat) {
      b.attn_src.push_back(leaf(gnn.attn_src[l]));
      b.attn_dst.push_back(leaf(gnn.attn_dst[l]));
    }
  }
  return b;
}

BoundModel bind(ad::Tape& tape, const Model& model, bool trainable) {
  BoundModel b;
  b.gnn = bind_gnn(tape, model.gnn, trainable);
  for (std::size_t l = 0; l < b.gnn.weights.size(); ++l) {
    b.params.push_back(b.gnn.weights[l]);
    b.params.push_back(b.gnn.biases[l]);
    if (model.gnn.backbone == Backbone::gat) {
      b.params.push_back(b.gnn.attn_src[l]);
      b.params.push_back(b.gnn.attn_dst[l]);
    }
  }
  b.mlp.slope = model.mlp.slope;
  for (const auto& layer : model.mlp.layers) {
    b.mlp.weights.push_back(trainable ? tape.parameter(layer.weight) : tape.constant(layer.weight));
    b.mlp.biases.push_back(trainable ? tape.parameter(layer.bias) : tape.constant(layer.bias));
    b.params.push_back(b.mlp.weights.back());
    b.params.push_back(b.mlp.biases.back());
  }
  return b;
}

namespace {

// Per-row neighbour positions for one message-passing layer: row r of the
// output level aggregates over `cols[begin[r]..begin[r+1])` of the input level.
struct LayerStructure {
  std::vector<int> begin;
  std::vector<int> cols;
  std::vector<int> self;  // position of the row's own node in the input level
};

// Attention aggregation out_i = Σ_j α_ij z_j with
// α_i = softmax_j(LeakyReLU(a_dst·z_self(i) + a_src·z_j)).
ad::Var gat_aggregate(ad::Var z, ad::Var a_src, ad::Var a_dst, std::shared_ptr<const LayerStructure> st) {
  ad::Tape& tape = *z.tape();
  const Matrix& zv = z.value();
  const Eigen::Index rows = static_cast<Eigen::Index>(st->self.size());
  const Vector s = zv * a_src.value().col(0);
  const Vector d = zv * a_dst.value().col(0);

  auto alpha = std::make_shared<std::vector<double>>(st->cols.size());
  auto pre = std::make_shared<std::vector<double>>(st->cols.size());
  Matrix out = Matrix::Zero(rows, zv.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int b = st->begin[r], e = st->begin[r + 1];
    double mx = -std::numeric_limits<double>::infinity();
    for (int p = b; p < e; ++p) {
      double x = d(st->self[r]) + s(st->cols[p]);
      (*pre)[p] = x;
      double act = x >= 0.0 ? x : kAttentionSlope * x;
      (*alpha)[p] = act;
      mx = std::max(mx, act);
    }
    double total = 0.0;
    for (int p = b; p < e; ++p) {
      (*alpha)[p] = std::exp((*alpha)[p] - mx);
      total += (*alpha)[p];
    }
    for (int p = b; p < e; ++p) {
      (*alpha)[p] /= total;
      out.row(r) += (*alpha)[p] * zv.row(st->cols[p]);
    }
  }

  const int iz = z.id(), is = a_src.id(), id = a_dst.id();
  return tape.push(std::move(out), {z, a_src, a_dst}, [iz, is, id, st, alpha, pre](ad::Tape& t, const Matrix& g) {
    const Matrix& zv = t.value(iz);
    const Matrix& as = t.value(is);
    const Matrix& adst = t.value(id);
    Matrix gz = Matrix::Zero(zv.rows(), zv.cols());
    Vector gs = Vector::Zero(zv.rows());  // d loss / d (a_src·z_j)
    Vector gd = Vector::Zero(zv.rows());  // d loss / d (a_dst·z_i)
    const Eigen::Index rows = static_cast<Eigen::Index>(st->self.size());
    std::vector<double> galpha;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const int b = st->begin[r], e = st->begin[r + 1];
      galpha.assign(e - b, 0.0);
      double weighted = 0.0;
      for (int p = b; p < e; ++p) {
        const int j = st->cols[p];
        gz.row(j) += (*alpha)[p] * g.row(r);
        galpha[p - b] = g.row(r).dot(zv.row(j));
        weighted += (*alpha)[p] * galpha[p - b];
      }
      for (int p = b; p < e; ++p) {
        double ge = (*alpha)[p] * (galpha[p - b] - weighted);
        double gpre = ge * ((*pre)[p] >= 0.0 ? 1.0 : kAttentionSlope);
        gd(st->self[r]) += gpre;
        gs(st->cols[p]) += gpre;
      }
    }
    gz += gs * as.col(0).transpose();
    gz += gd * adst.col(0).transpose();
    t.accumulate(iz, gz);
    if (t.requires_grad(is)) t.accumulate(is, zv.transpose() * gs);
    if (t.requires_grad(id)) t.accumulate(id, zv.transpose() * gd);
  });
}

}  // namespace

ad::Var gnn_forward(ad::Tape& tape, const BoundGnn& gnn, const GraphSnapshot& graph,
                    std::span<const NodeId> nodes) {
  const std::size_t L = gnn.weights.size();
  if (L == 0) throw ValidationError("gnn_forward: model has no layers");
  if (static_cast<std::size_t>(gnn.weights.front().rows()) != graph.feature_dim())
    throw ValidationError("gnn_forward: feature dimension " + std::to_string(graph.feature_dim()) +
                          " does not match first layer input " + std::to_string(gnn.weights.front().rows()));
  for (NodeId v : nodes)
    if (!graph.contains(v)) throw ValidationError("gnn_forward: node " + std::to_string(v) + " is not in the graph");

  // levels[l] = nodes whose layer-l representation is needed; levels[L] = targets.
  std::vector<std::vector<NodeId>> levels(L + 1);
  levels[L].assign(nodes.begin(), nodes.end());
  std::sort(levels[L].begin(), levels[L].end());
  levels[L].erase(std::unique(levels[L].begin(), levels[L].end()), levels[L].end());
  for (std::size_t l = L; l-- > 0;) {
    std::vector<NodeId> next = levels[l + 1];
    for (NodeId v : levels[l + 1]) {
      auto nb = graph.neighbors(v);
      next.insert(next.end(), nb.begin(), nb.end());
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    levels[l] = std::move(next);
  }

  auto position = [](const std::vector<NodeId>& level, NodeId v) {
    return static_cast<int>(std::lower_bound(level.begin(), level.end(), v) - level.begin());
  };

  Matrix x0(levels[0].size(), graph.feature_dim());
  for (std::size_t i = 0; i < levels[0].size(); ++i) x0.row(i) = graph.features().row(levels[0][i]);
  ad::Var h = tape.constant(std::move(x0));

  for (std::size_t l = 1; l <= L; ++l) {
    const auto& out_level = levels[l];
    const auto& in_level = levels[l - 1];
    ad::Var y;
    if (gnn.backbone == Backbone::gcn) {
      std::vector<Eigen::Triplet<double>> trip;
      for (std::size_t r = 0; r < out_level.size(); ++r) {
        auto nb = graph.neighbors(out_level[r]);
        const double w = 1.0 / static_cast<double>(nb.size());
        for (NodeId u : nb) trip.emplace_back(r, position(in_level, u), w);
      }
      auto p = std::make_shared<SparseMatrix>(out_level.size(), in_level.size());
      p->setFromTriplets(trip.begin(), trip.end());
      y = ad::matmul(ad::spmm(p, h), gnn.weights[l - 1]);
    } else {
      auto st = std::make_shared<LayerStructure>();
      st->begin.push_back(0);
      for (NodeId v : out_level) {
        for (NodeId u : graph.neighbors(v)) st->cols.push_back(position(in_level, u));
        st->begin.push_back(static_cast<int>(st->cols.size()));
        st->self.push_back(position(in_level, v));
      }
      y = gat_aggregate(ad::matmul(h, gnn.weights[l - 1]), gnn.attn_src[l - 1], gnn.attn_dst[l - 1], st);
    }
    y = ad::add_row(y, gnn.biases[l - 1]);
    h = l < L ? ad::leaky_relu(y, gnn.slope) : y;
  }

  const auto& targets = levels[L];
  bool identity = targets.size() == nodes.size() && std::equal(targets.begin(), targets.end(), nodes.begin());
  if (identity) return h;
  std::vector<int> pick;
  pick.reserve(nodes.size());
  for (NodeId v : nodes) pick.push_back(position(targets, v));
  return ad::spmm(ad::selection_matrix(nodes.size(), targets.size(), pick), h);
}

Matrix gnn_forward(const GnnParams& gnn, const GraphSnapshot& graph, std::span<const NodeId> nodes) {
  ad::Tape tape;
  auto bound = bind_gnn(tape, gnn, false);
  return gnn_forward(tape, bound, graph, nodes).value();
}

ad::Var mlp_forward(ad::Tape& tape, const BoundMlp& mlp, ad::Var input) {
  (void)tape;
  if (mlp.weights.empty()) throw ValidationError("mlp_forward: encoder has no layers");
  if (input.cols() != mlp.weights.front().rows())
    throw ValidationError("mlp_forward: input dimension " + std::to_string(input.cols()) +
                          " does not match encoder input " + std::to_string(mlp.weights.front().rows()));
  ad::Var h = input;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    h = ad::add_row(ad::matmul(h, mlp.weights[l]), mlp.biases[l]);
    if (l + 1 < mlp.weights.size()) h = ad::leaky_relu(h, mlp.slope);
  }
  return h;
}

Matrix mlp_forward(const MlpParams& mlp, const Matrix& input) {
  ad::Tape tape;
  BoundMlp b;
  b.slope = mlp.slope;
  for (const auto& layer : mlp.layers) {
    b.weights.push_back(tape.constant(layer.weight));
    b.biases.push_back(tape.constant(layer.bias));
  }
  return mlp_forward(tape, b, tape.constant(input)).value();
}

GradientSet compute_gradients(ad::Tape& tape, const BoundModel& bound, const Model& model, ad::Var loss) {
  tape.backward(loss);
  GradientSet g;
  g.names = model.parameter_names();
  for (const ad::Var& p : bound.params) g.tensors.push_back(tape.grad(p));
  for (const Matrix& m : g.tensors)
    if (!m.allFinite()) throw NumericError("compute_gradients: non-finite gradient");
  return g;
}

void apply_update(Model& model, const GradientSet& grads, double lr, double weight_decay) {
  auto params = model.parameters();
  auto names = model.parameter_names();
  if (grads.tensors.size() != params.size()) throw ValidationError("apply_update: gradient set does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads.tensors[i].rows() != params[i]->rows() || grads.tensors[i].cols() != params[i]->cols())
      throw ValidationError("apply_update: shape mismatch for " + names[i]);
  }
  std::vector<Matrix> updated;
  updated.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix next = *params[i] - lr * (grads.tensors[i] + weight_decay * *params[i]);
    if (!next.allFinite()) throw NumericError("apply_update: non-finite value in " + names[i]);
    updated.push_back(std::move(next));
  }
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = std::move(updated[i]);
}

}  // namespace gotham
