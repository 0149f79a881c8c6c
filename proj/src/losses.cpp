#include "gotham/losses.hpp"

#include <cmath>
#include <map>
#include <ostream>

#include <json.hpp>

namespace gotham {

namespace {

ad::Var zero(ad::Tape& tape) { return tape.constant(Matrix::Zero(1, 1)); }

// Rows of a |C| x n matrix summing, per distinct owner, the samples it owns with
// the given per-class weight function.
template <typename WeightFn>
std::shared_ptr<const SparseMatrix> group_matrix(const std::vector<int>& owner, WeightFn weight,
                                                 std::size_t& num_groups) {
  std::map<int, std::vector<int>> members;
  for (std::size_t i = 0; i < owner.size(); ++i) members[owner[i]].push_back(static_cast<int>(i));
  std::vector<Eigen::Triplet<double>> trip;
  int r = 0;
  for (const auto& [o, rows] : members) {
    const double w = weight(rows.size());
    for (int i : rows) trip.emplace_back(r, i, w);
    ++r;
  }
  num_groups = members.size();
  auto m = std::make_shared<SparseMatrix>(members.size(), owner.size());
  m->setFromTriplets(trip.begin(), trip.end());
  return m;
}

ad::Var hinge_distances(ad::Var embeddings, const std::vector<int>& owner, ad::Var prototypes, double gamma) {
  if (static_cast<std::size_t>(embeddings.rows()) != owner.size())
    throw ValidationError("loss_cluster: owner list does not match the embedding rows");
  if (embeddings.cols() != prototypes.cols())
    throw ValidationError("loss_cluster: embedding dimension " + std::to_string(embeddings.cols()) +
                          " does not match prototype dimension " + std::to_string(prototypes.cols()));
  for (int o : owner)
    if (o < 0 || o >= prototypes.rows()) throw ValidationError("loss_cluster: owner index out of range");
  auto pick = ad::selection_matrix(owner.size(), prototypes.rows(), owner);
  return ad::hinge(ad::row_norms(ad::sub(embeddings, ad::spmm(pick, prototypes))), gamma);
}

void check_rows(const char* what, Eigen::Index a, Eigen::Index b) {
  if (a != b)
    throw ValidationError(std::string(what) + ": row counts differ (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
}

ad::Var weighted(ad::Var acc, ad::Var part, double w) {
  if (!part.valid() || w == 0.0) return acc;
  ad::Var term = w == 1.0 ? part : ad::scale(part, w);
  return acc.valid() ? ad::add(acc, term) : term;
}

double value_of(ad::Var v) { return v.scalar(); }

}  // namespace

void LossWeights::validate() const {
  for (double a : {alpha1, alpha2, alpha3, alpha4, lambda1, lambda2})
    if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("loss weights must be finite and nonnegative");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be finite and nonnegative");
  if (!(epsilon_log > 0.0)) throw ValidationError("epsilon_log must be positive");
}

ad::Var loss_cluster(ad::Tape& tape, ad::Var embeddings, const std::vector<int>& owner, ad::Var prototypes,
                     double gamma, ClusterVariant variant) {
  if (owner.empty()) return zero(tape);
  const ad::Var h = hinge_distances(embeddings, owner, prototypes, gamma);
  std::size_t groups = 0;
  if (variant == ClusterVariant::mean_hinge) {
    auto g = group_matrix(owner, [](std::size_t n) { return 1.0 / static_cast<double>(n); }, groups);
    return ad::scale(ad::sum(ad::spmm(g, h)), 1.0 / static_cast<double>(groups));
  }
  auto g = group_matrix(owner, [](std::size_t) { return 1.0; }, groups);
  const ad::Var ratio = ad::safe_div(ad::spmm(g, ad::square(h)), ad::spmm(g, h));
  return ad::scale(ad::sum(ratio), 1.0 / static_cast<double>(groups));
}

ad::Var loss_seg(ad::Tape& tape, ad::Var prototypes, double epsilon_log, bool* warned) {
  const auto n = static_cast<std::size_t>(prototypes.rows());
  if (warned) *warned = n < 2;
  if (n < 2) return zero(tape);
  std::vector<int> first, second;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < n; ++p)
      if (j != p) {
        first.push_back(static_cast<int>(j));
        second.push_back(static_cast<int>(p));
      }
  const ad::Var diff = ad::sub(ad::spmm(ad::selection_matrix(first.size(), n, first), prototypes),
                               ad::spmm(ad::selection_matrix(second.size(), n, second), prototypes));
  return ad::scale(ad::sum(ad::log_clamped(ad::row_norms(diff), epsilon_log)), -1.0 / static_cast<double>(n));
}

ad::Var loss_sem(ad::Tape& tape, ad::Var encoded, ad::Var prototypes) {
  check_rows("loss_sem", encoded.rows(), prototypes.rows());
  if (encoded.rows() == 0) return zero(tape);
  return ad::sum(ad::row_norms(ad::sub(encoded, prototypes)));
}

ad::Var loss_kd_emb(ad::Tape& tape, const Matrix& teacher, ad::Var student) {
  check_rows("loss_kd_emb", teacher.rows(), student.rows());
  if (teacher.rows() == 0) return zero(tape);
  if (teacher.cols() != student.cols()) throw ValidationError("loss_kd_emb: teacher and student dimensions differ");
  const ad::Var d = ad::row_norms(ad::sub(tape.constant(teacher), student));
  return ad::scale(ad::sum(d), 1.0 / static_cast<double>(teacher.rows()));
}

ad::Var loss_kd_align(ad::Tape& tape, const Matrix& teacher, ad::Var student, double epsilon_log) {
  check_rows("loss_kd_align", teacher.rows(), student.rows());
  const auto n = static_cast<std::size_t>(teacher.rows());
  if (n == 0) return zero(tape);
  if (teacher.cols() != student.cols()) throw ValidationError("loss_kd_align: teacher and student dimensions differ");
  const Matrix& s = student.value();
  std::vector<int> keep;
  for (std::size_t j = 0; j < n; ++j)
    if (teacher.row(j).norm() >= epsilon_log && s.row(j).norm() >= epsilon_log) keep.push_back(static_cast<int>(j));
  const double guarded = static_cast<double>(n - keep.size());
  if (keep.empty()) return tape.constant(Matrix::Constant(1, 1, guarded / static_cast<double>(n)));

  Matrix t(static_cast<Eigen::Index>(keep.size()), teacher.cols());
  Matrix tn(static_cast<Eigen::Index>(keep.size()), 1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    t.row(k) = teacher.row(keep[k]);
    tn(k, 0) = teacher.row(keep[k]).norm();
  }
  const ad::Var sk = ad::spmm(ad::selection_matrix(keep.size(), n, keep), student);
  const ad::Var cos =
      ad::div(ad::row_dot(tape.constant(std::move(t)), sk), ad::mul(ad::row_norms(sk), tape.constant(std::move(tn))));
  const double inv = 1.0 / static_cast<double>(n);
  return ad::add_scalar(ad::scale(ad::sum(cos), -inv), (guarded + static_cast<double>(keep.size())) * inv);
}

ad::Var loss_train_total(ad::Tape& tape, const LossParts& parts, const LossWeights& w, bool use_sem) {
  ad::Var acc;
  acc = weighted(acc, parts.cls, w.alpha1);
  acc = weighted(acc, parts.seg, w.alpha2);
  if (use_sem) acc = weighted(acc, parts.sem, w.alpha3);
  return acc.valid() ? acc : zero(tape);
}

ad::Var loss_finetune_total(ad::Tape& tape, const LossParts& parts, const LossWeights& w, bool use_sem) {
  ad::Var acc = loss_train_total(tape, parts, w, use_sem);
  acc = weighted(acc, parts.emb, w.alpha4 * w.lambda1);
  if (use_sem) acc = weighted(acc, parts.align, w.alpha4 * w.lambda2);
  return acc;
}

double loss_cluster(const Matrix& embeddings, const std::vector<int>& owner, const Matrix& prototypes, double gamma,
                    ClusterVariant variant) {
  ad::Tape tape;
  return value_of(loss_cluster(tape, tape.constant(embeddings), owner, tape.constant(prototypes), gamma, variant));
}

double loss_seg(const Matrix& prototypes, double epsilon_log, bool* warned) {
  ad::Tape tape;
  return value_of(loss_seg(tape, tape.constant(prototypes), epsilon_log, warned));
}

double loss_sem(const Matrix& encoded, const Matrix& prototypes) {
  ad::Tape tape;
  return value_of(loss_sem(tape, tape.constant(encoded), tape.constant(prototypes)));
}

double loss_kd_emb(const Matrix& teacher, const Matrix& student) {
  ad::Tape tape;
  return value_of(loss_kd_emb(tape, teacher, tape.constant(student)));
}

double loss_kd_align(const Matrix& teacher, const Matrix& student, double epsilon_log) {
  ad::Tape tape;
  return value_of(loss_kd_align(tape, teacher, tape.constant(student), epsilon_log));
}

double loss_train_total(const LossValues& v, const LossWeights& w, bool use_sem) {
  double total = w.alpha1 * v.cls + w.alpha2 * v.seg;
  if (use_sem) total += w.alpha3 * v.sem;
  return total;
}

double loss_finetune_total(const LossValues& v, const LossWeights& w, bool use_sem) {
  double kd = w.lambda1 * v.emb;
  if (use_sem) kd += w.lambda2 * v.align;
  return loss_train_total(v, w, use_sem) + w.alpha4 * kd;
}

std::vector<double> literal_cluster_class_sums(const Matrix& embeddings, const std::vector<int>& owner,
                                               const Matrix& prototypes, double gamma) {
  ad::Tape tape;
  const Matrix h = hinge_distances(tape.constant(embeddings), owner, tape.constant(prototypes), gamma).value();
  std::map<int, std::vector<double>> per_class;
  for (std::size_t i = 0; i < owner.size(); ++i) per_class[owner[i]].push_back(h(i, 0));
  std::vector<double> out;
  for (const auto& [o, hs] : per_class) {
    double denom = 0;
    for (double x : hs) denom += x;
    double s = 0;
    if (denom > 0)
      for (double x : hs) s += x / denom;
    out.push_back(s);
  }
  return out;
}

void write_loss_record(std::ostream& out, const LossRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["session"] = r.session;
  j["l_cls"] = r.parts.cls;
  j["l_seg"] = r.parts.seg;
  j["l_sem"] = r.parts.sem;
  j["l_emb"] = r.parts.emb;
  j["l_align"] = r.parts.align;
  j["total"] = r.total;
  out << j.dump() << '\n';
}

std::string to_string(ClusterVariant v) { return v == ClusterVariant::self_normalized ? "self_normalized" : "mean_hinge"; }

ClusterVariant cluster_variant_from_string(const std::string& s) {
  if (s == "mean_hinge") return ClusterVariant::mean_hinge;
  if (s == "self_normalized") return ClusterVariant::self_normalized;
  throw ValidationError("unknown cluster variant '" + s + "' (expected mean_hinge or self_normalized)");
}

}  // namespace gotham
