#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gotham/tape.hpp"

namespace gotham {

struct LossWeights {
  double alpha1 = 1.0;   // clustering
  double alpha2 = 0.25;  // segregation
  double alpha3 = 1.0;   // semantic alignment
  double alpha4 = 1.0;   // distillation
  double lambda1 = 1.0;  // embedding distillation
  double lambda2 = 1.0;  // descriptor alignment
  double gamma = 0.01;
  double epsilon_log = 1e-8;

  void validate() const;
};

enum class ClusterVariant { mean_hinge, self_normalized };

// `embeddings` has one row per support sample; owner[i] is the row of its class
// prototype in `prototypes`. With h_i = max(||e_i - P_owner|| - gamma, 0):
//   mean_hinge:      (1/|C|) sum_j (1/n_j) sum_{i in j} h_i
//   self_normalized: (1/|C|) sum_j sum_{i in j} h_i^2 / sum_{k in j} h_k   (0 if all h are 0)
// where C is the set of classes that own at least one sample.
ad::Var loss_cluster(ad::Tape& tape, ad::Var embeddings, const std::vector<int>& owner, ad::Var prototypes,
                     double gamma, ClusterVariant variant = ClusterVariant::mean_hinge);

// -(1/n) sum over ordered pairs j != p of log max(||P_j - P_p||, eps). Fewer than
// two prototypes give 0 and set *warned when provided.
ad::Var loss_seg(ad::Tape& tape, ad::Var prototypes, double epsilon_log, bool* warned = nullptr);

// sum_j ||encoded_j - prototype_j|| over row-aligned matrices.
ad::Var loss_sem(ad::Tape& tape, ad::Var encoded, ad::Var prototypes);

// Mean ||teacher_i - student_i||; 0 for an empty node set.
ad::Var loss_kd_emb(ad::Tape& tape, const Matrix& teacher, ad::Var student);

// Mean (1 - cos(teacher_j, student_j)); a pair where either norm is below
// epsilon_log contributes exactly 1. 0 for an empty class set.
ad::Var loss_kd_align(ad::Tape& tape, const Matrix& teacher, ad::Var student, double epsilon_log);

struct LossParts {
  ad::Var cls, seg, sem, emb, align;  // invalid parts count as 0
};

// alpha1 cls + alpha2 seg + alpha3 sem; the sem term is skipped when !use_sem.
ad::Var loss_train_total(ad::Tape& tape, const LossParts& parts, const LossWeights& w, bool use_sem);
// train total + alpha4 (lambda1 emb + lambda2 align); align is skipped when !use_sem.
ad::Var loss_finetune_total(ad::Tape& tape, const LossParts& parts, const LossWeights& w, bool use_sem);

// Value-only wrappers.
double loss_cluster(const Matrix& embeddings, const std::vector<int>& owner, const Matrix& prototypes, double gamma,
                    ClusterVariant variant = ClusterVariant::mean_hinge);
double loss_seg(const Matrix& prototypes, double epsilon_log, bool* warned = nullptr);
double loss_sem(const Matrix& encoded, const Matrix& prototypes);
double loss_kd_emb(const Matrix& teacher, const Matrix& student);
double loss_kd_align(const Matrix& teacher, const Matrix& student, double epsilon_log);

struct LossValues {
  double cls = 0, seg = 0, sem = 0, emb = 0, align = 0;
};
double loss_train_total(const LossValues& v, const LossWeights& w, bool use_sem);
double loss_finetune_total(const LossValues& v, const LossWeights& w, bool use_sem);

// Per-class sums of the un-squared normalised weights h_i / sum_k h_k. Each is
// 1 whenever some hinge in the class is active, so this form carries no
// gradient; kept for regression tests.
std::vector<double> literal_cluster_class_sums(const Matrix& embeddings, const std::vector<int>& owner,
                                               const Matrix& prototypes, double gamma);

// One JSON object per line: {step, session, l_cls, l_seg, l_sem, l_emb, l_align, total}.
struct LossRecord {
  std::size_t step = 0;
  std::size_t session = 0;
  LossValues parts;
  double total = 0;
};
void write_loss_record(std::ostream& out, const LossRecord& r);

std::string to_string(ClusterVariant v);
ClusterVariant cluster_variant_from_string(const std::string& s);

}  // namespace gotham
