#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "readtrace/analytics/features.hpp"
#include "readtrace/analytics/svm.hpp"

namespace readtrace::analytics {

/// One answered question: the row of the analysis table.
struct AnswerRecord {
  std::string participant;
  int paper = 1;
  Group group = Group::A;
  int targetTopic = 1;
  int questionIndex = 1;
  bool correct = false;
  double answerTimeMs = 0;
  FeatureVector gaze;
};

/// A named subset of table columns. Categorical question data (paper, group,
/// topic) is one-hot encoded.
struct ClassifierSpec {
  std::string name;
  std::vector<std::string> columns;

  static ClassifierSpec eye();
  static ClassifierSpec topic();
  static ClassifierSpec all();
  static const std::vector<ClassifierSpec>& standard();  // Eye, Topic, All
};

const std::vector<std::string>& allColumns();
double columnValue(const AnswerRecord& r, const std::string& column);  // throws on unknown

RowMatrix designMatrix(std::span<const AnswerRecord> records, const ClassifierSpec& spec);
std::vector<int> correctnessLabels(std::span<const AnswerRecord> records);

/// Per-fold training data for leave-one-out, built once and reusable for any
/// labelling of the same rows (the scaling never sees labels).
class LooPlan {
 public:
  explicit LooPlan(const RowMatrix& x);

  std::size_t size() const { return folds_.size(); }
  const RowMatrix& fullAugmented() const { return full_; }
  const RowMatrix& foldTraining(std::size_t i) const { return folds_[i].training; }
  const Eigen::RowVectorXd& foldHeldOut(std::size_t i) const { return folds_[i].heldOut; }

 private:
  struct Fold {
    RowMatrix training;        // z-scored without row i, augmented
    Eigen::RowVectorXd heldOut;  // row i under the same scaling, augmented
  };
  RowMatrix full_;
  std::vector<Fold> folds_;
};

struct LooResult {
  double auc = 0;
  std::vector<double> scores;  // held-out decision values, one per record
};

/// For each record: train on the others (scaling fitted without it) and score
/// it by its signed decision value; AUC over the held-out scores.
LooResult trainEvaluateLOO(const LooPlan& plan, std::span<const int> labels, const SvmOptions& options = {});
LooResult trainEvaluateLOO(const RowMatrix& x, std::span<const int> labels, const SvmOptions& options = {});
LooResult trainEvaluateLOO(std::span<const AnswerRecord> records, const ClassifierSpec& spec,
                           const SvmOptions& options = {});

struct PermutationResult {
  double observedAuc = 0;
  double pValue = 0;  // #(permuted AUC > observed) / nPerm
  int nPerm = 0;
  int exceeded = 0;
  std::vector<double> permutedAucs;
};

/// p-value from re-running the classifier with labels shuffled across rows.
/// Permutation k draws from its own generator seeded from (seed, k), so the
/// result does not depend on `threads`.
PermutationResult permutationTest(const RowMatrix& x, std::span<const int> labels, int nPerm, std::uint64_t seed,
                                  const SvmOptions& options = {}, unsigned threads = 0);
PermutationResult permutationTest(std::span<const AnswerRecord> records, const ClassifierSpec& spec, int nPerm,
                                  std::uint64_t seed, const SvmOptions& options = {}, unsigned threads = 0);

/// p from an observed AUC and the permuted ones.
double permutationPValue(double observed, std::span<const double> permuted);

/// SplitMix64 step, used to derive independent seeds.
std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t stream);

/// Uniform index in [0, n) by rejection, identical across standard libraries.
template <typename Rng>
std::size_t uniformIndex(Rng& rng, std::size_t n) {
  const std::uint64_t range = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % range);
}

}  // namespace readtrace::analytics
