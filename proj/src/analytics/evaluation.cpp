#include "readtrace/analytics/evaluation.hpp"

#include <algorithm>
#include <random>
#include <thread>

#include "readtrace/analytics/auc.hpp"

namespace readtrace::analytics {

namespace {

const std::vector<std::string> kTopicColumns = {"paper1", "paper2", "paper3", "paper4", "groupA",
                                                "groupB", "topic1", "topic2", "topic3"};

Eigen::VectorXd signedLabels(std::span<const int> labels) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i)) = labels[i] != 0 ? 1.0 : -1.0;
  return y;
}

void requireBothClasses(std::span<const int> labels) {
  const auto pos = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  const auto neg = static_cast<std::ptrdiff_t>(labels.size()) - pos;
  if (pos < 2 || neg < 2) throw AnalyticsError("leave-one-out needs at least two records of each class");
}

}  // namespace

ClassifierSpec ClassifierSpec::eye() { return {"Eye", FeatureVector::names()}; }

ClassifierSpec ClassifierSpec::topic() { return {"Topic", kTopicColumns}; }

ClassifierSpec ClassifierSpec::all() { return {"All", allColumns()}; }

const std::vector<ClassifierSpec>& ClassifierSpec::standard() {
  static const std::vector<ClassifierSpec> kSpecs = {eye(), topic(), all()};
  return kSpecs;
}

const std::vector<std::string>& allColumns() {
  static const std::vector<std::string> kAll = [] {
    std::vector<std::string> cols = FeatureVector::names();
    cols.insert(cols.end(), kTopicColumns.begin(), kTopicColumns.end());
    cols.push_back("answerTimeMs");
    return cols;
  }();
  return kAll;
}

double columnValue(const AnswerRecord& r, const std::string& column) {
  const auto& names = FeatureVector::names();
  if (auto it = std::find(names.begin(), names.end(), column); it != names.end()) {
    return r.gaze.values()[static_cast<std::size_t>(it - names.begin())];
  }
  if (column == "answerTimeMs") return r.answerTimeMs;
  if (column.starts_with("paper") && column.size() == 6) return r.paper == column[5] - '0' ? 1.0 : 0.0;
  if (column == "groupA") return r.group == Group::A ? 1.0 : 0.0;
  if (column == "groupB") return r.group == Group::B ? 1.0 : 0.0;
  if (column.starts_with("topic") && column.size() == 6) return r.targetTopic == column[5] - '0' ? 1.0 : 0.0;
  throw AnalyticsError("unknown column '" + column + "'");
}

RowMatrix designMatrix(std::span<const AnswerRecord> records, const ClassifierSpec& spec) {
  RowMatrix x(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(spec.columns.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = 0; j < spec.columns.size(); ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = columnValue(records[i], spec.columns[j]);
    }
  }
  return x;
}

std::vector<int> correctnessLabels(std::span<const AnswerRecord> records) {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.correct ? 1 : 0);
  return out;
}

LooPlan::LooPlan(const RowMatrix& x) {
  const Eigen::Index n = x.rows();
  if (n < 3) throw AnalyticsError("leave-one-out needs at least three records");
  full_ = augment(Standardizer::fit(x).apply(x));
  folds_.resize(static_cast<std::size_t>(n));
  RowMatrix rest(n - 1, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) rest.topRows(i) = x.topRows(i);
    if (i < n - 1) rest.bottomRows(n - 1 - i) = x.bottomRows(n - 1 - i);
    const auto scaling = Standardizer::fit(rest);
    auto& fold = folds_[static_cast<std::size_t>(i)];
    fold.training = augment(scaling.apply(rest));
    fold.heldOut = augment(scaling.apply(x.row(i))).row(0);
  }
}

LooResult trainEvaluateLOO(const LooPlan& plan, std::span<const int> labels, const SvmOptions& options) {
  if (labels.size() != plan.size()) throw AnalyticsError("label count does not match rows");
  requireBothClasses(labels);
  const auto y = signedLabels(labels);
  const auto n = static_cast<Eigen::Index>(labels.size());

  // Every fold starts from zero: seeding it with the full-data solution leaks
  // the held-out record's influence into its own score.
  LooResult result;
  result.scores.resize(labels.size());
  Eigen::VectorXd yFold(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    yFold << y.head(i), y.tail(n - 1 - i);
    SvmOptions foldOptions = options;
    foldOptions.seed = mixSeed(options.seed, static_cast<std::uint64_t>(i));
    const auto model =
        LinearSvm::trainAugmented(plan.foldTraining(static_cast<std::size_t>(i)), yFold, foldOptions, nullptr);
    result.scores[static_cast<std::size_t>(i)] = plan.foldHeldOut(static_cast<std::size_t>(i)).dot(model.weights());
  }
  result.auc = computeAUC(result.scores, labels);
  return result;
}

LooResult trainEvaluateLOO(const RowMatrix& x, std::span<const int> labels, const SvmOptions& options) {
  return trainEvaluateLOO(LooPlan(x), labels, options);
}

LooResult trainEvaluateLOO(std::span<const AnswerRecord> records, const ClassifierSpec& spec,
                           const SvmOptions& options) {
  const auto labels = correctnessLabels(records);
  return trainEvaluateLOO(designMatrix(records, spec), labels, options);
}

std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double permutationPValue(double observed, std::span<const double> permuted) {
  if (permuted.empty()) throw AnalyticsError("need at least one permutation");
  const auto exceeded = std::count_if(permuted.begin(), permuted.end(), [&](double a) { return a > observed; });
  return static_cast<double>(exceeded) / static_cast<double>(permuted.size());
}

PermutationResult permutationTest(const RowMatrix& x, std::span<const int> labels, int nPerm, std::uint64_t seed,
                                  const SvmOptions& options, unsigned threads) {
  if (nPerm < 1) throw AnalyticsError("nPerm must be at least 1");
  const LooPlan plan(x);
  PermutationResult r;
  r.nPerm = nPerm;
  r.observedAuc = trainEvaluateLOO(plan, labels, options).auc;
  r.permutedAucs.assign(static_cast<std::size_t>(nPerm), 0.0);

  auto work = [&](unsigned worker, unsigned stride) {
    std::vector<int> shuffled(labels.begin(), labels.end());
    for (auto k = static_cast<std::size_t>(worker); k < r.permutedAucs.size(); k += stride) {
      std::copy(labels.begin(), labels.end(), shuffled.begin());
      std::mt19937_64 rng(mixSeed(seed, k));
      for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[uniformIndex(rng, i)]);
      r.permutedAucs[k] = trainEvaluateLOO(plan, shuffled, options).auc;
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(nPerm));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  r.pValue = permutationPValue(r.observedAuc, r.permutedAucs);
  r.exceeded = static_cast<int>(std::lround(r.pValue * nPerm));
  return r;
}

PermutationResult permutationTest(std::span<const AnswerRecord> records, const ClassifierSpec& spec, int nPerm,
                                  std::uint64_t seed, const SvmOptions& options, unsigned threads) {
  const auto labels = correctnessLabels(records);
  return permutationTest(designMatrix(records, spec), labels, nPerm, seed, options, threads);
}

}  // namespace readtrace::analytics
