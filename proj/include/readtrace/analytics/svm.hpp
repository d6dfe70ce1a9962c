#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace readtrace::analytics {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Column-wise z-scoring. Constant columns keep a unit scale (they centre to zero).
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const RowMatrix& x);
  RowMatrix apply(const RowMatrix& x) const;
};

struct SvmOptions {
  double C = 1.0;
  double tolerance = 0.1;  // on the projected-gradient spread
  int maxEpochs = 2000;
  std::uint64_t seed = 0x5eed;
};

/// Linear soft-margin SVM (hinge loss, L2 penalty) trained by dual coordinate
/// descent. The bias is learned as the weight of an appended constant feature.
class LinearSvm {
 public:
  /// `y` holds +1/-1. `warmAlpha`, when given, must have one entry per row.
  static LinearSvm train(const RowMatrix& x, const Eigen::VectorXd& y, const SvmOptions& options = {},
                         const Eigen::VectorXd* warmAlpha = nullptr);

  /// Signed decision value for one (unaugmented) feature row.
  double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

  const Eigen::VectorXd& weights() const { return w_; }  // last entry is the bias
  double bias() const { return w_(w_.size() - 1); }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  int epochs() const { return epochs_; }

  /// Trains on rows already carrying the constant column.
  static LinearSvm trainAugmented(const RowMatrix& xa, const Eigen::VectorXd& y, const SvmOptions& options,
                                  const Eigen::VectorXd* warmAlpha);

 private:
  Eigen::VectorXd w_;
  Eigen::VectorXd alpha_;
  int epochs_ = 0;
};

/// Appends the constant bias column.
RowMatrix augment(const RowMatrix& x);

}  // namespace readtrace::analytics
