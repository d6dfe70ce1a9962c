#include "readtrace/analytics/svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "readtrace/analytics/auc.hpp"

namespace readtrace::analytics {

Standardizer Standardizer::fit(const RowMatrix& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean();
  s.scale = ((x.rowwise() - s.mean).array().square().colwise().sum() / std::max(1.0, n - 1)).sqrt();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
  }
  return s;
}

RowMatrix Standardizer::apply(const RowMatrix& x) const {
  return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

RowMatrix augment(const RowMatrix& x) {
  RowMatrix xa(x.rows(), x.cols() + 1);
  xa.leftCols(x.cols()) = x;
  xa.col(x.cols()).setOnes();
  return xa;
}

LinearSvm LinearSvm::train(const RowMatrix& x, const Eigen::VectorXd& y, const SvmOptions& options,
                           const Eigen::VectorXd* warmAlpha) {
  return trainAugmented(augment(x), y, options, warmAlpha);
}

LinearSvm LinearSvm::trainAugmented(const RowMatrix& xa, const Eigen::VectorXd& y, const SvmOptions& options,
                                    const Eigen::VectorXd* warmAlpha) {
  const Eigen::Index n = xa.rows();
  if (y.size() != n) throw AnalyticsError("label count does not match rows");
  if (!(options.C > 0)) throw AnalyticsError("C must be positive");
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(n, options.C);
  LinearSvm m;
  m.alpha_ = Eigen::VectorXd::Zero(n);
  if (warmAlpha) {
    if (warmAlpha->size() != n) throw AnalyticsError("warm start size does not match rows");
    m.alpha_ = warmAlpha->cwiseMax(0.0).cwiseMin(upper);
  }
  m.w_ = xa.transpose() * (m.alpha_.array() * y.array()).matrix();
  const Eigen::VectorXd qd = xa.rowwise().squaredNorm();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);

  // Dual coordinate descent with shrinking: a variable stuck at a bound whose
  // gradient points outside the previous epoch's violation range leaves the
  // active set until the shrunk problem converges, then everything is rechecked.
  std::size_t active = order.size();
  double pgMaxOld = INFINITY;
  double pgMinOld = -INFINITY;
  m.epochs_ = 0;
  while (m.epochs_ < options.maxEpochs) {
    // Fisher-Yates with a plain modulus keeps the order identical across standard libraries.
    for (std::size_t i = active; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double pgMax = -INFINITY;
    double pgMin = INFINITY;
    for (std::size_t s = 0; s < active;) {
      const auto i = order[s];
      const double g = y(i) * xa.row(i).dot(m.w_) - 1.0;
      double pg = 0;
      if (m.alpha_(i) <= 0) {
        if (g > pgMaxOld) {
          std::swap(order[s], order[--active]);
          continue;
        }
        pg = std::min(g, 0.0);
      } else if (m.alpha_(i) >= upper(i)) {
        if (g < pgMinOld) {
          std::swap(order[s], order[--active]);
          continue;
        }
        pg = std::max(g, 0.0);
      } else {
        pg = g;
      }
      pgMax = std::max(pgMax, pg);
      pgMin = std::min(pgMin, pg);
      if (std::abs(pg) > 1e-12 && qd(i) > 0) {
        const double old = m.alpha_(i);
        m.alpha_(i) = std::clamp(old - g / qd(i), 0.0, upper(i));
        m.w_.noalias() += ((m.alpha_(i) - old) * y(i)) * xa.row(i).transpose();
      }
      ++s;
    }
    ++m.epochs_;
    if (pgMax - pgMin < options.tolerance || active == 0) {
      if (active == order.size()) break;
      active = order.size();
      pgMaxOld = INFINITY;
      pgMinOld = -INFINITY;
      continue;
    }
    pgMaxOld = pgMax > 0 ? pgMax : INFINITY;
    pgMinOld = pgMin < 0 ? pgMin : -INFINITY;
  }
  return m;
}

double LinearSvm::decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const auto d = w_.size() - 1;
  return x.dot(w_.head(d)) + w_(d);
}

}  // namespace readtrace::analytics
