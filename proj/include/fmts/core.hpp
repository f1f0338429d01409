#ifndef FMTS_CORE_HPP
#define FMTS_CORE_HPP

/** @file
 * Time-series containers, lag embedding and autocovariance machinery shared
 * by every estimator in the library.
 */

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fmts/error.hpp"

namespace fmts {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A finite univariate series y_1..y_N with N >= 2.
class TimeSeries {
 public:
  explicit TimeSeries(std::vector<double> values) : values_(std::move(values)) {
    require(values_.size() >= 2, ErrorCode::InvalidArgument,
            "a time series needs at least two observations");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      require(std::isfinite(values_[i]), ErrorCode::InvalidArgument,
              "non-finite value at position " + std::to_string(i));
    }
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  double mean() const noexcept {
    double sum = 0.0;
    for (double v : values_) sum += v;
    return sum / static_cast<double>(values_.size());
  }

 private:
  std::vector<double> values_;
};

/// Response / lag-vector pairs (y_t, Y_{t-1}) for t = p+1..N.
///
/// Row r corresponds to time t = p + 1 + r (1-based) and holds
/// predictors(r, j) = y_{t-j-1}. When centered, `offset` records the column
/// means that were removed from the predictors.
struct EmbeddedSeries {
  int p = 0;
  Vector responses;
  Matrix predictors;
  std::vector<std::size_t> t_index;
  Eigen::RowVectorXd offset;

  Eigen::Index rows() const noexcept { return responses.size(); }
};

inline EmbeddedSeries embed(const TimeSeries& series, int p) {
  require(p >= 1, ErrorCode::InvalidArgument, "lag order must be positive");
  const auto n_total = series.size();
  if (static_cast<std::size_t>(p) >= n_total) {
    throw Error(ErrorCode::LagTooLarge,
                "lag order " + std::to_string(p) + " needs more than " +
                    std::to_string(n_total) + " observations");
  }
  const auto rows = static_cast<Eigen::Index>(n_total) - p;
  EmbeddedSeries out;
  out.p = p;
  out.responses.resize(rows);
  out.predictors.resize(rows, p);
  out.t_index.resize(static_cast<std::size_t>(rows));
  out.offset = Eigen::RowVectorXd::Zero(p);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto t = static_cast<std::size_t>(r + p);  // 0-based time of y_t
    out.responses(r) = series[t];
    for (int j = 0; j < p; ++j) out.predictors(r, j) = series[t - j - 1];
    out.t_index[static_cast<std::size_t>(r)] = t + 1;
  }
  return out;
}

/// Subtracts the predictor column means; responses are untouched.
inline EmbeddedSeries center(const EmbeddedSeries& embedded) {
  EmbeddedSeries out = embedded;
  if (embedded.rows() == 0) return out;
  const Eigen::RowVectorXd mean = embedded.predictors.colwise().mean();
  out.predictors.rowwise() -= mean;
  out.offset = embedded.offset + mean;
  return out;
}

/// Sample autocovariances of the mean-centered series, lags 0..max_lag.
class AutocovarianceTable {
 public:
  explicit AutocovarianceTable(std::vector<double> gammas)
      : gammas_(std::move(gammas)) {}

  int max_lag() const noexcept { return static_cast<int>(gammas_.size()) - 1; }

  /// gamma(h) with gamma(-h) = gamma(h).
  double at(int h) const {
    const int lag = h < 0 ? -h : h;
    require(lag <= max_lag(), ErrorCode::LagTooLarge,
            "autocovariance at lag " + std::to_string(lag) +
                " not in table (max " + std::to_string(max_lag()) + ")");
    return gammas_[static_cast<std::size_t>(lag)];
  }

  std::span<const double> values() const noexcept { return gammas_; }

 private:
  std::vector<double> gammas_;
};

inline AutocovarianceTable autocovariance(const TimeSeries& series, int max_lag) {
  const auto n = series.size();
  require(max_lag >= 0, ErrorCode::InvalidArgument, "max_lag must be >= 0");
  if (static_cast<std::size_t>(max_lag) >= n) {
    throw Error(ErrorCode::LagTooLarge, "max_lag must be below the series length");
  }
  const double mean = series.mean();
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = series[i] - mean;
  std::vector<double> gammas(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (int h = 0; h <= max_lag; ++h) {
    double sum = 0.0;
    for (std::size_t t = static_cast<std::size_t>(h); t < n; ++t) {
      sum += centered[t] * centered[t - static_cast<std::size_t>(h)];
    }
    gammas[static_cast<std::size_t>(h)] = sum / static_cast<double>(n - h);
  }
  return AutocovarianceTable(std::move(gammas));
}

/// p x p Toeplitz matrix with entries gamma(j - i).
inline Matrix toeplitz(const AutocovarianceTable& table, int p) {
  Matrix m(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) m(i, j) = table.at(j - i);
  return m;
}

/// Ratio of the extreme eigenvalues of a symmetric matrix; infinity when the
/// smallest is not positive.
inline double condition_estimate(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric, Eigen::EigenvaluesOnly);
  const Vector& ev = solver.eigenvalues();
  if (ev.size() == 0) return 1.0;
  const double lo = ev(0);
  const double hi = ev(ev.size() - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

/// Cholesky factorization of a symmetric positive-definite matrix. On failure
/// a ridge of 1e-8 * trace / p is added to the diagonal (growing tenfold until
/// the factorization succeeds).
class SpdFactor {
 public:
  explicit SpdFactor(const Matrix& a) {
    llt_.compute(a);
    if (llt_.info() == Eigen::Success && positive_pivots()) return;
    const double base =
        std::max(std::abs(a.trace()) / static_cast<double>(a.rows()), 1e-300);
    for (double scale = 1e-8; scale <= 1e2; scale *= 10.0) {
      ridge_ = scale * base;
      Matrix shifted = a;
      shifted.diagonal().array() += ridge_;
      llt_.compute(shifted);
      if (llt_.info() == Eigen::Success && positive_pivots()) return;
    }
    throw Error(ErrorCode::SingularSigma, "matrix is not positive definite");
  }

  Vector solve(const Vector& b) const { return llt_.solve(b); }
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }
  double ridge() const noexcept { return ridge_; }

  /// log det of the (possibly ridged) matrix.
  double log_det() const {
    const Matrix& l = llt_.matrixLLT();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) sum += std::log(l(i, i));
    return 2.0 * sum;
  }

 private:
  bool positive_pivots() const {
    const Matrix& l = llt_.matrixLLT();
    for (Eigen::Index i = 0; i < l.rows(); ++i)
      if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) return false;
    return true;
  }

  Eigen::LLT<Matrix> llt_;
  double ridge_ = 0.0;
};

/// Sigma, Sigma_k and the conditional covariance
/// Sigma_bar = Sigma - Sigma_k Sigma^{-1} Sigma_k^T.
struct CovarianceSet {
  int p = 0;
  int k = 0;
  Matrix sigma;
  Matrix sigma_k;
  Matrix sigma_bar;
};

inline constexpr double kDefaultConditionCap = 1e12;

inline CovarianceSet covariance_set(const AutocovarianceTable& table, int p, int k,
                                    double condition_cap = kDefaultConditionCap) {
  require(p >= 1, ErrorCode::InvalidArgument, "p must be positive");
  if (k <= 0) {
    throw Error(ErrorCode::DegenerateConditional,
                "conditional covariance needs a positive lag separation k");
  }
  if (table.max_lag() < k + p - 1) {
    throw Error(ErrorCode::LagTooLarge, "autocovariance table does not reach lag k+p-1");
  }
  CovarianceSet out;
  out.p = p;
  out.k = k;
  out.sigma = toeplitz(table, p);
  out.sigma_k.resize(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) out.sigma_k(i, j) = table.at(k + j - i);
  if (!(condition_estimate(out.sigma) <= condition_cap)) {
    throw Error(ErrorCode::SingularSigma,
                "lag covariance matrix is numerically singular");
  }
  const SpdFactor factor(out.sigma);
  Matrix bar = out.sigma - out.sigma_k * factor.solve(Matrix(out.sigma_k.transpose()));
  out.sigma_bar = 0.5 * (bar + bar.transpose());
  return out;
}

}  // namespace fmts

#endif  // FMTS_CORE_HPP
