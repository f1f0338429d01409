#ifndef FMTS_DENSITY_HPP
#define FMTS_DENSITY_HPP

/** @file
 * Densities and log-density gradients for lag vectors.
 *
 * Two backends sit behind GradientProvider: a product-Gaussian kernel density
 * estimate with Silverman-type per-dimension bandwidths, and a Gaussian model
 * whose covariances come from the sample autocovariances. Both follow the same
 * conditional decomposition for pairs of rows that share lags: the gradient of
 * log f(Y_{s-1} | Y_{t-1}) is the joint-window gradient with respect to the
 * leading p coordinates minus, on shared coordinates, the gradient of
 * log f(Y_{t-1}).
 */

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "fmts/core.hpp"
#include "fmts/parallel.hpp"

namespace fmts {

// ---------------------------------------------------------------------------
// Bandwidths and product-Gaussian KDE

struct Bandwidths {
  int r = 0;
  Eigen::Index n = 0;
  Vector a;
};

/// a_i = b_r s_i n^{-1/(4+r)}, b_r = (4/(r+2))^{1/(r+4)}. Rows of `points`
/// are observations.
inline Bandwidths bandwidths(const Matrix& points) {
  const Eigen::Index n = points.rows();
  const int r = static_cast<int>(points.cols());
  require(n >= 2, ErrorCode::InvalidArgument, "bandwidths need at least two points");
  require(r >= 1, ErrorCode::InvalidArgument, "bandwidths need a positive dimension");
  const double br = std::pow(4.0 / (r + 2.0), 1.0 / (r + 4.0));
  const double rate = std::pow(static_cast<double>(n), -1.0 / (4.0 + r));
  Bandwidths out;
  out.r = r;
  out.n = n;
  out.a.resize(r);
  for (int i = 0; i < r; ++i) {
    const auto col = points.col(i);
    const double mean = col.mean();
    const double ss = (col.array() - mean).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0) || !std::isfinite(sd)) {
      throw Error(ErrorCode::DegenerateCoordinate,
                  "coordinate " + std::to_string(i) + " has zero sample spread");
    }
    out.a(i) = br * sd * rate;
  }
  return out;
}

namespace detail {

inline void check_dims(const Matrix& points, const Vector& query, const Bandwidths& bw) {
  if (points.cols() != query.size() || bw.a.size() != query.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "query has dimension " + std::to_string(query.size()) +
                    " but points/bandwidths have " + std::to_string(points.cols()));
  }
}

/// Per-point log kernel exponents -0.5 * sum_i ((z_i - X_ji)/a_i)^2 with the
/// maximum, skipping `exclude` when set.
struct Exponents {
  Vector e;
  double max = -std::numeric_limits<double>::infinity();
};

inline Exponents exponents(const Matrix& points, const Vector& query, const Vector& a,
                           Eigen::Index exclude) {
  Exponents out;
  out.e.resize(points.rows());
  const Eigen::Index r = points.cols();
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    if (j == exclude) {
      out.e(j) = -std::numeric_limits<double>::infinity();
      continue;
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) {
      const double u = (query(i) - points(j, i)) / a(i);
      acc += u * u;
    }
    out.e(j) = -0.5 * acc;
    out.max = std::max(out.max, out.e(j));
  }
  return out;
}

}  // namespace detail

/// log f(z) for the product-Gaussian KDE; `exclude` drops one training row
/// (leave-one-out).
inline double kde_log_density(const Matrix& points, const Vector& query,
                              const Bandwidths& bw, Eigen::Index exclude = -1) {
  detail::check_dims(points, query, bw);
  const auto ex = detail::exponents(points, query, bw.a, exclude);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < points.rows(); ++j) sum += std::exp(ex.e(j) - ex.max);
  const double count =
      static_cast<double>(points.rows() - (exclude >= 0 && exclude < points.rows() ? 1 : 0));
  const double r = static_cast<double>(query.size());
  return ex.max + std::log(sum) - std::log(count) - bw.a.array().log().sum() -
         0.5 * r * std::log(2.0 * std::numbers::pi);
}

inline double kde_density(const Matrix& points, const Vector& query, const Bandwidths& bw) {
  return std::exp(kde_log_density(points, query, bw));
}

/// Gradient of log f_hat at `query`: coordinate i equals
/// (sum_j w_j X_ji / sum_j w_j - z_i) / a_i^2.
inline Vector kde_grad_log(const Matrix& points, const Vector& query, const Bandwidths& bw,
                           Eigen::Index exclude = -1) {
  detail::check_dims(points, query, bw);
  const auto ex = detail::exponents(points, query, bw.a, exclude);
  const Eigen::Index r = points.cols();
  Vector weighted = Vector::Zero(r);
  double total = 0.0;
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    if (j == exclude) continue;
    const double w = std::exp(ex.e(j) - ex.max);
    total += w;
    weighted += w * points.row(j).transpose();
  }
  Vector grad(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    grad(i) = (weighted(i) / total - query(i)) / (bw.a(i) * bw.a(i));
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Joint windows for pairs of overlapping lag vectors

/// Training windows of length p + k: row r (for embedding rows r = k..n-1)
/// is (Y_r, last k entries of Y_{r-k}), i.e. (y_{u-1}, ..., y_{u-p-k}) for the
/// time u of row r. Row index r - k of the result corresponds to the pair
/// (t, s) = (r - k, r).
inline Matrix joint_windows(const EmbeddedSeries& embedded, int k) {
  const int p = embedded.p;
  if (k <= 0 || k >= p) {
    throw Error(ErrorCode::InvalidPair, "joint windows need 0 < k < p");
  }
  const Eigen::Index n = embedded.rows();
  require(n > k, ErrorCode::InvalidArgument, "not enough rows for lag separation");
  Matrix w(n - k, p + k);
  for (Eigen::Index r = k; r < n; ++r) {
    w.row(r - k).head(p) = embedded.predictors.row(r);
    w.row(r - k).tail(k) = embedded.predictors.row(r - k).tail(k);
  }
  return w;
}

/// Stacked (p + k)-vector for the pair (t, s), k = s - t.
inline Vector stacked_window(const EmbeddedSeries& embedded, Eigen::Index t,
                             Eigen::Index s) {
  const int p = embedded.p;
  const auto k = s - t;
  if (k <= 0 || k >= p) throw Error(ErrorCode::InvalidPair, "stacked window needs 0 < s-t < p");
  Vector w(p + k);
  w.head(p) = embedded.predictors.row(s).transpose();
  w.tail(k) = embedded.predictors.row(t).tail(k).transpose();
  return w;
}

/// Shared-coordinate map: entry i of Y_{s-1} (0-based) equals entry i - k of
/// Y_{t-1} when i >= k, and is new otherwise.
inline std::optional<int> shared_coordinate(int i, int k) {
  if (i < k) return std::nullopt;
  return i - k;
}

/// A-part minus B-part: subtracts the marginal gradient of Y_{t-1} on the
/// coordinates of Y_{s-1} that also appear in Y_{t-1}.
inline Vector subtract_shared(const Vector& joint_head, const Vector& marginal_t, int k) {
  Vector g = joint_head;
  for (int i = 0; i < static_cast<int>(g.size()); ++i) {
    if (auto j = shared_coordinate(i, k)) g(i) -= marginal_t(*j);
  }
  return g;
}

inline Vector kde_grad_log_marginal(const EmbeddedSeries& embedded, const Bandwidths& bw,
                                    Eigen::Index t, bool leave_one_out = false) {
  return kde_grad_log(embedded.predictors, embedded.predictors.row(t).transpose(), bw,
                      leave_one_out ? t : -1);
}

/// Conditional gradient for 0 < k = s - t < p. `windows` must be
/// joint_windows(embedded, k) and `bw_joint` its bandwidths.
inline Vector kde_grad_log_conditional(const EmbeddedSeries& embedded, const Matrix& windows,
                                       const Bandwidths& bw_joint, const Bandwidths& bw_marg,
                                       Eigen::Index t, Eigen::Index s,
                                       bool leave_one_out = false) {
  const int p = embedded.p;
  const auto k = s - t;
  if (k <= 0 || k >= p) throw Error(ErrorCode::InvalidPair, "conditional gradient needs 0 < s-t < p");
  const Vector query = windows.row(t).transpose();
  const Vector a_part =
      kde_grad_log(windows, query, bw_joint, leave_one_out ? t : -1).head(p);
  const Vector marg = kde_grad_log_marginal(embedded, bw_marg, t, leave_one_out);
  return subtract_shared(a_part, marg, static_cast<int>(k));
}

inline Vector kde_grad_log_conditional(const EmbeddedSeries& embedded, const Bandwidths& bw_joint,
                                       const Bandwidths& bw_marg, Eigen::Index t,
                                       Eigen::Index s, bool leave_one_out = false) {
  const auto k = s - t;
  if (k <= 0 || k >= embedded.p) throw Error(ErrorCode::InvalidPair, "conditional gradient needs 0 < s-t < p");
  return kde_grad_log_conditional(embedded, joint_windows(embedded, static_cast<int>(k)),
                                  bw_joint, bw_marg, t, s, leave_one_out);
}

/// f(Y_{s-1} | Y_{t-1}) as joint / marginal for k < p, and the marginal
/// density of Y_{s-1} for k >= p.
inline double conditional_density(const EmbeddedSeries& embedded, const Bandwidths& bw_joint,
                                  const Bandwidths& bw_marg, Eigen::Index t, Eigen::Index s) {
  const auto k = s - t;
  require(k >= 1, ErrorCode::InvalidPair, "conditional density needs s > t");
  if (k >= embedded.p) {
    return kde_density(embedded.predictors, embedded.predictors.row(s).transpose(), bw_marg);
  }
  const Matrix windows = joint_windows(embedded, static_cast<int>(k));
  const double log_joint = kde_log_density(windows, windows.row(t).transpose(), bw_joint);
  const double log_marg =
      kde_log_density(embedded.predictors, embedded.predictors.row(t).transpose(), bw_marg);
  return std::exp(log_joint - log_marg);
}

// ---------------------------------------------------------------------------
// Gaussian-theory backend

/// Zero-mean Gaussian model for lag vectors with Toeplitz covariances built
/// from sample autocovariances: N(0, Sigma_p) for Y_{t-1} and N(0, Sigma_{p+k})
/// for the joint window of an overlapping pair.
class GaussianTheory {
 public:
  GaussianTheory(const AutocovarianceTable& table, int p,
                 double condition_cap = kDefaultConditionCap)
      : p_(p) {
    require(p >= 1, ErrorCode::InvalidArgument, "p must be positive");
    if (table.max_lag() < std::max(p - 1, 2 * p - 2)) {
      throw Error(ErrorCode::LagTooLarge, "autocovariance table too short for p");
    }
    const Matrix sigma = toeplitz(table, p);
    if (!(condition_estimate(sigma) <= condition_cap)) {
      throw Error(ErrorCode::SingularSigma, "lag covariance matrix is numerically singular");
    }
    factors_.emplace_back(sigma);
    for (int k = 1; k < p; ++k) factors_.emplace_back(toeplitz(table, p + k));
  }

  int p() const noexcept { return p_; }

  Vector marginal_gradient(const Vector& y) const { return -factors_[0].solve(y); }

  double marginal_log_density(const Vector& y) const { return log_density(0, y); }

  /// Gradient of log N(0, Sigma_{p+k}) at the stacked window.
  Vector joint_gradient(const Vector& window, int k) const {
    return -factor(k).solve(window);
  }

  double joint_log_density(const Vector& window, int k) const {
    return log_density(static_cast<std::size_t>(k), window);
  }

  Vector conditional_gradient(const Vector& window, const Vector& y_t, int k) const {
    const Vector head = joint_gradient(window, k).head(p_);
    return subtract_shared(head, marginal_gradient(y_t), k);
  }

  double conditional_log_density(const Vector& window, const Vector& y_t, int k) const {
    return joint_log_density(window, k) - marginal_log_density(y_t);
  }

 private:
  const SpdFactor& factor(int k) const {
    if (k <= 0 || k >= p_) throw Error(ErrorCode::InvalidPair, "joint Gaussian needs 0 < k < p");
    return factors_[static_cast<std::size_t>(k)];
  }

  double log_density(std::size_t index, const Vector& x) const {
    const SpdFactor& f = factors_[index];
    const double quad = x.dot(f.solve(x));
    return -0.5 * (quad + f.log_det() +
                   static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
  }

  int p_;
  std::vector<SpdFactor> factors_;
};

/// Gaussian-theory gradient for row t (marginal) or for the pair (t, s):
/// conditional when s - t < p, marginal of Y_{s-1} otherwise.
inline Vector gaussian_gradient(const GaussianTheory& model, const EmbeddedSeries& embedded,
                                Eigen::Index t, std::optional<Eigen::Index> s = std::nullopt) {
  if (!s) return model.marginal_gradient(embedded.predictors.row(t).transpose());
  const auto k = *s - t;
  require(k >= 1, ErrorCode::InvalidPair, "pair gradient needs s > t");
  if (k >= embedded.p) return model.marginal_gradient(embedded.predictors.row(*s).transpose());
  return model.conditional_gradient(stacked_window(embedded, t, *s),
                                    embedded.predictors.row(t).transpose(),
                                    static_cast<int>(k));
}

// ---------------------------------------------------------------------------
// GradientProvider

enum class Backend { gaussian, kde };

inline std::string_view to_string(Backend b) noexcept {
  return b == Backend::gaussian ? "gaussian" : "kde";
}

struct ProviderOptions {
  Backend backend = Backend::gaussian;
  /// Drop the evaluation point from KDE sums.
  bool leave_one_out = false;
  double condition_cap = kDefaultConditionCap;
};

/// Precomputed gradients and densities for every row and every overlapping
/// pair of a centered embedding. Read-only after construction.
class GradientProvider {
 public:
  /// `series` is the series the embedding was built from; the Gaussian
  /// backend reads its autocovariances.
  static GradientProvider build(const TimeSeries& series, const EmbeddedSeries& centered,
                                const ProviderOptions& options = {}) {
    GradientProvider out;
    out.backend_ = options.backend;
    out.p_ = centered.p;
    const Eigen::Index n = centered.rows();
    require(n >= 2, ErrorCode::InvalidArgument, "gradient provider needs at least two rows");
    out.marginal_.resize(static_cast<std::size_t>(n));
    out.marginal_density_.resize(static_cast<std::size_t>(n));
    const int p = centered.p;
    const int kmax = static_cast<int>(std::min<Eigen::Index>(p - 1, n - 1));
    out.conditional_.assign(static_cast<std::size_t>(std::max(kmax, 0)), {});
    out.conditional_density_.assign(static_cast<std::size_t>(std::max(kmax, 0)), {});

    if (options.backend == Backend::gaussian) {
      const auto table = autocovariance(series, std::max(p - 1, 2 * p - 2));
      const GaussianTheory model(table, p, options.condition_cap);
      for (Eigen::Index t = 0; t < n; ++t) {
        const Vector y = centered.predictors.row(t).transpose();
        out.marginal_[static_cast<std::size_t>(t)] = model.marginal_gradient(y);
        out.marginal_density_[static_cast<std::size_t>(t)] =
            std::exp(model.marginal_log_density(y));
      }
      for (int k = 1; k <= kmax; ++k) {
        auto& grads = out.conditional_[static_cast<std::size_t>(k - 1)];
        auto& dens = out.conditional_density_[static_cast<std::size_t>(k - 1)];
        grads.resize(static_cast<std::size_t>(n - k));
        dens.resize(static_cast<std::size_t>(n - k));
        for (Eigen::Index t = 0; t + k < n; ++t) {
          const Vector w = stacked_window(centered, t, t + k);
          const Vector y = centered.predictors.row(t).transpose();
          grads[static_cast<std::size_t>(t)] = model.conditional_gradient(w, y, k);
          dens[static_cast<std::size_t>(t)] = std::exp(model.conditional_log_density(w, y, k));
        }
      }
    } else {
      require(n - kmax >= 2, ErrorCode::LagTooLarge,
              "KDE backend needs at least two joint windows at lag " + std::to_string(kmax) +
                  "; have " + std::to_string(n - kmax));
      const bool loo = options.leave_one_out;
      const Bandwidths bw_marg = bandwidths(centered.predictors);
      out.bandwidths_.push_back(bw_marg);
      std::vector<double> log_marg(static_cast<std::size_t>(n));
      parallel_for(static_cast<std::size_t>(n), [&](std::size_t t) {
        const Vector y = centered.predictors.row(static_cast<Eigen::Index>(t)).transpose();
        const Eigen::Index ex = loo ? static_cast<Eigen::Index>(t) : -1;
        out.marginal_[t] = kde_grad_log(centered.predictors, y, bw_marg, ex);
        log_marg[t] = kde_log_density(centered.predictors, y, bw_marg, ex);
        out.marginal_density_[t] = std::exp(log_marg[t]);
      });
      for (int k = 1; k <= kmax; ++k) {
        const Matrix windows = joint_windows(centered, k);
        const Bandwidths bw_joint = bandwidths(windows);
        out.bandwidths_.push_back(bw_joint);
        auto& grads = out.conditional_[static_cast<std::size_t>(k - 1)];
        auto& dens = out.conditional_density_[static_cast<std::size_t>(k - 1)];
        grads.resize(static_cast<std::size_t>(n - k));
        dens.resize(static_cast<std::size_t>(n - k));
        parallel_for(static_cast<std::size_t>(n - k), [&](std::size_t t) {
          const Vector w = windows.row(static_cast<Eigen::Index>(t)).transpose();
          const Eigen::Index ex = loo ? static_cast<Eigen::Index>(t) : -1;
          const Vector head = kde_grad_log(windows, w, bw_joint, ex).head(p);
          grads[t] = subtract_shared(head, out.marginal_[t], k);
          dens[t] = std::exp(kde_log_density(windows, w, bw_joint, ex) - log_marg[t]);
        });
      }
    }
    out.check_finite();
    return out;
  }

  Backend backend() const noexcept { return backend_; }
  int p() const noexcept { return p_; }
  Eigen::Index rows() const noexcept { return static_cast<Eigen::Index>(marginal_.size()); }

  const Vector& marginal_gradient(Eigen::Index t) const {
    return marginal_.at(static_cast<std::size_t>(t));
  }

  /// Gradient paired with row t for row s > t: the conditional gradient of
  /// Y_{s-1} given Y_{t-1} when s - t < p, else the marginal gradient of row s.
  const Vector& pair_gradient(Eigen::Index t, Eigen::Index s) const {
    const auto k = s - t;
    if (k <= 0) throw Error(ErrorCode::InvalidPair, "pair gradient needs s > t");
    if (k >= p_) return marginal_gradient(s);
    return conditional_.at(static_cast<std::size_t>(k - 1)).at(static_cast<std::size_t>(t));
  }

  double marginal_density(Eigen::Index t) const {
    return marginal_density_.at(static_cast<std::size_t>(t));
  }

  double pair_density(Eigen::Index t, Eigen::Index s) const {
    const auto k = s - t;
    if (k <= 0) throw Error(ErrorCode::InvalidPair, "pair density needs s > t");
    if (k >= p_) return marginal_density(s);
    return conditional_density_.at(static_cast<std::size_t>(k - 1))
        .at(static_cast<std::size_t>(t));
  }

  /// KDE bandwidths: index 0 is the marginal, index k the joint of lag k.
  /// Empty for the Gaussian backend.
  const std::vector<Bandwidths>& kde_bandwidths() const noexcept { return bandwidths_; }

 private:
  void check_finite() const {
    for (const auto& g : marginal_) {
      if (!g.allFinite()) throw Error(ErrorCode::SingularSigma, "non-finite marginal gradient");
    }
    for (const auto& per_k : conditional_) {
      for (const auto& g : per_k) {
        if (!g.allFinite()) {
          throw Error(ErrorCode::SingularSigma, "non-finite conditional gradient");
        }
      }
    }
  }

  Backend backend_ = Backend::gaussian;
  int p_ = 0;
  std::vector<Vector> marginal_;
  std::vector<double> marginal_density_;
  std::vector<std::vector<Vector>> conditional_;
  std::vector<std::vector<double>> conditional_density_;
  std::vector<Bandwidths> bandwidths_;
};

}  // namespace fmts

#endif  // FMTS_DENSITY_HPP
