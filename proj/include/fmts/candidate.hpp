#ifndef FMTS_CANDIDATE_HPP
#define FMTS_CANDIDATE_HPP

/** @file
 * The closed-form pairwise kernel, its trimmed double-sum aggregation into a
 * candidate matrix, and residual construction for the variance subspace.
 */

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "fmts/core.hpp"
#include "fmts/density.hpp"
#include "fmts/parallel.hpp"

namespace fmts {

/// Variance sigma_w^2 of the Gaussian frequency weight N(0, sigma_w^2 I).
struct WeightParams {
  double sigma_w2 = 0.1;

  explicit WeightParams(double value = 0.1) : sigma_w2(value) {
    require(value > 0.0 && std::isfinite(value), ErrorCode::InvalidArgument,
            "sigma_w^2 must be positive and finite");
  }
};

enum class TrimMode { none, quantile, absolute };

struct TrimConfig {
  TrimMode mode = TrimMode::none;
  double value = 0.0;

  static TrimConfig none() { return {}; }

  static TrimConfig quantile(double q) {
    require(q > 0.0 && q < 1.0, ErrorCode::InvalidArgument, "trim quantile must be in (0,1)");
    return {TrimMode::quantile, q};
  }

  static TrimConfig absolute(double c) {
    require(c >= 0.0 && std::isfinite(c), ErrorCode::InvalidArgument,
            "absolute trim threshold must be >= 0");
    return {TrimMode::absolute, c};
  }

  /// Parses "none", "quantile:<q>" or "abs:<c>".
  static TrimConfig parse(std::string_view text) {
    if (text == "none") return none();
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
      throw Error(ErrorCode::InvalidArgument, "bad trim spec '" + std::string(text) + "'");
    }
    const auto head = text.substr(0, colon);
    const std::string tail(text.substr(colon + 1));
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(tail, &used);
      if (used != tail.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad trim value '" + tail + "'");
    }
    if (head == "quantile") return quantile(v);
    if (head == "abs") return absolute(v);
    throw Error(ErrorCode::InvalidArgument, "bad trim mode '" + std::string(head) + "'");
  }

  std::string str() const {
    switch (mode) {
      case TrimMode::none: return "none";
      case TrimMode::quantile: return "quantile:" + format(value);
      case TrimMode::absolute: return "abs:" + format(value);
    }
    return "none";
  }

 private:
  static std::string format(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  }
};

struct CandidateMeta {
  int p = 0;
  double sigma_w2 = 0.0;
  Backend backend = Backend::gaussian;
  TrimConfig trim;
  std::size_t pair_count = 0;
};

/// Symmetric candidate matrix with its eigenpairs in descending order.
struct CandidateMatrix {
  Matrix m;
  Vector eigenvalues;
  Matrix eigenvectors;
  CandidateMeta meta;

  static CandidateMatrix from_matrix(const Matrix& raw, CandidateMeta meta) {
    CandidateMatrix out;
    out.m = 0.5 * (raw + raw.transpose());
    out.meta = meta;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(out.m);
    const Eigen::Index p = out.m.rows();
    // Descending order; equal eigenvalues keep the solver's column order.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return solver.eigenvalues()(a) > solver.eigenvalues()(b);
    });
    out.eigenvalues.resize(p);
    out.eigenvectors.resize(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const Eigen::Index src = order[static_cast<std::size_t>(i)];
      out.eigenvalues(i) = solver.eigenvalues()(src);
      out.eigenvectors.col(i) = solver.eigenvectors().col(src);
    }
    return out;
  }
};

/// Closed-form kernel for the pair (z_t, z_s):
///
///   y_t y_s exp(-sigma^2 |D|^2 / 2) [sigma^2 I + (g_t + sigma^2 D)(g_s - sigma^2 D)^T]
///
/// with D = Y_{s-1} - Y_{t-1}. It equals Re E_w[phi_t(w) conj(phi_s(w))^T] for
/// phi_u(w) = y_u (g_u + i w) exp(i w^T Y_{u-1}) and w ~ N(0, sigma^2 I).
/// g_s is the conditional gradient when s - t < p, the marginal otherwise.
inline Matrix j_fmt(double y_t, const Vector& lag_t, double y_s, const Vector& lag_s,
                    const WeightParams& w, const Vector& g_t, const Vector& g_s) {
  const double s2 = w.sigma_w2;
  const Vector diff = lag_s - lag_t;
  const double scale = y_t * y_s * std::exp(-0.5 * s2 * diff.squaredNorm());
  const Vector left = g_t + s2 * diff;
  const Vector right = g_s - s2 * diff;
  Matrix out = left * right.transpose();
  out.diagonal().array() += s2;
  return scale * out;
}

/// Row and pair indicators for density trimming.
struct TrimIndicators {
  double threshold = 0.0;
  bool active = false;
  std::vector<char> row;

  bool pair(const GradientProvider& provider, Eigen::Index t, Eigen::Index s) const {
    if (!active) return true;
    return row[static_cast<std::size_t>(t)] && provider.pair_density(t, s) > threshold;
  }
};

inline TrimIndicators trim_indicators(const GradientProvider& provider, const TrimConfig& trim) {
  TrimIndicators out;
  const auto n = static_cast<std::size_t>(provider.rows());
  out.row.assign(n, 1);
  if (trim.mode == TrimMode::none) return out;
  out.active = true;
  if (trim.mode == TrimMode::absolute) {
    out.threshold = trim.value;
  } else {
    std::vector<double> dens(n);
    for (std::size_t t = 0; t < n; ++t) dens[t] = provider.marginal_density(static_cast<Eigen::Index>(t));
    std::sort(dens.begin(), dens.end());
    const auto rank = static_cast<std::size_t>(std::ceil(trim.value * static_cast<double>(n)));
    out.threshold = dens[std::clamp<std::size_t>(rank, 1, n) - 1];
  }
  for (std::size_t t = 0; t < n; ++t) {
    out.row[t] = provider.marginal_density(static_cast<Eigen::Index>(t)) > out.threshold;
  }
  return out;
}

/// Candidate matrix
///   (n^{-2}) sum_{t<s} [J(z_t,z_s) + J(z_t,z_s)^T] I_t I_s,  n = N - p,
/// over the rows of a centered embedding. Per-row partial sums are reduced in
/// row order, so the result does not depend on the worker count.
inline CandidateMatrix m_fmt(const EmbeddedSeries& embedded, const GradientProvider& provider,
                             const WeightParams& w, const TrimConfig& trim = {}) {
  const Eigen::Index n = embedded.rows();
  const int p = embedded.p;
  require(n >= 2, ErrorCode::InvalidArgument, "candidate matrix needs at least two rows");
  if (provider.rows() != n || provider.p() != p) {
    throw Error(ErrorCode::DimensionMismatch, "provider was built on a different embedding");
  }
  const TrimIndicators ind = trim_indicators(provider, trim);
  const double s2 = w.sigma_w2;

  struct Partial {
    Matrix outer;
    double scale_sum = 0.0;
    std::size_t pairs = 0;
  };
  std::vector<Partial> partial(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ti) {
    const auto t = static_cast<Eigen::Index>(ti);
    Partial& acc = partial[ti];
    acc.outer = Matrix::Zero(p, p);
    if (ind.active && !ind.row[ti]) return;
    const Vector lag_t = embedded.predictors.row(t).transpose();
    const Vector& g_t = provider.marginal_gradient(t);
    const double y_t = embedded.responses(t);
    Vector diff(p);
    for (Eigen::Index s = t + 1; s < n; ++s) {
      if (!ind.pair(provider, t, s)) continue;
      ++acc.pairs;
      diff = embedded.predictors.row(s).transpose() - lag_t;
      const double scale = y_t * embedded.responses(s) * std::exp(-0.5 * s2 * diff.squaredNorm());
      if (scale == 0.0) continue;
      const Vector& g_s = provider.pair_gradient(t, s);
      acc.outer.noalias() += scale * (g_t + s2 * diff) * (g_s - s2 * diff).transpose();
      acc.scale_sum += scale;
    }
  });

  Matrix outer = Matrix::Zero(p, p);
  double scale_sum = 0.0;
  std::size_t pairs = 0;
  for (const auto& part : partial) {
    outer += part.outer;
    scale_sum += part.scale_sum;
    pairs += part.pairs;
  }
  if (pairs == 0) throw Error(ErrorCode::AllTrimmed, "every pair was trimmed");
  Matrix total = outer + outer.transpose();
  total.diagonal().array() += 2.0 * s2 * scale_sum;
  total /= static_cast<double>(n) * static_cast<double>(n);
  return CandidateMatrix::from_matrix(total, {p, s2, provider.backend(), trim, pairs});
}

/// Settings shared by every candidate-matrix estimate in a pipeline.
struct EstimatorSettings {
  ProviderOptions provider;
  double sigma_w2 = 0.1;
  TrimConfig trim;
};

/// embed -> center -> gradients -> m_fmt for a series and lag order.
inline CandidateMatrix candidate_matrix(const TimeSeries& series, int p,
                                        const EstimatorSettings& settings) {
  const EmbeddedSeries centered = center(embed(series, p));
  const GradientProvider provider = GradientProvider::build(series, centered, settings.provider);
  return m_fmt(centered, provider, WeightParams(settings.sigma_w2), settings.trim);
}

/// Candidate matrix for the variance subspace: response x_t^2 on the centered
/// squared lags (x_{t-1}^2, ..., x_{t-q}^2).
inline CandidateMatrix m_fvt(const TimeSeries& residuals, int q, const EstimatorSettings& settings) {
  if (static_cast<std::size_t>(q) >= residuals.size()) {
    throw Error(ErrorCode::LagTooLarge, "residual series shorter than q + 1");
  }
  std::vector<double> squares(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) squares[i] = residuals[i] * residuals[i];
  const TimeSeries squared(std::move(squares));
  const EmbeddedSeries centered = center(embed(squared, q));
  if (centered.responses.isZero(0.0)) {
    return CandidateMatrix::from_matrix(
        Matrix::Zero(q, q),
        {q, settings.sigma_w2, settings.provider.backend, settings.trim, 0});
  }
  const GradientProvider provider = GradientProvider::build(squared, centered, settings.provider);
  return m_fmt(centered, provider, WeightParams(settings.sigma_w2), settings.trim);
}

/// Residuals x_t = y_t - m(eta^T Y_{t-1}), t = p+1..N, with m a leave-one-out
/// Nadaraya-Watson regression on the reduced predictor using product-Gaussian
/// kernels and the KDE bandwidth rule in dimension d. `basis` is p x d.
inline TimeSeries residual_series(const TimeSeries& series, const Matrix& basis, int p) {
  if (basis.rows() != p) {
    throw Error(ErrorCode::DimensionMismatch, "basis rows must equal the lag order");
  }
  const EmbeddedSeries embedded = embed(series, p);
  const Matrix reduced = embedded.predictors * basis;
  const Eigen::Index n = reduced.rows();
  require(n >= 3, ErrorCode::InvalidArgument, "residual regression needs at least three rows");
  const Bandwidths bw = bandwidths(reduced);
  std::vector<double> out(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ti) {
    const auto t = static_cast<Eigen::Index>(ti);
    const Vector u = reduced.row(t).transpose();
    const auto ex = detail::exponents(reduced, u, bw.a, t);
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == t) continue;
      const double k = std::exp(ex.e(j) - ex.max);
      num += k * embedded.responses(j);
      den += k;
    }
    out[ti] = embedded.responses(t) - num / den;
  });
  return TimeSeries(std::move(out));
}

}  // namespace fmts

#endif  // FMTS_CANDIDATE_HPP
