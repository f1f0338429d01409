#ifndef FMTS_PIPELINE_HPP
#define FMTS_PIPELINE_HPP

/** @file
 * End-to-end estimation: selection of (p, d) and sigma_w^2, the final
 * candidate matrix and basis, the two-step mean/variance procedure, fit
 * metrics, and the Canadian lynx reproduction.
 */

#include <Eigen/QR>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "fmts/candidate.hpp"
#include "fmts/select.hpp"
#include "fmts/subspace.hpp"

namespace fmts {

inline const std::vector<double>& default_sigma_grid() {
  static const std::vector<double> grid{0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0};
  return grid;
}

/// Ratio lambda_d / |lambda_{d+1}| at or above which the leading d
/// eigenvalues are reported as dominant.
inline constexpr double kDominantGapRatio = 10.0;

struct EstimateOptions {
  std::optional<int> p;
  std::vector<int> p_candidates{2, 3, 4, 5, 6};
  std::optional<int> d;
  std::optional<double> sigma_w2;
  std::vector<double> sigma_grid = default_sigma_grid();
  ProviderOptions provider;
  TrimConfig trim;
  BootstrapConfig bootstrap;
  VariabilityMeasure measure = VariabilityMeasure::gamma;
  /// Variance side of the two-step procedure.
  std::optional<int> q;
  std::vector<int> q_candidates{2, 3, 4, 5};
  std::optional<int> d_variance;
  /// Variance-stage sigma_w^2; falls back to sigma_w2, then to selection.
  std::optional<double> sigma_w2_variance;
};

/// One estimated subspace with the selection evidence behind it.
struct SubspaceEstimate {
  int p = 0;
  int d = 0;
  double sigma_w2 = 0.0;
  Matrix basis;
  Vector eigenvalues;
  /// lambda_d / |lambda_{d+1}|; NaN when d = p.
  double eigen_gap = std::numeric_limits<double>::quiet_NaN();
  bool dominant_gap = false;
  std::optional<SelectionReport> selection;
  std::optional<SigmaReport> sigma_selection;
};

struct EstimationReport {
  std::size_t n_obs = 0;
  EstimateOptions options;
  SubspaceEstimate mean;
  std::optional<SubspaceEstimate> variance;
  std::vector<std::string> flags;
  std::vector<std::pair<std::string, double>> timings;
};

namespace detail {

template <class F>
auto staged(const char* stage, std::vector<std::pair<std::string, double>>& timings, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    timings.emplace_back(
        stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  };
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      record();
    } else {
      auto out = body();
      record();
      return out;
    }
  } catch (const Error& e) {
    throw e.stage().empty() ? e.with_stage(stage) : e;
  }
}

inline bool has_zero_variance(const TimeSeries& s) {
  const auto v = s.values();
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

inline void fill_gap(SubspaceEstimate& est) {
  if (est.d < est.p) {
    const double next = std::abs(est.eigenvalues(est.d));
    const double lead = est.eigenvalues(est.d - 1);
    est.eigen_gap = next > 0.0 ? lead / next : std::numeric_limits<double>::infinity();
    est.dominant_gap = lead > 0.0 && est.eigen_gap >= kDominantGapRatio;
  }
}

/// Shared body of the mean and variance stages. `lag` and `candidates` are
/// p / p_candidates or q / q_candidates, `dim` is d or d'.
inline SubspaceEstimate estimate_subspace(const TimeSeries& series, const EstimateOptions& opt,
                                          Target target, std::optional<int> lag,
                                          const std::vector<int>& candidates,
                                          std::optional<int> dim, std::optional<double> sigma,
                                          const std::string& prefix, EstimationReport& report) {
  auto& timings = report.timings;
  SelectionSettings sel;
  sel.estimator.provider = opt.provider;
  sel.estimator.trim = opt.trim;
  sel.estimator.sigma_w2 = sigma.value_or(0.1);
  sel.target = target;
  sel.measure = opt.measure;

  SubspaceEstimate est;
  if (lag && (dim || *lag == 1)) {
    est.p = *lag;
    est.d = dim.value_or(1);
    require(est.d >= 1 && est.d <= est.p, ErrorCode::BadDimension, "need 1 <= d <= p");
  } else {
    const std::vector<int> cands = lag ? std::vector<int>{*lag} : candidates;
    est.selection = staged((prefix + "select_pd").c_str(), timings,
                           [&] { return select_pd(series, cands, opt.bootstrap, sel, dim); });
    est.p = est.selection->chosen_p;
    est.d = est.selection->chosen_d;
  }

  if (sigma) {
    est.sigma_w2 = *sigma;
  } else {
    est.sigma_selection = staged((prefix + "select_sigma").c_str(), timings, [&] {
      return select_sigma(series, est.p, est.d, opt.sigma_grid, opt.bootstrap, sel);
    });
    est.sigma_w2 = est.sigma_selection->chosen;
  }

  sel.estimator.sigma_w2 = est.sigma_w2;
  const CandidateMatrix m = staged((prefix + "candidate_matrix").c_str(), timings, [&] {
    return estimate_candidate(series, est.p, sel.estimator, target);
  });
  const SubspaceBasis basis =
      staged((prefix + "extract_basis").c_str(), timings, [&] { return extract_basis(m, est.d); });
  est.basis = basis.matrix();
  est.eigenvalues = m.eigenvalues;
  fill_gap(est);
  return est;
}

/// Report for a series without variation: no estimator is defined, so the
/// smallest admissible (p, d) and an identity basis are reported.
inline SubspaceEstimate degenerate_estimate(const EstimateOptions& opt, std::optional<int> lag,
                                            const std::vector<int>& candidates,
                                            std::optional<int> dim) {
  SubspaceEstimate est;
  if (lag) {
    est.p = *lag;
  } else {
    est.p = *std::min_element(candidates.begin(), candidates.end());
  }
  est.d = dim.value_or(1);
  require(est.d >= 1 && est.d <= est.p, ErrorCode::BadDimension, "need 1 <= d <= p");
  est.sigma_w2 = opt.sigma_w2.value_or(opt.sigma_grid.empty() ? 0.1 : opt.sigma_grid.front());
  est.basis = Matrix::Identity(est.p, est.d);
  est.eigenvalues = Vector::Zero(est.p);
  return est;
}

}  // namespace detail

/// select (p, d) -> select sigma_w^2 -> center -> m_fmt -> eigendecompose ->
/// leading d eigenvectors. Errors carry the name of the failing stage.
inline EstimationReport estimate_cms(const TimeSeries& series, const EstimateOptions& options) {
  EstimationReport report;
  report.n_obs = series.size();
  report.options = options;
  if (options.p && static_cast<std::size_t>(*options.p) >= series.size()) {
    throw Error(ErrorCode::LagTooLarge, "validate",
                "lag order " + std::to_string(*options.p) + " needs more than " +
                    std::to_string(series.size()) + " observations");
  }
  if (!options.p && options.p_candidates.empty()) {
    throw Error(ErrorCode::InvalidArgument, "validate", "no lag-order candidates");
  }
  if (detail::has_zero_variance(series)) {
    report.flags.emplace_back("zero_variance_predictors");
    report.mean = detail::degenerate_estimate(options, options.p, options.p_candidates, options.d);
    return report;
  }
  report.mean = detail::estimate_subspace(series, options, Target::mean, options.p,
                                          options.p_candidates, options.d, options.sigma_w2, "",
                                          report);
  return report;
}

/// estimate_cms, then the variance subspace from squared residuals of a
/// leave-one-out kernel regression on the estimated mean directions.
inline EstimationReport estimate_two_step(const TimeSeries& series,
                                          const EstimateOptions& options) {
  EstimationReport report = estimate_cms(series, options);
  if (!report.flags.empty()) return report;
  const TimeSeries resid = detail::staged("residuals", report.timings, [&] {
    return residual_series(series, report.mean.basis, report.mean.p);
  });
  const auto rv = resid.values();
  const double scale = std::max(1.0, std::abs(series.mean()));
  const bool zero = std::all_of(rv.begin(), rv.end(),
                                [&](double x) { return std::abs(x) <= 1e-12 * scale; });
  if (zero) {
    report.flags.emplace_back("zero_candidate_matrix");
    report.variance = detail::degenerate_estimate(options, options.q, options.q_candidates,
                                                  options.d_variance);
    return report;
  }
  report.variance = detail::estimate_subspace(resid, options, Target::variance, options.q,
                                              options.q_candidates, options.d_variance,
                                              options.sigma_w2_variance ? options.sigma_w2_variance
                                                                        : options.sigma_w2,
                                              "variance/", report);
  return report;
}

// ---------------------------------------------------------------------------
// Fit metrics

struct FitMetrics {
  double mare = 0.0;
  double msre = 0.0;
  double mse = 0.0;
  int n = 0;
  int p = 0;
  int n_params = 0;
};

/// MARE, MSRE and MSE over t = p+1..N (indices p..N-1).
inline FitMetrics fit_metrics(const Vector& y, const Vector& fitted, int p, int n_params = 0) {
  if (y.size() != fitted.size()) {
    throw Error(ErrorCode::DimensionMismatch, "observed and fitted lengths differ");
  }
  require(p >= 0 && p < y.size(), ErrorCode::InvalidArgument, "metrics need p < N");
  FitMetrics out;
  out.p = p;
  out.n = static_cast<int>(y.size()) - p;
  out.n_params = n_params;
  for (Eigen::Index t = p; t < y.size(); ++t) {
    if (!(y(t) > 0.0)) {
      throw Error(ErrorCode::NonPositiveResponse,
                  "relative metrics need y_t > 0 (t = " + std::to_string(t + 1) + ")");
    }
    const double e = y(t) - fitted(t);
    out.mare += std::abs(e) / y(t);
    out.msre += e * e / y(t);
    out.mse += e * e;
  }
  out.mare /= out.n;
  out.msre /= out.n;
  out.mse /= out.n;
  return out;
}

// ---------------------------------------------------------------------------
// Canadian lynx

/// Annual lynx trappings, Mackenzie River district, 1821-1934.
inline const std::vector<double>& lynx_counts() {
  static const std::vector<double> counts{
      269,  321,  585,  871,  1475, 2821, 3928, 5943, 4950, 2577, 523,  98,   184,  279,  409,
      2285, 2685, 3409, 1824, 409,  151,  45,   68,   213,  546,  1033, 2129, 2536, 957,  361,
      377,  225,  360,  731,  1638, 2725, 2871, 2119, 684,  299,  236,  245,  552,  1623, 3311,
      6721, 4254, 687,  255,  473,  358,  784,  1594, 1676, 2251, 1426, 756,  299,  201,  229,
      469,  736,  2042, 2811, 4431, 2511, 389,  73,   39,   49,   59,   188,  377,  1292, 4031,
      3495, 587,  105,  153,  387,  758,  1307, 3465, 6991, 6313, 3794, 1836, 345,  382,  808,
      1388, 2713, 3800, 3091, 2985, 3790, 674,  81,   80,   108,  229,  399,  1132, 2432, 3574,
      2935, 1537, 529,  485,  662,  1000, 1590, 2657, 3396};
  return counts;
}

inline TimeSeries log10_counts(const std::vector<double>& counts) {
  std::vector<double> y(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!(counts[i] > 0.0)) {
      throw Error(ErrorCode::NonPositiveCount,
                  "count " + std::to_string(counts[i]) + " at row " + std::to_string(i + 1));
    }
    y[i] = std::log10(counts[i]);
  }
  return TimeSeries(std::move(y));
}

/// A fitted or fixed model evaluated on the lynx series.
struct ModelFit {
  std::string name;
  std::vector<std::string> regressors;
  Vector coefficients;
  /// 0-based index of the first fitted value (t = first + 1).
  int first = 0;
  Vector fitted;
  FitMetrics own;
  FitMetrics common;
  /// |X^T r| / (|X| |y|) for least-squares refits, 0 otherwise.
  double orthogonality = 0.0;
};

/// Printed comparator models; each returns fitted values, NaN before the
/// first index at which all of its lags exist.
namespace comparators {

inline Vector nw(const Vector& y) {
  const double phi[4] = {0.9317, -0.0761, -0.1777, -0.3074};
  const Eigen::Index n = y.size();
  Vector d = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = 4; t < n; ++t) {
    d(t) = 0.0;
    for (int j = 0; j < 4; ++j) d(t) += phi[j] * y(t - 1 - j);
  }
  Vector out = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = 5; t < n; ++t) {
    const double c_t = std::cos(3.87 * d(t) - 3.44);
    const double c_prev = std::cos(3.87 * d(t - 1) - 3.44);
    out(t) = 0.99 + 0.52 * y(t - 1) + 0.75 * d(t) - 0.39 * d(t - 1) - 0.13 * c_t + 0.07 * c_prev;
  }
  return out;
}

inline Vector tong36(const Vector& y) {
  Vector out = Vector::Constant(y.size(), std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = 2; t < y.size(); ++t) {
    const double a = y(t - 1), b = y(t - 2);
    out(t) = b <= 3.25 ? 0.62 + 1.25 * a - 0.43 * b : 2.25 + 1.52 * a - 1.24 * b;
  }
  return out;
}

inline Vector tong37(const Vector& y) {
  Vector out = Vector::Constant(y.size(), std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = 7; t < y.size(); ++t) {
    const double a = y(t - 1), b = y(t - 2);
    out(t) = b <= 3.116 ? 0.546 + 1.032 * a - 0.173 * b + 0.171 * y(t - 3) - 0.43 * y(t - 4) +
                              0.332 * y(t - 5) - 0.284 * y(t - 6) + 0.210 * y(t - 7)
                        : 2.632 + 1.492 * a - 1.324 * b;
  }
  return out;
}

inline Vector tsay(const Vector& y) {
  Vector out = Vector::Constant(y.size(), std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = 7; t < y.size(); ++t) {
    const double a = y(t - 1), b = y(t - 2);
    if (b <= 2.373) {
      out(t) = 0.083 + 1.096 * a;
    } else if (b <= 3.154) {
      out(t) = 0.63 + 0.96 * a - 0.11 * b + 0.23 * y(t - 3) - 0.61 * y(t - 4) + 0.48 * y(t - 5) -
               0.39 * y(t - 6) + 0.28 * y(t - 7);
    } else {
      out(t) = 2.323 + 1.530 * a - 1.266 * b;
    }
  }
  return out;
}

}  // namespace comparators

struct LynxReport {
  EstimationReport estimation;
  /// Single-index values u_t = eta^T Y_{t-1}; NaN for t <= p.
  Vector index;
  std::vector<ModelFit> refits;
  std::vector<ModelFit> comparators;
  /// 0-based first index shared by every model.
  int common_first = 0;
};

/// Lynx defaults: p in 2..7, B = 500.
inline EstimateOptions lynx_options() {
  EstimateOptions opt;
  opt.p_candidates = {2, 3, 4, 5, 6, 7};
  opt.bootstrap.replicates = 500;
  return opt;
}

namespace detail {

/// Least squares without intercept of y on `columns` over rows first..N-1.
inline ModelFit ols_fit(const std::string& name, const Vector& y,
                        const std::vector<std::pair<std::string, Vector>>& columns, int first) {
  const Eigen::Index rows = y.size() - first;
  require(rows > static_cast<Eigen::Index>(columns.size()), ErrorCode::InvalidArgument,
          "too few rows for the " + name + " refit");
  Matrix x(rows, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = columns[j].second.tail(rows);
  }
  const Vector target = y.tail(rows);
  ModelFit fit;
  fit.name = name;
  for (const auto& c : columns) fit.regressors.push_back(c.first);
  fit.coefficients = x.colPivHouseholderQr().solve(target);
  fit.first = first;
  fit.fitted = Vector::Constant(y.size(), std::numeric_limits<double>::quiet_NaN());
  fit.fitted.tail(rows) = x * fit.coefficients;
  const Vector resid = target - x * fit.coefficients;
  const double scale = std::max(x.norm() * target.norm(), std::numeric_limits<double>::min());
  fit.orthogonality = (x.transpose() * resid).norm() / scale;
  return fit;
}

inline Vector shift(const Vector& v, int lag) {
  Vector out = Vector::Constant(v.size(), std::numeric_limits<double>::quiet_NaN());
  if (lag < v.size()) out.tail(v.size() - lag) = v.head(v.size() - lag);
  return out;
}

}  // namespace detail

/// log10 transform, estimate_cms, least-squares refits of the single-index
/// models and metrics of the printed comparator models.
inline LynxReport lynx_demo(const std::vector<double>& counts, const EstimateOptions& options) {
  const TimeSeries series = log10_counts(counts);
  LynxReport out;
  out.estimation = estimate_cms(series, options);
  const SubspaceEstimate& est = out.estimation.mean;
  const int p = est.p;
  const Eigen::Index n = static_cast<Eigen::Index>(series.size());
  const Vector y = Eigen::Map<const Vector>(series.values().data(), n);
  const Vector eta = est.basis.col(0);

  Vector u = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = p; t < n; ++t) {
    u(t) = 0.0;
    for (int j = 0; j < p; ++j) u(t) += eta(j) * y(t - 1 - j);
  }
  out.index = u;
  const Vector eu = u.array().exp();
  const int dir_params = (p - 1) * est.d;

  std::vector<std::pair<std::string, Vector>> cols{{"u", u}, {"exp(u)", eu}};
  out.refits.push_back(detail::ols_fit("single-index", y, cols, p));
  for (int lag : {10, 20}) {
    cols.emplace_back("y[-" + std::to_string(lag) + "]", detail::shift(y, lag));
    cols.emplace_back("u[-" + std::to_string(lag) + "]", detail::shift(u, lag));
    cols.emplace_back("exp(u)[-" + std::to_string(lag) + "]", detail::shift(eu, lag));
    out.refits.push_back(
        detail::ols_fit("single-index+lag" + std::to_string(lag), y, cols, p + lag));
  }

  const std::vector<std::pair<std::string, std::function<Vector(const Vector&)>>> printed{
      {"NW", comparators::nw},
      {"Tong-2-2", comparators::tong36},
      {"Tong-7-2", comparators::tong37},
      {"Tsay", comparators::tsay}};
  const int printed_params[] = {10, 8, 13, 17};
  for (std::size_t i = 0; i < printed.size(); ++i) {
    ModelFit fit;
    fit.name = printed[i].first;
    fit.fitted = printed[i].second(y);
    while (fit.first < n && std::isnan(fit.fitted(fit.first))) ++fit.first;
    fit.own.n_params = printed_params[i];
    out.comparators.push_back(std::move(fit));
  }

  int common = 0;
  for (const auto& f : out.refits) common = std::max(common, f.first);
  for (const auto& f : out.comparators) common = std::max(common, f.first);
  out.common_first = common;
  auto score = [&](ModelFit& f, int n_params) {
    f.own = fit_metrics(y, f.fitted, f.first, n_params);
    f.common = fit_metrics(y, f.fitted, common, n_params);
  };
  for (auto& f : out.refits) score(f, static_cast<int>(f.coefficients.size()) + dir_params);
  for (auto& f : out.comparators) score(f, f.own.n_params);
  return out;
}

}  // namespace fmts

#endif  // FMTS_PIPELINE_HPP
