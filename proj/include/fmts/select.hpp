#ifndef FMTS_SELECT_HPP
#define FMTS_SELECT_HPP

/** @file
 * Fixed-block bootstrap and variability-minimizing selection of the lag
 * order, the subspace dimension and the weight variance sigma_w^2.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "fmts/candidate.hpp"
#include "fmts/parallel.hpp"
#include "fmts/rng.hpp"
#include "fmts/subspace.hpp"

namespace fmts {

struct BootstrapConfig {
  std::size_t replicates = 100;
  /// Zero selects ceil(N^{1/3}).
  std::size_t block_len = 0;
  std::uint64_t seed = 0;

  std::size_t effective_block_len(std::size_t n) const {
    if (block_len > 0) return block_len;
    return static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(n)) - 1e-12));
  }
};

/// Replicate b of a fixed-block bootstrap: ceil(N/L) blocks with uniformly
/// drawn start positions, concatenated and cut to length N.
inline TimeSeries block_bootstrap(const TimeSeries& series, const BootstrapConfig& cfg,
                                  std::uint64_t b) {
  const std::size_t n = series.size();
  const std::size_t len = cfg.effective_block_len(n);
  if (len == 0 || len > n) {
    throw Error(ErrorCode::BlockTooLong, "block length " + std::to_string(len) +
                                             " not in 1.." + std::to_string(n));
  }
  Stream rng(cfg.seed, b);
  const std::size_t starts = n - len + 1;
  std::vector<double> out;
  out.reserve(n + len);
  while (out.size() < n) {
    const auto start = static_cast<std::size_t>(rng.below(starts));
    for (std::size_t i = 0; i < len; ++i) out.push_back(series[start + i]);
  }
  out.resize(n);
  return TimeSeries(std::move(out));
}

/// Which subspace a selection run estimates.
enum class Target {
  mean,      ///< candidate matrix of the series itself
  variance,  ///< the series is a residual series; squared-lag candidate matrix
};

/// Distance driving the bootstrap variability: 1 - gamma (default) or 1 - rho.
enum class VariabilityMeasure { gamma, rho };

struct SelectionSettings {
  EstimatorSettings estimator;
  Target target = Target::mean;
  VariabilityMeasure measure = VariabilityMeasure::gamma;
};

inline CandidateMatrix estimate_candidate(const TimeSeries& series, int lag,
                                          const EstimatorSettings& settings, Target target) {
  return target == Target::mean ? candidate_matrix(series, lag, settings)
                                : m_fvt(series, lag, settings);
}

inline double variability(const DistanceReport& r, VariabilityMeasure m) {
  return m == VariabilityMeasure::gamma ? r.d_measure : 1.0 - r.rho;
}

struct PdEntry {
  int p = 0;
  int d = 0;
  double mean_distance = 0.0;
  std::size_t replicates_used = 0;
};

struct SelectionReport {
  std::vector<PdEntry> table;
  int chosen_p = 0;
  int chosen_d = 0;
  double chosen_variability = 0.0;
  std::map<int, int> best_d;
  std::vector<int> candidates;
  std::map<int, std::size_t> failures;

  const PdEntry* find(int p, int d) const {
    for (const auto& e : table)
      if (e.p == p && e.d == d) return &e;
    return nullptr;
  }
};

namespace detail {

/// Bases for d = 1..p from one candidate matrix.
inline std::vector<SubspaceBasis> all_bases(const CandidateMatrix& m) {
  std::vector<SubspaceBasis> out;
  const int p = static_cast<int>(m.eigenvectors.cols());
  out.reserve(static_cast<std::size_t>(p));
  for (int d = 1; d <= p; ++d) out.push_back(extract_basis(m, d));
  return out;
}

}  // namespace detail

/// Bootstrap variability D(p, d) for every candidate p and d <= p; chooses
/// d_i < p_i per lag order, then the pair of smallest variability (ties go to
/// smaller p, then smaller d). With `fixed_d` only that dimension is scored.
inline SelectionReport select_pd(const TimeSeries& series, const std::vector<int>& p_candidates,
                                 const BootstrapConfig& cfg, const SelectionSettings& settings,
                                 std::optional<int> fixed_d = std::nullopt) {
  require(!p_candidates.empty(), ErrorCode::InvalidArgument, "no lag-order candidates");
  require(cfg.replicates >= 1, ErrorCode::InvalidArgument, "need at least one bootstrap replicate");
  std::vector<int> ps = p_candidates;
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  for (int p : ps) {
    require(p >= 1, ErrorCode::InvalidArgument, "lag orders must be positive");
    if (2 * static_cast<std::size_t>(p) >= series.size()) {
      throw Error(ErrorCode::LagTooLarge, "candidate lag order " + std::to_string(p) +
                                              " must be below N/2");
    }
  }
  const std::size_t nb = cfg.replicates;
  const std::size_t np = ps.size();

  // Estimates on the original series.
  std::vector<std::optional<std::vector<SubspaceBasis>>> original(np);
  for (std::size_t i = 0; i < np; ++i) {
    try {
      original[i] = detail::all_bases(
          estimate_candidate(series, ps[i], settings.estimator, settings.target));
    } catch (const Error&) {
      original[i].reset();
    }
  }

  // distances[b][i][d-1], NaN when the replicate failed.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<std::vector<double>>> distances(nb);
  parallel_for(nb, [&](std::size_t b) {
    auto& slot = distances[b];
    slot.resize(np);
    const TimeSeries resample = block_bootstrap(series, cfg, b);
    for (std::size_t i = 0; i < np; ++i) {
      slot[i].assign(static_cast<std::size_t>(ps[i]), nan);
      if (!original[i]) continue;
      try {
        const auto m = estimate_candidate(resample, ps[i], settings.estimator, settings.target);
        for (int d = 1; d <= ps[i]; ++d) {
          if (fixed_d && d != *fixed_d && d != ps[i]) continue;
          const auto r = distance((*original[i])[static_cast<std::size_t>(d - 1)],
                                  extract_basis(m, d));
          slot[i][static_cast<std::size_t>(d - 1)] = variability(r, settings.measure);
        }
      } catch (const Error&) {
      }
    }
  });

  SelectionReport out;
  out.candidates = ps;
  bool any_usable = false;
  bool chosen = false;
  for (std::size_t i = 0; i < np; ++i) {
    const int p = ps[i];
    std::size_t failed = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& row = distances[b][i];
      const bool ok = std::any_of(row.begin(), row.end(), [](double v) { return !std::isnan(v); });
      if (!ok) ++failed;
    }
    out.failures[p] = failed;
    if (static_cast<double>(failed) <= 0.2 * static_cast<double>(nb)) any_usable = true;
    std::optional<int> best;
    double best_value = 0.0;
    for (int d = 1; d <= p; ++d) {
      if (fixed_d && d != *fixed_d && d != p) continue;
      double sum = 0.0;
      std::size_t used = 0;
      for (std::size_t b = 0; b < nb; ++b) {
        const double v = distances[b][i][static_cast<std::size_t>(d - 1)];
        if (std::isnan(v)) continue;
        sum += v;
        ++used;
      }
      if (used == 0) continue;
      const double mean = sum / static_cast<double>(used);
      out.table.push_back({p, d, mean, used});
      if (d < p && (!best || mean < best_value)) {
        best = d;
        best_value = mean;
      }
    }
    if (!best) continue;
    out.best_d[p] = *best;
    if (!chosen || best_value < out.chosen_variability) {
      out.chosen_p = p;
      out.chosen_d = *best;
      out.chosen_variability = best_value;
      chosen = true;
    }
  }
  if (!any_usable || !chosen) {
    throw Error(ErrorCode::SelectionFailed,
                "no lag-order candidate produced enough successful bootstrap replicates");
  }
  return out;
}

struct SigmaReport {
  std::vector<double> grid;
  std::vector<double> variabilities;
  double chosen = 0.0;
  std::size_t failures = 0;
};

/// Bootstrap variability of the (p, d) subspace at every grid value; returns
/// the minimizer, ties within 1e-12 going to the smaller sigma_w^2.
inline SigmaReport select_sigma(const TimeSeries& series, int p, int d, std::vector<double> grid,
                                const BootstrapConfig& cfg, const SelectionSettings& settings) {
  require(!grid.empty(), ErrorCode::InvalidArgument, "sigma grid is empty");
  for (double g : grid) {
    require(g > 0.0 && std::isfinite(g), ErrorCode::InvalidArgument, "grid values must be positive");
  }
  require(d >= 1 && d <= p, ErrorCode::BadDimension, "need 1 <= d <= p");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  SigmaReport out;
  out.grid = grid;
  if (grid.size() == 1) {
    out.variabilities.assign(1, 0.0);
    out.chosen = grid.front();
    return out;
  }
  require(cfg.replicates >= 1, ErrorCode::InvalidArgument, "need at least one bootstrap replicate");
  const std::size_t ng = grid.size();
  const std::size_t nb = cfg.replicates;

  std::vector<std::optional<SubspaceBasis>> original(ng);
  for (std::size_t g = 0; g < ng; ++g) {
    EstimatorSettings es = settings.estimator;
    es.sigma_w2 = grid[g];
    try {
      original[g] = extract_basis(estimate_candidate(series, p, es, settings.target), d);
    } catch (const Error&) {
    }
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> distances(nb, std::vector<double>(ng, nan));
  parallel_for(nb, [&](std::size_t b) {
    const TimeSeries resample = block_bootstrap(series, cfg, b);
    // Embedding and gradients do not depend on sigma_w^2; build them once.
    std::optional<TimeSeries> base;
    std::optional<EmbeddedSeries> centered;
    std::optional<GradientProvider> provider;
    try {
      if (settings.target == Target::mean) {
        base.emplace(resample);
      } else {
        std::vector<double> sq(resample.size());
        for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = resample[i] * resample[i];
        base.emplace(std::move(sq));
      }
      centered = center(embed(*base, p));
      if (!centered->responses.isZero(0.0)) {
        provider = GradientProvider::build(*base, *centered, settings.estimator.provider);
      }
    } catch (const Error&) {
      return;
    }
    for (std::size_t g = 0; g < ng; ++g) {
      if (!original[g]) continue;
      try {
        const CandidateMatrix m =
            provider ? m_fmt(*centered, *provider, WeightParams(grid[g]), settings.estimator.trim)
                     : CandidateMatrix::from_matrix(
                           Matrix::Zero(p, p), {p, grid[g], settings.estimator.provider.backend,
                                                settings.estimator.trim, 0});
        distances[b][g] = variability(distance(*original[g], extract_basis(m, d)), settings.measure);
      } catch (const Error&) {
      }
    }
  });

  std::optional<std::size_t> best;
  std::size_t failed_all = 0;
  for (std::size_t g = 0; g < ng; ++g) {
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      if (std::isnan(distances[b][g])) continue;
      sum += distances[b][g];
      ++used;
    }
    if (static_cast<double>(nb - used) > 0.2 * static_cast<double>(nb)) ++failed_all;
    out.failures += nb - used;
    const double mean = used > 0 ? sum / static_cast<double>(used)
                                 : std::numeric_limits<double>::quiet_NaN();
    out.variabilities.push_back(mean);
    if (used == 0) continue;
    if (!best || mean < out.variabilities[*best] - 1e-12) best = g;
  }
  if (!best || failed_all == ng) {
    throw Error(ErrorCode::SelectionFailed, "sigma selection failed for every grid value");
  }
  out.chosen = grid[*best];
  return out;
}

}  // namespace fmts

#endif  // FMTS_SELECT_HPP
