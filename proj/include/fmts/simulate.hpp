#ifndef FMTS_SIMULATE_HPP
#define FMTS_SIMULATE_HPP

/** @file
 * Generators for three nonlinear autoregressive benchmark models and a
 * Monte-Carlo harness measuring subspace estimation error.
 */

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fmts/candidate.hpp"
#include "fmts/parallel.hpp"
#include "fmts/rng.hpp"
#include "fmts/subspace.hpp"

namespace fmts {

enum class Model { model1 = 1, model2 = 2, model3 = 3 };

struct Innovation {
  enum class Kind { normal, student_t } kind = Kind::normal;
  double df = 5.0;

  static Innovation normal() { return {}; }
  static Innovation student_t(double df) { return {Kind::student_t, df}; }

  /// Parses "normal" or "t:<df>".
  static Innovation parse(const std::string& text) {
    if (text == "normal") return normal();
    if (text.rfind("t:", 0) == 0) {
      try {
        std::size_t used = 0;
        const double df = std::stod(text.substr(2), &used);
        if (used == text.size() - 2) return student_t(df);
      } catch (const std::exception&) {
      }
    }
    throw Error(ErrorCode::InvalidArgument, "bad innovation '" + text + "'");
  }

  std::string label() const {
    if (kind == Kind::normal) return "normal";
    std::ostringstream os;
    os << "t:" << df;
    return os.str();
  }

  /// Unit-variance draw.
  double draw(Stream& rng) const {
    if (kind == Kind::normal) return rng.normal();
    return rng.student_t(df) / std::sqrt(df / (df - 2.0));
  }
};

struct SimSpec {
  Model model = Model::model1;
  std::size_t n = 300;
  Innovation innovation;
  std::uint64_t seed = 0;
  std::size_t burn_in = 200;
  /// Independent stream index, e.g. the replication number.
  std::uint64_t stream = 0;

  void validate() const {
    require(n >= 50, ErrorCode::InvalidArgument, "simulated series need n >= 50");
    if (innovation.kind == Innovation::Kind::student_t) {
      require(innovation.df > 2.0 && std::isfinite(innovation.df), ErrorCode::InvalidArgument,
              "Student-t innovations need df > 2");
    }
  }
};

struct SimPath {
  TimeSeries series;
  /// Model 3 only: the conditionally heteroscedastic component x_t.
  std::optional<TimeSeries> latent;
};

namespace model {

inline double step1(double y1, double y2, double eps) {
  const double u = std::cos(1.0) * y1 - std::sin(1.0) * y2;
  return 0.5 * u + 0.4 * std::exp(-16.0 * u * u) + 0.1 * eps;
}

inline double step2(double x1, double x4, double eps) {
  return 0.25 * eps * eps * (1.0 + (0.1 * x1 + 4.0 * x4) / std::sqrt(16.01));
}

inline double step3_variance(double x1, double x4, double eps) {
  return eps * std::sqrt((2.0 + x1 * x1 + x4 * x4) / std::sqrt(6.0));
}

inline double step3_mean(double y2, double y4, double y6, double x) {
  return 3.0 - (y2 + y4 + y6) / std::sqrt(3.0) + x;
}

}  // namespace model

inline SimPath generate(const SimSpec& spec) {
  spec.validate();
  Stream rng(spec.seed, spec.stream);
  const std::size_t total = spec.burn_in + spec.n;
  constexpr std::size_t kLags = 6;
  std::vector<double> y(total + kLags, 0.0);
  std::vector<double> x(total + kLags, 0.1);
  auto check = [](double v) {
    if (!(std::abs(v) <= 1e12)) {
      throw Error(ErrorCode::ExplosivePath, "simulated path exceeded 1e12; use another seed");
    }
    return v;
  };
  for (std::size_t i = kLags; i < total + kLags; ++i) {
    const double eps = spec.innovation.draw(rng);
    switch (spec.model) {
      case Model::model1:
        y[i] = check(model::step1(y[i - 1], y[i - 2], eps));
        break;
      case Model::model2:
        x[i] = check(model::step2(x[i - 1], x[i - 4], eps));
        break;
      case Model::model3:
        x[i] = check(model::step3_variance(x[i - 1], x[i - 4], eps));
        y[i] = check(model::step3_mean(y[i - 2], y[i - 4], y[i - 6], x[i]));
        break;
    }
  }
  const auto first = static_cast<std::ptrdiff_t>(kLags + spec.burn_in);
  const std::vector<double>& main = spec.model == Model::model2 ? x : y;
  SimPath out{TimeSeries(std::vector<double>(main.begin() + first, main.end())), std::nullopt};
  if (spec.model == Model::model3) {
    out.latent.emplace(std::vector<double>(x.begin() + first, x.end()));
  }
  return out;
}

struct TrueBasis {
  std::optional<SubspaceBasis> mean;
  std::optional<SubspaceBasis> variance;
};

inline TrueBasis true_basis(Model m) {
  TrueBasis out;
  switch (m) {
    case Model::model1: {
      Matrix b(2, 1);
      b << std::cos(1.0), -std::sin(1.0);
      out.mean.emplace(b);
      break;
    }
    case Model::model2: {
      Matrix b(4, 1);
      b << 0.1, 0.0, 0.0, 4.0;
      out.variance.emplace(b / std::sqrt(16.01));
      break;
    }
    case Model::model3: {
      Matrix a(6, 1);
      a << 0.0, 1.0, 0.0, 1.0, 0.0, 1.0;
      out.mean.emplace(a / std::sqrt(3.0));
      // The recursion loads on x_{t-1}^2 and x_{t-4}^2.
      Matrix b(4, 1);
      b << 1.0, 0.0, 0.0, 1.0;
      out.variance.emplace(b / std::sqrt(2.0));
      break;
    }
  }
  return out;
}

/// Lag orders used when estimating a model with its true dimensions.
inline int mean_lag(Model m) { return m == Model::model1 ? 2 : 6; }
inline int variance_lag(Model) { return 4; }

struct BenchmarkConfig {
  std::vector<Model> models{Model::model1};
  std::vector<std::size_t> sizes{50, 100, 300, 600};
  std::vector<Innovation> innovations{Innovation::normal()};
  std::size_t reps = 100;
  EstimatorSettings estimator;
  /// Settings for the variance subspace; `estimator` when unset.
  std::optional<EstimatorSettings> variance_estimator;
  std::uint64_t seed = 0;
  std::size_t burn_in = 200;
};

struct BenchmarkRow {
  std::string model;
  std::size_t n = 0;
  std::string innovation;
  std::size_t rep_count = 0;
  std::size_t failures = 0;
  double mean_d = 0.0;
  double sd_d = 0.0;
  double mean_rho = 0.0;
  double sd_rho = 0.0;
  double mean_seconds = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;

  /// Header plus one row per cell; `timing = false` writes 0 for
  /// mean_seconds so repeated runs are byte-identical.
  void write_csv(std::ostream& os, bool timing = true) const;
};

namespace detail {

struct RepOutcome {
  bool ok = false;
  double d_mean = 0.0, rho_mean = 0.0;
  double d_var = 0.0, rho_var = 0.0;
  double seconds = 0.0;
};

inline RepOutcome run_replication(Model m, const SimSpec& spec, const EstimatorSettings& est,
                                  const EstimatorSettings& var_est) {
  RepOutcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    const SimPath path = generate(spec);
    const TrueBasis truth = true_basis(m);
    if (m == Model::model2) {
      const auto r = distance(*truth.variance, extract_basis(m_fvt(path.series, 4, var_est), 1));
      out.d_var = r.d_measure;
      out.rho_var = r.rho;
    } else {
      const int p = mean_lag(m);
      const SubspaceBasis eta = extract_basis(candidate_matrix(path.series, p, est), 1);
      const auto r = distance(*truth.mean, eta);
      out.d_mean = r.d_measure;
      out.rho_mean = r.rho;
      if (m == Model::model3) {
        const TimeSeries resid = residual_series(path.series, eta.matrix(), p);
        const auto v = distance(*truth.variance,
                                extract_basis(m_fvt(resid, variance_lag(m), var_est), 1));
        out.d_var = v.d_measure;
        out.rho_var = v.rho;
      }
    }
    out.ok = true;
  } catch (const Error&) {
    out.ok = false;
  }
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Runs every (model, size, innovation) cell. Model 1 reports the mean
/// subspace, Model 2 the variance subspace and Model 3 both (two rows).
inline BenchmarkResult benchmark(const BenchmarkConfig& cfg) {
  require(cfg.reps >= 1, ErrorCode::InvalidArgument, "benchmark needs reps >= 1");
  BenchmarkResult result;
  const EstimatorSettings var_est = cfg.variance_estimator.value_or(cfg.estimator);
  std::uint64_t cell = 0;
  for (Model m : cfg.models) {
    for (std::size_t n : cfg.sizes) {
      for (const Innovation& inn : cfg.innovations) {
        std::vector<detail::RepOutcome> reps(cfg.reps);
        const std::uint64_t base = cell++ << 32;
        parallel_for(cfg.reps, [&](std::size_t r) {
          SimSpec spec{m, n, inn, cfg.seed, cfg.burn_in, base + r};
          reps[r] = detail::run_replication(m, spec, cfg.estimator, var_est);
        });
        std::vector<double> dm, rm, dv, rv;
        double seconds = 0.0;
        std::size_t failures = 0;
        for (const auto& o : reps) {
          if (!o.ok) {
            ++failures;
            continue;
          }
          dm.push_back(o.d_mean);
          rm.push_back(o.rho_mean);
          dv.push_back(o.d_var);
          rv.push_back(o.rho_var);
          seconds += o.seconds;
        }
        const std::size_t ok = cfg.reps - failures;
        const double mean_seconds = ok > 0 ? seconds / static_cast<double>(ok) : 0.0;
        const std::string id = std::to_string(static_cast<int>(m));
        auto push = [&](const std::string& label, const std::vector<double>& d,
                        const std::vector<double>& rho) {
          BenchmarkRow row{label, n, inn.label(), ok, failures};
          detail::mean_sd(d, row.mean_d, row.sd_d);
          detail::mean_sd(rho, row.mean_rho, row.sd_rho);
          row.mean_seconds = mean_seconds;
          result.rows.push_back(row);
        };
        if (m != Model::model2) push(id + "-mean", dm, rm);
        if (m != Model::model1) push(id + "-variance", dv, rv);
      }
    }
  }
  return result;
}

inline void BenchmarkResult::write_csv(std::ostream& os, bool timing) const {
  const auto old_precision = os.precision(17);
  os << "model,N,innovation,rep_count,mean_D,sd_D,mean_rho,sd_rho,mean_seconds\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.n << ',' << r.innovation << ',' << r.rep_count << ',' << r.mean_d
       << ',' << r.sd_d << ',' << r.mean_rho << ',' << r.sd_rho << ','
       << (timing ? r.mean_seconds : 0.0) << '\n';
  }
  os.precision(old_precision);
}

}  // namespace fmts

#endif  // FMTS_SIMULATE_HPP
