#ifndef FMTS_REPORT_HPP
#define FMTS_REPORT_HPP

/** @file
 * JSON serialization of estimation and lynx reports. Field order is fixed
 * and doubles are written in shortest round-trip form, so identical inputs
 * give identical bytes. Timings are opt-in for the same reason.
 */

#include <cmath>
#include <string>

#include <json.hpp>

#include "fmts/pipeline.hpp"

namespace fmts {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

/// Row-major nested arrays.
inline Json matrix_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
    out.push_back(std::move(row));
  }
  return out;
}

inline double read_number(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline Vector vector_from(const Json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = read_number(j[i]);
  return v;
}

inline Matrix matrix_from(const Json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = read_number(j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
  return m;
}

template <class T>
Json optional_json(const std::optional<T>& v) {
  if (v) return *v;
  return nullptr;
}

inline Json selection_json(const SelectionReport& s) {
  Json table = Json::array();
  for (const auto& e : s.table) {
    table.push_back(Json{{"p", e.p},
                         {"d", e.d},
                         {"mean_distance", number(e.mean_distance)},
                         {"replicates_used", e.replicates_used}});
  }
  Json best = Json::object();
  for (const auto& [p, d] : s.best_d) best[std::to_string(p)] = d;
  Json failures = Json::object();
  for (const auto& [p, f] : s.failures) failures[std::to_string(p)] = f;
  return Json{{"candidates", s.candidates},
              {"table", table},
              {"best_d", best},
              {"failures", failures},
              {"chosen", Json{{"p", s.chosen_p}, {"d", s.chosen_d}}},
              {"chosen_variability", number(s.chosen_variability)}};
}

inline Json sigma_json(const SigmaReport& s) {
  Json var = Json::array();
  for (double v : s.variabilities) var.push_back(number(v));
  return Json{{"grid", s.grid}, {"variabilities", var}, {"chosen", s.chosen},
              {"failures", s.failures}};
}

inline Json estimate_json(const SubspaceEstimate& e) {
  return Json{{"p", e.p},
              {"d", e.d},
              {"sigma_w2", e.sigma_w2},
              {"basis", matrix_json(e.basis)},
              {"eigenvalues", vector_json(e.eigenvalues)},
              {"eigen_gap", number(e.eigen_gap)},
              {"dominant_gap", e.dominant_gap},
              {"selection", e.selection ? selection_json(*e.selection) : Json(nullptr)},
              {"sigma_selection",
               e.sigma_selection ? sigma_json(*e.sigma_selection) : Json(nullptr)}};
}

inline SubspaceEstimate estimate_from(const Json& j) {
  SubspaceEstimate e;
  e.p = j.at("p").get<int>();
  e.d = j.at("d").get<int>();
  e.sigma_w2 = j.at("sigma_w2").get<double>();
  e.basis = matrix_from(j.at("basis"));
  e.eigenvalues = vector_from(j.at("eigenvalues"));
  e.eigen_gap = read_number(j.at("eigen_gap"));
  e.dominant_gap = j.at("dominant_gap").get<bool>();
  return e;
}

inline Json options_json(const EstimateOptions& o) {
  return Json{{"p", optional_json(o.p)},
              {"p_candidates", o.p_candidates},
              {"d", optional_json(o.d)},
              {"sigma_w2", optional_json(o.sigma_w2)},
              {"sigma_grid", o.sigma_grid},
              {"backend", std::string(to_string(o.provider.backend))},
              {"leave_one_out", o.provider.leave_one_out},
              {"condition_cap", o.provider.condition_cap},
              {"trim", o.trim.str()},
              {"bootstrap_replicates", o.bootstrap.replicates},
              {"block_len", o.bootstrap.block_len},
              {"seed", o.bootstrap.seed},
              {"measure", o.measure == VariabilityMeasure::gamma ? "gamma" : "rho"},
              {"q", optional_json(o.q)},
              {"q_candidates", o.q_candidates},
              {"d_variance", optional_json(o.d_variance)},
              {"sigma_w2_variance", optional_json(o.sigma_w2_variance)}};
}

}  // namespace detail

inline Json to_json(const EstimationReport& r, bool include_timings = false) {
  Json out{{"n_obs", r.n_obs},
           {"backend", std::string(to_string(r.options.provider.backend))},
           {"trim", r.options.trim.str()},
           {"options", detail::options_json(r.options)},
           {"mean", detail::estimate_json(r.mean)},
           {"variance", r.variance ? detail::estimate_json(*r.variance) : Json(nullptr)},
           {"flags", r.flags}};
  if (include_timings) {
    Json t = Json::object();
    for (const auto& [stage, seconds] : r.timings) t[stage] = seconds;
    out["timings"] = t;
  }
  return out;
}

/// Inverse of to_json for the estimated quantities (selection tables and
/// options are not restored).
inline EstimationReport report_from_json(const Json& j) {
  EstimationReport r;
  r.n_obs = j.at("n_obs").get<std::size_t>();
  r.mean = detail::estimate_from(j.at("mean"));
  if (!j.at("variance").is_null()) r.variance = detail::estimate_from(j.at("variance"));
  r.flags = j.at("flags").get<std::vector<std::string>>();
  return r;
}

inline Json to_json(const FitMetrics& m) {
  return Json{{"mare", m.mare}, {"msre", m.msre}, {"mse", m.mse},
              {"n", m.n},       {"p", m.p},       {"n_params", m.n_params}};
}

inline Json to_json(const ModelFit& f) {
  return Json{{"name", f.name},
              {"regressors", f.regressors},
              {"coefficients", detail::vector_json(f.coefficients)},
              {"first_t", f.first + 1},
              {"own_range", to_json(f.own)},
              {"common_range", to_json(f.common)},
              {"orthogonality", f.orthogonality}};
}

inline Json to_json(const LynxReport& r, bool include_timings = false) {
  Json refits = Json::array();
  for (const auto& f : r.refits) refits.push_back(to_json(f));
  Json comps = Json::array();
  for (const auto& f : r.comparators) comps.push_back(to_json(f));
  return Json{{"estimation", to_json(r.estimation, include_timings)},
              {"common_first_t", r.common_first + 1},
              {"refits", refits},
              {"comparators", comps}};
}

}  // namespace fmts

#endif  // FMTS_REPORT_HPP
