// Command-line front end: estimate, estimate2, simulate, benchmark, lynx.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "fmts/fmts.hpp"

namespace {

constexpr int kInputError = 2;
constexpr int kEstimationError = 3;

bool is_input_error(fmts::ErrorCode c) {
  using fmts::ErrorCode;
  switch (c) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::LagTooLarge:
    case ErrorCode::BadDimension:
    case ErrorCode::BlockTooLong:
    case ErrorCode::CsvParse:
    case ErrorCode::NonPositiveCount:
    case ErrorCode::NonPositiveResponse:
      return true;
    default:
      return false;
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// "a..b" or "a,b,c".
std::vector<int> parse_int_set(const std::string& text) {
  std::vector<int> out;
  try {
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
      const int lo = std::stoi(text.substr(0, dots));
      const int hi = std::stoi(text.substr(dots + 2));
      if (hi < lo) throw std::invalid_argument("empty range");
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      for (const auto& item : split(text, ',')) out.push_back(std::stoi(item));
    }
  } catch (const std::exception&) {
    throw fmts::Error(fmts::ErrorCode::InvalidArgument, "bad integer set '" + text + "'");
  }
  if (out.empty()) throw fmts::Error(fmts::ErrorCode::InvalidArgument, "empty integer set");
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw fmts::Error(fmts::ErrorCode::InvalidArgument, "bad number '" + item + "'");
    }
  }
  return out;
}

fmts::Backend parse_backend(const std::string& s) {
  if (s == "gaussian") return fmts::Backend::gaussian;
  if (s == "kde") return fmts::Backend::kde;
  throw fmts::Error(fmts::ErrorCode::InvalidArgument, "unknown backend '" + s + "'");
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw fmts::Error(fmts::ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << text;
}

struct EstimateArgs {
  std::string input;
  std::optional<int> p;
  std::string p_candidates;
  std::optional<int> d;
  std::optional<double> sigma;
  std::string sigma_grid;
  std::string backend = "gaussian";
  std::string trim = "none";
  std::size_t blocks = 0;
  std::size_t b = 100;
  std::uint64_t seed = 0;
  std::string measure = "gamma";
  bool loo = false;
  bool timings = false;
  std::string out;
  // estimate2
  std::optional<int> q;
  std::string q_candidates;
  std::optional<int> d_variance;
  std::optional<double> sigma_variance;
};

void add_estimate_flags(CLI::App* cmd, EstimateArgs& a) {
  cmd->add_option("--input", a.input, "CSV with one value per line")->required();
  cmd->add_option("--p", a.p, "fixed lag order");
  cmd->add_option("--p-candidates", a.p_candidates, "lag orders to select from, a..b or a,b,c");
  cmd->add_option("--d", a.d, "fixed subspace dimension");
  cmd->add_option("--sigma", a.sigma, "fixed weight variance sigma_w^2");
  cmd->add_option("--sigma-grid", a.sigma_grid, "sigma_w^2 grid g1,g2,...");
  cmd->add_option("--backend", a.backend, "gaussian|kde");
  cmd->add_option("--trim", a.trim, "none|quantile:<q>|abs:<c>");
  cmd->add_option("--blocks", a.blocks, "bootstrap block length (default ceil(N^(1/3)))");
  cmd->add_option("--B", a.b, "bootstrap replicates");
  cmd->add_option("--seed", a.seed, "bootstrap seed");
  cmd->add_option("--measure", a.measure, "selection distance: gamma|rho");
  cmd->add_flag("--loo", a.loo, "leave-one-out KDE gradients");
  cmd->add_flag("--timings", a.timings, "include stage timings in the report");
  cmd->add_option("--out", a.out, "report path (default stdout)");
}

fmts::EstimateOptions to_options(const EstimateArgs& a) {
  fmts::EstimateOptions o;
  o.p = a.p;
  if (!a.p_candidates.empty()) o.p_candidates = parse_int_set(a.p_candidates);
  o.d = a.d;
  o.sigma_w2 = a.sigma;
  if (!a.sigma_grid.empty()) o.sigma_grid = parse_doubles(a.sigma_grid);
  o.provider.backend = parse_backend(a.backend);
  o.provider.leave_one_out = a.loo;
  o.trim = fmts::TrimConfig::parse(a.trim);
  o.bootstrap.block_len = a.blocks;
  o.bootstrap.replicates = a.b;
  o.bootstrap.seed = a.seed;
  if (a.measure == "rho") {
    o.measure = fmts::VariabilityMeasure::rho;
  } else if (a.measure != "gamma") {
    throw fmts::Error(fmts::ErrorCode::InvalidArgument, "unknown measure '" + a.measure + "'");
  }
  o.q = a.q;
  if (!a.q_candidates.empty()) o.q_candidates = parse_int_set(a.q_candidates);
  o.d_variance = a.d_variance;
  if (a.sigma_variance) fmts::WeightParams{*a.sigma_variance};
  o.sigma_w2_variance = a.sigma_variance;
  return o;
}

fmts::Model parse_model(const std::string& s) {
  if (s == "1") return fmts::Model::model1;
  if (s == "2") return fmts::Model::model2;
  if (s == "3") return fmts::Model::model3;
  throw fmts::Error(fmts::ErrorCode::InvalidArgument, "unknown model '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fourier-method dimension reduction for nonlinear time series"};
  app.require_subcommand(1);

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "estimate the central mean subspace");
  add_estimate_flags(estimate, est);

  EstimateArgs est2;
  auto* estimate2 = app.add_subcommand("estimate2", "two-step mean and variance subspaces");
  add_estimate_flags(estimate2, est2);
  estimate2->add_option("--q", est2.q, "fixed variance lag order");
  estimate2->add_option("--q-candidates", est2.q_candidates, "variance lag orders, a..b or a,b,c");
  estimate2->add_option("--d-variance", est2.d_variance, "fixed variance subspace dimension");
  estimate2->add_option("--sigma-variance", est2.sigma_variance,
                        "fixed variance-stage sigma_w^2 (default: --sigma, else selected)");

  std::string sim_model = "1", sim_innovation = "normal", sim_out, sim_latent_out;
  std::size_t sim_n = 300, sim_burn = 200;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "simulate a benchmark model");
  simulate->add_option("--model", sim_model, "1|2|3")->required();
  simulate->add_option("--n", sim_n, "series length")->required();
  simulate->add_option("--innovation", sim_innovation, "normal|t:<df>");
  simulate->add_option("--seed", sim_seed, "seed");
  simulate->add_option("--burn-in", sim_burn, "discarded initial values");
  simulate->add_option("--out", sim_out, "CSV path (default stdout)");
  simulate->add_option("--latent-out", sim_latent_out, "Model 3 variance component CSV path");

  std::string bench_models = "1", bench_sizes = "50,100,300,600", bench_innov = "normal",
              bench_out, bench_backend = "gaussian";
  std::size_t bench_reps = 100;
  std::uint64_t bench_seed = 0;
  double bench_sigma = 0.1;
  std::optional<double> bench_var_sigma;
  std::optional<std::string> bench_var_backend;
  bool bench_no_timing = false;
  auto* bench = app.add_subcommand("benchmark", "Monte-Carlo estimation error study");
  bench->add_option("--models", bench_models, "comma-separated model ids");
  bench->add_option("--sizes", bench_sizes, "comma-separated series lengths");
  bench->add_option("--innovations", bench_innov, "comma-separated normal|t:<df>");
  bench->add_option("--reps", bench_reps, "replications per cell");
  bench->add_option("--seed", bench_seed, "seed");
  bench->add_option("--sigma", bench_sigma, "weight variance sigma_w^2");
  bench->add_option("--backend", bench_backend, "gaussian|kde");
  bench->add_option("--variance-sigma", bench_var_sigma, "variance-stage sigma_w^2 (default --sigma)");
  bench->add_option("--variance-backend", bench_var_backend,
                    "variance-stage backend (default --backend)");
  bench->add_flag("--no-timing", bench_no_timing, "write 0 for mean_seconds");
  bench->add_option("--out", bench_out, "CSV path (default stdout)");

  std::string lynx_input, lynx_out, lynx_backend = "gaussian";
  std::size_t lynx_b = 500;
  std::uint64_t lynx_seed = 0;
  bool lynx_timings = false;
  auto* lynx = app.add_subcommand("lynx", "Canadian lynx reproduction");
  lynx->add_option("--input", lynx_input, "CSV of annual counts")->required();
  lynx->add_option("--out", lynx_out, "report path (default stdout)");
  lynx->add_option("--B", lynx_b, "bootstrap replicates");
  lynx->add_option("--seed", lynx_seed, "bootstrap seed");
  lynx->add_option("--backend", lynx_backend, "gaussian|kde");
  lynx->add_flag("--timings", lynx_timings, "include stage timings in the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (*estimate || *estimate2) {
      const bool two_step = static_cast<bool>(*estimate2);
      const EstimateArgs& a = two_step ? est2 : est;
      const fmts::EstimateOptions options = to_options(a);
      const fmts::TimeSeries series(fmts::read_values(a.input));
      const auto report = two_step ? fmts::estimate_two_step(series, options)
                                   : fmts::estimate_cms(series, options);
      emit(a.out, fmts::to_json(report, a.timings).dump(2) + "\n");
    } else if (*simulate) {
      fmts::SimSpec spec;
      spec.model = parse_model(sim_model);
      spec.n = sim_n;
      spec.innovation = fmts::Innovation::parse(sim_innovation);
      spec.seed = sim_seed;
      spec.burn_in = sim_burn;
      const auto path = fmts::generate(spec);
      std::ostringstream os;
      fmts::write_values(os, "y", path.series.values());
      emit(sim_out, os.str());
      if (!sim_latent_out.empty()) {
        if (!path.latent) {
          throw fmts::Error(fmts::ErrorCode::InvalidArgument, "only Model 3 has a latent path");
        }
        std::ostringstream lat;
        fmts::write_values(lat, "x", path.latent->values());
        emit(sim_latent_out, lat.str());
      }
    } else if (*bench) {
      fmts::BenchmarkConfig cfg;
      cfg.models.clear();
      for (const auto& m : split(bench_models, ',')) cfg.models.push_back(parse_model(m));
      cfg.sizes.clear();
      for (int n : parse_int_set(bench_sizes)) {
        if (n < 1) throw fmts::Error(fmts::ErrorCode::InvalidArgument, "sizes must be positive");
        cfg.sizes.push_back(static_cast<std::size_t>(n));
      }
      cfg.innovations.clear();
      for (const auto& i : split(bench_innov, ',')) cfg.innovations.push_back(fmts::Innovation::parse(i));
      cfg.reps = bench_reps;
      cfg.seed = bench_seed;
      cfg.estimator.sigma_w2 = fmts::WeightParams(bench_sigma).sigma_w2;
      cfg.estimator.provider.backend = parse_backend(bench_backend);
      if (bench_var_sigma || bench_var_backend) {
        fmts::EstimatorSettings var = cfg.estimator;
        if (bench_var_sigma) var.sigma_w2 = fmts::WeightParams(*bench_var_sigma).sigma_w2;
        if (bench_var_backend) var.provider.backend = parse_backend(*bench_var_backend);
        cfg.variance_estimator = var;
      }
      for (const auto& n : cfg.sizes) {
        fmts::SimSpec probe;
        probe.n = n;
        probe.validate();
      }
      const auto result = fmts::benchmark(cfg);
      for (const auto& row : result.rows) {
        if (row.failures > 0) {
          std::cerr << "model " << row.model << " N=" << row.n << ": " << row.failures
                    << " failed replications excluded\n";
        }
      }
      std::ostringstream os;
      result.write_csv(os, !bench_no_timing);
      emit(bench_out, os.str());
    } else if (*lynx) {
      auto options = fmts::lynx_options();
      options.bootstrap.replicates = lynx_b;
      options.bootstrap.seed = lynx_seed;
      options.provider.backend = parse_backend(lynx_backend);
      const auto report = fmts::lynx_demo(fmts::read_values(lynx_input), options);
      emit(lynx_out, fmts::to_json(report, lynx_timings).dump(2) + "\n");
    }
  } catch (const fmts::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_input_error(e.code()) ? kInputError : kEstimationError;
  }
  return 0;
}
