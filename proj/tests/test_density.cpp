#include <gtest/gtest.h>

#include <numbers>

#include "fmts/density.hpp"
#include "fmts/rng.hpp"

using namespace fmts;

namespace {

TimeSeries ar2_series(std::size_t n, std::uint64_t seed) {
  Stream rng(seed, 0);
  std::vector<double> v(n);
  double y1 = 0.0, y2 = 0.0;
  for (auto& x : v) {
    x = 0.5 * y1 - 0.3 * y2 + rng.normal();
    y2 = y1;
    y1 = x;
  }
  return TimeSeries(v);
}

Matrix random_points(Eigen::Index n, Eigen::Index r, std::uint64_t seed) {
  Stream rng(seed, 0);
  Matrix m(n, r);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < r; ++j) m(i, j) = rng.normal() * (1.0 + j);
  return m;
}

template <class F>
Vector central_difference(F f, const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector up = x, dn = x;
    up(i) += h;
    dn(i) -= h;
    g(i) = (f(up) - f(dn)) / (2.0 * h);
  }
  return g;
}

double rel_err(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-8);
}

}  // namespace

TEST(Bandwidths, RuleOfThumb) {
  const Matrix pts = random_points(100, 2, 1);
  const auto bw = bandwidths(pts);
  const double br = std::pow(4.0 / 4.0, 1.0 / 6.0);
  for (int i = 0; i < 2; ++i) {
    const auto col = pts.col(i);
    const double sd = std::sqrt((col.array() - col.mean()).square().sum() / 99.0);
    EXPECT_NEAR(bw.a(i), br * sd * std::pow(100.0, -1.0 / 6.0), 1e-14);
  }
}

TEST(Bandwidths, DegenerateCoordinate) {
  Matrix pts = random_points(20, 2, 2);
  pts.col(1).setConstant(3.0);
  try {
    bandwidths(pts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateCoordinate);
  }
}

TEST(Kde, SinglePointIsGaussianDensity) {
  Matrix pts(1, 2);
  pts << 0.5, -1.0;
  Bandwidths bw{2, 1, Vector::Constant(2, 0.7)};
  Vector q(2);
  q << 0.1, 0.2;
  const double expected = std::exp(-0.5 * (std::pow(0.4 / 0.7, 2) + std::pow(1.2 / 0.7, 2))) /
                          (2.0 * std::numbers::pi * 0.49);
  EXPECT_NEAR(kde_density(pts, q, bw), expected, 1e-15);
}

TEST(Kde, IntegratesToOneIn1d) {
  const Matrix pts = random_points(30, 1, 4);
  const auto bw = bandwidths(pts);
  double sum = 0.0;
  const double h = 0.01;
  Vector q(1);
  for (double x = -12.0; x <= 12.0; x += h) {
    q(0) = x;
    sum += kde_density(pts, q, bw) * h;
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(Kde, LogSumExpSurvivesFarQueries) {
  const Matrix pts = random_points(50, 3, 5);
  const auto bw = bandwidths(pts);
  const Vector far = Vector::Constant(3, 60.0);
  EXPECT_TRUE(std::isfinite(kde_log_density(pts, far, bw)));
  EXPECT_TRUE(kde_grad_log(pts, far, bw).allFinite());
}

TEST(Kde, DimensionMismatch) {
  const Matrix pts = random_points(10, 2, 6);
  const auto bw = bandwidths(pts);
  EXPECT_THROW(kde_log_density(pts, Vector::Zero(3), bw), Error);
}

TEST(Kde, GradientMatchesFiniteDifference) {
  for (int r = 1; r <= 4; ++r) {
    const Matrix pts = random_points(80, r, 10 + static_cast<std::uint64_t>(r));
    const auto bw = bandwidths(pts);
    Stream rng(99, static_cast<std::uint64_t>(r));
    for (int rep = 0; rep < 25; ++rep) {
      Vector q(r);
      for (int i = 0; i < r; ++i) q(i) = rng.normal() * (1.0 + i);
      const Vector g = kde_grad_log(pts, q, bw);
      const Vector fd =
          central_difference([&](const Vector& z) { return kde_log_density(pts, z, bw); }, q, 1e-5);
      EXPECT_LT(rel_err(g, fd), 1e-6) << "r=" << r;
    }
  }
}

TEST(Kde, LeaveOneOutDropsThePoint) {
  Matrix pts(3, 1);
  pts << 0.0, 1.0, 5.0;
  Bandwidths bw{1, 3, Vector::Constant(1, 1.0)};
  Vector q(1);
  q << 5.0;
  Matrix rest(2, 1);
  rest << 0.0, 1.0;
  Bandwidths bw_rest{1, 2, Vector::Constant(1, 1.0)};
  EXPECT_NEAR(kde_log_density(pts, q, bw, 2), kde_log_density(rest, q, bw_rest), 1e-12);
}

TEST(JointWindows, StackedLayout) {
  std::vector<double> v(10);
  for (int i = 0; i < 10; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  const auto e = embed(TimeSeries(v), 3);
  const Matrix w = joint_windows(e, 2);
  // Row 0 pairs t = 0 (time 4) with s = 2 (time 6): (y5, y4, y3, y2, y1).
  ASSERT_EQ(w.cols(), 5);
  EXPECT_EQ(w.row(0), (Eigen::RowVectorXd(5) << 5, 4, 3, 2, 1).finished());
  EXPECT_EQ(stacked_window(e, 0, 2).transpose(), w.row(0));
  EXPECT_THROW(joint_windows(e, 3), Error);
  EXPECT_THROW(joint_windows(e, 0), Error);
}

TEST(JointWindows, SharedCoordinateMap) {
  EXPECT_FALSE(shared_coordinate(0, 1));
  EXPECT_EQ(*shared_coordinate(1, 1), 0);
  EXPECT_EQ(*shared_coordinate(3, 2), 1);
  Vector head(3), marg(3);
  head << 1, 2, 3;
  marg << 10, 20, 30;
  const Vector g = subtract_shared(head, marg, 1);
  EXPECT_EQ(g, (Vector(3) << 1, -8, -17).finished());
}

TEST(Gaussian, MarginalGradientIsMinusSigmaInverseY) {
  const TimeSeries s = ar2_series(300, 1);
  const auto table = autocovariance(s, 4);
  const GaussianTheory model(table, 3);
  const Matrix sigma = toeplitz(table, 3);
  Vector y(3);
  y << 0.3, -1.0, 0.5;
  EXPECT_LT((model.marginal_gradient(y) + sigma.inverse() * y).norm(), 1e-12);
}

TEST(Gaussian, FiniteDifferenceGradients) {
  const TimeSeries s = ar2_series(500, 2);
  const int p = 3;
  const auto table = autocovariance(s, 2 * p - 2);
  const GaussianTheory model(table, p);
  Stream rng(17, 0);
  for (int rep = 0; rep < 30; ++rep) {
    Vector y(p);
    for (int i = 0; i < p; ++i) y(i) = rng.normal();
    const Vector fd = central_difference(
        [&](const Vector& z) { return model.marginal_log_density(z); }, y, 1e-5);
    EXPECT_LT(rel_err(model.marginal_gradient(y), fd), 1e-6);
    for (int k = 1; k < p; ++k) {
      Vector w(p + k);
      for (int i = 0; i < p + k; ++i) w(i) = rng.normal();
      const Vector y_t = w.tail(p);
      // Vary only Y_{s-1}; shared coordinates move in both the window and Y_{t-1}.
      auto logc = [&](const Vector& ys) {
        Vector ww = w;
        ww.head(p) = ys;
        Vector yt = y_t;
        for (int i = k; i < p; ++i) yt(i - k) = ys(i);
        ww.tail(k) = yt.tail(k);
        return model.conditional_log_density(ww, yt, k);
      };
      const Vector ys = w.head(p);
      Vector yt = y_t;
      for (int i = k; i < p; ++i) yt(i - k) = ys(i);
      Vector ww = w;
      ww.tail(k) = yt.tail(k);
      const Vector g = model.conditional_gradient(ww, yt, k);
      const Vector fd_c = central_difference(logc, ys, 1e-5);
      EXPECT_LT(rel_err(g, fd_c), 1e-6) << "k=" << k;
    }
  }
}

TEST(KdeConditional, FiniteDifferenceAgainstJointMinusMarginal) {
  const TimeSeries s = ar2_series(120, 3);
  const int p = 3;
  const auto e = center(embed(s, p));
  const auto bw_marg = bandwidths(e.predictors);
  for (int k = 1; k < p; ++k) {
    const Matrix windows = joint_windows(e, k);
    const auto bw_joint = bandwidths(windows);
    for (Eigen::Index t = 0; t < 20; ++t) {
      const Vector g = kde_grad_log_conditional(e, windows, bw_joint, bw_marg, t, t + k);
      const Vector w = windows.row(t).transpose();
      const Vector y_t = e.predictors.row(t).transpose();
      // log f(w(ys)) - log f(y_t(ys)) with shared coordinates tied to ys.
      // Centering offsets differ by column, so shared coordinates move together
      // rather than being equal.
      auto logc = [&](const Vector& ys) {
        Vector ww = w;
        ww.head(p) = ys;
        Vector yt = y_t;
        for (int i = k; i < p; ++i) yt(i - k) += ys(i) - w(i);
        return kde_log_density(windows, ww, bw_joint) - kde_log_density(e.predictors, yt, bw_marg);
      };
      const Vector fd = central_difference(logc, w.head(p), 1e-5);
      EXPECT_LT(rel_err(g, fd), 1e-5) << "k=" << k << " t=" << t;
    }
  }
}

TEST(GradientProvider, GaussianMatchesDirectComputation) {
  const TimeSeries s = ar2_series(200, 4);
  const auto e = center(embed(s, 3));
  const auto prov = GradientProvider::build(s, e);
  const GaussianTheory model(autocovariance(s, 4), 3);
  for (Eigen::Index t = 0; t < 10; ++t) {
    EXPECT_LT((prov.marginal_gradient(t) - gaussian_gradient(model, e, t)).norm(), 1e-12);
    for (Eigen::Index s2 = t + 1; s2 < t + 5; ++s2) {
      EXPECT_LT((prov.pair_gradient(t, s2) - gaussian_gradient(model, e, t, s2)).norm(), 1e-12);
    }
  }
  EXPECT_THROW(prov.pair_gradient(3, 3), Error);
}

TEST(GradientProvider, KdeMatchesDirectComputation) {
  const TimeSeries s = ar2_series(150, 5);
  const auto e = center(embed(s, 3));
  ProviderOptions opt;
  opt.backend = Backend::kde;
  const auto prov = GradientProvider::build(s, e, opt);
  const auto bw_marg = bandwidths(e.predictors);
  for (Eigen::Index t = 0; t < 10; ++t) {
    EXPECT_LT((prov.marginal_gradient(t) - kde_grad_log_marginal(e, bw_marg, t)).norm(), 1e-12);
    for (int k = 1; k < 3; ++k) {
      const auto bw_joint = bandwidths(joint_windows(e, k));
      EXPECT_LT((prov.pair_gradient(t, t + k) -
                 kde_grad_log_conditional(e, bw_joint, bw_marg, t, t + k))
                    .norm(),
                1e-12);
      EXPECT_NEAR(prov.pair_density(t, t + k), conditional_density(e, bw_joint, bw_marg, t, t + k),
                  1e-12 * prov.pair_density(t, t + k));
    }
    EXPECT_EQ(prov.pair_gradient(t, t + 3), prov.marginal_gradient(t + 3));
  }
}

TEST(GradientProvider, KdeNeedsTwoJointWindows) {
  // p = 3 with three rows leaves a single window at lag 2.
  const TimeSeries s({0.3, -1.2, 0.8, 1.9, -0.4, 0.1});
  const auto e = center(embed(s, 3));
  ProviderOptions opt;
  opt.backend = Backend::kde;
  try {
    GradientProvider::build(s, e, opt);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::LagTooLarge);
  }
  opt.backend = Backend::gaussian;
  EXPECT_NO_THROW(GradientProvider::build(s, e, opt));
}

TEST(GradientProvider, DeterministicAcrossWorkerCounts) {
  const TimeSeries s = ar2_series(120, 6);
  const auto e = center(embed(s, 3));
  ProviderOptions opt;
  opt.backend = Backend::kde;
  worker_override() = 1;
  const auto a = GradientProvider::build(s, e, opt);
  worker_override() = 4;
  const auto b = GradientProvider::build(s, e, opt);
  worker_override() = 0;
  for (Eigen::Index t = 0; t + 2 < e.rows(); ++t) {
    EXPECT_EQ(a.marginal_gradient(t), b.marginal_gradient(t));
    EXPECT_EQ(a.pair_gradient(t, t + 2), b.pair_gradient(t, t + 2));
  }
}

TEST(GradientProvider, ConstantSeriesFails) {
  const TimeSeries s(std::vector<double>(30, 1.0));
  const auto e = center(embed(s, 2));
  EXPECT_THROW(GradientProvider::build(s, e), Error);
  ProviderOptions opt;
  opt.backend = Backend::kde;
  try {
    GradientProvider::build(s, e, opt);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::DegenerateCoordinate);
  }
}
