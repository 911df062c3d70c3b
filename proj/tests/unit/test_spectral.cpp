#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "modalrecon/quadrature.hpp"
#include "modalrecon/random.hpp"
#include "modalrecon/spectral.hpp"
#include "modalrecon/trajectory.hpp"
#include "test_support.hpp"

using namespace modalrecon;
using testing_support::dirichlet;
using testing_support::random_state;

TEST(Spectrum, DirichletWaveOnPi) {
  auto m = dirichlet(Variant::wave, 8);
  for (int k = 0; k < 8; ++k) {
    EXPECT_NEAR(m->eigenvalues()(k), (k + 1.0) * (k + 1.0), 1e-12 * (k + 1) * (k + 1));
    EXPECT_NEAR(m->mode_frequencies()(k), k + 1.0, 1e-12 * (k + 1));
  }
}

TEST(Spectrum, HingedPlateSharesSines) {
  auto m = dirichlet(Variant::plate, 4);
  for (int k = 0; k < 4; ++k) {
    const double j2 = (k + 1.0) * (k + 1.0);
    EXPECT_NEAR(m->eigenvalues()(k), j2, 1e-12 * j2);
    EXPECT_NEAR(m->mode_frequencies()(k), j2, 1e-12 * j2);
  }
  // The bilaplacian of each basis function is lambda^2 times itself: check
  // with a fourth difference at a few points.
  const double h = 1e-3;
  for (int k = 0; k < 4; ++k)
    for (double x : {0.3, 1.1, 2.5}) {
      const double d4 = (m->basis_value(k, x + 2 * h) - 4 * m->basis_value(k, x + h) +
                         6 * m->basis_value(k, x) - 4 * m->basis_value(k, x - h) +
                         m->basis_value(k, x - 2 * h)) /
                        std::pow(h, 4);
      const double lam = m->eigenvalues()(k);
      EXPECT_NEAR(d4, lam * lam * m->basis_value(k, x), 1e-3 * lam * lam);
    }
}

TEST(Spectrum, CircleWithMassShift) {
  auto m = build_model({Variant::wave, Boundary::periodic_circle}, 2 * M_PI, 1.0, 5, 20);
  EXPECT_NEAR(m->mode_frequencies()(0), 1.0, 1e-14);
  EXPECT_NEAR(m->mode_frequencies()(1), std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(m->mode_frequencies()(2), std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(m->mode_frequencies()(3), std::sqrt(5.0), 1e-14);
}

TEST(Spectrum, DirichletGeneralLength) {
  const double L = 2.7;
  auto m = dirichlet(Variant::wave, 40, 0.0, L);
  for (int k = 0; k < 40; ++k) {
    const double ex = std::pow((k + 1) * M_PI / L, 2);
    EXPECT_LE(std::abs(m->eigenvalues()(k) - ex), 1e-12 * ex);
  }
}

TEST(Spectrum, GramMatrixIsIdentity) {
  for (Boundary b : {Boundary::dirichlet_interval, Boundary::periodic_circle}) {
    auto m = build_model({Variant::nls, b}, 3.0, 0.0, 24, 96);
    const auto& q = m->quadrature_grid();
    const Eigen::MatrixXd& E = m->eigenfunction_table();
    const Eigen::MatrixXd G = E * q.weights.asDiagonal() * E.transpose();
    EXPECT_LE((G - Eigen::MatrixXd::Identity(24, 24)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Spectrum, RejectsBadArguments) {
  EXPECT_THROW(dirichlet(Variant::wave, 0), ValidationError);
  EXPECT_THROW(build_model({Variant::wave, Boundary::dirichlet_interval}, -1, 0, 4, 16),
               ValidationError);
  EXPECT_THROW(build_model({Variant::wave, Boundary::dirichlet_interval}, M_PI, 0, 8, 16),
               ValidationError);
  EXPECT_THROW(build_model({Variant::wave, Boundary::periodic_circle}, M_PI, 0, 4, 16),
               ValidationError);
}

TEST(NormSigma, Examples) {
  auto m = dirichlet(Variant::wave, 8);
  SobolevScale s0(m, 0.0), s1(m, 1.0);
  State u(m);
  EXPECT_EQ(norm_sigma(u, s1), 0.0);
  u.coords()(0) = 1.0;
  EXPECT_NEAR(norm_sigma(u, s0), 1.0, 1e-14);
  State v(m);
  v.coords()(8 + 2) = 1.0;
  EXPECT_NEAR(norm_sigma(v, s1), std::sqrt(10.0), 1e-13);
}

TEST(NormSigma, EnergyNormMatchesDenseQuadrature) {
  // sigma = 0 is the H1 x L2 energy norm: int |u_x|^2 + |v|^2 by dense
  // quadrature of the synthesized field.
  auto m = dirichlet(Variant::wave, 6);
  SobolevScale s0(m, 0.0);
  Rng rng(3);
  const State u = random_state(m, rng);
  const auto q = composite_gauss_legendre(0.0, M_PI, 64, 8);
  double acc = 0.0;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double x = q.nodes(i);
    double ux = 0.0, v = 0.0;
    for (int k = 0; k < 6; ++k) {
      ux += u.coords()(k) * (m->basis_value(k, x + h) - m->basis_value(k, x - h)) / (2 * h);
      v += u.coords()(6 + k) * m->basis_value(k, x);
    }
    acc += q.weights(i) * (ux * ux + v * v);
  }
  EXPECT_NEAR(norm_sigma(u, s0), std::sqrt(acc), 1e-7);
}

TEST(NormSigma, MismatchedModelThrows) {
  auto a = dirichlet(Variant::wave, 4);
  auto b = dirichlet(Variant::wave, 4);
  EXPECT_THROW(norm_sigma(State(a), SobolevScale(b, 0.0)), ValidationError);
  EXPECT_THROW(SobolevScale(a, -0.5), ValidationError);
}

TEST(Projections, SplitByFrequency) {
  auto m = dirichlet(Variant::wave, 3);
  State u(m);
  u.coords() << 1, 2, 3, 4, 5, 6;
  const State lo = project_low(u, 2.0), hi = project_high(u, 2.0);
  EXPECT_EQ(lo.coords(), (Eigen::VectorXd(6) << 1, 2, 0, 4, 5, 0).finished());
  EXPECT_EQ(hi.coords(), (Eigen::VectorXd(6) << 0, 0, 3, 0, 0, 6).finished());
  EXPECT_TRUE(project_low(u, 0.0).coords().isZero(0.0));
  EXPECT_EQ(project_high(u, 0.0).coords(), u.coords());
  EXPECT_THROW(project_low(u, -1.0), ValidationError);
}

TEST(Projections, PythagorasAndIdempotence) {
  Rng rng(11);
  for (double sigma : {0.0, 0.6, 1.0}) {
    auto m = dirichlet(Variant::plate, 12);
    SobolevScale sc(m, sigma);
    for (int i = 0; i < 100; ++i) {
      const State u = random_state(m, rng);
      const double n = rng.uniform(0.0, 150.0);
      const State lo = project_low(u, n), hi = project_high(u, n);
      const double lhs = std::pow(norm_sigma(lo, sc), 2) + std::pow(norm_sigma(hi, sc), 2);
      const double rhs = std::pow(norm_sigma(u, sc), 2);
      EXPECT_LE(std::abs(lhs - rhs), 1e-13 * rhs);
      EXPECT_EQ(project_low(lo, n).coords(), lo.coords());
      EXPECT_EQ(project_high(hi, n).coords(), hi.coords());
    }
  }
}

TEST(Projections, ModeSetsPartition) {
  auto m = build_model({Variant::wave, Boundary::periodic_circle}, 2 * M_PI, 1.0, 9, 36);
  const ModeSet lo = low_modes(*m, 2.0), hi = high_modes(*m, 2.0);
  EXPECT_EQ(lo, (ModeSet{0, 1, 2}));
  EXPECT_EQ(lo.size() + hi.size(), 9u);
  EXPECT_EQ(all_modes(*m).size(), 9u);
}

TEST(Normalized, RoundTrip) {
  auto m = dirichlet(Variant::wave, 10, 0.5);
  Rng rng(5);
  const State u = random_state(m, rng);
  const Eigen::VectorXcd z = to_normalized(*m, u.coords());
  EXPECT_LE((from_normalized(*m, z) - u.coords()).norm(), 1e-15 * u.coords().norm() * 10);
  SobolevScale sc(m, 0.7);
  double acc = 0;
  for (int k = 0; k < 10; ++k) acc += sc.mode_weights()(k) * std::norm(z(k));
  EXPECT_NEAR(std::sqrt(acc), norm_sigma(u, sc), 1e-14);
}

TEST(Quadrature, GaussLegendreExactness) {
  const auto q = gauss_legendre(10, 0.0, 2.0);
  for (int p = 0; p <= 19; ++p) {
    double s = 0;
    for (Eigen::Index i = 0; i < q.size(); ++i) s += q.weights(i) * std::pow(q.nodes(i), p);
    EXPECT_NEAR(s, std::pow(2.0, p + 1) / (p + 1), 1e-12 * std::pow(2.0, p + 1));
  }
  const auto c = composite_gauss_legendre(0.0, M_PI, 16, 6);
  double s = 0;
  for (Eigen::Index i = 0; i < c.size(); ++i) s += c.weights(i) * std::sin(c.nodes(i));
  EXPECT_NEAR(s, 2.0, 1e-14);
}

TEST(Quadrature, GregoryWeightsExactForCubics) {
  const int count = 41;
  const double dt = 0.05;
  const Eigen::VectorXd w = uniform_grid_weights(count, dt);
  EXPECT_GT(w.minCoeff(), 0.0);
  for (int p = 0; p <= 3; ++p) {
    double s = 0;
    for (int i = 0; i < count; ++i) s += w(i) * std::pow(i * dt, p);
    const double T = (count - 1) * dt;
    EXPECT_NEAR(s, std::pow(T, p + 1) / (p + 1), 1e-13);
  }
}

TEST(Trajectories, GridAndSegments) {
  EXPECT_THROW(make_time_grid(1.0, 0.3), ValidationError);
  const TimeGrid g = make_time_grid(1.0, 0.25);
  EXPECT_EQ(g.steps, 4);
  auto m = dirichlet(Variant::wave, 2);
  Trajectory tr(m, g);
  for (int c = 0; c < tr.size(); ++c) tr.column(c).setConstant(c);
  const Trajectory seg = tr.segment(1, 3);
  EXPECT_EQ(seg.size(), 3);
  EXPECT_EQ(seg.column(0)(0), 1.0);
  const Trajectory sub = tr.subsample(2);
  EXPECT_EQ(sub.size(), 3);
  EXPECT_EQ(sub.column(2)(0), 4.0);
  EXPECT_DOUBLE_EQ(sub.grid().dt, 0.5);
}

TEST(Random, StreamIsSeededAndInRange) {
  Rng a(42), b(42), c(43);
  double mean = 0, var = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
    const double g = c.normal();
    mean += g;
    var += g * g;
  }
  mean /= n;
  var = var / n - mean * mean;
  EXPECT_LT(std::abs(mean), 0.05);
  EXPECT_LT(std::abs(var - 1.0), 0.05);
}
