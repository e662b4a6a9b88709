#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "dwq/hilbert.hpp"

using namespace dwq;
using C = std::complex<double>;

namespace {

// <m| x^2 |n> from x^2 = (kbar/2)(a^2 + a^dag^2 + 2 a^dag a + 1), no truncation.
double x2_element(int m, int n, double kbar) {
  double v = 0.0;
  if (m == n) v = 2.0 * n + 1.0;
  if (m == n + 2) v = std::sqrt((n + 1.0) * (n + 2.0));
  if (n == m + 2) v = std::sqrt((m + 1.0) * (m + 2.0));
  return 0.5 * kbar * v;
}

double grid_integral(const Eigen::MatrixXd& w, double dx, double dp) { return w.sum() * dx * dp; }

}  // namespace

TEST(Fock, RejectsBadDimensions) {
  EXPECT_THROW(Fock(1), InvalidArgument);
  EXPECT_THROW(Fock(10, 0.0), InvalidArgument);
  EXPECT_NO_THROW(Fock(2));
}

TEST(Operator, HermitianFlagIsChecked) {
  CMatrixd m = CMatrixd::Zero(2, 2);
  m(0, 1) = 1.0;
  EXPECT_THROW(Op(m, true), InvalidArgument);
  EXPECT_NO_THROW(Op(m, false));
  EXPECT_THROW(Op(CMatrixd::Zero(2, 3)), InvalidArgument);
}

TEST(Operator, MixedDimensionsThrow) {
  const auto [x3, p3] = quadratures(Fock(3));
  const auto [x4, p4] = quadratures(Fock(4));
  EXPECT_THROW(x3 + x4, DimensionMismatch);
  EXPECT_THROW(x3 * p4, DimensionMismatch);
  EXPECT_THROW(commutator(x3, p4), DimensionMismatch);
}

TEST(Ladder, CanonicalCommutatorAwayFromEdge) {
  const int n = 12;
  const auto [a, ad] = ladder_operators(Fock(n));
  const CMatrixd c = commutator(a, ad).matrix();
  for (int i = 0; i < n - 1; ++i) EXPECT_NEAR(std::abs(c(i, i) - 1.0), 0.0, 1e-12);
  // truncation puts -(n-1) in the last diagonal entry
  EXPECT_NEAR(c(n - 1, n - 1).real(), -(n - 1.0), 1e-12);
}

TEST(Quadratures, CommutatorIsIKbar) {
  const double kbar = 0.7;
  const int n = 15;
  const auto [x, p] = quadratures(Fock(n, kbar));
  EXPECT_TRUE(x.hermitian());
  EXPECT_TRUE(p.hermitian());
  const CMatrixd c = commutator(x, p).matrix();
  for (int i = 0; i < n - 1; ++i) EXPECT_NEAR(std::abs(c(i, i) - C(0, kbar)), 0.0, 1e-12);
}

TEST(Quadratures, SquareMatchesClosedForm) {
  const double kbar = 1.3;
  const int n = 10;
  const auto x2 = square(quadratures(Fock(n, kbar)).first);
  for (int r = 0; r < n - 1; ++r)
    for (int c = 0; c < n - 1; ++c) EXPECT_NEAR(std::abs(x2.matrix()(r, c) - x2_element(r, c, kbar)), 0.0, 1e-12);
}

TEST(DoubleWell, MatchesPolynomialExpansionAwayFromEdge) {
  // V = (h/b^4)(x^4 - 2 b^2 x^2 + b^4) at a = 0, with x^2 and p^2 from the
  // closed form on a larger space; products are exact on the leading block.
  const int n = 20, big = n + 4;
  const DwParams dw{0.0, 3.0, 5.0};
  CMatrixd x2 = CMatrixd::Zero(big, big);
  for (int r = 0; r < big; ++r)
    for (int c = 0; c < big; ++c) x2(r, c) = x2_element(r, c, 1.0);
  // p^2 = (1/2)(-a^2 - a^dag^2 + 2 a^dag a + 1) differs from x^2 in the sign of the off-diagonals
  CMatrixd p2 = x2;
  for (int r = 0; r < big; ++r)
    for (int c = 0; c < big; ++c)
      if (r != c) p2(r, c) = -p2(r, c);
  const double pref = dw.h / std::pow(dw.b, 4);
  const CMatrixd id = CMatrixd::Identity(big, big);
  const CMatrixd oracle = 0.5 * p2 + pref * (x2 * x2 - 2 * dw.b * dw.b * x2 + std::pow(dw.b, 4) * id);
  const CMatrixd h = double_well_hamiltonian(Fock(n), dw).matrix();
  const int k = n - 2;
  EXPECT_LT((h.topLeftCorner(k, k) - oracle.topLeftCorner(k, k)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(DoubleWell, OffsetBreaksParity) {
  EXPECT_TRUE(commutes_with_parity(double_well_hamiltonian(Fock(30), DwParams{})));
  EXPECT_FALSE(commutes_with_parity(double_well_hamiltonian(Fock(30), DwParams{0.5, 3.0, 5.0})));
  EXPECT_THROW(double_well_hamiltonian(Fock(10), DwParams{0.0, 0.0, 5.0}), InvalidArgument);
}

TEST(Spectrum, HarmonicOscillatorLevels) {
  const Fock space(25);
  const auto [x, p] = quadratures(space);
  const Op h = 0.5 * (square(x) + square(p));
  const auto levels = spectrum(h, 6);
  ASSERT_EQ(levels.size(), 6u);
  // the truncated x^2 + p^2 is exact except on the top level
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(levels[k].energy, k + 0.5, 1e-10);
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(parity_expectation(levels[k].state), k % 2 == 0 ? 1.0 : -1.0, 1e-12);
}

TEST(Spectrum, DoubletStatesHaveDefiniteParity) {
  const auto levels = spectrum(double_well_hamiltonian(Fock(60), DwParams{}), 6);
  for (std::size_t k = 1; k < levels.size(); ++k) EXPECT_GE(levels[k].energy, levels[k - 1].energy);
  // tunnelling doublets: near-degenerate pairs of opposite parity
  EXPECT_LT(levels[1].energy - levels[0].energy, 1e-2);
  for (const auto& l : levels) EXPECT_NEAR(std::abs(parity_expectation(l.state)), 1.0, 1e-9);
}

TEST(Spectrum, NonHermitianRejected) {
  const auto [a, ad] = ladder_operators(Fock(5));
  EXPECT_THROW(spectrum(a, 2), InvalidArgument);
  EXPECT_THROW(ground_state(a), InvalidArgument);
}

TEST(GroundState, EvenCatLikeTarget) {
  const Fock space(60);
  const auto g = ground_state(double_well_hamiltonian(space, DwParams{}));
  EXPECT_NEAR(parity_expectation(g.state), 1.0, 1e-9);
  const Rho rho = Rho::from_pure(g.state);
  EXPECT_NEAR(expectation(square(quadratures(space).first), rho), 9.0, 1.0);
  EXPECT_NEAR(fidelity(rho, g.state), 1.0, 1e-12);
}

TEST(States, CoherentStateMoments) {
  const Fock space(40);
  const C beta(1.2, -0.4);
  const auto psi = coherent_state(space, beta);
  const auto [a, ad] = ladder_operators(space);
  const C mean_a = psi.amplitudes().dot(a.matrix() * psi.amplitudes());
  EXPECT_NEAR(std::abs(mean_a - beta), 0.0, 1e-10);
  const auto [x, p] = quadratures(space);
  const Rho rho = Rho::from_pure(psi);
  EXPECT_NEAR(expectation(x, rho), std::sqrt(2.0) * beta.real(), 1e-10);
  EXPECT_NEAR(expectation(p, rho), std::sqrt(2.0) * beta.imag(), 1e-10);
}

TEST(States, CatIsEven) {
  const auto cat = even_cat_state(Fock(40), C(2.0, 0.0));
  EXPECT_NEAR(parity_expectation(cat), 1.0, 1e-12);
}

TEST(States, ThermalPopulationsAreGeometric) {
  const double nbar = 0.8;
  const Rho rho = thermal_state(Fock(60), nbar);
  const double q = nbar / (1.0 + nbar);
  for (int n = 0; n < 5; ++n) EXPECT_NEAR(rho.matrix()(n, n).real(), std::pow(q, n) / (1.0 + nbar), 1e-10);
  EXPECT_NEAR(rho.matrix().trace().real(), 1.0, 1e-12);
  EXPECT_THROW(thermal_state(Fock(5), -1.0), InvalidArgument);
}

TEST(States, FockStateRange) {
  EXPECT_THROW(fock_state(Fock(4), 4), InvalidArgument);
  EXPECT_THROW(fock_state(Fock(4), -1), InvalidArgument);
}

TEST(DensityMatrix, ValidatesInvariants) {
  CMatrixd m = CMatrixd::Identity(2, 2);
  EXPECT_THROW(Rho{m}, InvalidArgument);  // trace 2
  m = CMatrixd::Zero(2, 2);
  m(0, 0) = 1.5;
  m(1, 1) = -0.5;
  EXPECT_THROW(Rho{m}, InvalidArgument);  // negative eigenvalue
  m = 0.5 * CMatrixd::Identity(2, 2);
  m(0, 1) = 0.1;
  EXPECT_THROW(Rho{m}, InvalidArgument);  // not hermitian
  m(1, 0) = 0.1;
  EXPECT_NO_THROW(Rho{m});
}

TEST(Parity, ProjectionAndNoSupport) {
  const Fock space(10);
  EXPECT_THROW(parity_project(fock_state(space, 2), ParitySector::Odd), NoSupport);
  const auto odd = parity_project(coherent_state(space, C(1.0, 0.0)), ParitySector::Odd);
  EXPECT_NEAR(parity_expectation(odd), -1.0, 1e-12);
  const Rho even = parity_project(thermal_state(space, 1.0), ParitySector::Even);
  EXPECT_NEAR(even.matrix().trace().real(), 1.0, 1e-12);
  for (int n = 1; n < 10; n += 2) EXPECT_EQ(std::abs(even.matrix()(n, n)), 0.0);
}

TEST(TraceDistance, OrthogonalPureStates) {
  const Fock space(5);
  const Rho a = Rho::from_pure(fock_state(space, 0));
  const Rho b = Rho::from_pure(fock_state(space, 3));
  EXPECT_NEAR(trace_distance(a.matrix(), b.matrix()), 1.0, 1e-12);
  EXPECT_NEAR(trace_distance(a.matrix(), a.matrix()), 0.0, 1e-12);
}

TEST(Wigner, CoherentStateIsGaussian) {
  const Fock space(40);
  const C beta(1.0, 0.5);
  const Rho rho = Rho::from_pure(coherent_state(space, beta));
  const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(41, -4, 4);
  const Eigen::VectorXd ps = Eigen::VectorXd::LinSpaced(41, -4, 4);
  const auto w = wigner(rho, xs, ps);
  const double x0 = std::sqrt(2.0) * beta.real(), p0 = std::sqrt(2.0) * beta.imag();
  for (int i = 0; i < xs.size(); i += 5)
    for (int j = 0; j < ps.size(); j += 5) {
      const double d2 = (xs(i) - x0) * (xs(i) - x0) + (ps(j) - p0) * (ps(j) - p0);
      EXPECT_NEAR(w(i, j), std::exp(-d2) / M_PI, 1e-9);
    }
}

TEST(Wigner, FirstExcitedStateIsNegativeAtOrigin) {
  const Rho rho = Rho::from_pure(fock_state(Fock(10), 1));
  const Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(21, -3, 3);
  const auto w = wigner(rho, g, g);
  for (int i = 0; i < g.size(); i += 4)
    for (int j = 0; j < g.size(); j += 4) {
      const double r2 = g(i) * g(i) + g(j) * g(j);
      EXPECT_NEAR(w(i, j), (2 * r2 - 1) * std::exp(-r2) / M_PI, 1e-10);
    }
}

TEST(Wigner, GroundStateNormalizesAndHasTwoLobes) {
  const Fock space(60);
  const auto g = ground_state(double_well_hamiltonian(space, DwParams{}));
  const int n = 161;
  const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(n, -8, 8);
  const Eigen::VectorXd ps = Eigen::VectorXd::LinSpaced(n, -8, 8);
  const auto w = wigner(Rho::from_pure(g.state), xs, ps);
  const double d = 16.0 / (n - 1);
  EXPECT_NEAR(grid_integral(w, d, d), 1.0, 1e-2);
  const int mid = n / 2;
  const int at3 = static_cast<int>(std::lround((3.0 + 8.0) / d));
  const int atm3 = static_cast<int>(std::lround((-3.0 + 8.0) / d));
  EXPECT_GT(w(at3, mid), 0.05);
  EXPECT_GT(w(atm3, mid), 0.05);
  EXPECT_NEAR(w(at3, mid), w(atm3, mid), 1e-8);
}

TEST(Wigner, GridMustIncrease) {
  const Rho rho = Rho::from_pure(fock_state(Fock(4), 0));
  Eigen::VectorXd bad(3);
  bad << 0, 1, 1;
  EXPECT_THROW(wigner(rho, bad, bad), InvalidArgument);
}

TEST(PhaseFlow, MatchesHamiltonEquations) {
  Eigen::VectorXd xs(3), ps(2);
  xs << -1, 0, 2;
  ps << -0.5, 1.5;
  for (auto kind : {FeedbackKind::XpSym, FeedbackKind::XSquared, FeedbackKind::P2MinusX2}) {
    const auto [vx, vp] = phase_flow(kind, xs, ps, 0.7);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        const double x = xs(i), p = ps(j);
        const double dfdp = (feedback_function(kind, x, p + h) - feedback_function(kind, x, p - h)) / (2 * h);
        const double dfdx = (feedback_function(kind, x + h, p) - feedback_function(kind, x - h, p)) / (2 * h);
        EXPECT_NEAR(vx(i, j), 0.7 * dfdp, 1e-6);
        EXPECT_NEAR(vp(i, j), -0.7 * dfdx, 1e-6);
      }
  }
}

TEST(FeedbackOperator, ParityAndHermiticity) {
  const Fock space(20);
  for (auto kind : {FeedbackKind::XpSym, FeedbackKind::XSquared, FeedbackKind::P2MinusX2}) {
    const Op f = feedback_operator(kind, space);
    EXPECT_TRUE(f.hermitian());
    EXPECT_TRUE(commutes_with_parity(f));
  }
  EXPECT_FALSE(commutes_with_parity(quadratures(space).first));
}

TEST(Templated, FloatInstantiation) {
  const FockSpace<float> space(20);
  const auto g = ground_state(double_well_hamiltonian(space, DoubleWellParams<float>{}));
  EXPECT_NEAR(parity_expectation(g.state), 1.0f, 1e-4f);
}

TEST(Fidelity, StaysInUnitIntervalForRandomStates) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 7;
    CMatrixd m(n, n);
    CVector<double> v(n);
    for (int r = 0; r < n; ++r) {
      v(r) = C(g(rng), g(rng));
      for (int c = 0; c < n; ++c) m(r, c) = C(g(rng), g(rng));
    }
    // low-rank draws push the overlap toward the edges of [0, 1]
    if (trial % 3 == 0) m.col(0).setZero();
    CMatrixd rho = m * m.adjoint();
    rho /= rho.trace().real();
    const double f = fidelity(Rho(rho), Ket(v.normalized()));
    EXPECT_GE(f, -1e-12);
    EXPECT_LE(f, 1.0 + 1e-12);
  }
  const Ket psi = fock_state(Fock(5), 2);
  EXPECT_NEAR(fidelity(Rho::from_pure(psi), psi), 1.0, 1e-12);
}

TEST(Wigner, MomentumMarginalIsPositionDensity) {
  const Fock space(60);
  const Ket g = ground_state(double_well_hamiltonian(space, DwParams{})).state;
  const int n = 161;
  const double d = 16.0 / (n - 1);
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(n, -8.0, 8.0);
  const auto w = wigner(Rho::from_pure(g), grid, grid);
  double l1 = 0.0;
  for (int i = 0; i < n; ++i) {
    // psi(x) = sum_n c_n phi_n(x) with the Hermite-function recurrence
    const double x = grid(i);
    double prev = 0.0, cur = std::pow(M_PI, -0.25) * std::exp(-0.5 * x * x);
    C psi = 0.0;
    for (int k = 0; k < space.dim(); ++k) {
      psi += g.amplitudes()(k) * cur;
      const double next = std::sqrt(2.0 / (k + 1)) * x * cur - std::sqrt(double(k) / (k + 1)) * prev;
      prev = cur;
      cur = next;
    }
    l1 += std::abs(w.row(i).sum() * d - std::norm(psi)) * d;
  }
  EXPECT_LT(l1, 1e-2);
}
