#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "dwq/sme.hpp"

using namespace dwq;
using C = std::complex<double>;

namespace {

CMatrixd random_matrix(int n, Rng& rng) {
  std::normal_distribution<double> g;
  CMatrixd m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m(r, c) = C(g(rng), g(rng));
  return m;
}

Rho random_state(int n, Rng& rng) {
  const CMatrixd m = random_matrix(n, rng);
  CMatrixd rho = m * m.adjoint();
  rho /= rho.trace().real();
  return Rho(rho);
}

SmeConfig config(double gamma, double eta = 1.0) {
  SmeConfig cfg;
  cfg.measurement.gamma_meas = gamma;
  cfg.measurement.eta = eta;
  return cfg;
}

double max_abs(const CMatrixd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Dissipator, LinearOnNonHermitianInput) {
  Rng rng = make_stream(1, 0);
  const int n = 5;
  const CMatrixd l = random_matrix(n, rng);
  const CMatrixd x = random_matrix(n, rng), y = random_matrix(n, rng);
  const C alpha(0.3, -1.1), beta(2.0, 0.5);
  const CMatrixd lhs = dissipator<double>(l, alpha * x + beta * y);
  const CMatrixd rhs = alpha * dissipator<double>(l, x) + beta * dissipator<double>(l, y);
  EXPECT_LT(max_abs(lhs - rhs), 1e-10);
  // element-wise definition
  const CMatrixd def = l * x * l.adjoint() - 0.5 * (l.adjoint() * l * x + x * l.adjoint() * l);
  EXPECT_LT(max_abs(dissipator<double>(l, x) - def), 1e-10);
  // trace preserving for any input
  EXPECT_LT(std::abs(dissipator<double>(l, x).trace()), 1e-10);
}

TEST(Innovation, TracelessAndHermitian) {
  Rng rng = make_stream(2, 0);
  const Rho rho = random_state(6, rng);
  const Op x2 = square(quadratures(Fock(6)).first);
  const CMatrixd h = innovation(x2, rho);
  EXPECT_LT(std::abs(h.trace()), 1e-12);
  EXPECT_LT(max_abs(h - h.adjoint()), 1e-12);
  const auto [a, ad] = ladder_operators(Fock(6));
  EXPECT_THROW(innovation(a, rho), InvalidArgument);
}

TEST(Lindblad, TracePreservingAndDimensionChecked) {
  Rng rng = make_stream(3, 0);
  const Fock space(8);
  const Rho rho = random_state(8, rng);
  const auto ops = collapse_operators(space, config(0.2));
  const Op h = double_well_hamiltonian(space, DwParams{});
  EXPECT_LT(std::abs(lindblad_rhs(rho, h, ops).trace()), 1e-10);
  EXPECT_THROW(lindblad_rhs(rho, double_well_hamiltonian(Fock(9), DwParams{}), ops), DimensionMismatch);
}

TEST(WisemanMilburn, EqualsLindbladFormWithShiftedHamiltonian) {
  // -i[H, r] + g D[A] r - i sqrt(g) [F, A r + r A] + D[F] r
  //   = -i[H + sqrt(g)/2 (F A + A F), r] + D[sqrt(g) A - i F] r
  Rng rng = make_stream(4, 0);
  const Fock space(7);
  const double g = 0.37;
  const Op h = double_well_hamiltonian(space, DwParams{});
  const Op a = square(quadratures(space).first);
  const Op f = feedback_operator(FeedbackKind::XpSym, space);
  const CMatrixd x = random_matrix(7, rng);  // non-hermitian on purpose
  const C i(0, 1);
  const CMatrixd h_eff = h.matrix() + 0.5 * std::sqrt(g) * (f.matrix() * a.matrix() + a.matrix() * f.matrix());
  const CMatrixd c = std::sqrt(g) * a.matrix() - i * f.matrix();
  const CMatrixd oracle = -i * (h_eff * x - x * h_eff) + dissipator<double>(c, x);
  EXPECT_LT(max_abs(wiseman_milburn_rhs<double>(x, h, a, f, g) - oracle), 1e-9 * max_abs(oracle));
}

TEST(WisemanMilburn, ZeroFeedbackIsLindblad) {
  Rng rng = make_stream(5, 0);
  const Fock space(6);
  const Rho rho = random_state(6, rng);
  const Op h = double_well_hamiltonian(space, DwParams{});
  const Op a = square(quadratures(space).first);
  const Op zero(CMatrixd::Zero(6, 6), true);
  const std::vector<Op> ops{Op(std::sqrt(0.2) * a.matrix(), true)};
  EXPECT_LT(max_abs(wiseman_milburn_rhs(rho, h, a, zero, 0.2) - lindblad_rhs(rho, h, ops)), 1e-10);
}

TEST(CollapseOperators, MeasurementFirstThenChannels) {
  SmeConfig cfg = config(0.25);
  cfg.channels = {{ChannelKind::Damping, 0.1}, {ChannelKind::Dephasing, 0.4}};
  const Fock space(6);
  const auto ops = collapse_operators(space, cfg);
  ASSERT_EQ(ops.size(), 3u);
  EXPECT_LT(max_abs(ops[0].matrix() - 0.5 * square(quadratures(space).first).matrix()), 1e-12);
  EXPECT_NEAR(ops[1].matrix()(0, 1).real(), std::sqrt(0.1), 1e-12);
  EXPECT_NEAR(ops[2].matrix()(3, 3).real(), 3 * std::sqrt(0.4), 1e-12);
}

TEST(SmeConfig, Validation) {
  SmeConfig cfg = config(0.1);
  cfg.dt_control = 0.2;
  cfg.n_substeps = 10;  // substep 0.02 at gamma 0.1
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  EXPECT_THROW(config(0.0).validate(), InvalidArgument);
  EXPECT_THROW(config(0.1, 1.5).validate(), InvalidArgument);
  SmeConfig bad = config(0.1);
  bad.channels = {{ChannelKind::Damping, 0.0}};
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(SteadyState, DampedOscillatorRelaxesToVacuum) {
  const Fock space(8);
  const auto [x, p] = quadratures(space);
  const Op h = 0.5 * (square(x) + square(p));
  const auto [a, ad] = ladder_operators(space);
  const std::vector<Op> ops{std::sqrt(0.3) * a};
  const CMatrixd rho = steady_state<double>(8, [&](const CMatrixd& r) { return lindblad_rhs<double>(r, h, ops); });
  EXPECT_NEAR(rho(0, 0).real(), 1.0, 1e-9);
  EXPECT_LT(max_abs(lindblad_rhs<double>(rho, h, ops)), 1e-9);
}

TEST(SteadyState, ParitySectorsAreSeparatelyStationary) {
  const Fock space(12);
  const Op h = double_well_hamiltonian(space, DwParams{});
  const std::vector<Op> ops{std::sqrt(0.1) * square(quadratures(space).first)};
  auto rhs = [&](const CMatrixd& r) { return lindblad_rhs<double>(r, h, ops); };
  for (auto sector : {ParitySector::Even, ParitySector::Odd}) {
    const CMatrixd rho = steady_state<double>(12, rhs, parity_support(12, sector));
    EXPECT_NEAR(rho.trace().real(), 1.0, 1e-10);
    EXPECT_LT(max_abs(rhs(rho)), 1e-8);
    Eigen::SelfAdjointEigenSolver<CMatrixd> es(rho);
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-10);
  }
  EXPECT_THROW(steady_state<double>(4, rhs, {0, 7}), InvalidArgument);
}

TEST(Rk4, ExponentialDecay) {
  CMatrixd r = CMatrixd::Identity(1, 1);
  const CMatrixd out = integrate_rk4<double>(r, [](const CMatrixd& m) -> CMatrixd { return -m; }, 1.0, 0.01);
  EXPECT_NEAR(out(0, 0).real(), std::exp(-1.0), 1e-10);
}

TEST(SmeStepper, InvariantsEveryStep) {
  const Fock space(30);
  SmeConfig cfg = config(0.3);
  cfg.channels = {{ChannelKind::Damping, 0.05}};
  const SmeStepper<double> stepper(space, cfg);
  const Op h = double_well_hamiltonian(space, DwParams{}) + 0.8 * feedback_operator(FeedbackKind::XpSym, space);
  Rng rng = make_stream(6, 0);
  CMatrixd rho = thermal_state(space, 1.0).matrix();
  for (int k = 0; k < 100; ++k) {
    stepper.advance(rho, h.matrix(), rng);
    EXPECT_NEAR(rho.trace().real(), 1.0, 1e-9);
    EXPECT_LT(max_abs(rho - rho.adjoint()), 1e-9);
  }
}

TEST(SmeStepper, ParityConservedWithoutDamping) {
  const Fock space(30);
  SmeConfig cfg = config(0.1);
  cfg.channels = {{ChannelKind::Dephasing, 0.1}};
  const SmeStepper<double> stepper(space, cfg);
  const Op h = double_well_hamiltonian(space, DwParams{}) + 1.5 * feedback_operator(FeedbackKind::XpSym, space);
  const Op par = parity_operator(space);
  Rng rng = make_stream(7, 0);
  CMatrixd rho = parity_project(thermal_state(space, 1.0), ParitySector::Even).matrix();
  for (int k = 0; k < 300; ++k) stepper.advance(rho, h.matrix(), rng);
  EXPECT_NEAR((par.matrix() * rho).trace().real(), 1.0, 1e-8);
}

TEST(SmeStepper, NoiselessFollowsLindblad) {
  const Fock space(20);
  SmeConfig cfg = config(0.1);
  cfg.channels = {{ChannelKind::Damping, 0.05}};
  cfg.n_substeps = 50;
  const SmeStepper<double> stepper(space, cfg);
  const Op h = double_well_hamiltonian(space, DwParams{});
  const auto ops = collapse_operators(space, cfg);
  Rng rng = make_stream(8, 0);
  CMatrixd rho = thermal_state(space, 0.5).matrix();
  const CMatrixd start = rho;
  for (int k = 0; k < 50; ++k) stepper.advance(rho, h.matrix(), rng, true);
  const CMatrixd ref =
      integrate_rk4<double>(start, [&](const CMatrixd& r) { return lindblad_rhs<double>(r, h, ops); }, 0.5, 1e-4);
  EXPECT_LT(trace_distance(rho, ref), 5e-3);
}

TEST(SmeStepper, SplitAndEulerAgreeInMean) {
  const Fock space(8);
  SmeConfig split = config(0.05);
  split.n_substeps = 100;
  SmeConfig euler = split;
  euler.scheme = SmeScheme::EulerMaruyama;
  const Op h = 0.5 * (square(quadratures(space).first) + square(quadratures(space).second));
  const SmeStepper<double> s1(space, split), s2(space, euler);
  const CMatrixd start = thermal_state(space, 0.3).matrix();
  CMatrixd a = CMatrixd::Zero(8, 8), b = a;
  double dw1 = 0, dw2 = 0;
  const int n = 200;
  for (int j = 0; j < n; ++j) {
    Rng r1 = make_stream(9, j), r2 = make_stream(10, j);
    CMatrixd x = start, y = start;
    for (int k = 0; k < 20; ++k) {
      dw1 += s1.advance(x, h.matrix(), r1).dW_sum;
      dw2 += s2.advance(y, h.matrix(), r2).dW_sum;
    }
    a += x / n;
    b += y / n;
  }
  // innovation sums over 0.2 time units: zero mean, standard error sqrt(0.2 / n)
  EXPECT_LT(std::abs(dw1 / n), 4 * std::sqrt(0.2 / n));
  EXPECT_LT(std::abs(dw2 / n), 4 * std::sqrt(0.2 / n));
  EXPECT_LT(trace_distance(a, b), 2e-2);
}

TEST(SmeStepper, RecordDefinition) {
  const Fock space(10);
  SmeConfig cfg = config(0.2, 0.5);
  cfg.measurement.gain = 2.0;
  const SmeStepper<double> stepper(space, cfg);
  Rng rng = make_stream(10, 0);
  CMatrixd rho = thermal_state(space, 1.0).matrix();
  const double x2 = stepper.expect_x2(rho);
  const auto rec = stepper.advance(rho, CMatrixd::Zero(10, 10), rng);
  EXPECT_DOUBLE_EQ(rec.expect_x2, x2);
  EXPECT_NEAR(rec.current, 2.0 * (x2 + rec.dW_sum / (std::sqrt(4 * 0.5 * 0.2) * 0.01)), 1e-9);
}

TEST(SmeStep, RejectsNonHermitianHamiltonian) {
  const Fock space(5);
  Rng rng = make_stream(11, 0);
  const auto [a, ad] = ladder_operators(space);
  EXPECT_THROW(sme_step(space, thermal_state(space, 1.0), a, config(0.1), rng), InvalidArgument);
  EXPECT_THROW(sme_step(space, thermal_state(Fock(6), 1.0), identity<double>(5), config(0.1), rng),
               DimensionMismatch);
}

TEST(Trajectory, SameSeedSameRecord) {
  const Fock space(20);
  const Rho rho0 = thermal_state(space, 1.0);
  AmplitudeFn<double> ctl = [](const FeedbackContext<double>& c) { return c.last ? -0.1 * c.last->current : 0.0; };
  Rng r1 = make_stream(12, 0), r2 = make_stream(12, 0);
  const auto a = evolve_trajectory(rho0, ctl, space, DwParams{}, config(0.1), 30, r1);
  const auto b = evolve_trajectory(rho0, ctl, space, DwParams{}, config(0.1), 30, r2);
  EXPECT_EQ(a.currents, b.currents);
  EXPECT_EQ(a.fidelities, b.fidelities);
  EXPECT_EQ(a.actions.front(), 0.0);
  EXPECT_THROW(evolve_trajectory(rho0, ctl, space, DwParams{}, config(0.1), 0, r1), InvalidArgument);
}

TEST(WeakMeasure, MomentsOnQubitLikeState) {
  Rng rng = make_stream(13, 0);
  const Rho rho = random_state(4, rng);
  const Op a = square(quadratures(Fock(4)).first);
  const double g = 0.8, sigma = 0.3;
  const double mean_a = expectation(a, rho);
  const double var_a = expectation(square(a), rho) - mean_a * mean_a;
  const int n = 4000;
  double s = 0, s2 = 0;
  for (int k = 0; k < n; ++k) {
    const auto m = weak_measure(rho, a, g, sigma, rng);
    s += m.z;
    s2 += m.z * m.z;
    EXPECT_NEAR(m.rho_post.matrix().trace().real(), 1.0, 1e-12);
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  const double v = g * g * var_a + sigma;
  EXPECT_NEAR(mean, g * mean_a, 4 * std::sqrt(v / n));
  EXPECT_NEAR(var, v, 4 * v * std::sqrt(2.0 / n) * 1.5);
}

TEST(WeakMeasure, StrongLimitCollapses) {
  Rng rng = make_stream(14, 0);
  const Fock space(4);
  const Rho rho = thermal_state(space, 1.0);
  const auto [a, ad] = ladder_operators(space);
  const Op n_op = ad * a;
  const Op number(n_op.matrix(), true);
  const auto m = weak_measure(rho, number, 1.0, 1e-6, rng);
  EXPECT_GT(m.rho_post.purity(), 1.0 - 1e-6);
  EXPECT_THROW(weak_measure(rho, number, 1.0, 0.0, rng), InvalidArgument);
}

TEST(MakeStream, IndependentAndReproducible) {
  Rng a = make_stream(42, 0), b = make_stream(42, 0), c = make_stream(42, 1);
  const auto va = a(), vb = b(), vc = c();
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
}

TEST(SmeStepper, EnsembleMeanErrorShrinksLikeInverseRootM) {
  const Fock space(12);
  const SmeConfig cfg = config(0.1);
  const SmeStepper<double> stepper(space, cfg);
  const Op h = 0.5 * (square(quadratures(space).first) + square(quadratures(space).second));
  const CMatrixd start = thermal_state(space, 1.0).matrix();
  const auto ops = collapse_operators(space, cfg);
  const CMatrixd ref =
      integrate_rk4<double>(start, [&](const CMatrixd& r) { return lindblad_rhs<double>(r, h, ops); }, 1.0, 1e-3);
  // error of the M-trajectory mean, averaged over independent batches
  auto error = [&](int m, std::uint64_t tag) {
    double total = 0.0;
    const int batches = 6;
    for (int b = 0; b < batches; ++b) {
      CMatrixd mean = CMatrixd::Zero(12, 12);
      for (int j = 0; j < m; ++j) {
        Rng rng = make_stream(tag + b, j);
        CMatrixd rho = start;
        for (int k = 0; k < 100; ++k) stepper.advance(rho, h.matrix(), rng);
        mean += rho / m;
      }
      total += trace_distance(mean, ref) / batches;
    }
    return total;
  };
  const double e50 = error(50, 100), e200 = error(200, 200);
  EXPECT_GT(e50 / e200, 2.0 / 1.5);
  EXPECT_LT(e50 / e200, 2.0 * 1.5);
}

TEST(SmeStepper, InnovationIsAMartingaleIncrement) {
  const Fock space(12);
  SmeConfig cfg = config(0.3, 0.7);
  cfg.measurement.gain = 1.5;
  const SmeStepper<double> stepper(space, cfg);
  Rng rng = make_stream(16, 0);
  const Op h = 0.5 * (square(quadratures(space).first) + square(quadratures(space).second));
  const CMatrixd fixed = thermal_state(space, 1.5).matrix();
  const int n = 10000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    CMatrixd rho = fixed;
    const auto rec = stepper.advance(rho, h.matrix(), rng);
    const double e = rec.current - cfg.measurement.gain * rec.expect_x2;
    s += e;
    s2 += e * e;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean), 3.0 * se);
}

TEST(SmeStepper, NoiselessStepHasSecondOrderLocalError) {
  const Fock space(16);
  const Op h = double_well_hamiltonian(space, DwParams{});
  const CMatrixd start = thermal_state(space, 1.0).matrix();
  auto local_error = [&](double dt) {
    SmeConfig cfg = config(0.1);
    cfg.dt_control = dt;
    cfg.n_substeps = 1;
    const SmeStepper<double> stepper(space, cfg);
    const auto ops = collapse_operators(space, cfg);
    Rng rng = make_stream(17, 0);
    CMatrixd rho = start;
    stepper.advance(rho, h.matrix(), rng, true);
    const CMatrixd ref =
        integrate_rk4<double>(start, [&](const CMatrixd& r) { return lindblad_rhs<double>(r, h, ops); }, dt, dt / 200);
    return max_abs(rho - ref);
  };
  const double e1 = local_error(0.004), e2 = local_error(0.002);
  EXPECT_NEAR(e1 / e2, 4.0, 1.0);
}
