#include <gtest/gtest.h>

#include "dwq/control.hpp"

using namespace dwq;
using namespace dwq::control;

namespace {

ClosedLoopConfig small_loop(int horizon = 40) {
  ClosedLoopConfig cfg;
  cfg.space = Fock(20);
  cfg.horizon = horizon;
  return cfg;
}

// Records the observations it was shown.
class Spy final : public Controller {
 public:
  ControlAction act(const ControlObservation& obs, Rng&) override {
    seen.push_back(obs);
    return {value};
  }
  std::string name() const override { return "spy"; }
  std::vector<ControlObservation> seen;
  double value = 0.0;
};

}  // namespace

TEST(BayesianAmplitude, SignAndClip) {
  EXPECT_DOUBLE_EQ(bayesian_amplitude(9.0, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(bayesian_amplitude(8.0, 3.0), 1.0);
  EXPECT_DOUBLE_EQ(bayesian_amplitude(10.5, 3.0, 2.0), -3.0);
  EXPECT_DOUBLE_EQ(bayesian_amplitude(0.0, 3.0), 5.0);
  EXPECT_DOUBLE_EQ(bayesian_amplitude(100.0, 3.0), -5.0);
}

TEST(Controllers, NullAndRandom) {
  Rng rng = make_stream(1, 0);
  NullController null;
  RandomController rnd;
  EXPECT_EQ(null.act({}, rng).amplitude, 0.0);
  double lo = 0, hi = 0;
  for (int k = 0; k < 2000; ++k) {
    const double a = rnd.act({}, rng).amplitude;
    ASSERT_LE(std::abs(a), kMaxAmplitude);
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  EXPECT_LT(lo, -4.9);
  EXPECT_GT(hi, 4.9);
}

TEST(Controllers, BayesianSources) {
  Rng rng = make_stream(2, 0);
  ControlObservation obs;
  obs.current_mean4 = 2.0 * 7.0;
  obs.expect_x2 = 10.0;
  BayesianController cm(EstimateSource::ConditionalMean, 3.0);
  BayesianController cur(EstimateSource::Current, 3.0, 1.0, 2.0);
  EXPECT_DOUBLE_EQ(cm.act(obs, rng).amplitude, -1.0);
  EXPECT_DOUBLE_EQ(cur.act(obs, rng).amplitude, 2.0);
  EXPECT_TRUE(cm.needs_privileged());
  EXPECT_FALSE(cur.needs_privileged());
  obs.expect_x2.reset();
  EXPECT_THROW(controller_act(cm, obs, rng), ConfigError);
}

TEST(Controllers, MarkovianUsesLatestCurrent) {
  Rng rng = make_stream(3, 0);
  ControlObservation obs;
  obs.last_current = 8.5;
  obs.current_mean4 = 100.0;
  MarkovianController m(3.0, 2.0);
  EXPECT_DOUBLE_EQ(m.act(obs, rng).amplitude, 1.0);
}

TEST(Controllers, ActClipsAndRejectsNonFinite) {
  Rng rng = make_stream(4, 0);
  Spy spy;
  spy.value = 12.0;
  EXPECT_DOUBLE_EQ(controller_act(spy, {}, rng).amplitude, 5.0);
  spy.value = std::nan("");
  EXPECT_THROW(controller_act(spy, {}, rng), InvalidArgument);
}

TEST(CurrentWindow, PrimingAndEviction) {
  CurrentWindow w(4);
  EXPECT_EQ(w.mean(), 0.0);
  w.prime(8.0);
  EXPECT_DOUBLE_EQ(w.mean(), 8.0);
  w.push(4.0);
  EXPECT_DOUBLE_EQ(w.mean(), 6.0);
  w.push(0.0);
  w.push(0.0);
  w.push(0.0);  // the primed value falls out
  EXPECT_EQ(w.size(), 4);
  EXPECT_DOUBLE_EQ(w.mean(), 1.0);
  w.prime(2.0);
  EXPECT_EQ(w.size(), 1);
  EXPECT_THROW(CurrentWindow(0), InvalidArgument);
}

TEST(ClosedLoop, FirstObservationIsPrimed) {
  const auto cfg = small_loop(3);
  const Rho rho0 = thermal_state(cfg.space, 1.0);
  Spy spy;
  Rng sim = make_stream(5, 0), ctl = make_stream(5, 1);
  run_closed_loop(spy, rho0, cfg, sim, ctl);
  ASSERT_EQ(spy.seen.size(), 3u);
  const double x2 = expectation(square(quadratures(cfg.space).first), rho0);
  EXPECT_NEAR(spy.seen[0].current_mean4, x2, 1e-12);
  EXPECT_NEAR(*spy.seen[0].expect_x2, x2, 1e-12);
  EXPECT_EQ(spy.seen[0].last_action, 0.0);
}

TEST(ClosedLoop, HidesPrivilegedFieldsWhenAsked) {
  auto cfg = small_loop(2);
  cfg.expose_privileged = false;
  Spy spy;
  Rng sim = make_stream(6, 0), ctl = make_stream(6, 1);
  run_closed_loop(spy, thermal_state(cfg.space, 1.0), cfg, sim, ctl);
  EXPECT_FALSE(spy.seen[0].expect_x2.has_value());
  EXPECT_FALSE(spy.seen[0].fidelity.has_value());
  BayesianController cm(EstimateSource::ConditionalMean, 3.0);
  EXPECT_THROW(run_closed_loop(cm, thermal_state(cfg.space, 1.0), cfg, sim, ctl), ConfigError);
}

TEST(ClosedLoop, DeterministicUnderSeeds) {
  const auto cfg = small_loop();
  const Rho rho0 = thermal_state(cfg.space, 1.0);
  BayesianController c(EstimateSource::Current, 3.0);
  Rng s1 = make_stream(7, 0), c1 = make_stream(7, 1), s2 = make_stream(7, 0), c2 = make_stream(7, 1);
  const auto a = run_closed_loop(c, rho0, cfg, s1, c1);
  const auto b = run_closed_loop(c, rho0, cfg, s2, c2);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.fidelities, b.fidelities);
  EXPECT_THROW(run_closed_loop(c, thermal_state(Fock(21), 1.0), cfg, s1, c1), DimensionMismatch);
}

TEST(ClosedLoop, ConditionalMeanFeedbackRaisesFidelity) {
  auto cfg = small_loop(200);
  cfg.space = Fock(30);
  const Rho rho0 = parity_project(thermal_state(cfg.space, 1.0), ParitySector::Even);
  BayesianController cm(EstimateSource::ConditionalMean, 3.0);
  NullController null;
  double with = 0, without = 0;
  for (int e = 0; e < 3; ++e) {
    Rng s1 = make_stream(8, e), c1 = make_stream(9, e), s2 = make_stream(8, e), c2 = make_stream(9, e);
    with += run_closed_loop(cm, rho0, cfg, s1, c1).mean_fidelity();
    without += run_closed_loop(null, rho0, cfg, s2, c2).mean_fidelity();
  }
  EXPECT_GT(with, without + 0.3);
}

TEST(Ensemble, SharedAmplitudeAndStatistics) {
  const auto cfg = small_loop(10);
  const Rho rho0 = thermal_state(cfg.space, 1.0);
  const auto st = ensemble_bayesian_run(4, cfg, EstimateSource::ConditionalMean, rho0, 11);
  ASSERT_EQ(st.copy_fidelity.size(), 4u);
  ASSERT_EQ(st.amplitudes.size(), 10u);
  for (int k = 0; k < 10; ++k) {
    double m = 0;
    for (const auto& c : st.copy_fidelity) m += c[k];
    EXPECT_NEAR(st.mean_fidelity[k], m / 4, 1e-12);
  }
  // step 0 sees only the common initial state
  EXPECT_DOUBLE_EQ(st.amplitudes[0],
                   bayesian_amplitude(expectation(square(quadratures(cfg.space).first), rho0), 3.0));
  EXPECT_THROW(ensemble_bayesian_run(0, cfg, EstimateSource::Current, rho0, 1), InvalidArgument);
}

TEST(Ensemble, SingleCopyMatchesClosedLoop) {
  const auto cfg = small_loop(15);
  const Rho rho0 = thermal_state(cfg.space, 1.0);
  const auto st = ensemble_bayesian_run(1, cfg, EstimateSource::ConditionalMean, rho0, 12);
  BayesianController cm(EstimateSource::ConditionalMean, 3.0);
  Rng sim = make_stream(12, 0), ctl = make_stream(0, 0);
  const auto rec = run_closed_loop(cm, rho0, cfg, sim, ctl);
  for (int k = 0; k < 15; ++k) EXPECT_NEAR(st.copy_fidelity[0][k], rec.fidelities[k], 1e-12);
}

TEST(BayesianAmplitude, OddAroundSetpoint) {
  Rng rng = make_stream(13, 0);
  std::uniform_real_distribution<double> d(0.0, 20.0), g(0.1, 3.0);
  for (int k = 0; k < 200; ++k) {
    const double delta = d(rng) * 0.2, gain = g(rng);
    const double up = bayesian_amplitude(9.0 + delta, 3.0, gain), down = bayesian_amplitude(9.0 - delta, 3.0, gain);
    if (std::abs(up) < kMaxAmplitude) {
      EXPECT_NEAR(up, -down, 1e-12);  // 9 +- delta rounds differently
    }
  }
}

TEST(Controllers, AmplitudesStayInRangeOnRandomObservations) {
  Rng rng = make_stream(14, 0);
  std::normal_distribution<double> wide(9.0, 50.0);
  BayesianController cm(EstimateSource::ConditionalMean, 3.0, 3.0);
  BayesianController cur(EstimateSource::Current, 3.0, 3.0);
  MarkovianController mk(3.0, 4.0);
  RandomController rnd;
  for (int k = 0; k < 500; ++k) {
    ControlObservation obs;
    obs.current_mean4 = wide(rng);
    obs.last_current = wide(rng);
    obs.expect_x2 = std::abs(wide(rng));
    for (Controller* c : std::initializer_list<Controller*>{&cm, &cur, &mk, &rnd}) {
      EXPECT_LE(std::abs(controller_act(*c, obs, rng).amplitude), kMaxAmplitude);
    }
  }
}

TEST(ClosedLoop, ConditionalMeanKeepsPacketNearTheWells) {
  auto cfg = small_loop(600);
  cfg.space = Fock(30);
  const Rho rho0 = parity_project(thermal_state(cfg.space, 1.0), ParitySector::Even);
  BayesianController cm(EstimateSource::ConditionalMean, 3.0);
  Rng sim = make_stream(15, 0), ctl = make_stream(15, 1);
  const auto rec = run_closed_loop(cm, rho0, cfg, sim, ctl);
  int inside = 0, total = 0;
  for (std::size_t k = 200; k < rec.expect_x2.size(); ++k, ++total) inside += std::abs(rec.expect_x2[k] - 9.0) <= 3.0;
  EXPECT_GE(inside, 0.9 * total);
}
