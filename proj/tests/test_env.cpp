#include <gtest/gtest.h>

#include <cmath>

#include "dwq/env.hpp"

using namespace dwq;
using namespace dwq::env;

namespace {

QuantumEnvConfig small_env(int steps = 20) {
  QuantumEnvConfig cfg;
  cfg.space = Fock(20);
  cfg.episode.steps_per_episode = steps;
  return cfg;
}

double toy_energy(const ToyConfig& c, ToyState s, double force) {
  return 0.5 * s.v * s.v - 0.5 * c.omega * c.omega * s.x * s.x - force / c.mass * s.x;
}

}  // namespace

TEST(InitialStates, Kinds) {
  const Fock space(30);
  const DwParams dw;
  for (auto kind : {InitialKind::Thermal, InitialKind::Coherent, InitialKind::SmallCat, InitialKind::EvenThermal,
                    InitialKind::Ground}) {
    EXPECT_EQ(parse_initial_kind(to_string(kind)), kind);
    const Rho rho = make_initial_state({kind, 1.0}, space, dw);
    EXPECT_NEAR(rho.matrix().trace().real(), 1.0, 1e-12);
  }
  const Rho even = make_initial_state(InitialStateSpec::even_thermal(1.0), space, dw);
  EXPECT_NEAR(expectation(parity_operator(space), even), 1.0, 1e-12);
  const Rho coh = make_initial_state(InitialStateSpec::coherent(2.0), space, dw);
  EXPECT_NEAR(expectation(quadratures(space).first, coh), 2.0, 1e-9);
  EXPECT_THROW(parse_initial_kind("squeezed"), ConfigError);
  EXPECT_THROW(make_initial_state(InitialStateSpec::thermal(-1.0), space, dw), InvalidArgument);
}

TEST(Rewards, CurrentAndFidelity) {
  EXPECT_DOUBLE_EQ(reward_current(9.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(reward_current(14.0, 2.0), -2.0);
  EXPECT_THROW(parse_reward_kind("energy"), ConfigError);
  const Fock space(10);
  const Ket g = fock_state(space, 0);
  EXPECT_DOUBLE_EQ(reward_fidelity(Rho::from_pure(g), g), 1.0);
}

TEST(QuantumEnv, StepContract) {
  QuantumEnv env(small_env(3));
  EXPECT_THROW(env.step({0.0}), ContractViolation);
  env.reset(1);
  EXPECT_THROW(env.step({std::nan("")}), InvalidArgument);
  for (int k = 0; k < 3; ++k) {
    const auto r = env.step({0.0});
    EXPECT_EQ(r.done, k == 2);
  }
  EXPECT_TRUE(env.done());
  EXPECT_THROW(env.step({0.0}), ContractViolation);
  env.reset(2);
  EXPECT_EQ(env.steps_taken(), 0);
}

TEST(QuantumEnv, PrimedWindowAndClippedAction) {
  auto cfg = small_env(5);
  cfg.sme.measurement.gain = 2.0;
  QuantumEnv env(cfg);
  const auto obs = env.reset(3);
  const double x2 = expectation(square(quadratures(cfg.space).first), env.state());
  EXPECT_NEAR(obs.current_mean4, 2.0 * x2, 1e-12);
  EXPECT_FALSE(obs.expect_x2.has_value());
  const auto r = env.step({40.0});
  EXPECT_DOUBLE_EQ(r.obs.last_action, 5.0);
  EXPECT_NEAR(r.obs.current_mean4, 0.5 * (2.0 * x2 + r.info.current), 1e-12);
  EXPECT_DOUBLE_EQ(r.reward, reward_current(r.info.current, 2.0));
}

TEST(QuantumEnv, PrivilegedAndFidelityReward) {
  auto cfg = small_env(2);
  cfg.episode.expose_privileged = true;
  cfg.episode.reward_kind = RewardKind::Fidelity;
  QuantumEnv env(cfg);
  const auto obs = env.reset(4);
  ASSERT_TRUE(obs.expect_x2.has_value());
  EXPECT_NEAR(*obs.fidelity, env.fidelity_now(), 1e-15);
  const auto r = env.step({1.0});
  EXPECT_DOUBLE_EQ(r.reward, r.info.fidelity);
}

TEST(QuantumEnv, SeedDeterminesEpisode) {
  QuantumEnv a(small_env()), b(small_env());
  a.reset(7);
  b.reset(7);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(a.step({0.5}).info.current, b.step({0.5}).info.current);
  a.reset(8);
  b.reset(9);
  EXPECT_NE(a.step({0.0}).info.current, b.step({0.0}).info.current);
}

TEST(QuantumEnv, InvalidEpisodeConfig) {
  auto cfg = small_env();
  cfg.episode.steps_per_episode = 0;
  EXPECT_THROW(QuantumEnv{cfg}, InvalidArgument);
  cfg = small_env();
  cfg.episode.observation_window = 0;
  EXPECT_THROW(QuantumEnv{cfg}, InvalidArgument);
}

TEST(Observation, Encoding) {
  ControlObservation obs;
  obs.current_mean4 = 13.5;
  obs.last_action = -2.5;
  const auto raw = encode_observation(obs, false, 3.0);
  EXPECT_DOUBLE_EQ(raw(0), 13.5);
  EXPECT_DOUBLE_EQ(raw(1), -2.5);
  const auto norm = encode_observation(obs, true, 3.0);
  EXPECT_DOUBLE_EQ(norm(0), 0.5);
  EXPECT_DOUBLE_EQ(norm(1), -0.5);
}

TEST(Toy, Rk4ConservesEnergy) {
  ToyConfig c;
  for (double force : {-1.0, 0.0, 1.0}) {
    ToyState s{0.3, -0.2};
    const double e0 = toy_energy(c, s, force);
    for (int k = 0; k < 100; ++k) s = toy_rk4(c, s, force);
    EXPECT_NEAR(toy_energy(c, s, force), e0, 1e-10);
  }
}

TEST(Toy, Rk4MatchesClosedForm) {
  // x(t) = x0 cosh(w t) + v0/w sinh(w t) without force.
  ToyConfig c;
  c.omega = 1.3;
  ToyState s{0.1, 0.05};
  for (int k = 0; k < 50; ++k) s = toy_rk4(c, s, 0.0);
  const double t = 0.5, w = 1.3;
  EXPECT_NEAR(s.x, 0.1 * std::cosh(w * t) + 0.05 / w * std::sinh(w * t), 1e-10);
}

TEST(Toy, EpisodeTerminatesOutOfBounds) {
  ToyEnv env;
  EXPECT_THROW(env.step(1), ContractViolation);
  env.reset_to({2.4, 1.0});
  ToyStepResult r;
  int n = 0;
  do {
    r = env.step(2);
    ++n;
  } while (!r.done);
  EXPECT_GT(std::abs(r.obs.x), env.config().bound);
  EXPECT_LT(n, env.config().horizon);
  EXPECT_THROW(env.step(1), ContractViolation);
  env.reset(1);
  EXPECT_THROW(env.step(3), InvalidArgument);
}

TEST(Toy, RewardAndForceIndex) {
  EXPECT_NEAR(toy_reward(0.0), 11.0, 1e-12);
  EXPECT_NEAR(toy_reward(-1.0), 0.11 / 1.01, 1e-12);
  EXPECT_EQ(toy_force_index(-5.0), 0);
  EXPECT_EQ(toy_force_index(0.0), 1);
  EXPECT_EQ(toy_force_index(1.6), 1);
  EXPECT_EQ(toy_force_index(1.7), 2);
}

TEST(Toy, ResetSpread) {
  ToyEnv env;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const ToyState st = env.reset(s);
    EXPECT_LE(std::abs(st.x), 0.2);
    EXPECT_LE(std::abs(st.v), 0.2);
  }
}

TEST(Adapters, VectorInterface) {
  auto cfg = small_env(2);
  cfg.episode.normalize_observations = true;
  QuantumEnvAdapter q(cfg);
  EXPECT_EQ(q.observation_dim(), 2);
  const auto o = q.reset(1);
  EXPECT_NEAR(o(0), (expectation(square(quadratures(cfg.space).first), q.env().state()) - 9.0) / 9.0, 1e-12);
  const auto t = q.step(0.0);
  ASSERT_TRUE(t.fidelity.has_value());
  ToyEnvAdapter toy;
  toy.reset(1);
  EXPECT_FALSE(toy.step(0.0).fidelity.has_value());
}

TEST(Rewards, RangesOnRandomInputs) {
  Rng rng = make_stream(18, 0);
  std::normal_distribution<double> g(9.0, 30.0);
  std::uniform_real_distribution<double> gain(0.1, 5.0);
  for (int k = 0; k < 1000; ++k) EXPECT_LE(reward_current(g(rng), gain(rng)), 0.0);
  const Fock space(8);
  std::normal_distribution<double> n;
  for (int k = 0; k < 100; ++k) {
    CMatrixd m(8, 8);
    Eigen::VectorXcd v(8);
    for (int r = 0; r < 8; ++r) {
      v(r) = {n(rng), n(rng)};
      for (int c = 0; c < 8; ++c) m(r, c) = {n(rng), n(rng)};
    }
    CMatrixd rho = m * m.adjoint();
    rho /= rho.trace().real();
    const double f = reward_fidelity(Rho(rho), Ket(v.normalized()));
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
  }
}

TEST(Toy, ZeroForceEnergyOverThousandSteps) {
  ToyConfig c;
  ToyState s{0.1, 0.05};
  const double e0 = toy_energy(c, s, 0.0);
  for (int k = 0; k < 1000; ++k) s = toy_rk4(c, s, 0.0);
  EXPECT_GT(std::abs(s.x), 100.0);  // the unstable mode has grown by e^10
  EXPECT_NEAR(toy_energy(c, s, 0.0), e0, 1e-6);
}
