#pragma once

// Episodic environments: the double-well feedback task and a classical
// inverted oscillator used to sanity-check the learning stack.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "dwq/control.hpp"
#include "dwq/hilbert.hpp"
#include "dwq/sme.hpp"

namespace dwq::env {

using control::ControlAction;
using control::ControlObservation;

enum class InitialKind { Thermal, Coherent, SmallCat, EvenThermal, Ground };

std::string to_string(InitialKind k);
InitialKind parse_initial_kind(const std::string& s);

/// Initial state family plus its one parameter: nbar for the thermal kinds,
/// alpha (a real position displacement, <x> = alpha sqrt(kbar)) for the
/// coherent and cat kinds. Ground ignores the parameter.
struct InitialStateSpec {
  InitialKind kind = InitialKind::EvenThermal;
  double param = 1.0;

  static InitialStateSpec thermal(double nbar = 1.0) { return {InitialKind::Thermal, nbar}; }
  static InitialStateSpec coherent(double alpha = 3.0) { return {InitialKind::Coherent, alpha}; }
  static InitialStateSpec small_cat(double alpha = 1.0) { return {InitialKind::SmallCat, alpha}; }
  static InitialStateSpec even_thermal(double nbar = 1.0) { return {InitialKind::EvenThermal, nbar}; }
  static InitialStateSpec ground() { return {InitialKind::Ground, 0.0}; }

  void validate() const;
};

Rho make_initial_state(const InitialStateSpec& spec, const Fock& space, const DwParams& dw);

enum class RewardKind { Current, Fidelity };

std::string to_string(RewardKind k);
RewardKind parse_reward_kind(const std::string& s);

struct EpisodeConfig {
  int steps_per_episode = 1000;
  double dt_control = 0.01;
  RewardKind reward_kind = RewardKind::Current;
  InitialStateSpec initial_state;
  int observation_window = 4;
  bool normalize_observations = false;
  bool expose_privileged = false;

  void validate() const;
};

struct StepInfo {
  double fidelity = 0.0;
  double current = 0.0;
  double expect_x2 = 0.0;
};

struct StepResult {
  ControlObservation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// -|I/gain - 9|.
double reward_current(double current, double gain);
/// <g|rho|g>.
double reward_fidelity(const Rho& rho, const Ket& ground);

struct QuantumEnvConfig {
  Fock space{60};
  DwParams dw;
  SmeConfig sme;
  EpisodeConfig episode;
  FeedbackKind feedback = FeedbackKind::XpSym;
};

class QuantumEnv {
 public:
  explicit QuantumEnv(const QuantumEnvConfig& cfg);

  ControlObservation reset(std::uint64_t seed);
  StepResult step(ControlAction action);

  const QuantumEnvConfig& config() const { return cfg_; }
  Rho state() const { return Rho::unchecked(rho_); }
  const Ket& target() const { return target_; }
  int steps_taken() const { return step_; }
  bool done() const { return step_ >= cfg_.episode.steps_per_episode; }
  /// Fidelity of the current state with the ground state.
  double fidelity_now() const;

 private:
  ControlObservation observe() const;

  QuantumEnvConfig cfg_;
  SmeStepper<double> stepper_;
  Op h_dw_;
  CMatrixd f_;
  Ket target_;
  Rho rho0_;
  CMatrixd rho_;
  Rng rng_;
  control::CurrentWindow window_;
  double last_action_ = 0.0;
  double last_current_ = 0.0;
  int step_ = -1;  // -1 until the first reset
};

// ---------------------------------------------------------------------------
// Classical inverted oscillator: x'' = omega^2 x + F / m.

struct ToyConfig {
  double omega = 1.0;
  double mass = 1.0;
  std::array<double, 3> forces{-1.0, 0.0, 1.0};
  double bound = 2.5;
  int horizon = 500;
  double dt = 0.01;
  double init_spread = 0.2;  // x0, v0 ~ U(-spread, spread)
};

struct ToyState {
  double x = 0.0;
  double v = 0.0;
};

/// One explicit RK4 step of the inverted oscillator under constant force.
ToyState toy_rk4(const ToyConfig& cfg, ToyState s, double force);

/// 0.11 / (|x| + 0.01).
double toy_reward(double x);

struct ToyStepResult {
  ToyState obs;
  double reward = 0.0;
  bool done = false;
};

class ToyEnv {
 public:
  explicit ToyEnv(const ToyConfig& cfg = {}) : cfg_(cfg) {}

  ToyState reset(std::uint64_t seed);
  /// Starts from a fixed state instead of a random one.
  ToyState reset_to(ToyState s);
  ToyStepResult step(int force_index);

  const ToyConfig& config() const { return cfg_; }
  int steps_taken() const { return step_; }

 private:
  ToyConfig cfg_;
  ToyState s_;
  int step_ = -1;
  bool done_ = false;
};

/// Maps a continuous amplitude in [-5, 5] to a force index by thirds.
int toy_force_index(double amplitude);

// ---------------------------------------------------------------------------
// Vector interface consumed by the trainer.

struct Transition {
  Eigen::VectorXd obs;
  double reward = 0.0;
  bool done = false;
  std::optional<double> fidelity;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual int observation_dim() const = 0;
  virtual Eigen::VectorXd reset(std::uint64_t seed) = 0;
  virtual Transition step(double amplitude) = 0;
};

/// Network input [current_mean4, last_action]; with `normalize` centered on
/// the setpoint b^2 and scaled to O(1).
Eigen::VectorXd encode_observation(const ControlObservation& obs, bool normalize, double b);

class QuantumEnvAdapter final : public Environment {
 public:
  explicit QuantumEnvAdapter(const QuantumEnvConfig& cfg) : env_(cfg) {}
  int observation_dim() const override { return 2; }
  Eigen::VectorXd reset(std::uint64_t seed) override;
  Transition step(double amplitude) override;
  QuantumEnv& env() { return env_; }

 private:
  Eigen::VectorXd encode(const ControlObservation& obs) const;
  QuantumEnv env_;
};

/// Observation [x, v]; the amplitude is mapped to a force with toy_force_index.
class ToyEnvAdapter final : public Environment {
 public:
  explicit ToyEnvAdapter(const ToyConfig& cfg = {}) : env_(cfg) {}
  int observation_dim() const override { return 2; }
  Eigen::VectorXd reset(std::uint64_t seed) override;
  Transition step(double amplitude) override;

 private:
  ToyEnv env_;
};

}  // namespace dwq::env
