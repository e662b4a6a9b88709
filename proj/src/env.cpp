#include "dwq/env.hpp"

#include <cmath>

namespace dwq::env {

std::string to_string(InitialKind k) {
  switch (k) {
    case InitialKind::Thermal: return "thermal";
    case InitialKind::Coherent: return "coherent";
    case InitialKind::SmallCat: return "small-cat";
    case InitialKind::EvenThermal: return "even-thermal";
    case InitialKind::Ground: return "ground";
  }
  return "?";
}

InitialKind parse_initial_kind(const std::string& s) {
  for (auto k : {InitialKind::Thermal, InitialKind::Coherent, InitialKind::SmallCat, InitialKind::EvenThermal,
                 InitialKind::Ground}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown initial state kind '" + s + "'");
}

void InitialStateSpec::validate() const {
  if (!std::isfinite(param)) throw InvalidArgument("initial state: parameter must be finite");
  if ((kind == InitialKind::Thermal || kind == InitialKind::EvenThermal) && param < 0) {
    throw InvalidArgument("initial state: nbar must be >= 0");
  }
}

Rho make_initial_state(const InitialStateSpec& spec, const Fock& space, const DwParams& dw) {
  spec.validate();
  // alpha is a displacement in position units; the ladder eigenvalue is alpha / sqrt(2).
  const std::complex<double> beta(spec.param / std::sqrt(2.0), 0.0);
  switch (spec.kind) {
    case InitialKind::Thermal: return thermal_state(space, spec.param);
    case InitialKind::EvenThermal: return parity_project(thermal_state(space, spec.param), ParitySector::Even);
    case InitialKind::Coherent: return Rho::from_pure(coherent_state(space, beta));
    case InitialKind::SmallCat: return Rho::from_pure(even_cat_state(space, beta));
    case InitialKind::Ground: return Rho::from_pure(ground_state(double_well_hamiltonian(space, dw)).state);
  }
  throw InvalidArgument("initial state: unknown kind");
}

std::string to_string(RewardKind k) { return k == RewardKind::Current ? "current" : "fidelity"; }

RewardKind parse_reward_kind(const std::string& s) {
  if (s == "current") return RewardKind::Current;
  if (s == "fidelity") return RewardKind::Fidelity;
  throw ConfigError("unknown reward kind '" + s + "'");
}

void EpisodeConfig::validate() const {
  if (steps_per_episode < 1) throw InvalidArgument("episode: steps_per_episode must be >= 1");
  if (observation_window < 1) throw InvalidArgument("episode: observation_window must be >= 1");
  if (!(dt_control > 0)) throw InvalidArgument("episode: dt_control must be > 0");
  initial_state.validate();
}

double reward_current(double current, double gain) { return -std::abs(current / gain - 9.0); }

double reward_fidelity(const Rho& rho, const Ket& ground) { return fidelity(rho, ground); }

namespace {

QuantumEnvConfig checked(QuantumEnvConfig cfg) {
  cfg.episode.validate();
  // One source of truth for the control interval.
  cfg.sme.dt_control = cfg.episode.dt_control;
  cfg.sme.validate();
  return cfg;
}

}  // namespace

QuantumEnv::QuantumEnv(const QuantumEnvConfig& cfg)
    : cfg_(checked(cfg)),
      stepper_(cfg_.space, cfg_.sme),
      h_dw_(double_well_hamiltonian(cfg_.space, cfg_.dw)),
      f_(feedback_operator(cfg_.feedback, cfg_.space).matrix()),
      target_(ground_state(h_dw_).state),
      rho0_(make_initial_state(cfg_.episode.initial_state, cfg_.space, cfg_.dw)),
      window_(cfg_.episode.observation_window) {}

ControlObservation QuantumEnv::reset(std::uint64_t seed) {
  rng_ = make_stream(seed, 0);
  rho_ = rho0_.matrix();
  const double primed = cfg_.sme.measurement.gain * stepper_.expect_x2(rho_);
  window_.prime(primed);
  last_current_ = primed;
  last_action_ = 0.0;
  step_ = 0;
  return observe();
}

double QuantumEnv::fidelity_now() const { return fidelity(Rho::unchecked(rho_), target_); }

ControlObservation QuantumEnv::observe() const {
  ControlObservation obs;
  obs.current_mean4 = window_.mean();
  obs.last_action = last_action_;
  obs.last_current = last_current_;
  if (cfg_.episode.expose_privileged) {
    obs.expect_x2 = stepper_.expect_x2(rho_);
    obs.fidelity = fidelity_now();
  }
  return obs;
}

StepResult QuantumEnv::step(ControlAction action) {
  if (step_ < 0) throw ContractViolation("env: step called before reset");
  if (done()) throw ContractViolation("env: episode already finished");
  if (!std::isfinite(action.amplitude)) throw InvalidArgument("env: non-finite amplitude");
  const double amp = control::clip_amplitude(action.amplitude);
  StepRecord<double> rec;
  try {
    rec = stepper_.advance(rho_, h_dw_.matrix() + amp * f_, rng_);
  } catch (const IntegratorAbort& e) {
    throw IntegratorAbort(e.what(), step_);
  }
  ++step_;
  window_.push(rec.current);
  last_current_ = rec.current;
  last_action_ = amp;

  StepResult out;
  out.info.current = rec.current;
  out.info.expect_x2 = rec.expect_x2;
  out.info.fidelity = fidelity(rec.rho_after, target_);
  out.reward = cfg_.episode.reward_kind == RewardKind::Current
                   ? reward_current(rec.current, cfg_.sme.measurement.gain)
                   : out.info.fidelity;
  out.done = done();
  out.obs = observe();
  return out;
}

// ---------------------------------------------------------------------------

ToyState toy_rk4(const ToyConfig& cfg, ToyState s, double force) {
  const double w2 = cfg.omega * cfg.omega;
  const double a_f = force / cfg.mass;
  const double h = cfg.dt;
  auto acc = [&](double x) { return w2 * x + a_f; };
  const double k1x = s.v, k1v = acc(s.x);
  const double k2x = s.v + 0.5 * h * k1v, k2v = acc(s.x + 0.5 * h * k1x);
  const double k3x = s.v + 0.5 * h * k2v, k3v = acc(s.x + 0.5 * h * k2x);
  const double k4x = s.v + h * k3v, k4v = acc(s.x + h * k3x);
  s.x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
  s.v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
  return s;
}

double toy_reward(double x) { return 0.11 / (std::abs(x) + 0.01); }

ToyState ToyEnv::reset(std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  std::uniform_real_distribution<double> u(-cfg_.init_spread, cfg_.init_spread);
  ToyState s;
  s.x = u(rng);
  s.v = u(rng);
  return reset_to(s);
}

ToyState ToyEnv::reset_to(ToyState s) {
  s_ = s;
  step_ = 0;
  done_ = false;
  return s_;
}

ToyStepResult ToyEnv::step(int force_index) {
  if (step_ < 0) throw ContractViolation("toy: step called before reset");
  if (done_) throw ContractViolation("toy: episode already finished");
  if (force_index < 0 || force_index >= static_cast<int>(cfg_.forces.size())) {
    throw InvalidArgument("toy: force index out of range");
  }
  s_ = toy_rk4(cfg_, s_, cfg_.forces[force_index]);
  ++step_;
  done_ = step_ >= cfg_.horizon || std::abs(s_.x) > cfg_.bound;
  return {s_, toy_reward(s_.x), done_};
}

int toy_force_index(double amplitude) {
  const double third = control::kMaxAmplitude / 3.0;
  if (amplitude < -third) return 0;
  if (amplitude > third) return 2;
  return 1;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd encode_observation(const ControlObservation& obs, bool normalize, double b) {
  Eigen::VectorXd v(2);
  v << obs.current_mean4, obs.last_action;
  if (normalize) {
    v(0) = (v(0) - b * b) / (b * b);
    v(1) /= control::kMaxAmplitude;
  }
  return v;
}

Eigen::VectorXd QuantumEnvAdapter::encode(const ControlObservation& obs) const {
  return encode_observation(obs, env_.config().episode.normalize_observations, env_.config().dw.b);
}

Eigen::VectorXd QuantumEnvAdapter::reset(std::uint64_t seed) { return encode(env_.reset(seed)); }

Transition QuantumEnvAdapter::step(double amplitude) {
  const StepResult r = env_.step({amplitude});
  return {encode(r.obs), r.reward, r.done, r.info.fidelity};
}

Eigen::VectorXd ToyEnvAdapter::reset(std::uint64_t seed) {
  const ToyState s = env_.reset(seed);
  return Eigen::Vector2d(s.x, s.v);
}

Transition ToyEnvAdapter::step(double amplitude) {
  const ToyStepResult r = env_.step(toy_force_index(amplitude));
  return {Eigen::Vector2d(r.obs.x, r.obs.v), r.reward, r.done, std::nullopt};
}

}  // namespace dwq::env
