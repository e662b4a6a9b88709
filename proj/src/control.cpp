#include "dwq/control.hpp"

#include <numeric>

namespace dwq::control {

double bayesian_amplitude(double estimate_x2, double b, double gain) {
  return clip_amplitude(-gain * (estimate_x2 - b * b));
}

ControlAction RandomController::act(const ControlObservation&, Rng& rng) {
  std::uniform_real_distribution<double> u(-kMaxAmplitude, kMaxAmplitude);
  return {u(rng)};
}

ControlAction BayesianController::act(const ControlObservation& obs, Rng&) {
  double estimate = 0.0;
  if (source_ == EstimateSource::ConditionalMean) {
    if (!obs.expect_x2) throw ConfigError("bayesian: conditional-mean mode needs the privileged expect_x2 field");
    estimate = *obs.expect_x2;
  } else {
    estimate = obs.current_mean4 / current_gain_;
  }
  return {bayesian_amplitude(estimate, b_, feedback_gain_)};
}

std::string BayesianController::name() const {
  return source_ == EstimateSource::ConditionalMean ? "bayesian-conditional-mean" : "bayesian-current";
}

ControlAction MarkovianController::act(const ControlObservation& obs, Rng&) {
  return {bayesian_amplitude(obs.last_current / current_gain_, b_, feedback_gain_)};
}

ControlAction controller_act(Controller& controller, const ControlObservation& obs, Rng& rng) {
  if (controller.needs_privileged() && !obs.expect_x2) {
    throw ConfigError("controller '" + controller.name() + "' needs privileged observations");
  }
  ControlAction a = controller.act(obs, rng);
  if (!std::isfinite(a.amplitude)) throw InvalidArgument("controller '" + controller.name() + "' returned a non-finite amplitude");
  a.amplitude = clip_amplitude(a.amplitude);
  return a;
}

CurrentWindow::CurrentWindow(int size) : capacity_(size) {
  if (size < 1) throw InvalidArgument("observation window must be >= 1");
}

void CurrentWindow::prime(double value) {
  values_.clear();
  values_.push_back(value);
}

void CurrentWindow::push(double value) {
  values_.push_back(value);
  while (static_cast<int>(values_.size()) > capacity_) values_.pop_front();
}

double CurrentWindow::mean() const {
  if (values_.empty()) return 0.0;
  return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
}

namespace {

struct LoopState {
  CMatrixd rho;
  CurrentWindow window;
  double last_action = 0.0;
  double last_current = 0.0;
};

ControlObservation observe(const LoopState& s, const SmeStepper<double>& stepper, const Ket& target, bool privileged) {
  ControlObservation obs;
  obs.current_mean4 = s.window.mean();
  obs.last_action = s.last_action;
  obs.last_current = s.last_current;
  if (privileged) {
    obs.expect_x2 = stepper.expect_x2(s.rho);
    obs.fidelity = fidelity(DensityMatrix<double>::unchecked(s.rho), target);
  }
  return obs;
}

void validate(const ClosedLoopConfig& cfg, const Rho& rho0) {
  if (cfg.horizon < 1) throw InvalidArgument("closed loop: horizon must be >= 1");
  detail::require_same_dim(cfg.space.dim(), rho0.dim(), "closed loop");
}

}  // namespace

TrajectoryRecord<double> run_closed_loop(Controller& controller, const Rho& rho0, const ClosedLoopConfig& cfg,
                                         Rng& sim_rng, Rng& ctrl_rng) {
  validate(cfg, rho0);
  const SmeStepper<double> stepper(cfg.space, cfg.sme);
  const Op h_dw = double_well_hamiltonian(cfg.space, cfg.dw);
  const Ket target = ground_state(h_dw).state;
  const CMatrixd f = feedback_operator(cfg.feedback, cfg.space).matrix();
  const double gain = cfg.sme.measurement.gain;

  LoopState s{rho0.matrix(), CurrentWindow(cfg.window)};
  s.window.prime(gain * stepper.expect_x2(s.rho));
  s.last_current = gain * stepper.expect_x2(s.rho);

  TrajectoryRecord<double> out;
  out.dt_control = cfg.sme.dt_control;
  for (int k = 0; k < cfg.horizon; ++k) {
    const double amp = controller_act(controller, observe(s, stepper, target, cfg.expose_privileged), ctrl_rng).amplitude;
    StepRecord<double> rec;
    try {
      rec = stepper.advance(s.rho, h_dw.matrix() + amp * f, sim_rng);
    } catch (const IntegratorAbort& e) {
      throw IntegratorAbort(e.what(), k);
    }
    s.window.push(rec.current);
    s.last_current = rec.current;
    s.last_action = amp;
    out.currents.push_back(rec.current);
    out.actions.push_back(amp);
    out.expect_x2.push_back(rec.expect_x2);
    out.fidelities.push_back(fidelity(rec.rho_after, target));
  }
  out.final_rho = DensityMatrix<double>::unchecked(s.rho);
  return out;
}

EnsembleStats ensemble_bayesian_run(int n_copies, const ClosedLoopConfig& cfg, EstimateSource source,
                                    const Rho& rho0, std::uint64_t seed, double feedback_gain) {
  if (n_copies < 1) throw InvalidArgument("ensemble: n_copies must be >= 1");
  validate(cfg, rho0);
  const SmeStepper<double> stepper(cfg.space, cfg.sme);
  const Op h_dw = double_well_hamiltonian(cfg.space, cfg.dw);
  const Ket target = ground_state(h_dw).state;
  const CMatrixd f = feedback_operator(cfg.feedback, cfg.space).matrix();
  const double gain = cfg.sme.measurement.gain;
  const double b = cfg.dw.b;

  std::vector<LoopState> copies;
  std::vector<Rng> rngs;
  copies.reserve(n_copies);
  for (int c = 0; c < n_copies; ++c) {
    copies.push_back({rho0.matrix(), CurrentWindow(cfg.window)});
    copies.back().window.prime(gain * stepper.expect_x2(rho0.matrix()));
    rngs.push_back(make_stream(seed, static_cast<std::uint64_t>(c)));
  }

  EnsembleStats out;
  out.copy_fidelity.assign(n_copies, {});
  double total = 0.0;
  for (int k = 0; k < cfg.horizon; ++k) {
    double estimate = 0.0;
    for (const auto& s : copies) {
      estimate += source == EstimateSource::ConditionalMean ? stepper.expect_x2(s.rho) : s.window.mean() / gain;
    }
    const double amp = bayesian_amplitude(estimate / n_copies, b, feedback_gain);
    const CMatrixd h = h_dw.matrix() + amp * f;
    double mean = 0.0;
    for (int c = 0; c < n_copies; ++c) {
      StepRecord<double> rec;
      try {
        rec = stepper.advance(copies[c].rho, h, rngs[c]);
      } catch (const IntegratorAbort& e) {
        throw IntegratorAbort(std::string(e.what()) + " in copy " + std::to_string(c), k);
      }
      copies[c].window.push(rec.current);
      const double fid = fidelity(rec.rho_after, target);
      out.copy_fidelity[c].push_back(fid);
      mean += fid;
    }
    out.amplitudes.push_back(amp);
    out.mean_fidelity.push_back(mean / n_copies);
    total += mean / n_copies;
  }
  out.episode_mean_fidelity = total / cfg.horizon;
  return out;
}

}  // namespace dwq::control
