#pragma once

// Feedback controllers acting on the double-well SME and the closed-loop
// drivers that connect them to the integrator.

#include <algorithm>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dwq/hilbert.hpp"
#include "dwq/sme.hpp"

namespace dwq::control {

inline constexpr double kMaxAmplitude = 5.0;

inline double clip_amplitude(double a) { return std::clamp(a, -kMaxAmplitude, kMaxAmplitude); }

/// What a controller sees at the start of a control interval. The privileged
/// fields are only filled in when the run exposes simulator internals.
struct ControlObservation {
  double current_mean4 = 0.0;  // mean of the last <= window currents
  double last_action = 0.0;
  double last_current = 0.0;   // most recent single-interval current
  std::optional<double> expect_x2;
  std::optional<double> fidelity;
};

struct ControlAction {
  double amplitude = 0.0;
};

/// -(estimate - b^2) scaled by `gain`, clipped to [-5, 5].
double bayesian_amplitude(double estimate_x2, double b, double gain = 1.0);

class Controller {
 public:
  virtual ~Controller() = default;
  virtual ControlAction act(const ControlObservation& obs, Rng& rng) = 0;
  virtual std::string name() const = 0;
  virtual bool needs_privileged() const { return false; }
};

class NullController final : public Controller {
 public:
  ControlAction act(const ControlObservation&, Rng&) override { return {0.0}; }
  std::string name() const override { return "null"; }
};

/// Uniform amplitude in [-5, 5].
class RandomController final : public Controller {
 public:
  ControlAction act(const ControlObservation&, Rng& rng) override;
  std::string name() const override { return "random"; }
};

enum class EstimateSource { ConditionalMean, Current };

/// Feedback on the error between an estimate of <x^2> and the setpoint b^2.
/// ConditionalMean reads the privileged <x^2>_c; Current uses the windowed
/// current divided by the gain.
class BayesianController final : public Controller {
 public:
  BayesianController(EstimateSource source, double b, double feedback_gain = 1.0, double current_gain = 1.0)
      : source_(source), b_(b), feedback_gain_(feedback_gain), current_gain_(current_gain) {}
  ControlAction act(const ControlObservation& obs, Rng& rng) override;
  std::string name() const override;
  bool needs_privileged() const override { return source_ == EstimateSource::ConditionalMean; }

 private:
  EstimateSource source_;
  double b_;
  double feedback_gain_;
  double current_gain_;
};

/// Direct (Markovian) feedback proportional to the latest raw current.
class MarkovianController final : public Controller {
 public:
  MarkovianController(double b, double feedback_gain, double current_gain = 1.0)
      : b_(b), feedback_gain_(feedback_gain), current_gain_(current_gain) {}
  ControlAction act(const ControlObservation& obs, Rng& rng) override;
  std::string name() const override { return "markovian"; }

 private:
  double b_;
  double feedback_gain_;
  double current_gain_;
};

/// Checks privileged-field requirements and clips the result to [-5, 5].
ControlAction controller_act(Controller& controller, const ControlObservation& obs, Rng& rng);

/// Running window over the most recent currents. Primed with one value at
/// reset; until it fills up the mean covers every value seen so far.
class CurrentWindow {
 public:
  explicit CurrentWindow(int size);
  void prime(double value);
  void push(double value);
  double mean() const;
  int size() const { return static_cast<int>(values_.size()); }

 private:
  int capacity_;
  std::deque<double> values_;
};

struct ClosedLoopConfig {
  Fock space{60};
  DwParams dw;
  SmeConfig sme;
  int horizon = 1000;
  FeedbackKind feedback = FeedbackKind::XpSym;
  bool expose_privileged = true;
  int window = 4;
};

/// Runs one trajectory with `controller` in the loop. `sim_rng` drives the
/// measurement noise, `ctrl_rng` the controller.
TrajectoryRecord<double> run_closed_loop(Controller& controller, const Rho& rho0, const ClosedLoopConfig& cfg,
                                         Rng& sim_rng, Rng& ctrl_rng);

struct EnsembleStats {
  std::vector<std::vector<double>> copy_fidelity;  // [copy][step]
  std::vector<double> mean_fidelity;               // [step], averaged over copies
  std::vector<double> amplitudes;                  // shared amplitude per step
  double episode_mean_fidelity = 0.0;
};

/// Lockstep ensemble: every interval, one shared amplitude is computed from
/// the copy-averaged estimate and broadcast to all copies. Copy k draws its
/// noise from stream k of `seed`.
EnsembleStats ensemble_bayesian_run(int n_copies, const ClosedLoopConfig& cfg, EstimateSource source,
                                    const Rho& rho0, std::uint64_t seed, double feedback_gain = 1.0);

}  // namespace dwq::control
