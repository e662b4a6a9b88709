#pragma once

// Proximal policy optimization with synchronous vectorized environments.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dwq/env.hpp"
#include "dwq/rl/network.hpp"

namespace dwq::rl {

/// Raised when a loss or gradient turns non-finite.
class NumericalError : public Error {
 public:
  using Error::Error;
};

struct PpoConfig {
  double clip_eps = 0.2;
  double lr = 1e-5;
  int n_envs = 8;
  int horizon = 4000;  // steps per env per iteration
  int minibatch = 100;
  int epochs = 10;
  double discount = 0.99;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  double initial_log_std = 0.0;
  double reward_scale = 1.0;  // multiplies rewards before advantage estimation
  int checkpoint_every = 0;   // iterations; 0 disables

  /// `episode_length` > 0 additionally requires horizon to be a multiple of it.
  void validate(int episode_length = 0) const;
  bool operator==(const PpoConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Squashed Gaussian policy: u ~ N(mean, exp(log_std)), amplitude = 5 tanh(u).

inline constexpr double kActionScale = 5.0;

struct ActionSample {
  double amplitude = 0.0;
  double u = 0.0;         // pre-squash sample
  double log_prob = 0.0;  // density of the amplitude, Jacobian included
};

/// log |d amplitude / du| = log 5 + log(1 - tanh(u)^2), evaluated stably.
double squash_log_jacobian(double u);
double gaussian_log_density(double u, double mean, double log_std);
/// Log-density of the amplitude 5 tanh(u).
double squashed_log_prob(double u, double mean, double log_std);
/// Pre-squash value of an amplitude strictly inside (-5, 5).
double unsquash(double amplitude);

ActionSample sample_action(double mean, double log_std, Rng& rng, bool deterministic = false);

// ---------------------------------------------------------------------------

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Recursive GAE over one stream. dones[t] marks s_{t+1} as terminal;
/// `bootstrap` is V(s_T) for the state after the last step.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap, double discount, double lambda);

struct RolloutBatch {
  MatrixXd obs;  // obs_dim x N
  std::vector<double> action;  // executed amplitude
  std::vector<double> u;       // pre-squash sample
  std::vector<double> log_prob_old;
  std::vector<double> reward;
  std::vector<double> value_old;
  std::vector<double> advantage;
  std::vector<double> return_target;

  std::size_t size() const { return action.size(); }
  /// Shifts and scales advantages to zero mean and unit (population) variance.
  void normalize_advantages();
  RolloutBatch select(const std::vector<int>& idx) const;
};

struct LossResult {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;  // Gaussian entropy of the pre-squash policy
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  VectorXd grad;
};

/// Clipped surrogate + value_coef * MSE(value, return) - entropy_coef * entropy,
/// with its gradient with respect to every network parameter.
LossResult ppo_loss(const RolloutBatch& batch, const ActorCritic& net, const PpoConfig& cfg);

class Adam {
 public:
  explicit Adam(int n = 0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(VectorXd& params, const VectorXd& grad, double lr);

  VectorXd m, v;
  std::uint64_t t = 0;
  double beta1, beta2, eps;
};

/// Rescales `g` so its Euclidean norm does not exceed `max_norm`; returns the
/// norm before clipping.
double clip_grad_norm(VectorXd& g, double max_norm);

// ---------------------------------------------------------------------------

struct IterationMetrics {
  int iteration = 0;
  std::int64_t steps = 0;
  double mean_reward = 0.0;  // mean total reward of episodes finished so far this iteration
  std::optional<double> mean_fidelity;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;  // squashed-policy entropy estimate
  int episodes = 0;
  /// Clip fraction of the very first minibatch of the update.
  double first_clip_fraction = 0.0;
};

using EnvFactory = std::function<std::unique_ptr<env::Environment>(int worker)>;

struct TrainerState;

class PpoTrainer {
 public:
  PpoTrainer(EnvFactory factory, const PpoConfig& cfg, const NetworkShape& shape, std::uint64_t seed,
             int episode_length = 0);
  ~PpoTrainer();
  PpoTrainer(const PpoTrainer&) = delete;
  PpoTrainer& operator=(const PpoTrainer&) = delete;

  /// Collects one rollout and runs the PPO update on it.
  IterationMetrics iterate();

  const ActorCritic& policy() const;
  ActorCritic& policy();
  const PpoConfig& config() const;
  const Adam& optimizer() const;
  int iteration() const;
  std::int64_t total_steps() const;
  const std::vector<std::string>& incidents() const;

  /// Gathers a rollout without updating (exposed for testing).
  RolloutBatch collect();

  struct Snapshot;
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

 private:
  std::unique_ptr<TrainerState> st_;
};

struct PpoTrainer::Snapshot {
  VectorXd params;
  Adam adam;
  PpoConfig cfg;
  NetworkShape shape;
  int iteration = 0;
  std::int64_t total_steps = 0;
  std::string rng_state;
};

/// Appends one line per iteration to a CSV with header iteration, steps,
/// mean_reward, mean_fidelity, policy_loss, value_loss, clip_fraction, entropy.
std::string metrics_csv_header();
std::string metrics_csv_row(const IterationMetrics& m);

struct EpisodeEvaluation {
  int episode = 0;
  double total_reward = 0.0;
  double mean_reward = 0.0;
  std::optional<double> mean_fidelity;
  std::optional<double> max_fidelity;
  int steps = 0;
};

/// Runs `n_episodes` episodes of `env`, seeding episode k with stream k of
/// `seed`. Deterministic mode uses 5 tanh(mean).
std::vector<EpisodeEvaluation> evaluate(const ActorCritic& net, env::Environment& env, int n_episodes,
                                        bool deterministic, std::uint64_t seed);

}  // namespace dwq::rl
