#include "dwq/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dwq/io.hpp"

namespace dwq::rl {

void PpoConfig::validate(int episode_length) const {
  if (!(clip_eps > 0 && clip_eps < 1)) throw InvalidArgument("ppo: clip_eps must lie in (0, 1)");
  if (!(lr > 0)) throw InvalidArgument("ppo: lr must be > 0");
  if (n_envs < 1) throw InvalidArgument("ppo: n_envs must be >= 1");
  if (horizon < 1) throw InvalidArgument("ppo: horizon must be >= 1");
  if (minibatch < 1) throw InvalidArgument("ppo: minibatch must be >= 1");
  if (epochs < 1) throw InvalidArgument("ppo: epochs must be >= 1");
  if (!(discount >= 0 && discount <= 1)) throw InvalidArgument("ppo: discount must lie in [0, 1]");
  if (!(gae_lambda >= 0 && gae_lambda <= 1)) throw InvalidArgument("ppo: gae_lambda must lie in [0, 1]");
  if (value_coef < 0 || entropy_coef < 0) throw InvalidArgument("ppo: loss coefficients must be >= 0");
  if (!(max_grad_norm > 0)) throw InvalidArgument("ppo: max_grad_norm must be > 0");
  if (!(reward_scale > 0)) throw InvalidArgument("ppo: reward_scale must be > 0");
  if (checkpoint_every < 0) throw InvalidArgument("ppo: checkpoint_every must be >= 0");
  if (episode_length > 0 && horizon % episode_length != 0) {
    throw InvalidArgument("ppo: horizon " + std::to_string(horizon) + " is not a multiple of the episode length " +
                          std::to_string(episode_length));
  }
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2 pi) / 2

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
}  // namespace

double squash_log_jacobian(double u) {
  // 1 - tanh(u)^2 = 4 / (e^u + e^-u)^2, so log(1 - tanh^2) = 2 (log 2 - u - softplus(-2u)).
  return std::log(kActionScale) + 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
}

double gaussian_log_density(double u, double mean, double log_std) {
  const double z = (u - mean) * std::exp(-log_std);
  return -0.5 * z * z - log_std - kHalfLog2Pi;
}

double squashed_log_prob(double u, double mean, double log_std) {
  return gaussian_log_density(u, mean, log_std) - squash_log_jacobian(u);
}

double unsquash(double amplitude) {
  if (!(std::abs(amplitude) < kActionScale)) throw InvalidArgument("unsquash: amplitude must lie strictly inside (-5, 5)");
  return std::atanh(amplitude / kActionScale);
}

ActionSample sample_action(double mean, double log_std, Rng& rng, bool deterministic) {
  double u = mean;
  if (!deterministic) {
    std::normal_distribution<double> n(0.0, 1.0);
    u = mean + std::exp(log_std) * n(rng);
  }
  return {kActionScale * std::tanh(u), u, squashed_log_prob(u, mean, log_std)};
}

// ---------------------------------------------------------------------------

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap, double discount, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw DimensionMismatch("compute_gae: array lengths differ");
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double gae = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = i + 1 == n ? bootstrap : values[i + 1];
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + discount * next_value * live - values[i];
    gae = delta + discount * lambda * live * gae;
    out.advantages[i] = gae;
    out.returns[i] = gae + values[i];
  }
  return out;
}

void RolloutBatch::normalize_advantages() {
  const double n = static_cast<double>(advantage.size());
  if (n == 0) return;
  const double mean = std::accumulate(advantage.begin(), advantage.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantage) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : advantage) a = sd > 1e-12 ? (a - mean) / sd : a - mean;
}

RolloutBatch RolloutBatch::select(const std::vector<int>& idx) const {
  RolloutBatch b;
  b.obs.resize(obs.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const int i = idx[k];
    b.obs.col(static_cast<Eigen::Index>(k)) = obs.col(i);
    b.action.push_back(action[i]);
    b.u.push_back(u[i]);
    b.log_prob_old.push_back(log_prob_old[i]);
    b.reward.push_back(reward[i]);
    b.value_old.push_back(value_old[i]);
    b.advantage.push_back(advantage[i]);
    b.return_target.push_back(return_target[i]);
  }
  return b;
}

LossResult ppo_loss(const RolloutBatch& batch, const ActorCritic& net, const PpoConfig& cfg) {
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw InvalidArgument("ppo_loss: empty batch");
  if (batch.obs.cols() != n) throw DimensionMismatch("ppo_loss: observation count differs from batch size");
  const ForwardCache cache = net.forward_batch(batch.obs);
  const double log_std = net.log_std();
  const double inv_var = std::exp(-2.0 * log_std);

  LossResult out;
  RowVectorXd d_mean(n), d_value(n);
  double d_log_std = 0.0;
  int clipped = 0;
  double ratio_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = batch.u[i];
    const double z = u - cache.mean(i);
    const double log_prob = squashed_log_prob(u, cache.mean(i), log_std);
    // Ratio in log space keeps it positive even for extreme log-probabilities.
    const double ratio = std::exp(log_prob - batch.log_prob_old[i]);
    const double adv = batch.advantage[i];
    const double s1 = ratio * adv;
    const double s2 = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
    out.policy_loss -= std::min(s1, s2) / n;
    if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped;
    ratio_sum += ratio;

    const double d_logp = s1 <= s2 ? -adv * ratio / n : 0.0;
    d_mean(i) = d_logp * z * inv_var;
    d_log_std += d_logp * (z * z * inv_var - 1.0);

    const double err = cache.value(i) - batch.return_target[i];
    out.value_loss += err * err / n;
    d_value(i) = cfg.value_coef * 2.0 * err / n;
  }
  out.entropy = 0.5 + kHalfLog2Pi + log_std;
  d_log_std -= cfg.entropy_coef;
  out.loss = out.policy_loss + cfg.value_coef * out.value_loss - cfg.entropy_coef * out.entropy;
  out.clip_fraction = static_cast<double>(clipped) / n;
  out.mean_ratio = ratio_sum / n;
  if (!std::isfinite(out.loss)) {
    std::ostringstream msg;
    msg << "ppo_loss: non-finite loss (policy " << out.policy_loss << ", value " << out.value_loss << ", log_std "
        << log_std << ")";
    throw NumericalError(msg.str());
  }
  out.grad = net.backward(cache, d_mean, d_value, d_log_std);
  if (!out.grad.allFinite()) throw NumericalError("ppo_loss: non-finite gradient");
  return out;
}

Adam::Adam(int n, double b1, double b2, double e)
    : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)), beta1(b1), beta2(b2), eps(e) {}

void Adam::step(VectorXd& params, const VectorXd& grad, double lr) {
  if (grad.size() != params.size() || m.size() != params.size()) throw DimensionMismatch("adam: size mismatch");
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double clip_grad_norm(VectorXd& g, double max_norm) {
  const double norm = g.norm();
  if (norm > max_norm) g *= max_norm / norm;
  return norm;
}

// ---------------------------------------------------------------------------

struct TrainerState {
  PpoConfig cfg;
  ActorCritic net;
  Adam adam;
  Rng rng;
  std::uint64_t seed;
  std::vector<std::unique_ptr<env::Environment>> envs;
  MatrixXd obs;                       // current observation per worker (columns)
  std::vector<std::uint64_t> episode_index;  // episodes started per worker
  std::vector<double> ep_reward, ep_fid;
  std::vector<int> ep_len;
  std::vector<double> finished_reward, finished_fidelity;
  double last_mean_reward = 0.0;
  std::optional<double> last_mean_fidelity;
  int iteration = 0;
  std::int64_t total_steps = 0;
  bool lr_halved = false;
  std::vector<std::string> incidents;

  TrainerState(const PpoConfig& c, const NetworkShape& shape, std::uint64_t s)
      : cfg(c), net(shape), rng(make_stream(s, 0xac7)), seed(s) {}

  std::uint64_t episode_seed(int worker) {
    Rng r = make_stream(seed, (static_cast<std::uint64_t>(worker) << 32) | episode_index[worker]++);
    return r();
  }

  void reset_worker(int w) {
    obs.col(w) = envs[w]->reset(episode_seed(w));
    ep_reward[w] = 0.0;
    ep_fid[w] = 0.0;
    ep_len[w] = 0;
  }
};

PpoTrainer::PpoTrainer(EnvFactory factory, const PpoConfig& cfg, const NetworkShape& shape, std::uint64_t seed,
                       int episode_length)
    : st_(std::make_unique<TrainerState>(cfg, shape, seed)) {
  cfg.validate(episode_length);
  Rng init_rng = make_stream(seed, 0x1417);
  st_->net.init(init_rng, cfg.initial_log_std);
  st_->adam = Adam(st_->net.n_params());
  const int n = cfg.n_envs;
  st_->obs.resize(shape.obs_dim, n);
  st_->episode_index.assign(n, 0);
  st_->ep_reward.assign(n, 0.0);
  st_->ep_fid.assign(n, 0.0);
  st_->ep_len.assign(n, 0);
  for (int w = 0; w < n; ++w) {
    st_->envs.push_back(factory(w));
    if (st_->envs.back()->observation_dim() != shape.obs_dim) {
      throw DimensionMismatch("trainer: environment observation size differs from the network input");
    }
    st_->reset_worker(w);
  }
}

PpoTrainer::~PpoTrainer() = default;

const ActorCritic& PpoTrainer::policy() const { return st_->net; }
ActorCritic& PpoTrainer::policy() { return st_->net; }
const PpoConfig& PpoTrainer::config() const { return st_->cfg; }
const Adam& PpoTrainer::optimizer() const { return st_->adam; }
int PpoTrainer::iteration() const { return st_->iteration; }
std::int64_t PpoTrainer::total_steps() const { return st_->total_steps; }
const std::vector<std::string>& PpoTrainer::incidents() const { return st_->incidents; }

RolloutBatch PpoTrainer::collect() {
  auto& s = *st_;
  const int n_envs = s.cfg.n_envs, horizon = s.cfg.horizon;
  std::vector<std::vector<double>> rewards(n_envs), values(n_envs);
  std::vector<std::vector<bool>> dones(n_envs);
  RolloutBatch b;
  const std::size_t total = static_cast<std::size_t>(n_envs) * horizon;
  b.obs.resize(s.net.shape().obs_dim, static_cast<Eigen::Index>(total));
  b.action.resize(total);
  b.u.resize(total);
  b.log_prob_old.resize(total);
  b.reward.resize(total);
  b.value_old.resize(total);
  s.finished_reward.clear();
  s.finished_fidelity.clear();

  const double log_std = s.net.log_std();
  for (int t = 0; t < horizon; ++t) {
    const ForwardCache fc = s.net.forward_batch(s.obs);
    for (int w = 0; w < n_envs; ++w) {
      const std::size_t i = static_cast<std::size_t>(w) * horizon + t;  // worker-major layout
      const ActionSample a = sample_action(fc.mean(w), log_std, s.rng);
      b.obs.col(static_cast<Eigen::Index>(i)) = s.obs.col(w);
      b.action[i] = a.amplitude;
      b.u[i] = a.u;
      b.log_prob_old[i] = a.log_prob;
      b.value_old[i] = fc.value(w);

      env::Transition tr;
      try {
        tr = s.envs[w]->step(a.amplitude);
      } catch (const IntegratorAbort& e) {
        s.incidents.push_back("iteration " + std::to_string(s.iteration + 1) + ", worker " + std::to_string(w) +
                              ": " + e.what() + "; worker reset");
        b.reward[i] = 0.0;
        rewards[w].push_back(0.0);
        values[w].push_back(fc.value(w));
        dones[w].push_back(true);
        s.reset_worker(w);
        continue;
      }
      b.reward[i] = tr.reward;
      rewards[w].push_back(s.cfg.reward_scale * tr.reward);
      values[w].push_back(fc.value(w));
      dones[w].push_back(tr.done);
      s.ep_reward[w] += tr.reward;
      s.ep_len[w] += 1;
      if (tr.fidelity) s.ep_fid[w] += *tr.fidelity;
      if (tr.done) {
        s.finished_reward.push_back(s.ep_reward[w]);
        if (tr.fidelity) s.finished_fidelity.push_back(s.ep_fid[w] / s.ep_len[w]);
        s.reset_worker(w);
      } else {
        s.obs.col(w) = tr.obs;
      }
    }
  }
  s.total_steps += static_cast<std::int64_t>(total);

  const ForwardCache last = s.net.forward_batch(s.obs);
  b.advantage.resize(total);
  b.return_target.resize(total);
  for (int w = 0; w < n_envs; ++w) {
    const GaeResult g = compute_gae(rewards[w], values[w], dones[w], last.value(w), s.cfg.discount, s.cfg.gae_lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), b.advantage.begin() + static_cast<long>(w) * horizon);
    std::copy(g.returns.begin(), g.returns.end(), b.return_target.begin() + static_cast<long>(w) * horizon);
  }
  return b;
}

namespace {

struct UpdateStats {
  double policy_loss = 0, value_loss = 0, clip_fraction = 0, first_clip_fraction = 0;
};

UpdateStats run_update(TrainerState& s, RolloutBatch batch) {
  batch.normalize_advantages();
  const int n = static_cast<int>(batch.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  UpdateStats st;
  int count = 0;
  for (int epoch = 0; epoch < s.cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), s.rng);
    for (int start = 0; start < n; start += s.cfg.minibatch) {
      const int end = std::min(n, start + s.cfg.minibatch);
      const RolloutBatch mb = batch.select(std::vector<int>(order.begin() + start, order.begin() + end));
      LossResult l = ppo_loss(mb, s.net, s.cfg);
      if (count == 0) st.first_clip_fraction = l.clip_fraction;
      clip_grad_norm(l.grad, s.cfg.max_grad_norm);
      s.adam.step(s.net.params(), l.grad, s.cfg.lr);
      s.net.clamp_log_std();
      if (!s.net.params().allFinite()) throw NumericalError("ppo: parameters became non-finite");
      st.policy_loss += l.policy_loss;
      st.value_loss += l.value_loss;
      st.clip_fraction += l.clip_fraction;
      ++count;
    }
  }
  st.policy_loss /= count;
  st.value_loss /= count;
  st.clip_fraction /= count;
  return st;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

IterationMetrics PpoTrainer::iterate() {
  auto& s = *st_;
  const RolloutBatch batch = collect();
  UpdateStats up;
  const Snapshot before = snapshot();
  try {
    up = run_update(s, batch);
  } catch (const NumericalError& e) {
    if (s.lr_halved) throw;
    s.incidents.push_back("iteration " + std::to_string(s.iteration + 1) + ": " + e.what() +
                          "; restored parameters and halved lr");
    const std::int64_t steps = s.total_steps;
    restore(before);
    s.total_steps = steps;
    s.cfg.lr *= 0.5;
    s.lr_halved = true;
    up = run_update(s, batch);
  }
  ++s.iteration;

  IterationMetrics m;
  m.iteration = s.iteration;
  m.steps = s.total_steps;
  if (!s.finished_reward.empty()) s.last_mean_reward = mean_of(s.finished_reward);
  if (!s.finished_fidelity.empty()) s.last_mean_fidelity = mean_of(s.finished_fidelity);
  m.episodes = static_cast<int>(s.finished_reward.size());
  m.mean_reward = s.last_mean_reward;
  m.mean_fidelity = s.last_mean_fidelity;
  m.policy_loss = up.policy_loss;
  m.value_loss = up.value_loss;
  m.clip_fraction = up.clip_fraction;
  m.first_clip_fraction = up.first_clip_fraction;
  double jac = 0.0;
  for (double u : batch.u) jac += squash_log_jacobian(u);
  m.entropy = 0.5 + kHalfLog2Pi + s.net.log_std() + jac / static_cast<double>(batch.size());
  return m;
}

PpoTrainer::Snapshot PpoTrainer::snapshot() const {
  std::ostringstream rng;
  rng << st_->rng;
  return {st_->net.params(), st_->adam, st_->cfg, st_->net.shape(), st_->iteration, st_->total_steps, rng.str()};
}

void PpoTrainer::restore(const Snapshot& snap) {
  auto& s = *st_;
  if (!(snap.shape == s.net.shape())) throw DimensionMismatch("trainer: snapshot network shape differs");
  s.net.params() = snap.params;
  s.adam = snap.adam;
  s.cfg = snap.cfg;
  s.iteration = snap.iteration;
  s.total_steps = snap.total_steps;
  std::istringstream rng(snap.rng_state);
  rng >> s.rng;
  if (!rng) throw InvalidArgument("trainer: malformed RNG state");
}

std::string metrics_csv_header() {
  return "iteration,steps,mean_reward,mean_fidelity,policy_loss,value_loss,clip_fraction,entropy\n";
}

std::string metrics_csv_row(const IterationMetrics& m) {
  using io::format_double;
  return std::to_string(m.iteration) + "," + std::to_string(m.steps) + "," + format_double(m.mean_reward) + "," +
         (m.mean_fidelity ? format_double(*m.mean_fidelity) : std::string()) + "," + format_double(m.policy_loss) +
         "," + format_double(m.value_loss) + "," + format_double(m.clip_fraction) + "," + format_double(m.entropy) +
         "\n";
}

std::vector<EpisodeEvaluation> evaluate(const ActorCritic& net, env::Environment& env, int n_episodes,
                                        bool deterministic, std::uint64_t seed) {
  if (n_episodes < 1) throw InvalidArgument("evaluate: n_episodes must be >= 1");
  if (env.observation_dim() != net.shape().obs_dim) {
    throw DimensionMismatch("evaluate: environment observation size differs from the network input");
  }
  std::vector<EpisodeEvaluation> rows;
  for (int k = 0; k < n_episodes; ++k) {
    Rng episode_rng = make_stream(seed, static_cast<std::uint64_t>(k));
    const std::uint64_t env_seed = episode_rng();
    VectorXd obs = env.reset(env_seed);
    EpisodeEvaluation ev;
    ev.episode = k;
    double fid_sum = 0.0, fid_max = -1.0;
    bool has_fid = false;
    for (;;) {
      const PolicyOutput out = net.forward(obs);
      const ActionSample a = sample_action(out.mean, out.log_std, episode_rng, deterministic);
      const env::Transition tr = env.step(a.amplitude);
      ev.total_reward += tr.reward;
      ++ev.steps;
      if (tr.fidelity) {
        has_fid = true;
        fid_sum += *tr.fidelity;
        fid_max = std::max(fid_max, *tr.fidelity);
      }
      if (tr.done) break;
      obs = tr.obs;
    }
    ev.mean_reward = ev.total_reward / ev.steps;
    if (has_fid) {
      ev.mean_fidelity = fid_sum / ev.steps;
      ev.max_fidelity = fid_max;
    }
    rows.push_back(ev);
  }
  return rows;
}

}  // namespace dwq::rl
