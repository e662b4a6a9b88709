#include "dwq/bench/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "dwq/io.hpp"

namespace dwq::bench {

std::string to_string(Scale s) { return s == Scale::Desk ? "desk" : "full"; }

Scale parse_scale(const std::string& s) {
  if (s == "desk") return Scale::Desk;
  if (s == "full") return Scale::Full;
  throw ConfigError("scale must be 'desk' or 'full', got '" + s + "'");
}

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::Null: return "null";
    case ControllerKind::Random: return "random";
    case ControllerKind::Bayesian: return "bayesian";
    case ControllerKind::Markovian: return "markovian";
    case ControllerKind::Drl: return "drl";
  }
  return "?";
}

ControllerKind parse_controller_kind(const std::string& s) {
  for (auto k : {ControllerKind::Null, ControllerKind::Random, ControllerKind::Bayesian, ControllerKind::Markovian,
                 ControllerKind::Drl}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown controller kind '" + s + "'");
}

RunConfig default_config(Scale scale) {
  RunConfig c;
  c.scale = scale;
  if (scale == Scale::Desk) {
    c.quantum.space = Fock(30);
    c.quantum.episode.steps_per_episode = 200;
    c.ppo.horizon = 200;
    c.ppo.lr = 3e-4;
    // the current reward is noise-dominated; shorter credit assignment, fewer
    // passes and a little entropy keep the policy from fitting the noise
    c.ppo.discount = 0.95;
    c.ppo.gae_lambda = 0.9;
    c.ppo.epochs = 4;
    c.ppo.entropy_coef = 0.005;
    c.control.copies = 100;
    c.replicates = 3;
    c.episodes = 10;
  } else {
    c.quantum.space = Fock(60);
    c.quantum.episode.steps_per_episode = 1000;
    c.ppo.horizon = 4000;
    c.ppo.lr = 1e-5;
    c.control.copies = 1000;
    c.replicates = 1;
    c.episodes = 20;
  }
  c.toy.horizon = 500;
  // quantum rewards are O(10) per step
  c.ppo.reward_scale = 0.01;
  c.quantum.episode.normalize_observations = true;
  return c;
}

void RunConfig::validate() const {
  quantum.sme.validate();
  quantum.episode.validate();
  if (quantum.sme.dt_control != quantum.episode.dt_control) {
    throw ConfigError("sme.dt_control and episode.dt_control differ");
  }
  ppo.validate(task == Task::Quantum ? quantum.episode.steps_per_episode : 0);
  network.validate();
  if (control.copies < 1) throw ConfigError("control.copies must be >= 1");
  if (train_iterations < 1) throw ConfigError("train.iterations must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (replicates < 1) throw ConfigError("run.replicates must be >= 1");
  if (episodes < 1) throw ConfigError("run.episodes must be >= 1");
  if (toy.horizon < 1 || !(toy.dt > 0) || !(toy.bound > 0)) throw ConfigError("toy: invalid horizon, dt or bound");
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string show(bool b) { return b ? "true" : "false"; }
std::string show(double v) { return io::format_double(v); }
std::string show(int v) { return std::to_string(v); }

std::string feedback_name(FeedbackKind k) {
  switch (k) {
    case FeedbackKind::XpSym: return "xp-sym";
    case FeedbackKind::XSquared: return "x-squared";
    case FeedbackKind::P2MinusX2: return "p2-minus-x2";
  }
  return "?";
}

FeedbackKind parse_feedback(const std::string& key, const std::string& v) {
  for (auto k : {FeedbackKind::XpSym, FeedbackKind::XSquared, FeedbackKind::P2MinusX2}) {
    if (feedback_name(k) == v) return k;
  }
  throw ConfigError(key + ": expected xp-sym, x-squared or p2-minus-x2, got '" + v + "'");
}

std::string channels_text(const std::vector<DecoherenceChannel>& chans) {
  std::string out;
  for (const auto& c : chans) {
    if (c.kind == ChannelKind::None) continue;
    if (!out.empty()) out += ",";
    out += to_string(c.kind) + ":" + io::format_double(c.rate);
  }
  return out.empty() ? "none" : out;
}

std::vector<DecoherenceChannel> parse_channels(const std::string& key, const std::string& v) {
  std::vector<DecoherenceChannel> out;
  if (v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(key + ": expected kind:rate entries, got '" + item + "'");
    const std::string kind = trim(item.substr(0, colon));
    DecoherenceChannel c;
    if (kind == "damping") c.kind = ChannelKind::Damping;
    else if (kind == "dephasing") c.kind = ChannelKind::Dephasing;
    else throw ConfigError(key + ": unknown channel kind '" + kind + "'");
    c.rate = parse_real(key, trim(item.substr(colon + 1)));
    if (!(c.rate > 0)) throw ConfigError(key + ": channel rate must be > 0");
    out.push_back(c);
  }
  return out;
}

std::string forces_text(const std::array<double, 3>& f) {
  return show(f[0]) + "," + show(f[1]) + "," + show(f[2]);
}

std::array<double, 3> parse_forces(const std::string& key, const std::string& v) {
  std::array<double, 3> out{};
  std::stringstream ss(v);
  std::string item;
  int n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == 3) throw ConfigError(key + ": expected exactly three forces");
    out[n++] = parse_real(key, trim(item));
  }
  if (n != 3) throw ConfigError(key + ": expected exactly three forces");
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define DWQ_REAL(path)                                                           \
  Field {                                                                        \
    [](const RunConfig& c) { return show(c.path); },                            \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.path = parse_real(k, v); } \
  }
#define DWQ_INT(path)                                                            \
  Field {                                                                        \
    [](const RunConfig& c) { return show(c.path); },                            \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.path = parse_int<int>(k, v); } \
  }
#define DWQ_BOOL(path)                                                           \
  Field {                                                                        \
    [](const RunConfig& c) { return show(c.path); },                            \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.path = parse_bool(k, v); } \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"scale", {[](const RunConfig& c) { return to_string(c.scale); },
                 [](RunConfig& c, const std::string&, const std::string& v) { c.scale = parse_scale(v); }}},
      {"seed", {[](const RunConfig& c) { return std::to_string(c.seed); },
                [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_int<std::uint64_t>(k, v); }}},
      {"task", {[](const RunConfig& c) { return std::string(c.task == Task::Quantum ? "quantum" : "toy"); },
                [](RunConfig& c, const std::string& k, const std::string& v) {
                  if (v == "quantum") c.task = Task::Quantum;
                  else if (v == "toy") c.task = Task::Toy;
                  else throw ConfigError(k + ": expected quantum or toy, got '" + v + "'");
                }}},
      {"space.dim", {[](const RunConfig& c) { return show(c.quantum.space.dim()); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                       try {
                         c.quantum.space = Fock(parse_int<int>(k, v), c.quantum.space.kbar());
                       } catch (const InvalidArgument& e) {
                         throw ConfigError(k + ": " + e.what());
                       }
                     }}},
      {"space.kbar", {[](const RunConfig& c) { return show(c.quantum.space.kbar()); },
                      [](RunConfig& c, const std::string& k, const std::string& v) {
                        try {
                          c.quantum.space = Fock(c.quantum.space.dim(), parse_real(k, v));
                        } catch (const InvalidArgument& e) {
                          throw ConfigError(k + ": " + e.what());
                        }
                      }}},
      {"dw.a_offset", DWQ_REAL(quantum.dw.a_offset)},
      {"dw.b", DWQ_REAL(quantum.dw.b)},
      {"dw.h", DWQ_REAL(quantum.dw.h)},
      {"measurement.gamma_meas", DWQ_REAL(quantum.sme.measurement.gamma_meas)},
      {"measurement.eta", DWQ_REAL(quantum.sme.measurement.eta)},
      {"measurement.gain", DWQ_REAL(quantum.sme.measurement.gain)},
      {"sme.dt_control", {[](const RunConfig& c) { return show(c.quantum.sme.dt_control); },
                          [](RunConfig& c, const std::string& k, const std::string& v) {
                            c.quantum.sme.dt_control = c.quantum.episode.dt_control = parse_real(k, v);
                          }}},
      {"sme.n_substeps", DWQ_INT(quantum.sme.n_substeps)},
      {"sme.renormalize", DWQ_BOOL(quantum.sme.renormalize)},
      {"sme.check_positivity", DWQ_BOOL(quantum.sme.check_positivity)},
      {"sme.scheme", {[](const RunConfig& c) {
                        return std::string(c.quantum.sme.scheme == SmeScheme::Split ? "split" : "euler-maruyama");
                      },
                      [](RunConfig& c, const std::string& k, const std::string& v) {
                        if (v == "split") c.quantum.sme.scheme = SmeScheme::Split;
                        else if (v == "euler-maruyama") c.quantum.sme.scheme = SmeScheme::EulerMaruyama;
                        else throw ConfigError(k + ": expected split or euler-maruyama, got '" + v + "'");
                      }}},
      {"sme.channels", {[](const RunConfig& c) { return channels_text(c.quantum.sme.channels); },
                        [](RunConfig& c, const std::string& k, const std::string& v) {
                          c.quantum.sme.channels = parse_channels(k, v);
                        }}},
      {"episode.steps_per_episode", DWQ_INT(quantum.episode.steps_per_episode)},
      {"episode.dt_control", {[](const RunConfig& c) { return show(c.quantum.episode.dt_control); },
                              [](RunConfig& c, const std::string& k, const std::string& v) {
                                c.quantum.sme.dt_control = c.quantum.episode.dt_control = parse_real(k, v);
                              }}},
      {"episode.reward_kind", {[](const RunConfig& c) { return env::to_string(c.quantum.episode.reward_kind); },
                               [](RunConfig& c, const std::string&, const std::string& v) {
                                 c.quantum.episode.reward_kind = env::parse_reward_kind(v);
                               }}},
      {"episode.initial_state", {[](const RunConfig& c) { return env::to_string(c.quantum.episode.initial_state.kind); },
                                 [](RunConfig& c, const std::string&, const std::string& v) {
                                   c.quantum.episode.initial_state.kind = env::parse_initial_kind(v);
                                 }}},
      {"episode.initial_param", DWQ_REAL(quantum.episode.initial_state.param)},
      {"episode.observation_window", DWQ_INT(quantum.episode.observation_window)},
      {"episode.normalize_observations", DWQ_BOOL(quantum.episode.normalize_observations)},
      {"episode.expose_privileged", DWQ_BOOL(quantum.episode.expose_privileged)},
      {"feedback.kind", {[](const RunConfig& c) { return feedback_name(c.quantum.feedback); },
                         [](RunConfig& c, const std::string& k, const std::string& v) {
                           c.quantum.feedback = parse_feedback(k, v);
                         }}},
      {"control.kind", {[](const RunConfig& c) { return to_string(c.control.kind); },
                        [](RunConfig& c, const std::string&, const std::string& v) {
                          c.control.kind = parse_controller_kind(v);
                        }}},
      {"control.source", {[](const RunConfig& c) {
                            return std::string(c.control.source == control::EstimateSource::ConditionalMean
                                                   ? "conditional-mean"
                                                   : "current");
                          },
                          [](RunConfig& c, const std::string& k, const std::string& v) {
                            if (v == "conditional-mean") c.control.source = control::EstimateSource::ConditionalMean;
                            else if (v == "current") c.control.source = control::EstimateSource::Current;
                            else throw ConfigError(k + ": expected conditional-mean or current, got '" + v + "'");
                          }}},
      {"control.gain", DWQ_REAL(control.gain)},
      {"control.ensemble", DWQ_BOOL(control.ensemble)},
      {"control.copies", DWQ_INT(control.copies)},
      {"ppo.clip_eps", DWQ_REAL(ppo.clip_eps)},
      {"ppo.lr", DWQ_REAL(ppo.lr)},
      {"ppo.n_envs", DWQ_INT(ppo.n_envs)},
      {"ppo.horizon", DWQ_INT(ppo.horizon)},
      {"ppo.minibatch", DWQ_INT(ppo.minibatch)},
      {"ppo.epochs", DWQ_INT(ppo.epochs)},
      {"ppo.discount", DWQ_REAL(ppo.discount)},
      {"ppo.gae_lambda", DWQ_REAL(ppo.gae_lambda)},
      {"ppo.value_coef", DWQ_REAL(ppo.value_coef)},
      {"ppo.entropy_coef", DWQ_REAL(ppo.entropy_coef)},
      {"ppo.max_grad_norm", DWQ_REAL(ppo.max_grad_norm)},
      {"ppo.initial_log_std", DWQ_REAL(ppo.initial_log_std)},
      {"ppo.reward_scale", DWQ_REAL(ppo.reward_scale)},
      {"ppo.checkpoint_every", DWQ_INT(ppo.checkpoint_every)},
      {"network.trunk", DWQ_INT(network.trunk)},
      {"network.hidden1", DWQ_INT(network.hidden1)},
      {"network.hidden2", DWQ_INT(network.hidden2)},
      {"toy.omega", DWQ_REAL(toy.omega)},
      {"toy.mass", DWQ_REAL(toy.mass)},
      {"toy.forces", {[](const RunConfig& c) { return forces_text(c.toy.forces); },
                      [](RunConfig& c, const std::string& k, const std::string& v) { c.toy.forces = parse_forces(k, v); }}},
      {"toy.bound", DWQ_REAL(toy.bound)},
      {"toy.horizon", DWQ_INT(toy.horizon)},
      {"toy.dt", DWQ_REAL(toy.dt)},
      {"toy.init_spread", DWQ_REAL(toy.init_spread)},
      {"train.iterations", DWQ_INT(train_iterations)},
      {"eval.episodes", DWQ_INT(eval_episodes)},
      {"eval.deterministic", DWQ_BOOL(eval_deterministic)},
      {"run.replicates", DWQ_INT(replicates)},
      {"run.episodes", DWQ_INT(episodes)},
  };
  return table;
}

#undef DWQ_REAL
#undef DWQ_INT
#undef DWQ_BOOL

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, key, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return field(key).get(cfg); }

std::string to_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

namespace {

template <typename Fn>
void for_each_entry(std::string_view text, const std::string& origin, Fn&& fn) {
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + "empty key or value");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      fn(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

}  // namespace

void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin) {
  for_each_entry(text, origin, [&](const std::string& k, const std::string& v) { set_config_value(cfg, k, v); });
}

std::vector<std::pair<std::string, std::string>> parse_config_entries(std::string_view text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  RunConfig scratch;
  for_each_entry(text, origin, [&](const std::string& k, const std::string& v) {
    set_config_value(scratch, k, v);
    out.emplace_back(k, v);
  });
  return out;
}

std::optional<Scale> scan_scale(std::string_view text) {
  std::optional<Scale> out;
  for_each_entry(text, "<scan>", [&](const std::string& k, const std::string& v) {
    if (k == "scale") out = parse_scale(v);
  });
  return out;
}

RunConfig load_config(const std::string& path, std::optional<Scale> scale_override) {
  const std::string text = io::read_file(path);
  const Scale scale = scale_override.value_or(scan_scale(text).value_or(Scale::Desk));
  RunConfig cfg = default_config(scale);
  apply_config_text(cfg, text, path);
  cfg.scale = scale;
  return cfg;
}

}  // namespace dwq::bench
