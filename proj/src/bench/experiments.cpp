#include "dwq/bench/experiments.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "dwq/io.hpp"
#include "dwq/rl/train.hpp"

namespace dwq::bench {

namespace {

std::vector<SweepPoint> axis_points(const std::string& key, std::initializer_list<const char*> values) {
  std::vector<SweepPoint> out;
  for (const char* v : values) out.push_back({v, {{key, v}}});
  return out;
}

std::vector<Experiment> build_registry() {
  std::vector<Experiment> r;
  r.push_back({"gamma-sweep",
               "fidelity against the measurement rate",
               {{"control.kind", "bayesian"}, {"control.source", "conditional-mean"}},
               "measurement.gamma_meas",
               axis_points("measurement.gamma_meas", {"0.01", "0.05", "0.1", "0.3", "0.5"})});
  r.push_back({"eta-sweep",
               "fidelity against the detection efficiency",
               {{"control.kind", "bayesian"}, {"control.source", "conditional-mean"}},
               "measurement.eta",
               axis_points("measurement.eta", {"0.25", "0.5", "0.75", "1"})});
  r.push_back({"decoherence",
               "damping and dephasing at rate 0.1 against the closed system",
               {{"control.kind", "bayesian"}, {"control.source", "conditional-mean"}},
               "sme.channels",
               axis_points("sme.channels", {"none", "damping:0.1", "dephasing:0.1"})});
  r.push_back({"initial-state",
               "dependence on the starting state",
               {{"control.kind", "bayesian"}, {"control.source", "conditional-mean"}},
               "episode.initial_state",
               {{"thermal", {{"episode.initial_state", "thermal"}, {"episode.initial_param", "1"}}},
                {"coherent", {{"episode.initial_state", "coherent"}, {"episode.initial_param", "3"}}},
                {"small-cat", {{"episode.initial_state", "small-cat"}, {"episode.initial_param", "1"}}},
                {"even-thermal", {{"episode.initial_state", "even-thermal"}, {"episode.initial_param", "1"}}},
                {"ground", {{"episode.initial_state", "ground"}, {"episode.initial_param", "0"}}}}});
  r.push_back({"feedback-operator",
               "choice of feedback Hamiltonian",
               {{"control.kind", "bayesian"}, {"control.source", "conditional-mean"}},
               "feedback.kind",
               axis_points("feedback.kind", {"xp-sym", "x-squared", "p2-minus-x2"})});
  r.push_back({"bayesian-table",
               "Bayesian estimators with and without decoherence, and a trained agent",
               {{"control.kind", "bayesian"}, {"episode.initial_state", "even-thermal"}},
               "controller",
               {{"conditional-mean", {{"control.source", "conditional-mean"}}},
                {"current", {{"control.source", "current"}}},
                {"current-ensemble", {{"control.source", "current"}, {"control.ensemble", "true"}}},
                {"conditional-mean+damping", {{"control.source", "conditional-mean"}, {"sme.channels", "damping:0.1"}}},
                {"conditional-mean+dephasing",
                 {{"control.source", "conditional-mean"}, {"sme.channels", "dephasing:0.1"}}},
                {"drl", {{"control.kind", "drl"}}}}});
  r.push_back({"markovian",
               "direct current feedback against the measurement rate",
               {{"control.kind", "markovian"}},
               "measurement.gamma_meas",
               axis_points("measurement.gamma_meas", {"0.01", "0.03", "0.1", "0.3", "1"})});
  return r;
}

double purity(const CMatrixd& rho) { return (rho * rho).trace().real(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

const std::vector<Experiment>& experiment_registry() {
  static const std::vector<Experiment> registry = build_registry();
  return registry;
}

const Experiment& find_experiment(const std::string& name) {
  for (const auto& e : experiment_registry()) {
    if (e.name == name) return e;
  }
  std::string names;
  for (const auto& e : experiment_registry()) names += (names.empty() ? "" : ", ") + e.name;
  throw Error("unknown experiment '" + name + "'; available: " + names);
}

RunConfig point_config(const Experiment& exp, const SweepPoint& point, Scale scale,
                       const std::vector<Setting>& overrides) {
  RunConfig cfg = default_config(scale);
  for (const auto& [k, v] : exp.base) set_config_value(cfg, k, v);
  for (const auto& [k, v] : overrides) {
    if (k == "scale") continue;
    set_config_value(cfg, k, v);
  }
  for (const auto& [k, v] : point.settings) set_config_value(cfg, k, v);
  cfg.scale = scale;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

control::ClosedLoopConfig closed_loop_config(const RunConfig& cfg) {
  control::ClosedLoopConfig c;
  c.space = cfg.quantum.space;
  c.dw = cfg.quantum.dw;
  c.sme = cfg.quantum.sme;
  c.horizon = cfg.quantum.episode.steps_per_episode;
  c.feedback = cfg.quantum.feedback;
  c.expose_privileged = true;
  c.window = cfg.quantum.episode.observation_window;
  return c;
}

Rho initial_state(const RunConfig& cfg) {
  return env::make_initial_state(cfg.quantum.episode.initial_state, cfg.quantum.space, cfg.quantum.dw);
}

std::unique_ptr<control::Controller> make_controller(const RunConfig& cfg) {
  const double b = cfg.quantum.dw.b;
  const double gain = cfg.quantum.sme.measurement.gain;
  switch (cfg.control.kind) {
    case ControllerKind::Null: return std::make_unique<control::NullController>();
    case ControllerKind::Random: return std::make_unique<control::RandomController>();
    case ControllerKind::Bayesian:
      return std::make_unique<control::BayesianController>(cfg.control.source, b, cfg.control.gain, gain);
    case ControllerKind::Markovian: return std::make_unique<control::MarkovianController>(b, cfg.control.gain, gain);
    case ControllerKind::Drl: break;
  }
  throw InvalidArgument("make_controller: the drl controller needs a trained policy");
}

EpisodeMetrics trajectory_metrics(const TrajectoryRecord<double>& rec, double gain) {
  double reward = 0.0;
  for (double i : rec.currents) reward += env::reward_current(i, gain);
  return {{"mean_fidelity", rec.mean_fidelity()},
          {"max_fidelity", *std::max_element(rec.fidelities.begin(), rec.fidelities.end())},
          {"final_fidelity", rec.fidelities.back()},
          {"mean_reward", reward / static_cast<double>(rec.currents.size())},
          {"final_purity", purity(rec.final_rho.matrix())}};
}

std::uint64_t replicate_seed(std::uint64_t master, int r) {
  Rng g = make_stream(master, static_cast<std::uint64_t>(r));
  return g();
}

std::uint64_t episode_sim_seed(std::uint64_t seed, int episode) {
  Rng g = make_stream(seed, static_cast<std::uint64_t>(episode));
  return g();
}

std::uint64_t episode_ctrl_seed(std::uint64_t seed, int episode) {
  Rng g = make_stream(seed, (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(episode));
  return g();
}

std::vector<EpisodeMetrics> run_controller_episodes(const RunConfig& cfg, std::uint64_t seed, int n) {
  const control::ClosedLoopConfig loop = closed_loop_config(cfg);
  const Rho rho0 = initial_state(cfg);
  std::vector<EpisodeMetrics> out;
  for (int e = 0; e < n; ++e) {
    if (cfg.control.ensemble) {
      if (cfg.control.kind != ControllerKind::Bayesian) {
        throw ConfigError("control.ensemble requires control.kind = bayesian");
      }
      const auto stats = control::ensemble_bayesian_run(cfg.control.copies, loop, cfg.control.source, rho0,
                                                        episode_sim_seed(seed, e), cfg.control.gain);
      out.push_back({{"mean_fidelity", stats.episode_mean_fidelity},
                     {"max_fidelity", *std::max_element(stats.mean_fidelity.begin(), stats.mean_fidelity.end())},
                     {"final_fidelity", stats.mean_fidelity.back()}});
      continue;
    }
    auto controller = make_controller(cfg);
    Rng sim = make_stream(episode_sim_seed(seed, e), 0);
    Rng ctrl = make_stream(episode_ctrl_seed(seed, e), 0);
    const auto rec = control::run_closed_loop(*controller, rho0, loop, sim, ctrl);
    out.push_back(trajectory_metrics(rec, cfg.quantum.sme.measurement.gain));
  }
  return out;
}

DrlRun train_and_evaluate(const RunConfig& cfg, std::uint64_t seed,
                          const std::function<void(const rl::IterationMetrics&)>& on_iteration) {
  const env::QuantumEnvConfig qc = cfg.quantum;
  rl::PpoTrainer trainer([qc](int) { return std::make_unique<env::QuantumEnvAdapter>(qc); }, cfg.ppo,
                         cfg.network, seed, qc.episode.steps_per_episode);
  rl::TrainOptions opts;
  opts.iterations = cfg.train_iterations;
  opts.on_iteration = on_iteration;
  DrlRun out;
  out.training = rl::train(trainer, opts);
  env::QuantumEnvAdapter eval_env(qc);
  Rng eval_seed = make_stream(seed, 0xe7a1);
  out.evaluation = rl::evaluate(trainer.policy(), eval_env, cfg.eval_episodes, cfg.eval_deterministic, eval_seed());
  out.final_state = trainer.snapshot();
  return out;
}

namespace {

struct MarkovianModel {
  Op h, f, a;
  std::vector<Op> channels;
  Ket target;
  double gamma = 0.0;

  CMatrixd rhs(const CMatrixd& rho) const {
    CMatrixd out = wiseman_milburn_rhs<double>(rho, h, a, f, gamma);
    for (const auto& c : channels) out += dissipator<double>(c.matrix(), rho);
    return out;
  }

  MarkovianSample sample(double t, const CMatrixd& rho) const {
    return {t, purity(rho), fidelity(Rho::unchecked(rho), target), (a.matrix() * rho).trace().real()};
  }
};

MarkovianModel markovian_model(const RunConfig& cfg) {
  const auto& q = cfg.quantum;
  if (q.sme.measurement.eta != 1.0) throw ConfigError("markovian: the unconditional equation assumes eta = 1");
  const double gamma = q.sme.measurement.gamma_meas;
  const double k = cfg.control.gain;
  const double b2 = q.dw.b * q.dw.b;
  const Op h_dw = double_well_hamiltonian(q.space, q.dw);
  const Op g = feedback_operator(q.feedback, q.space);
  std::vector<Op> channels = collapse_operators(q.space, q.sme);
  channels.erase(channels.begin());
  return MarkovianModel{Op(h_dw.matrix() + k * b2 * g.matrix(), true),
                        Op(-k / (2.0 * std::sqrt(gamma)) * g.matrix(), true),
                        square(quadratures(q.space).first),
                        std::move(channels),
                        ground_state(h_dw).state,
                        gamma};
}

}  // namespace

std::vector<MarkovianSample> markovian_unconditional(const RunConfig& cfg, double t_final, int samples) {
  if (!(t_final > 0) || samples < 1) throw InvalidArgument("markovian: need t_final > 0 and samples >= 1");
  const MarkovianModel m = markovian_model(cfg);
  auto radius = [](const Op& o) {
    return Eigen::SelfAdjointEigenSolver<CMatrixd>(o.matrix(), Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
  };
  // Bound on the generator's spectral radius keeps RK4 inside its stability region.
  const double nh = radius(m.h), na = radius(m.a), nf = radius(m.f);
  double bound = 2 * nh + 2 * m.gamma * na * na + 4 * std::sqrt(m.gamma) * nf * na + 2 * nf * nf;
  for (const auto& c : m.channels) bound += 2 * c.matrix().squaredNorm();
  const double interval = t_final / samples;
  const double dt = std::min(interval, 2.0 / bound);

  auto rhs = [&](const CMatrixd& rho) { return m.rhs(rho); };
  CMatrixd rho = initial_state(cfg).matrix();
  std::vector<MarkovianSample> out{m.sample(0.0, rho)};
  for (int s = 1; s <= samples; ++s) {
    rho = integrate_rk4<double>(rho, rhs, interval, dt);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    rho /= rho.trace().real();
    if (!rho.allFinite()) throw IntegratorAbort("markovian: state became non-finite", s);
    out.push_back(m.sample(s * interval, rho));
  }
  return out;
}

MarkovianSample markovian_steady_state(const RunConfig& cfg) {
  const MarkovianModel m = markovian_model(cfg);
  const int dim = cfg.quantum.space.dim();
  auto rhs = [&](const CMatrixd& rho) { return m.rhs(rho); };
  const Op parity = parity_operator(cfg.quantum.space);
  auto commutes = [&](const Op& o) { return commutator(o, parity).matrix().cwiseAbs().maxCoeff() < 1e-9; };
  bool conserves = commutes(m.h) && commutes(m.f);
  for (const auto& c : m.channels) conserves = conserves && commutes(c);
  if (!conserves) return m.sample(0.0, steady_state<double>(dim, rhs));
  const CMatrixd rho0 = initial_state(cfg).matrix();
  double p_even = 0.0;
  for (int n = 0; n < dim; n += 2) p_even += rho0(n, n).real();
  CMatrixd rho = CMatrixd::Zero(dim, dim);
  if (p_even > 1e-12) rho += p_even * steady_state<double>(dim, rhs, parity_support(dim, ParitySector::Even));
  if (p_even < 1 - 1e-12) rho += (1 - p_even) * steady_state<double>(dim, rhs, parity_support(dim, ParitySector::Odd));
  return m.sample(0.0, rho);
}

// ---------------------------------------------------------------------------

std::vector<SummaryRow> summarize(const std::vector<TidyRow>& rows) {
  struct Acc {
    SummaryRow row;
    double sum = 0.0;
    std::map<int, std::pair<double, int>> per_replicate;
  };
  std::vector<Acc> groups;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.value, r.metric);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      Acc a;
      a.row.value = r.value;
      a.row.metric = r.metric;
      a.row.max = r.result;
      a.row.min = r.result;
      a.row.manifest_hash = r.manifest_hash;
      groups.push_back(a);
    }
    Acc& a = groups[it->second];
    if (a.row.manifest_hash != r.manifest_hash) {
      throw ContractViolation("summarize: one sweep value carries two manifest hashes");
    }
    ++a.row.n;
    a.sum += r.result;
    a.row.max = std::max(a.row.max, r.result);
    a.row.min = std::min(a.row.min, r.result);
    auto& [s, c] = a.per_replicate[r.replicate];
    s += r.result;
    ++c;
  }
  std::vector<SummaryRow> out;
  for (auto& a : groups) {
    a.row.mean = a.sum / a.row.n;
    double lo = 0, hi = 0;
    bool first = true;
    for (const auto& [rep, sc] : a.per_replicate) {
      const double m = sc.first / sc.second;
      lo = first ? m : std::min(lo, m);
      hi = first ? m : std::max(hi, m);
      first = false;
    }
    a.row.range = hi - lo;
    out.push_back(a.row);
  }
  return out;
}

std::string tidy_csv_header() { return "experiment,axis,value,replicate,episode,metric,result,manifest_hash"; }
std::string summary_csv_header() { return "experiment,axis,value,metric,n,mean,max,min,range,manifest_hash"; }

ExperimentResult run_experiment(const std::string& name, const ExperimentOptions& opts) {
  const Experiment& exp = find_experiment(name);
  for (const auto& p : opts.only_points) {
    if (std::none_of(exp.points.begin(), exp.points.end(), [&](const SweepPoint& sp) { return sp.value == p; })) {
      std::string names;
      for (const auto& sp : exp.points) names += (names.empty() ? "" : ", ") + sp.value;
      throw ConfigError("experiment " + name + " has no point '" + p + "'; points: " + names);
    }
  }
  auto log = [&](const std::string& s) {
    if (opts.log) opts.log(s);
  };
  namespace fs = std::filesystem;
  fs::create_directories(opts.out_dir / "manifests");

  // Experiment-level manifest: the base configuration without any point applied.
  RunConfig base = default_config(opts.scale);
  for (const auto& [k, v] : exp.base) set_config_value(base, k, v);
  for (const auto& [k, v] : opts.overrides) {
    if (k != "scale") set_config_value(base, k, v);
  }
  base.scale = opts.scale;
  write_manifest(opts.out_dir, make_manifest("experiment " + name, base));

  ExperimentResult res;
  for (const auto& point : exp.points) {
    if (!opts.only_points.empty() &&
        std::find(opts.only_points.begin(), opts.only_points.end(), point.value) == opts.only_points.end()) {
      continue;
    }
    try {
      const RunConfig cfg = point_config(exp, point, opts.scale, opts.overrides);
      const RunManifest manifest = make_manifest("experiment " + name + " " + exp.axis + "=" + point.value, cfg);
      const std::string hash = manifest.hash();
      io::write_file_atomic(opts.out_dir / "manifests" / (hash + ".json"), manifest.to_json());
      std::vector<TidyRow> point_rows;
      for (int r = 0; r < cfg.replicates; ++r) {
        const std::uint64_t seed = replicate_seed(cfg.seed, r);
        log(name + ": " + exp.axis + "=" + point.value + " replicate " + std::to_string(r + 1) + "/" +
            std::to_string(cfg.replicates));
        std::vector<EpisodeMetrics> episodes;
        if (cfg.control.kind == ControllerKind::Drl) {
          const fs::path curve = opts.out_dir / "training" /
                                 (name + "_" + point.value + "_r" + std::to_string(r) + ".csv");
          fs::create_directories(curve.parent_path());
          std::string text = rl::metrics_csv_header();
          const DrlRun run = train_and_evaluate(cfg, seed, [&](const rl::IterationMetrics& m) {
            text += rl::metrics_csv_row(m);
            io::write_file_atomic(curve, text);
          });
          for (const auto& ev : run.evaluation) {
            EpisodeMetrics m;
            if (ev.mean_fidelity) m.emplace_back("mean_fidelity", *ev.mean_fidelity);
            if (ev.max_fidelity) m.emplace_back("max_fidelity", *ev.max_fidelity);
            m.emplace_back("mean_reward", ev.mean_reward);
            episodes.push_back(m);
          }
        } else {
          episodes = run_controller_episodes(cfg, seed, cfg.episodes);
        }
        for (std::size_t e = 0; e < episodes.size(); ++e) {
          for (const auto& [metric, value] : episodes[e]) {
            point_rows.push_back({point.value, r, static_cast<int>(e), metric, value, hash});
          }
        }
      }
      if (cfg.control.kind == ControllerKind::Markovian && cfg.quantum.sme.measurement.eta == 1.0) {
        // Deterministic, so it is reported once per point.
        const MarkovianSample ss = markovian_steady_state(cfg);
        point_rows.push_back({point.value, 0, 0, "steady_fidelity", ss.fidelity, hash});
        point_rows.push_back({point.value, 0, 0, "steady_purity", ss.purity, hash});
      }
      res.rows.insert(res.rows.end(), point_rows.begin(), point_rows.end());
    } catch (const std::exception& e) {
      res.incidents.push_back(exp.axis + "=" + point.value + ": " + e.what());
      log(name + ": point " + point.value + " failed: " + e.what());
    }
  }

  res.summary = summarize(res.rows);
  res.tidy_path = opts.out_dir / (name + ".csv");
  res.summary_path = opts.out_dir / (name + "_summary.csv");
  std::ostringstream tidy, summary;
  tidy << tidy_csv_header() << "\n";
  for (const auto& r : res.rows) {
    tidy << name << "," << csv_field(exp.axis) << "," << csv_field(r.value) << "," << r.replicate << "," << r.episode
         << "," << r.metric << "," << io::format_double(r.result) << "," << r.manifest_hash << "\n";
  }
  summary << summary_csv_header() << "\n";
  for (const auto& s : res.summary) {
    summary << name << "," << csv_field(exp.axis) << "," << csv_field(s.value) << "," << s.metric << "," << s.n << ","
            << io::format_double(s.mean) << "," << io::format_double(s.max) << "," << io::format_double(s.min) << ","
            << io::format_double(s.range) << "," << s.manifest_hash << "\n";
  }
  io::write_file_atomic(res.tidy_path, tidy.str());
  io::write_file_atomic(res.summary_path, summary.str());

  const fs::path marker = opts.out_dir / "FAILED";
  res.failed = !res.incidents.empty();
  if (res.failed) {
    std::string text;
    for (const auto& i : res.incidents) text += i + "\n";
    io::write_file_atomic(marker, text);
  } else {
    fs::remove(marker);
  }
  return res;
}

}  // namespace dwq::bench
