// Command-line front end: one subcommand per run type, each writing its CSVs
// and a manifest.json into --out.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "dwq/bench/config.hpp"
#include "dwq/bench/experiments.hpp"
#include "dwq/bench/figures.hpp"
#include "dwq/bench/manifest.hpp"
#include "dwq/io.hpp"
#include "dwq/rl/agent.hpp"
#include "dwq/rl/checkpoint.hpp"
#include "dwq/rl/train.hpp"

namespace fs = std::filesystem;
using namespace dwq;
using namespace dwq::bench;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string scale;
  std::vector<std::string> sets;
};

std::vector<Setting> user_settings(const Globals& g, std::optional<Scale>& scale) {
  std::vector<Setting> out;
  if (!g.config_path.empty()) {
    const std::string text = io::read_file(g.config_path);
    out = parse_config_entries(text, g.config_path);
    if (!scale) scale = scan_scale(text);
  }
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (g.seed) out.emplace_back("seed", std::to_string(*g.seed));
  return out;
}

struct Context {
  RunConfig cfg;
  std::vector<Setting> settings;
  fs::path out;
};

Context make_context(const Globals& g) {
  std::optional<Scale> scale;
  if (!g.scale.empty()) scale = parse_scale(g.scale);
  Context c;
  c.settings = user_settings(g, scale);
  c.cfg = default_config(scale.value_or(Scale::Desk));
  for (const auto& [k, v] : c.settings) {
    if (k != "scale") set_config_value(c.cfg, k, v);
  }
  c.cfg.scale = scale.value_or(Scale::Desk);
  c.cfg.validate();
  c.out = g.out;
  fs::create_directories(c.out);
  return c;
}

void finish(const Context& c, const std::string& command) {
  write_manifest(c.out, make_manifest(command, c.cfg));
}

void save(const fs::path& path, const io::CsvWriter& csv) {
  csv.save(path);
  std::cout << "wrote " << path.string() << "\n";
}

void write_traces(const fs::path& dir, const TrajectoryRecord<double>& rec) {
  const auto rows = io::trajectory_rows(rec);
  io::write_trajectory_csv(dir / "trajectory.csv", rows);
  io::write_trajectory_binary(dir / "trajectory.bin", rows);
  emit_figure_data(FigureKind::FidelityTrace, rec, dir / "fidelity_trace.csv");
  emit_figure_data(FigureKind::CurrentTrace, rec, dir / "current_trace.csv");
  std::cout << "wrote " << (dir / "trajectory.csv").string() << " and traces\n";
}

std::unique_ptr<env::Environment> make_env(const RunConfig& cfg) {
  if (cfg.task == Task::Toy) return std::make_unique<env::ToyEnvAdapter>(cfg.toy);
  return std::make_unique<env::QuantumEnvAdapter>(cfg.quantum);
}

io::CsvWriter evaluation_table(const std::vector<rl::EpisodeEvaluation>& ev) {
  io::CsvWriter csv({"episode", "steps", "total_reward", "mean_reward", "mean_fidelity", "max_fidelity"});
  for (const auto& e : ev) {
    csv.row(std::vector<std::string>{std::to_string(e.episode), std::to_string(e.steps),
                                     io::format_double(e.total_reward), io::format_double(e.mean_reward),
                                     e.mean_fidelity ? io::format_double(*e.mean_fidelity) : "",
                                     e.max_fidelity ? io::format_double(*e.max_fidelity) : ""});
  }
  return csv;
}

double mean_of(const std::vector<rl::EpisodeEvaluation>& ev, bool fidelity) {
  double s = 0.0;
  for (const auto& e : ev) s += fidelity ? e.mean_fidelity.value_or(0.0) : e.total_reward;
  return s / static_cast<double>(ev.size());
}

// ---------------------------------------------------------------------------

void cmd_ground_state(const Globals& g, int levels) {
  Context c = make_context(g);
  const auto& q = c.cfg.quantum;
  const Op h = double_well_hamiltonian(q.space, q.dw);
  const auto spec = spectrum(h, std::min(levels, q.space.dim()));
  io::CsvWriter csv({"level", "energy", "parity"});
  for (std::size_t k = 0; k < spec.size(); ++k) {
    csv.row(std::vector<std::string>{std::to_string(k), io::format_double(spec[k].energy),
                                     io::format_double(parity_expectation(spec[k].state))});
  }
  save(c.out / "spectrum.csv", csv);
  std::cout << "E0 = " << io::format_double(spec[0].energy)
            << ", parity = " << io::format_double(parity_expectation(spec[0].state)) << "\n";
  finish(c, "ground-state levels=" + std::to_string(levels));
}

void cmd_wigner(const Globals& g, const std::string& which, int points, double extent) {
  Context c = make_context(g);
  const auto& q = c.cfg.quantum;
  Rho rho = Rho::maximally_mixed(2);
  if (which == "ground") {
    rho = Rho::from_pure(ground_state(double_well_hamiltonian(q.space, q.dw)).state);
  } else if (which == "initial") {
    rho = initial_state(c.cfg);
  } else {
    throw ConfigError("--state must be ground or initial");
  }
  const Grid2 grid{-extent, extent, -extent, extent, points, points};
  emit_figure_data(FigureKind::Wigner, StateSource{rho, grid}, c.out / "wigner.csv");
  std::cout << "wrote " << (c.out / "wigner.csv").string() << "\n";
  std::ostringstream cmd;
  cmd << "wigner state=" << which << " points=" << points << " extent=" << io::format_double(extent);
  finish(c, cmd.str());
}

void cmd_streamlines(const Globals& g, int points, double extent) {
  Context c = make_context(g);
  FlowSource src{c.cfg.quantum.feedback, c.cfg.quantum.dw, Grid2{-extent, extent, -extent, extent, points, points}};
  emit_figure_data(FigureKind::Streamlines, src, c.out / "streamlines.csv");
  std::cout << "wrote " << (c.out / "streamlines.csv").string() << "\n";
  finish(c, "streamlines points=" + std::to_string(points) + " extent=" + io::format_double(extent));
}

void cmd_evolve(const Globals& g) {
  Context c = make_context(g);
  auto controller = make_controller(c.cfg);
  Rng sim = make_stream(episode_sim_seed(c.cfg.seed, 0), 0);
  Rng ctrl = make_stream(episode_ctrl_seed(c.cfg.seed, 0), 0);
  const auto rec = control::run_closed_loop(*controller, initial_state(c.cfg), closed_loop_config(c.cfg), sim, ctrl);
  write_traces(c.out, rec);
  std::cout << controller->name() << ": mean fidelity " << io::format_double(rec.mean_fidelity()) << "\n";
  finish(c, "evolve");
}

void cmd_bayesian(const Globals& g) {
  Context c = make_context(g);
  c.cfg.control.kind = ControllerKind::Bayesian;
  c.cfg.control.ensemble = false;
  const auto episodes = run_controller_episodes(c.cfg, c.cfg.seed, c.cfg.episodes);
  std::vector<std::string> header{"episode"};
  for (const auto& [name, v] : episodes.front()) header.push_back(name);
  io::CsvWriter csv(header);
  double mean = 0.0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    std::vector<std::string> row{std::to_string(e)};
    for (const auto& [name, v] : episodes[e]) row.push_back(io::format_double(v));
    csv.row(row);
    mean += episodes[e].front().second / static_cast<double>(episodes.size());
  }
  save(c.out / "episodes.csv", csv);
  std::cout << "mean fidelity over " << episodes.size() << " episodes: " << io::format_double(mean) << "\n";
  finish(c, "bayesian");
}

void cmd_ensemble(const Globals& g) {
  Context c = make_context(g);
  const auto stats = control::ensemble_bayesian_run(c.cfg.control.copies, closed_loop_config(c.cfg), c.cfg.control.source,
                                                    initial_state(c.cfg), c.cfg.seed, c.cfg.control.gain);
  io::CsvWriter csv({"step", "t", "mean_fidelity", "amplitude"});
  const double dt = c.cfg.quantum.sme.dt_control;
  for (std::size_t k = 0; k < stats.mean_fidelity.size(); ++k) {
    csv.row(std::vector<double>{static_cast<double>(k), (k + 1) * dt, stats.mean_fidelity[k], stats.amplitudes[k]});
  }
  save(c.out / "ensemble.csv", csv);
  std::cout << c.cfg.control.copies << " copies: episode mean fidelity "
            << io::format_double(stats.episode_mean_fidelity) << "\n";
  finish(c, "ensemble");
}

void cmd_markovian(const Globals& g, double t_final, int samples) {
  Context c = make_context(g);
  if (t_final <= 0) t_final = c.cfg.quantum.episode.steps_per_episode * c.cfg.quantum.sme.dt_control;
  const auto trace = markovian_unconditional(c.cfg, t_final, samples);
  io::CsvWriter csv({"t", "purity", "fidelity", "expect_x2"});
  for (const auto& s : trace) csv.row(std::vector<double>{s.t, s.purity, s.fidelity, s.expect_x2});
  save(c.out / "markovian.csv", csv);
  const auto ss = markovian_steady_state(c.cfg);
  io::CsvWriter steady({"purity", "fidelity", "expect_x2"});
  steady.row(std::vector<double>{ss.purity, ss.fidelity, ss.expect_x2});
  save(c.out / "markovian_steady.csv", steady);
  std::cout << "at t = " << io::format_double(t_final) << ": purity " << io::format_double(trace.back().purity)
            << ", fidelity " << io::format_double(trace.back().fidelity) << "; steady state: purity "
            << io::format_double(ss.purity) << ", fidelity " << io::format_double(ss.fidelity) << "\n";
  finish(c, "markovian t=" + io::format_double(t_final) + " samples=" + std::to_string(samples));
}

void cmd_train(const Globals& g) {
  Context c = make_context(g);
  const RunConfig cfg = c.cfg;
  const int episode_length = cfg.task == Task::Quantum ? cfg.quantum.episode.steps_per_episode : 0;
  rl::PpoTrainer trainer([cfg](int) { return make_env(cfg); }, cfg.ppo, cfg.network, cfg.seed, episode_length);
  rl::TrainOptions opts;
  opts.iterations = cfg.train_iterations;
  opts.metrics_csv = c.out / "metrics.csv";
  opts.checkpoint = c.out / "checkpoint.bin";
  opts.on_iteration = [](const rl::IterationMetrics& m) {
    std::cerr << "iteration " << m.iteration << " reward " << io::format_double(m.mean_reward);
    if (m.mean_fidelity) std::cerr << " fidelity " << io::format_double(*m.mean_fidelity);
    std::cerr << "\n";
  };
  rl::train(trainer, opts);
  emit_figure_data(FigureKind::TrainingCurve, fs::path(c.out / "metrics.csv"), c.out / "training_curve.csv");
  auto env = make_env(cfg);
  const auto ev = rl::evaluate(trainer.policy(), *env, cfg.eval_episodes, cfg.eval_deterministic, cfg.seed);
  save(c.out / "eval.csv", evaluation_table(ev));
  std::cout << "trained policy: mean episode reward " << io::format_double(mean_of(ev, false));
  if (cfg.task == Task::Quantum) std::cout << ", mean fidelity " << io::format_double(mean_of(ev, true));
  std::cout << "\n";
  finish(c, "train");
}

void cmd_eval(const Globals& g, const std::string& checkpoint) {
  Context c = make_context(g);
  const auto ck = rl::load_checkpoint(checkpoint, 2);
  const rl::ActorCritic net = rl::policy_from(ck);
  auto env = make_env(c.cfg);
  const auto ev = rl::evaluate(net, *env, c.cfg.eval_episodes, c.cfg.eval_deterministic, c.cfg.seed);
  save(c.out / "eval.csv", evaluation_table(ev));
  if (c.cfg.task == Task::Quantum) {
    rl::PolicyController agent(net, c.cfg.quantum.episode.normalize_observations, c.cfg.quantum.dw.b,
                               c.cfg.eval_deterministic);
    Rng sim = make_stream(episode_sim_seed(c.cfg.seed, 0), 0);
    Rng ctrl = make_stream(episode_ctrl_seed(c.cfg.seed, 0), 0);
    const auto rec = control::run_closed_loop(agent, initial_state(c.cfg), closed_loop_config(c.cfg), sim, ctrl);
    write_traces(c.out, rec);
  }
  std::cout << "mean episode reward " << io::format_double(mean_of(ev, false));
  if (c.cfg.task == Task::Quantum) std::cout << ", mean fidelity " << io::format_double(mean_of(ev, true));
  std::cout << "\n";
  // The checkpoint is part of the input, so its hash joins the command.
  finish(c, "eval checkpoint=" + io::hex64(io::fnv1a(io::read_file(checkpoint))));
}

int cmd_experiment(const Globals& g, const std::string& name, const std::string& points) {
  std::optional<Scale> scale;
  if (!g.scale.empty()) scale = parse_scale(g.scale);
  ExperimentOptions opts;
  opts.overrides = user_settings(g, scale);
  opts.scale = scale.value_or(Scale::Desk);
  opts.out_dir = g.out;
  opts.log = [](const std::string& s) { std::cerr << s << "\n"; };
  std::stringstream ss(points);
  for (std::string p; std::getline(ss, p, ',');) {
    if (!p.empty()) opts.only_points.push_back(p);
  }
  const auto res = run_experiment(name, opts);
  std::cout << "wrote " << res.tidy_path.string() << " and " << res.summary_path.string() << "\n";
  for (const auto& s : res.summary) {
    if (s.metric == "mean_fidelity") {
      std::cout << "  " << s.value << ": mean fidelity " << io::format_double(s.mean) << " (range "
                << io::format_double(s.range) << ")\n";
    }
  }
  if (res.failed) {
    std::cerr << "experiment " << name << " had " << res.incidents.size() << " failed point(s); see "
              << (opts.out_dir / "FAILED").string() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-well measurement-feedback lab"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed (overrides the config)");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--scale", g.scale, "default set: desk or full")->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--set", g.sets, "extra key=value override (repeatable)");

  int levels = 6;
  auto* ground = app.add_subcommand("ground-state", "lowest levels and parity of the double well");
  ground->add_option("--levels", levels)->capture_default_str();

  std::string which = "ground";
  int points = 121;
  double extent = 6.0;
  auto* wig = app.add_subcommand("wigner", "Wigner function on a square grid (x,p,W)");
  wig->add_option("--state", which, "ground or initial")->capture_default_str();
  wig->add_option("--points", points)->capture_default_str();
  wig->add_option("--extent", extent, "grid spans [-extent, extent] in x and p")->capture_default_str();

  int flow_points = 25;
  double flow_extent = 6.0;
  auto* flow = app.add_subcommand("streamlines", "classical flow of the feedback generator");
  flow->add_option("--points", flow_points)->capture_default_str();
  flow->add_option("--extent", flow_extent)->capture_default_str();

  auto* evolve = app.add_subcommand("evolve", "one closed-loop trajectory with control.kind");
  auto* bayes = app.add_subcommand("bayesian", "run.episodes single-trajectory Bayesian episodes");
  auto* ens = app.add_subcommand("ensemble", "lockstep ensemble with a shared amplitude");

  double t_final = 0.0;
  int samples = 200;
  auto* markov = app.add_subcommand("markovian", "noise-averaged direct current feedback");
  markov->add_option("--time", t_final, "duration; default is one episode");
  markov->add_option("--samples", samples)->capture_default_str();

  auto* train = app.add_subcommand("train", "PPO training on the configured task");

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);

  std::string exp_name, exp_points;
  bool list = false;
  auto* exp = app.add_subcommand("experiment", "run a named experiment");
  exp->add_option("name", exp_name);
  exp->add_option("--points", exp_points, "comma-separated subset of sweep values");
  exp->add_flag("--list", list, "list registered experiments");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ground->parsed()) cmd_ground_state(g, levels);
    else if (wig->parsed()) cmd_wigner(g, which, points, extent);
    else if (flow->parsed()) cmd_streamlines(g, flow_points, flow_extent);
    else if (evolve->parsed()) cmd_evolve(g);
    else if (bayes->parsed()) cmd_bayesian(g);
    else if (ens->parsed()) cmd_ensemble(g);
    else if (markov->parsed()) cmd_markovian(g, t_final, samples);
    else if (train->parsed()) cmd_train(g);
    else if (eval->parsed()) cmd_eval(g, checkpoint);
    else if (exp->parsed()) {
      if (list || exp_name.empty()) {
        for (const auto& e : experiment_registry()) {
          std::cout << e.name << ": " << e.description << " (" << e.axis << ":";
          for (const auto& p : e.points) std::cout << " " << p.value;
          std::cout << ")\n";
        }
        return exp_name.empty() && !list ? 2 : 0;
      }
      return cmd_experiment(g, exp_name, exp_points);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
