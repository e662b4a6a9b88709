#pragma once

// Named experiments: a base configuration, one sweep axis and a runner that
// turns each sweep point into episodes and writes tidy and summary CSVs.

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dwq/bench/config.hpp"
#include "dwq/bench/manifest.hpp"

namespace dwq::bench {

using Setting = std::pair<std::string, std::string>;

struct SweepPoint {
  std::string value;              // label written to the CSVs
  std::vector<Setting> settings;  // applied last, on top of user overrides
};

struct Experiment {
  std::string name;
  std::string description;
  std::vector<Setting> base;
  std::string axis;  // config key, or a label when points set several keys
  std::vector<SweepPoint> points;
};

const std::vector<Experiment>& experiment_registry();
/// Throws Error naming every registered experiment when `name` is unknown.
const Experiment& find_experiment(const std::string& name);

/// Defaults for `scale`, then the experiment base, the user overrides and the
/// point settings, in that order.
RunConfig point_config(const Experiment& exp, const SweepPoint& point, Scale scale,
                       const std::vector<Setting>& overrides);

// ---------------------------------------------------------------------------
// Single runs shared by the experiments and the command line.

control::ClosedLoopConfig closed_loop_config(const RunConfig& cfg);
Rho initial_state(const RunConfig& cfg);
/// Controller for a non-learning kind; throws for drl.
std::unique_ptr<control::Controller> make_controller(const RunConfig& cfg);

/// Named per-episode results, in a fixed order per controller family.
using EpisodeMetrics = std::vector<std::pair<std::string, double>>;

EpisodeMetrics trajectory_metrics(const TrajectoryRecord<double>& rec, double gain);

/// Seeds of episode `episode` within replicate seed `seed`.
std::uint64_t episode_sim_seed(std::uint64_t seed, int episode);
std::uint64_t episode_ctrl_seed(std::uint64_t seed, int episode);
/// Seed of replicate `r`; independent of the sweep point, so every point sees
/// the same noise.
std::uint64_t replicate_seed(std::uint64_t master, int r);

/// Runs `n` episodes of a non-learning controller, single trajectory or
/// lockstep ensemble depending on `cfg.control.ensemble`.
std::vector<EpisodeMetrics> run_controller_episodes(const RunConfig& cfg, std::uint64_t seed, int n);

struct DrlRun {
  std::vector<rl::IterationMetrics> training;
  std::vector<rl::EpisodeEvaluation> evaluation;
  rl::PpoTrainer::Snapshot final_state;
};

/// Trains a fresh agent on the quantum task for cfg.train_iterations and
/// evaluates it on cfg.eval_episodes episodes.
DrlRun train_and_evaluate(const RunConfig& cfg, std::uint64_t seed,
                          const std::function<void(const rl::IterationMetrics&)>& on_iteration = {});

struct MarkovianSample {
  double t = 0.0;
  double purity = 0.0;
  double fidelity = 0.0;
  double expect_x2 = 0.0;
};

/// Noise-averaged evolution under direct current feedback. The law
/// amplitude = -k (I/gain - b^2) applied to the feedback generator G becomes
/// H = H_DW + k b^2 G and F = -k G / (2 sqrt(Gamma)) in the closed-loop master
/// equation, with k = cfg.control.gain. The amplitude clip is not modelled.
/// Requires eta = 1. Returns `samples` + 1 points evenly spaced over [0, t_final].
std::vector<MarkovianSample> markovian_unconditional(const RunConfig& cfg, double t_final, int samples);

/// Long-time limit of the same equation. When the model conserves parity the
/// limit is the mixture of the even and odd sector solutions, weighted by the
/// initial state's parity populations. `t` is left at 0.
MarkovianSample markovian_steady_state(const RunConfig& cfg);

// ---------------------------------------------------------------------------

struct TidyRow {
  std::string value;
  int replicate = 0;
  int episode = 0;
  std::string metric;
  double result = 0.0;
  std::string manifest_hash;
};

struct SummaryRow {
  std::string value;
  std::string metric;
  int n = 0;
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
  double range = 0.0;  // spread of the per-replicate means
  std::string manifest_hash;
};

/// Groups by (value, metric) in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<TidyRow>& rows);

std::string tidy_csv_header();
std::string summary_csv_header();

struct ExperimentOptions {
  Scale scale = Scale::Desk;
  std::vector<Setting> overrides;
  std::vector<std::string> only_points;  // empty runs every point
  std::filesystem::path out_dir = "out";
  std::function<void(const std::string&)> log;
};

struct ExperimentResult {
  std::filesystem::path tidy_path;
  std::filesystem::path summary_path;
  std::vector<TidyRow> rows;
  std::vector<SummaryRow> summary;
  std::vector<std::string> incidents;
  bool failed = false;
};

/// Writes `<out>/<name>.csv`, `<out>/<name>_summary.csv`, `<out>/manifest.json`
/// and one manifest per point under `<out>/manifests/<hash>.json`. A point
/// that throws is logged and skipped; any incident leaves `<out>/FAILED`.
ExperimentResult run_experiment(const std::string& name, const ExperimentOptions& opts);

}  // namespace dwq::bench
