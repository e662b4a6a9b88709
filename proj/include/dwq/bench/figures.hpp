#pragma once

// CSV data behind the standard plots. Headers:
//   WIGNER          x,p,W
//   FIDELITY_TRACE  t,fidelity
//   CURRENT_TRACE   t,I,expect_x2
//   STREAMLINES     x,p,vx,vp,energy   (energy = p^2/2 + V(x), for equipotentials)
//   TRAINING_CURVE  iteration,steps,mean_reward,mean_fidelity,reward_ma20

#include <filesystem>
#include <string>
#include <variant>

#include "dwq/hilbert.hpp"
#include "dwq/sme.hpp"

namespace dwq::bench {

enum class FigureKind { Wigner, FidelityTrace, CurrentTrace, Streamlines, TrainingCurve };

std::string to_string(FigureKind k);
FigureKind parse_figure_kind(const std::string& s);

struct Grid2 {
  double x_min = -6, x_max = 6;
  double p_min = -6, p_max = 6;
  int nx = 121, np = 121;

  Eigen::VectorXd xs() const;
  Eigen::VectorXd ps() const;
};

struct StateSource {
  Rho rho;
  Grid2 grid;
};

struct FlowSource {
  FeedbackKind kind = FeedbackKind::XpSym;
  DwParams dw;
  Grid2 grid{-6, 6, -6, 6, 25, 25};
};

/// A trajectory held in memory, or a file: a binary trajectory for the trace
/// kinds, a training metrics CSV for TRAINING_CURVE.
using FigureSource = std::variant<StateSource, FlowSource, TrajectoryRecord<double>, std::filesystem::path>;

/// Writes the CSV for `kind` to `path`. Throws Error when a file source does
/// not exist and InvalidArgument when the source does not fit the kind.
void emit_figure_data(FigureKind kind, const FigureSource& source, const std::filesystem::path& path);

/// CSV text without touching the filesystem (used by emit_figure_data).
std::string figure_csv(FigureKind kind, const FigureSource& source);

}  // namespace dwq::bench
