#include "dwq/bench/figures.hpp"

#include <sstream>

#include "dwq/io.hpp"
#include "dwq/rl/train.hpp"

namespace dwq::bench {

namespace {

using io::format_double;

Eigen::VectorXd linspace(double lo, double hi, int n) {
  if (n < 2 || !(hi > lo)) throw InvalidArgument("grid: need at least two points and max > min");
  return Eigen::VectorXd::LinSpaced(n, lo, hi);
}

void require_file(const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) throw Error("figure source " + p.string() + " does not exist");
}

std::vector<io::TrajectoryRow> trajectory_of(const FigureSource& src, FigureKind kind) {
  if (const auto* rec = std::get_if<TrajectoryRecord<double>>(&src)) {
    return io::trajectory_rows(*rec);
  }
  if (const auto* p = std::get_if<std::filesystem::path>(&src)) {
    require_file(*p);
    return io::read_trajectory_binary(*p);
  }
  throw InvalidArgument(to_string(kind) + " needs a trajectory source");
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string training_curve(const std::filesystem::path& p) {
  require_file(p);
  std::stringstream in(io::read_file(p));
  std::string line;
  if (!std::getline(in, line) || line.rfind("iteration,steps,mean_reward,mean_fidelity", 0) != 0) {
    throw InvalidArgument("training curve: " + p.string() + " is not a metrics CSV");
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<double> reward;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() < 4) throw InvalidArgument("training curve: short row in " + p.string());
    reward.push_back(std::stod(f[2]));
    rows.push_back(std::move(f));
  }
  const auto ma = rl::moving_average(reward, 20);
  std::string out = "iteration,steps,mean_reward,mean_fidelity,reward_ma20\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += rows[i][0] + "," + rows[i][1] + "," + rows[i][2] + "," + rows[i][3] + "," + format_double(ma[i]) + "\n";
  }
  return out;
}

}  // namespace

std::string to_string(FigureKind k) {
  switch (k) {
    case FigureKind::Wigner: return "wigner";
    case FigureKind::FidelityTrace: return "fidelity-trace";
    case FigureKind::CurrentTrace: return "current-trace";
    case FigureKind::Streamlines: return "streamlines";
    case FigureKind::TrainingCurve: return "training-curve";
  }
  return "?";
}

FigureKind parse_figure_kind(const std::string& s) {
  for (auto k : {FigureKind::Wigner, FigureKind::FidelityTrace, FigureKind::CurrentTrace, FigureKind::Streamlines,
                 FigureKind::TrainingCurve}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown figure kind '" + s + "'");
}

Eigen::VectorXd Grid2::xs() const { return linspace(x_min, x_max, nx); }
Eigen::VectorXd Grid2::ps() const { return linspace(p_min, p_max, np); }

std::string figure_csv(FigureKind kind, const FigureSource& source) {
  std::string out;
  switch (kind) {
    case FigureKind::Wigner: {
      const auto* s = std::get_if<StateSource>(&source);
      if (!s) throw InvalidArgument("wigner needs a state source");
      const Eigen::VectorXd xs = s->grid.xs(), ps = s->grid.ps();
      const auto w = wigner(s->rho, xs, ps);
      out = "x,p,W\n";
      for (Eigen::Index i = 0; i < xs.size(); ++i)
        for (Eigen::Index j = 0; j < ps.size(); ++j)
          out += format_double(xs(i)) + "," + format_double(ps(j)) + "," + format_double(w(i, j)) + "\n";
      return out;
    }
    case FigureKind::Streamlines: {
      const auto* s = std::get_if<FlowSource>(&source);
      if (!s) throw InvalidArgument("streamlines needs a flow source");
      const Eigen::VectorXd xs = s->grid.xs(), ps = s->grid.ps();
      const auto [vx, vp] = phase_flow(s->kind, xs, ps);
      out = "x,p,vx,vp,energy\n";
      for (Eigen::Index i = 0; i < xs.size(); ++i)
        for (Eigen::Index j = 0; j < ps.size(); ++j) {
          const double e = 0.5 * ps(j) * ps(j) + double_well_potential(s->dw, xs(i));
          out += format_double(xs(i)) + "," + format_double(ps(j)) + "," + format_double(vx(i, j)) + "," +
                 format_double(vp(i, j)) + "," + format_double(e) + "\n";
        }
      return out;
    }
    case FigureKind::FidelityTrace: {
      out = "t,fidelity\n";
      for (const auto& r : trajectory_of(source, kind)) out += format_double(r.t) + "," + format_double(r.fidelity) + "\n";
      return out;
    }
    case FigureKind::CurrentTrace: {
      out = "t,I,expect_x2\n";
      for (const auto& r : trajectory_of(source, kind)) {
        out += format_double(r.t) + "," + format_double(r.current) + "," + format_double(r.expect_x2) + "\n";
      }
      return out;
    }
    case FigureKind::TrainingCurve: {
      const auto* p = std::get_if<std::filesystem::path>(&source);
      if (!p) throw InvalidArgument("training-curve needs a metrics CSV path");
      return training_curve(*p);
    }
  }
  throw InvalidArgument("unknown figure kind");
}

void emit_figure_data(FigureKind kind, const FigureSource& source, const std::filesystem::path& path) {
  const std::string text = figure_csv(kind, source);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_file_atomic(path, text);
}

}  // namespace dwq::bench
