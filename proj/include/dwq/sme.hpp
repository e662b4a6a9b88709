#pragma once

// Conditional stochastic master equation for continuous measurement of x^2,
// plus the deterministic reference equations used to check it: the Lindblad
// generator, the Markovian-feedback (Wiseman-Milburn) generator, and a single
// discrete weak measurement.

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SparseCore>

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dwq/hilbert.hpp"

namespace dwq {

using Rng = std::mt19937_64;

/// Independent stream `index` derived from a master seed.
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
  return Rng(seq);
}

struct MeasurementConfig {
  double gamma_meas = 0.1;  // measurement rate
  double eta = 1.0;         // detection efficiency
  double gain = 1.0;        // gamma*g, scales the current

  void validate() const {
    if (!(gamma_meas > 0)) throw InvalidArgument("measurement: gamma_meas must be > 0");
    if (!(eta > 0 && eta <= 1)) throw InvalidArgument("measurement: eta must lie in (0, 1]");
    if (!(gain > 0)) throw InvalidArgument("measurement: gain must be > 0");
  }
};

enum class ChannelKind { None, Damping, Dephasing };

inline std::string to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::None: return "none";
    case ChannelKind::Damping: return "damping";
    case ChannelKind::Dephasing: return "dephasing";
  }
  return "?";
}

/// sqrt(rate) a for damping, sqrt(rate) a^dag a for dephasing.
struct DecoherenceChannel {
  ChannelKind kind = ChannelKind::None;
  double rate = 0.0;

  void validate() const {
    if (rate < 0) throw InvalidArgument("channel: rate must be >= 0");
    if ((rate == 0) != (kind == ChannelKind::None)) {
      throw InvalidArgument("channel: rate is zero exactly when kind is none");
    }
  }
};

enum class SmeScheme { Split, EulerMaruyama };

struct SmeConfig {
  MeasurementConfig measurement;
  std::vector<DecoherenceChannel> channels;
  double dt_control = 0.01;
  int n_substeps = 10;
  bool renormalize = true;
  bool check_positivity = true;  // Cholesky probe once per control interval
  SmeScheme scheme = SmeScheme::Split;

  double dt_sub() const { return dt_control / n_substeps; }

  void validate() const {
    measurement.validate();
    for (const auto& c : channels) c.validate();
    if (!(dt_control > 0)) throw InvalidArgument("sme: dt_control must be > 0");
    if (n_substeps < 1) throw InvalidArgument("sme: n_substeps must be >= 1");
    if (measurement.gamma_meas >= 0.1 && dt_sub() > 1e-2) {
      throw InvalidArgument("sme: substep larger than 1e-2 at gamma_meas >= 0.1");
    }
  }
};

template <typename Real>
struct StepRecord {
  Real current = 0;    // I averaged over the control interval
  Real dW_sum = 0;     // sum of the substep innovations dy - 2 sqrt(eta Gamma) <x^2> dt
  DensityMatrix<Real> rho_after;
  Real expect_x2 = 0;  // <x^2>_c at the start of the interval
};

// ---------------------------------------------------------------------------
// Superoperators. Each takes rho as a plain matrix so integrators can feed
// intermediate (not yet renormalized) states; DensityMatrix overloads follow.

/// D[L] rho = L rho L^dag - {L^dag L, rho}/2.
template <typename Real>
CMatrix<Real> dissipator(const CMatrix<Real>& l, const CMatrix<Real>& rho) {
  detail::require_same_dim(l.rows(), rho.rows(), "dissipator");
  // Linear in rho even when rho is not hermitian, which the superoperator
  // assembly in steady_state relies on.
  const CMatrix<Real> ldl = l.adjoint() * l;
  return l * rho * l.adjoint() - Real(0.5) * (ldl * rho + rho * ldl);
}

template <typename Real>
CMatrix<Real> dissipator(const Operator<Real>& l, const DensityMatrix<Real>& rho) {
  return dissipator<Real>(l.matrix(), rho.matrix());
}

/// H[L] rho = L rho + rho L - tr(L rho + rho L) rho, for hermitian L.
template <typename Real>
CMatrix<Real> innovation(const Operator<Real>& l, const DensityMatrix<Real>& rho) {
  if (!l.hermitian()) throw InvalidArgument("innovation: operator must be hermitian");
  detail::require_same_dim(l.dim(), rho.dim(), "innovation");
  const CMatrix<Real> lr = l.matrix() * rho.matrix();
  const CMatrix<Real> sym = lr + lr.adjoint();
  return sym - sym.trace().real() * rho.matrix();
}

/// -i[H, rho] + sum_k D[L_k] rho.
template <typename Real>
CMatrix<Real> lindblad_rhs(const CMatrix<Real>& rho, const Operator<Real>& h,
                           const std::vector<Operator<Real>>& collapse) {
  detail::require_same_dim(h.dim(), rho.rows(), "lindblad_rhs");
  const std::complex<Real> i(0, 1);
  CMatrix<Real> out = -i * (h.matrix() * rho - rho * h.matrix());
  for (const auto& l : collapse) {
    detail::require_same_dim(l.dim(), rho.rows(), "lindblad_rhs");
    out += dissipator<Real>(l.matrix(), rho);
  }
  return out;
}

template <typename Real>
CMatrix<Real> lindblad_rhs(const DensityMatrix<Real>& rho, const Operator<Real>& h,
                           const std::vector<Operator<Real>>& collapse) {
  return lindblad_rhs<Real>(rho.matrix(), h, collapse);
}

/// Unconditional closed-loop generator with Markovian feedback F driven by the
/// record of A:
///   -i[H, rho] + gamma D[A] rho - i sqrt(gamma) [F, A rho + rho A] + D[F] rho.
template <typename Real>
CMatrix<Real> wiseman_milburn_rhs(const CMatrix<Real>& rho, const Operator<Real>& h,
                                  const Operator<Real>& a_meas, const Operator<Real>& f,
                                  Real gamma_meas) {
  if (!a_meas.hermitian() || !f.hermitian()) {
    throw InvalidArgument("wiseman_milburn_rhs: measured and feedback operators must be hermitian");
  }
  for (int d : {h.dim(), a_meas.dim(), f.dim()}) detail::require_same_dim(d, rho.rows(), "wiseman_milburn_rhs");
  const std::complex<Real> i(0, 1);
  const auto& H = h.matrix();
  const auto& A = a_meas.matrix();
  const auto& F = f.matrix();
  const CMatrix<Real> anti = A * rho + rho * A;
  return -i * (H * rho - rho * H) + gamma_meas * dissipator<Real>(A, rho) -
         i * std::sqrt(gamma_meas) * (F * anti - anti * F) + dissipator<Real>(F, rho);
}

template <typename Real>
CMatrix<Real> wiseman_milburn_rhs(const DensityMatrix<Real>& rho, const Operator<Real>& h,
                                  const Operator<Real>& a_meas, const Operator<Real>& f,
                                  Real gamma_meas) {
  return wiseman_milburn_rhs<Real>(rho.matrix(), h, a_meas, f, gamma_meas);
}

/// Collapse operators of the configuration: sqrt(gamma) x^2 first, then the
/// decoherence channels in order.
template <typename Real>
std::vector<Operator<Real>> collapse_operators(const FockSpace<Real>& space, const SmeConfig& cfg) {
  const auto [x, p] = quadratures(space);
  const auto [a, ad] = ladder_operators(space);
  std::vector<Operator<Real>> out;
  out.push_back(Real(std::sqrt(cfg.measurement.gamma_meas)) * square(x));
  for (const auto& ch : cfg.channels) {
    const Real s = std::sqrt(Real(ch.rate));
    switch (ch.kind) {
      case ChannelKind::Damping: out.push_back(s * a); break;
      case ChannelKind::Dephasing: out.push_back(Operator<Real>(s * (ad.matrix() * a.matrix()), true)); break;
      case ChannelKind::None: break;
    }
  }
  return out;
}

/// Classic fourth-order Runge-Kutta for a matrix ODE drho/dt = rhs(rho).
template <typename Real, typename Rhs>
CMatrix<Real> integrate_rk4(CMatrix<Real> rho, Rhs&& rhs, Real t_final, Real dt) {
  const int steps = static_cast<int>(std::ceil(t_final / dt - Real(1e-9)));
  const Real h = t_final / Real(steps);
  for (int s = 0; s < steps; ++s) {
    const CMatrix<Real> k1 = rhs(rho);
    const CMatrix<Real> k2 = rhs((rho + Real(0.5) * h * k1).eval());
    const CMatrix<Real> k3 = rhs((rho + Real(0.5) * h * k2).eval());
    const CMatrix<Real> k4 = rhs((rho + h * k3).eval());
    rho += (h / Real(6)) * (k1 + Real(2) * k2 + Real(2) * k3 + k4);
  }
  return rho;
}

/// Null space of a linear generator, normalized to unit trace: solves
/// L(rho) = 0 with one equation replaced by tr(rho) = 1.
///
/// `support` restricts rho to the block spanned by the listed basis indices,
/// which must be invariant under the generator. A conserved quantity such as
/// parity makes the full null space degenerate; restricting to one sector
/// makes the answer unique.
template <typename Real, typename Rhs>
CMatrix<Real> steady_state(int dim, Rhs&& rhs, std::vector<int> support = {}) {
  if (support.empty()) {
    support.resize(dim);
    for (int i = 0; i < dim; ++i) support[i] = i;
  }
  for (int s : support) {
    if (s < 0 || s >= dim) throw InvalidArgument("steady_state: support index out of range");
  }
  const int m = static_cast<int>(support.size());
  const int m2 = m * m;
  CMatrix<Real> super(m2, m2);
  for (int k = 0; k < m2; ++k) {
    CMatrix<Real> basis = CMatrix<Real>::Zero(dim, dim);
    basis(support[k % m], support[k / m]) = 1;
    const CMatrix<Real> col = rhs(basis);
    for (int q = 0; q < m2; ++q) super(q, k) = col(support[q % m], support[q / m]);
  }
  CVector<Real> rhs_vec = CVector<Real>::Zero(m2);
  super.row(0).setZero();
  for (int d = 0; d < m; ++d) super(0, d * m + d) = 1;
  rhs_vec(0) = 1;
  const CVector<Real> sol = super.partialPivLu().solve(rhs_vec);
  CMatrix<Real> rho = CMatrix<Real>::Zero(dim, dim);
  for (int q = 0; q < m2; ++q) rho(support[q % m], support[q / m]) = sol(q);
  rho = Real(0.5) * (rho + rho.adjoint()).eval();
  return rho / rho.trace().real();
}

/// Fock indices of one parity sector.
inline std::vector<int> parity_support(int dim, ParitySector sector) {
  std::vector<int> out;
  for (int n = sector == ParitySector::Even ? 0 : 1; n < dim; n += 2) out.push_back(n);
  return out;
}

// ---------------------------------------------------------------------------
// Conditional integrator.

/// Sparse copy of a dense matrix, dropping entries below 1e-14 of the largest.
template <typename Real>
Eigen::SparseMatrix<std::complex<Real>, Eigen::RowMajor> to_sparse(const CMatrix<Real>& m) {
  const Real tol = Real(1e-14) * std::max(Real(1), detail::max_abs(m));
  Eigen::SparseMatrix<std::complex<Real>, Eigen::RowMajor> s = m.sparseView(Real(1), tol);
  s.makeCompressed();
  return s;
}

/// Integrates one control interval of
///   drho = -i[H, rho] dt + D[c] rho dt + sum_k D[L_k] rho dt + sqrt(eta) H[c] rho dW,
/// c = sqrt(gamma) x^2, in `n_substeps` substeps that each draw one Wiener
/// increment. The record of the interval is
///   I = gain (<x^2>_start + sum(dW) / (sqrt(4 eta gamma) dt_control)).
///
/// SmeScheme::Split works in the eigenbasis of x^2. Each substep applies the
/// exact unitary exp(-i H dt), then the exact solution of the measurement part
/// given the increment dy = dW + 2 sqrt(eta gamma) <x^2> dt,
///   rho_jk *= exp(sqrt(eta gamma)(l_j + l_k) dy - eta gamma (l_j^2 + l_k^2) dt
///                 - (1 - eta) gamma (l_j - l_k)^2 dt / 2),
/// then a first-order Kraus step for the decoherence channels. Every map is
/// completely positive, so the scheme stays stable at the Fock levels where
/// Euler-Maruyama's multiplicative noise term exceeds unity.
///
/// SmeScheme::EulerMaruyama applies the equation above literally with sparse
/// operator products; it is only stable for small truncations.
///
/// With `noiseless` the measurement map is replaced by its ensemble mean, so
/// the interval follows the unconditional Lindblad equation.
template <typename Real>
class SmeStepper {
 public:
  using Matrix = CMatrix<Real>;
  using Sparse = Eigen::SparseMatrix<std::complex<Real>, Eigen::RowMajor>;

  SmeStepper(const FockSpace<Real>& space, const SmeConfig& cfg) : space_(space), cfg_(cfg) {
    cfg_.validate();
    const auto ops = collapse_operators(space, cfg_);
    const Operator<Real> x2 = square(quadratures(space).first);
    x2_sparse_ = to_sparse<Real>(x2.matrix());
    c_sparse_ = to_sparse<Real>(ops.front().matrix());

    // Parity-resolved eigenbasis of x^2 keeps parity-definite basis vectors
    // even where even and odd eigenvalues nearly coincide.
    std::vector<std::pair<Real, CVector<Real>>> pairs;
    detail::append_block_spectrum<Real>(x2.matrix(), 0, space.dim(), pairs);
    detail::append_block_spectrum<Real>(x2.matrix(), 1, space.dim(), pairs);
    basis_.resize(space.dim(), space.dim());
    x2_eigen_.resize(space.dim());
    for (int j = 0; j < space.dim(); ++j) {
      x2_eigen_(j) = pairs[j].first;
      basis_.col(j) = pairs[j].second;
    }
    for (std::size_t k = 1; k < ops.size(); ++k) {
      const Matrix l = basis_.adjoint() * ops[k].matrix() * basis_;
      channels_.push_back(l);
      channels_ldl_.push_back(l.adjoint() * l);
      channels_sparse_.push_back(to_sparse<Real>(ops[k].matrix()));
      channels_ldl_sparse_.push_back(to_sparse<Real>(ops[k].matrix().adjoint() * ops[k].matrix()));
    }
  }

  const SmeConfig& config() const { return cfg_; }
  const FockSpace<Real>& space() const { return space_; }

  Real expect_x2(const Matrix& rho) const { return (x2_sparse_ * rho).trace().real(); }

  /// Advances rho (Fock basis) in place by one control interval under the
  /// Fock-basis Hamiltonian h.
  StepRecord<Real> advance(Matrix& rho, const Matrix& h, Rng& rng, bool noiseless = false) const {
    const Real x2_start = expect_x2(rho);
    const Real dw_sum = cfg_.scheme == SmeScheme::Split ? advance_split(rho, h, rng, noiseless)
                                                          : advance_euler(rho, h, rng, noiseless);
    if (!rho.allFinite()) throw IntegratorAbort("sme: non-finite density matrix");
    if (cfg_.check_positivity) probe_positivity(rho);
    const auto& m = cfg_.measurement;
    StepRecord<Real> rec;
    rec.expect_x2 = x2_start;
    rec.dW_sum = dw_sum;
    rec.current = Real(m.gain) * (x2_start + dw_sum / (std::sqrt(Real(4) * Real(m.eta) * Real(m.gamma_meas)) *
                                                      Real(cfg_.dt_control)));
    rec.rho_after = DensityMatrix<Real>::unchecked(rho);
    return rec;
  }

  StepRecord<Real> step(const DensityMatrix<Real>& rho, const Operator<Real>& h_total, Rng& rng,
                        bool noiseless = false) const {
    if (!h_total.hermitian()) throw InvalidArgument("sme_step: Hamiltonian must be hermitian");
    detail::require_same_dim(h_total.dim(), rho.dim(), "sme_step");
    detail::require_same_dim(space_.dim(), rho.dim(), "sme_step");
    Matrix work = rho.matrix();
    return advance(work, h_total.matrix(), rng, noiseless);
  }

 private:
  Real advance_split(Matrix& rho_fock, const Matrix& h, Rng& rng, bool noiseless) const {
    const auto& m = cfg_.measurement;
    const int n = space_.dim();
    const Real dt = Real(cfg_.dt_sub());
    const Real gamma = Real(m.gamma_meas);
    const Real eta = Real(m.eta);
    const Real root = std::sqrt(eta * gamma);
    std::normal_distribution<Real> normal(Real(0), std::sqrt(dt));
    std::uniform_real_distribution<Real> uniform(Real(0), Real(1));

    const Matrix h_eig = basis_.adjoint() * h * basis_;
    Eigen::SelfAdjointEigenSolver<Matrix> es(Real(0.5) * (h_eig + h_eig.adjoint()));
    if (es.info() != Eigen::Success) throw IntegratorAbort("sme: Hamiltonian diagonalization failed");
    CVector<Real> phases(n);
    for (int j = 0; j < n; ++j) phases(j) = std::polar(Real(1), -es.eigenvalues()(j) * dt);
    const Matrix u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();

    // Coherence decay of the unobserved fraction (or the whole measurement
    // when noiseless), identical for every substep.
    const Real unobserved = noiseless ? gamma : (Real(1) - eta) * gamma;
    RMatrix<Real> decay(n, n);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Real d = x2_eigen_(j) - x2_eigen_(k);
        decay(j, k) = std::exp(-Real(0.5) * unobserved * d * d * dt);
      }

    Matrix rho = basis_.adjoint() * rho_fock * basis_;
    Matrix tmp(n, n);
    RVector<Real> log_m(n);
    Real dw_sum = 0;
    for (int s = 0; s < cfg_.n_substeps; ++s) {
      tmp.noalias() = u * rho;
      rho.noalias() = tmp * u.adjoint();

      rho.array() *= decay.array().template cast<std::complex<Real>>();
      if (!noiseless) {
        // dy is drawn from its exact law, a Gaussian mixture over the x^2
        // spectrum, so the average over records is exactly the D[x^2] decay.
        const Real mean = (rho.diagonal().real().array() * x2_eigen_.array()).sum();
        Real pick = uniform(rng) * rho.diagonal().real().cwiseMax(Real(0)).sum();
        int j_pick = n - 1;
        for (int j = 0; j < n; ++j) {
          pick -= std::max(Real(0), rho(j, j).real());
          if (pick < Real(0)) {
            j_pick = j;
            break;
          }
        }
        const Real dy = normal(rng) + Real(2) * root * x2_eigen_(j_pick) * dt;
        dw_sum += dy - Real(2) * root * mean * dt;
        for (int j = 0; j < n; ++j) {
          const Real l = x2_eigen_(j);
          log_m(j) = root * l * dy - eta * gamma * l * l * dt;
        }
        log_m.array() -= log_m.maxCoeff();
        const RVector<Real> kraus = log_m.array().exp().matrix();
        rho = (kraus.asDiagonal() * rho * kraus.asDiagonal()).eval();
      }

      if (!channels_.empty()) {
        Matrix k = Matrix::Identity(n, n);
        for (const auto& ldl : channels_ldl_) k -= Real(0.5) * dt * ldl;
        Matrix next = k * rho * k.adjoint();
        for (const auto& l : channels_) next.noalias() += dt * (l * rho * l.adjoint());
        rho = std::move(next);
      }
      tidy(rho);
    }
    rho_fock.noalias() = basis_ * rho * basis_.adjoint();
    tidy(rho_fock);
    return dw_sum;
  }

  Real advance_euler(Matrix& rho, const Matrix& h_dense, Rng& rng, bool noiseless) const {
    const Sparse h = to_sparse<Real>(h_dense);
    const Real dt = Real(cfg_.dt_sub());
    const Real sqrt_eta = std::sqrt(Real(cfg_.measurement.eta));
    const std::complex<Real> i(0, 1);
    std::normal_distribution<Real> normal(Real(0), std::sqrt(dt));
    Real dw_sum = 0;
    Matrix hr, cr, tmp, adj, drift;
    for (int s = 0; s < cfg_.n_substeps; ++s) {
      const Real dw = noiseless ? Real(0) : normal(rng);
      dw_sum += dw;
      hr.noalias() = h * rho;
      cr.noalias() = c_sparse_ * rho;
      drift.noalias() = -i * hr;
      drift.noalias() += i * hr.adjoint();
      // D[c] rho = c rho c - (c^2 rho + rho c^2)/2, using (c rho)^dag = rho c.
      adj = cr.adjoint();
      drift.noalias() += c_sparse_ * adj;
      tmp.noalias() = c_sparse_ * cr;
      drift.noalias() -= Real(0.5) * tmp;
      drift.noalias() -= Real(0.5) * tmp.adjoint();
      for (std::size_t k = 0; k < channels_sparse_.size(); ++k) {
        tmp.noalias() = channels_sparse_[k] * rho;
        adj = tmp.adjoint();
        drift.noalias() += channels_sparse_[k] * adj;
        tmp.noalias() = channels_ldl_sparse_[k] * rho;
        drift.noalias() -= Real(0.5) * tmp;
        drift.noalias() -= Real(0.5) * tmp.adjoint();
      }
      drift *= dt;
      if (dw != Real(0)) {
        // sqrt(eta) H[c] rho dW, evaluated at the start of the substep (Ito).
        const Real k = sqrt_eta * dw;
        const Real two_c = Real(2) * cr.trace().real();
        drift.noalias() += k * cr;
        drift.noalias() += k * cr.adjoint();
        drift.noalias() -= (k * two_c) * rho;
      }
      rho += drift;
      tidy(rho);
      if (!rho.allFinite()) throw IntegratorAbort("sme: non-finite density matrix");
    }
    return dw_sum;
  }

  void tidy(Matrix& rho) const {
    rho = Real(0.5) * (rho + rho.adjoint()).eval();
    if (cfg_.renormalize) rho /= rho.trace().real();
  }

  static void probe_positivity(const Matrix& rho) {
    // rho + 1e-4 I is positive definite iff min eig(rho) > -1e-4.
    Matrix shifted = rho;
    shifted.diagonal().array() += Real(1e-4);
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) {
      throw IntegratorAbort("sme: positivity violated beyond -1e-4");
    }
  }

  FockSpace<Real> space_;
  SmeConfig cfg_;
  Sparse x2_sparse_, c_sparse_;
  Matrix basis_;
  RVector<Real> x2_eigen_;
  std::vector<Matrix> channels_, channels_ldl_;
  std::vector<Sparse> channels_sparse_, channels_ldl_sparse_;
};

/// One control interval of the conditional SME.
template <typename Real>
StepRecord<Real> sme_step(const FockSpace<Real>& space, const DensityMatrix<Real>& rho,
                          const Operator<Real>& h_total, const SmeConfig& cfg, Rng& rng) {
  return SmeStepper<Real>(space, cfg).step(rho, h_total, rng);
}

// ---------------------------------------------------------------------------
// Closed-loop trajectories.

/// What a feedback law sees before choosing the amplitude of interval `step`:
/// the record of the previous interval (absent at step 0) and the state.
template <typename Real>
struct FeedbackContext {
  int step = 0;
  const StepRecord<Real>* last = nullptr;
  const CMatrix<Real>* rho = nullptr;
};

template <typename Real>
using AmplitudeFn = std::function<Real(const FeedbackContext<Real>&)>;

template <typename Real>
struct TrajectoryRecord {
  std::vector<Real> currents;
  std::vector<Real> actions;
  std::vector<Real> fidelities;  // after each interval, against the ground state
  std::vector<Real> expect_x2;   // at the start of each interval
  DensityMatrix<Real> final_rho = DensityMatrix<Real>::maximally_mixed(2);
  Real dt_control = 0;

  Real mean_fidelity() const {
    Real s = 0;
    for (Real f : fidelities) s += f;
    return fidelities.empty() ? Real(0) : s / Real(fidelities.size());
  }
};

/// Runs `horizon_steps` control intervals with H_total = H_DW + amplitude F,
/// where F is the feedback generator (xp + px unless overridden).
template <typename Real>
TrajectoryRecord<Real> evolve_trajectory(const DensityMatrix<Real>& rho0, const AmplitudeFn<Real>& controller,
                                         const FockSpace<Real>& space, const DoubleWellParams<Real>& dw,
                                         const SmeConfig& cfg, int horizon_steps, Rng& rng,
                                         FeedbackKind feedback = FeedbackKind::XpSym) {
  if (horizon_steps < 1) throw InvalidArgument("evolve_trajectory: horizon_steps must be >= 1");
  detail::require_same_dim(space.dim(), rho0.dim(), "evolve_trajectory");
  const SmeStepper<Real> stepper(space, cfg);
  const auto h_dw = double_well_hamiltonian(space, dw);
  const auto target = ground_state(h_dw).state;
  const CMatrix<Real> f = feedback_operator(feedback, space).matrix();

  TrajectoryRecord<Real> out;
  out.dt_control = Real(cfg.dt_control);
  CMatrix<Real> rho = rho0.matrix();
  std::optional<StepRecord<Real>> last;
  for (int k = 0; k < horizon_steps; ++k) {
    FeedbackContext<Real> ctx{k, last ? &*last : nullptr, &rho};
    const Real amp = controller(ctx);
    try {
      last = stepper.advance(rho, h_dw.matrix() + amp * f, rng);
    } catch (const IntegratorAbort& e) {
      throw IntegratorAbort(e.what(), k);
    }
    out.currents.push_back(last->current);
    out.actions.push_back(amp);
    out.expect_x2.push_back(last->expect_x2);
    out.fidelities.push_back(fidelity(last->rho_after, target));
  }
  out.final_rho = DensityMatrix<Real>::unchecked(rho);
  return out;
}

// ---------------------------------------------------------------------------
// Discrete weak measurement.

template <typename Real>
struct WeakMeasurement {
  Real z;
  DensityMatrix<Real> rho_post;
};

/// Samples z from P(z) = tr[Y(z)^dag Y(z) rho] with
/// Y(z) = (2 pi sigma)^(-1/4) exp(-(z - g A)^2 / (4 sigma)) and returns the
/// conditioned state Y rho Y^dag / P(z).
template <typename Real>
WeakMeasurement<Real> weak_measure(const DensityMatrix<Real>& rho, const Operator<Real>& a_meas, Real g,
                                   Real sigma, Rng& rng) {
  if (!(sigma > Real(0))) throw InvalidArgument("weak_measure: sigma must be > 0");
  if (!a_meas.hermitian()) throw InvalidArgument("weak_measure: operator must be hermitian");
  detail::require_same_dim(a_meas.dim(), rho.dim(), "weak_measure");
  Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(a_meas.matrix());
  const auto& v = es.eigenvectors();
  const auto& lambda = es.eigenvalues();
  const CMatrix<Real> rho_eig = v.adjoint() * rho.matrix() * v;

  // P(z) is a Gaussian mixture over the spectrum of A with weights <v_k|rho|v_k>.
  std::vector<double> weights(lambda.size());
  for (int k = 0; k < lambda.size(); ++k) weights[k] = std::max(Real(0), rho_eig(k, k).real());
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  std::normal_distribution<Real> normal(Real(0), std::sqrt(sigma));
  const int k = pick(rng);
  const Real z = g * lambda(k) + normal(rng);

  // Y(z) is diagonal in A's eigenbasis; the (2 pi sigma)^(-1/4) prefactor and
  // the exponent offset cancel in the normalization.
  RVector<Real> logs(lambda.size());
  for (int j = 0; j < lambda.size(); ++j) logs(j) = -(z - g * lambda(j)) * (z - g * lambda(j)) / (Real(4) * sigma);
  const Real shift = logs.maxCoeff();
  CVector<Real> y(lambda.size());
  for (int j = 0; j < lambda.size(); ++j) y(j) = std::exp(logs(j) - shift);
  CMatrix<Real> post_eig = y.asDiagonal() * rho_eig * y.conjugate().asDiagonal();
  CMatrix<Real> post = v * post_eig * v.adjoint();
  post = Real(0.5) * (post + post.adjoint()).eval();
  post /= post.trace().real();
  return {z, DensityMatrix<Real>::unchecked(std::move(post))};
}

}  // namespace dwq
