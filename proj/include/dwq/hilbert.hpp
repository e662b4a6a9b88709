#pragma once

// Operators and states of a particle in a double-well potential, represented
// in a truncated Fock (number-state) basis.
//
// Position and momentum are dimensionless with [x, p] = i kbar. Every matrix
// type is templated on the real scalar; `double` aliases sit at the bottom.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "dwq/errors.hpp"

namespace dwq {

template <typename Real>
using CMatrix = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using CVector = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;
template <typename Real>
using RMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using RVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

namespace detail {

inline void require_same_dim(long a, long b, const char* where) {
  if (a != b) {
    throw DimensionMismatch(std::string(where) + ": dimension " + std::to_string(a) +
                            " vs " + std::to_string(b));
  }
}

template <typename Derived>
auto max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? typename Derived::RealScalar(0) : m.cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Truncated number-state basis {|0>, ..., |dim-1>} with Planck constant kbar.
template <typename Real>
class FockSpace {
 public:
  explicit FockSpace(int dim, Real kbar = Real(1)) : dim_(dim), kbar_(kbar) {
    if (dim < 2) throw InvalidArgument("FockSpace: dim must be >= 2");
    if (!(kbar > Real(0))) throw InvalidArgument("FockSpace: kbar must be > 0");
  }
  int dim() const { return dim_; }
  Real kbar() const { return kbar_; }

 private:
  int dim_;
  Real kbar_;
};

/// Dense operator on a truncated Fock space. The hermitian flag is checked on
/// construction against a relative tolerance of 1e-12.
template <typename Real>
class Operator {
 public:
  using Scalar = std::complex<Real>;
  using Matrix = CMatrix<Real>;

  Operator() = default;
  explicit Operator(Matrix m, bool hermitian = false)
      : m_(std::move(m)), hermitian_(hermitian) {
    if (m_.rows() != m_.cols()) throw InvalidArgument("Operator: matrix must be square");
    if (hermitian_) {
      const Real scale = std::max(Real(1), detail::max_abs(m_));
      if (detail::max_abs(m_ - m_.adjoint()) > Real(1e-12) * scale) {
        throw InvalidArgument("Operator: flagged hermitian but is not");
      }
    }
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  bool hermitian() const { return hermitian_; }
  Operator adjoint() const { return Operator(m_.adjoint(), hermitian_); }

  friend Operator operator+(const Operator& a, const Operator& b) {
    detail::require_same_dim(a.dim(), b.dim(), "Operator +");
    return Operator(a.m_ + b.m_, a.hermitian_ && b.hermitian_);
  }
  friend Operator operator-(const Operator& a, const Operator& b) {
    detail::require_same_dim(a.dim(), b.dim(), "Operator -");
    return Operator(a.m_ - b.m_, a.hermitian_ && b.hermitian_);
  }
  friend Operator operator*(const Operator& a, const Operator& b) {
    detail::require_same_dim(a.dim(), b.dim(), "Operator *");
    return Operator(a.m_ * b.m_);
  }
  friend Operator operator*(Real s, const Operator& a) { return Operator(s * a.m_, a.hermitian_); }
  friend Operator operator*(Scalar s, const Operator& a) { return Operator(s * a.m_); }

 private:
  Matrix m_;
  bool hermitian_ = false;
};

template <typename Real>
Operator<Real> identity(int dim) {
  return Operator<Real>(CMatrix<Real>::Identity(dim, dim), true);
}

template <typename Real>
Operator<Real> commutator(const Operator<Real>& a, const Operator<Real>& b) {
  detail::require_same_dim(a.dim(), b.dim(), "commutator");
  return Operator<Real>(a.matrix() * b.matrix() - b.matrix() * a.matrix());
}

/// a * a, keeping the hermitian flag of a.
template <typename Real>
Operator<Real> square(const Operator<Real>& a) {
  CMatrix<Real> m = a.matrix() * a.matrix();
  if (a.hermitian()) m = Real(0.5) * (m + m.adjoint()).eval();
  return Operator<Real>(std::move(m), a.hermitian());
}

/// Normalized state vector.
template <typename Real>
class PureState {
 public:
  using Vector = CVector<Real>;

  explicit PureState(Vector amplitudes) : v_(std::move(amplitudes)) {
    const Real n = v_.norm();
    if (!(n > Real(0)) || !std::isfinite(static_cast<double>(n))) {
      throw InvalidArgument("PureState: zero or non-finite norm");
    }
    v_ /= n;
  }
  int dim() const { return static_cast<int>(v_.size()); }
  const Vector& amplitudes() const { return v_; }

 private:
  Vector v_;
};

/// Unit-trace, hermitian, positive semidefinite matrix.
template <typename Real>
class DensityMatrix {
 public:
  using Matrix = CMatrix<Real>;

  /// Validates trace (1e-9), hermiticity (1e-9) and positivity (min eigenvalue
  /// >= -1e-7).
  explicit DensityMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw InvalidArgument("DensityMatrix: matrix must be square");
    if (std::abs(m_.trace() - std::complex<Real>(1)) > Real(1e-9)) {
      throw InvalidArgument("DensityMatrix: trace differs from 1");
    }
    if (detail::max_abs(m_ - m_.adjoint()) > Real(1e-9)) {
      throw InvalidArgument("DensityMatrix: not hermitian");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < Real(-1e-7)) {
      throw InvalidArgument("DensityMatrix: not positive semidefinite");
    }
  }

  /// Empty (dimension 0) placeholder.
  DensityMatrix() = default;

  /// Skips validation. Used by integrators that maintain the invariants
  /// themselves and report violations through IntegratorAbort.
  static DensityMatrix unchecked(Matrix m) {
    DensityMatrix d;
    d.m_ = std::move(m);
    return d;
  }

  static DensityMatrix from_pure(const PureState<Real>& psi) {
    const auto& v = psi.amplitudes();
    return unchecked(v * v.adjoint());
  }

  static DensityMatrix maximally_mixed(int dim) {
    return unchecked(Matrix::Identity(dim, dim) / Real(dim));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  Real purity() const { return (m_ * m_).trace().real(); }

 private:
  Matrix m_;
};

template <typename Real>
struct DoubleWellParams {
  Real a_offset = Real(0);
  Real b = Real(3);
  Real h = Real(5);
};

enum class FeedbackKind { XpSym, XSquared, P2MinusX2 };
enum class ParitySector { Even, Odd };

inline std::string to_string(FeedbackKind k) {
  switch (k) {
    case FeedbackKind::XpSym: return "xp+px";
    case FeedbackKind::XSquared: return "x^2";
    case FeedbackKind::P2MinusX2: return "p^2-x^2";
  }
  return "?";
}

/// Annihilation a with a[n-1, n] = sqrt(n), and its adjoint.
template <typename Real>
std::pair<Operator<Real>, Operator<Real>> ladder_operators(const FockSpace<Real>& space) {
  const int n = space.dim();
  CMatrix<Real> a = CMatrix<Real>::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(Real(k));
  CMatrix<Real> ad = a.adjoint();
  return {Operator<Real>(std::move(a)), Operator<Real>(std::move(ad))};
}

/// x = sqrt(kbar/2)(a + a^dag), p = i sqrt(kbar/2)(a^dag - a).
template <typename Real>
std::pair<Operator<Real>, Operator<Real>> quadratures(const FockSpace<Real>& space) {
  const auto [a, ad] = ladder_operators(space);
  const Real s = std::sqrt(space.kbar() / Real(2));
  const std::complex<Real> i(0, 1);
  return {Operator<Real>(s * (a.matrix() + ad.matrix()), true),
          Operator<Real>(i * s * (ad.matrix() - a.matrix()), true)};
}

template <typename Real>
Operator<Real> parity_operator(const FockSpace<Real>& space) {
  CVector<Real> d(space.dim());
  for (int n = 0; n < space.dim(); ++n) d(n) = (n % 2 == 0) ? Real(1) : Real(-1);
  return Operator<Real>(d.asDiagonal().toDenseMatrix(), true);
}

/// H = p^2/2 + (h/b^4) ((x - a)^2 - b^2)^2.
template <typename Real>
Operator<Real> double_well_hamiltonian(const FockSpace<Real>& space,
                                       const DoubleWellParams<Real>& params) {
  if (params.b == Real(0)) throw InvalidArgument("double_well_hamiltonian: b must be nonzero");
  const auto [x, p] = quadratures(space);
  const int n = space.dim();
  const CMatrix<Real> id = CMatrix<Real>::Identity(n, n);
  const CMatrix<Real> shifted = x.matrix() - params.a_offset * id;
  const CMatrix<Real> well = shifted * shifted - params.b * params.b * id;
  const Real pref = params.h / std::pow(params.b, 4);
  CMatrix<Real> h = Real(0.5) * (p.matrix() * p.matrix()) + pref * (well * well);
  h = Real(0.5) * (h + h.adjoint()).eval();
  return Operator<Real>(std::move(h), true);
}

/// Feedback generators: xp + px, x^2, or p^2 - x^2.
template <typename Real>
Operator<Real> feedback_operator(FeedbackKind kind, const FockSpace<Real>& space) {
  const auto [x, p] = quadratures(space);
  const auto& X = x.matrix();
  const auto& P = p.matrix();
  CMatrix<Real> f;
  switch (kind) {
    case FeedbackKind::XpSym: f = X * P + P * X; break;
    case FeedbackKind::XSquared: f = X * X; break;
    case FeedbackKind::P2MinusX2: f = P * P - X * X; break;
  }
  f = Real(0.5) * (f + f.adjoint()).eval();
  return Operator<Real>(std::move(f), true);
}

template <typename Real>
bool commutes_with_parity(const Operator<Real>& op, Real rel_tol = Real(1e-12)) {
  // [op, P] vanishes iff op has no entries between even and odd Fock states.
  const auto& m = op.matrix();
  const Real scale = std::max(Real(1), detail::max_abs(m));
  for (int c = 0; c < m.cols(); ++c) {
    for (int r = (c + 1) % 2; r < m.rows(); r += 2) {
      if (std::abs(m(r, c)) > rel_tol * scale) return false;
    }
  }
  return true;
}

template <typename Real>
Real expectation(const Operator<Real>& op, const DensityMatrix<Real>& rho) {
  detail::require_same_dim(op.dim(), rho.dim(), "expectation");
  return (op.matrix() * rho.matrix()).trace().real();
}

template <typename Real>
Real parity_expectation(const PureState<Real>& psi) {
  Real s = 0;
  const auto& v = psi.amplitudes();
  for (int n = 0; n < v.size(); ++n) s += (n % 2 == 0 ? Real(1) : Real(-1)) * std::norm(v(n));
  return s;
}

template <typename Real>
struct Eigenpair {
  Real energy;
  PureState<Real> state;
};

namespace detail {

// Fixes the global phase so that the largest-magnitude component is real and
// positive; keeps eigenvectors reproducible across solver versions.
template <typename Real>
CVector<Real> canonical_phase(CVector<Real> v) {
  Eigen::Index k = 0;
  v.cwiseAbs().maxCoeff(&k);
  if (std::abs(v(k)) > Real(0)) v *= std::conj(v(k)) / std::abs(v(k));
  return v;
}

template <typename Real>
void append_block_spectrum(const CMatrix<Real>& h, int offset, int n_total,
                           std::vector<std::pair<Real, CVector<Real>>>& out) {
  std::vector<int> idx;
  for (int k = offset; k < n_total; k += 2) idx.push_back(k);
  const int m = static_cast<int>(idx.size());
  if (m == 0) return;
  CMatrix<Real> block(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) block(r, c) = h(idx[r], idx[c]);
  Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(block);
  if (es.info() != Eigen::Success) throw Error("spectrum: eigensolver did not converge");
  for (int j = 0; j < m; ++j) {
    CVector<Real> v = CVector<Real>::Zero(n_total);
    for (int r = 0; r < m; ++r) v(idx[r]) = es.eigenvectors()(r, j);
    out.emplace_back(es.eigenvalues()(j), canonical_phase<Real>(std::move(v)));
  }
}

}  // namespace detail

/// Lowest `n_lowest` eigenpairs in ascending energy. Parity-symmetric
/// Hamiltonians are diagonalized per parity block, so every returned state
/// has definite parity even inside near-degenerate tunnelling doublets.
template <typename Real>
std::vector<Eigenpair<Real>> spectrum(const Operator<Real>& h, int n_lowest) {
  if (!h.hermitian()) throw InvalidArgument("spectrum: operator must be hermitian");
  const int n = h.dim();
  n_lowest = std::clamp(n_lowest, 0, n);
  std::vector<std::pair<Real, CVector<Real>>> pairs;
  if (commutes_with_parity(h)) {
    detail::append_block_spectrum<Real>(h.matrix(), 0, n, pairs);
    detail::append_block_spectrum<Real>(h.matrix(), 1, n, pairs);
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  } else {
    Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(h.matrix());
    if (es.info() != Eigen::Success) throw Error("spectrum: eigensolver did not converge");
    for (int j = 0; j < n; ++j) {
      pairs.emplace_back(es.eigenvalues()(j),
                         detail::canonical_phase<Real>(es.eigenvectors().col(j)));
    }
  }
  std::vector<Eigenpair<Real>> out;
  out.reserve(n_lowest);
  for (int j = 0; j < n_lowest; ++j) out.push_back({pairs[j].first, PureState<Real>(pairs[j].second)});
  return out;
}

/// Target state for cooling: the even-parity member of the lowest doublet when
/// the Hamiltonian is parity symmetric, otherwise the lowest eigenvector.
template <typename Real>
Eigenpair<Real> ground_state(const Operator<Real>& h) {
  if (!h.hermitian()) throw InvalidArgument("ground_state: operator must be hermitian");
  if (commutes_with_parity(h)) {
    std::vector<std::pair<Real, CVector<Real>>> even;
    detail::append_block_spectrum<Real>(h.matrix(), 0, h.dim(), even);
    return {even.front().first, PureState<Real>(even.front().second)};
  }
  return spectrum(h, 1).front();
}

template <typename Real>
PureState<Real> parity_project(const PureState<Real>& psi, ParitySector sector) {
  CVector<Real> v = psi.amplitudes();
  const int keep = sector == ParitySector::Even ? 0 : 1;
  for (int n = 0; n < v.size(); ++n)
    if (n % 2 != keep) v(n) = 0;
  if (v.squaredNorm() < Real(1e-12)) throw NoSupport("parity_project: no weight in sector");
  return PureState<Real>(std::move(v));
}

template <typename Real>
DensityMatrix<Real> parity_project(const DensityMatrix<Real>& rho, ParitySector sector) {
  CMatrix<Real> m = rho.matrix();
  const int keep = sector == ParitySector::Even ? 0 : 1;
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r)
      if (r % 2 != keep || c % 2 != keep) m(r, c) = 0;
  const Real w = m.trace().real();
  if (w < Real(1e-12)) throw NoSupport("parity_project: no weight in sector");
  return DensityMatrix<Real>::unchecked(m / w);
}

/// <target| rho |target>.
template <typename Real>
Real fidelity(const DensityMatrix<Real>& rho, const PureState<Real>& target) {
  detail::require_same_dim(rho.dim(), target.dim(), "fidelity");
  const auto& v = target.amplitudes();
  return v.dot(rho.matrix() * v).real();
}

template <typename Real>
Real trace_distance(const CMatrix<Real>& a, const CMatrix<Real>& b) {
  detail::require_same_dim(a.rows(), b.rows(), "trace_distance");
  CMatrix<Real> d = a - b;
  d = Real(0.5) * (d + d.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(d, Eigen::EigenvaluesOnly);
  return Real(0.5) * es.eigenvalues().cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Named states.

template <typename Real>
PureState<Real> fock_state(const FockSpace<Real>& space, int n) {
  if (n < 0 || n >= space.dim()) throw InvalidArgument("fock_state: level out of range");
  CVector<Real> v = CVector<Real>::Zero(space.dim());
  v(n) = 1;
  return PureState<Real>(std::move(v));
}

/// Coherent state a|beta> = beta|beta>, truncated and renormalized.
template <typename Real>
PureState<Real> coherent_state(const FockSpace<Real>& space, std::complex<Real> beta) {
  CVector<Real> v(space.dim());
  std::complex<Real> c = std::exp(-Real(0.5) * std::norm(beta));
  for (int n = 0; n < space.dim(); ++n) {
    v(n) = c;
    c *= beta / std::sqrt(Real(n + 1));
  }
  return PureState<Real>(std::move(v));
}

/// Normalized |beta> + |-beta>.
template <typename Real>
PureState<Real> even_cat_state(const FockSpace<Real>& space, std::complex<Real> beta) {
  return PureState<Real>(coherent_state(space, beta).amplitudes() +
                         coherent_state(space, -beta).amplitudes());
}

/// Bose-Einstein populations with mean occupation nbar, truncated and renormalized.
template <typename Real>
DensityMatrix<Real> thermal_state(const FockSpace<Real>& space, Real nbar) {
  if (nbar < Real(0)) throw InvalidArgument("thermal_state: nbar must be >= 0");
  RVector<Real> pops(space.dim());
  if (nbar == Real(0)) {
    pops.setZero();
    pops(0) = 1;
  } else {
    const Real q = nbar / (Real(1) + nbar);
    Real w = Real(1) / (Real(1) + nbar);
    for (int n = 0; n < space.dim(); ++n, w *= q) pops(n) = w;
  }
  pops /= pops.sum();
  return DensityMatrix<Real>::unchecked(pops.template cast<std::complex<Real>>().asDiagonal());
}

// ---------------------------------------------------------------------------
// Phase space.

/// Wigner function W(x_i, p_j) of rho, normalized so that the integral over
/// the plane is tr(rho). Uses the Laguerre-series recurrence over matrix
/// elements, stable for the truncations used here (dim <= a few hundred).
template <typename Real>
RMatrix<Real> wigner(const DensityMatrix<Real>& rho, const RVector<Real>& x_grid,
                     const RVector<Real>& p_grid, Real kbar = Real(1)) {
  for (auto* g : {&x_grid, &p_grid})
    for (int k = 1; k < g->size(); ++k)
      if (!((*g)(k) > (*g)(k - 1))) throw InvalidArgument("wigner: grid must be strictly increasing");
  using C = std::complex<Real>;
  const int n = rho.dim();
  const int nx = static_cast<int>(x_grid.size());
  const int np = static_cast<int>(p_grid.size());
  const Real scale = Real(1) / std::sqrt(kbar);
  const auto& r = rho.matrix();

  // alpha = (x + i p) / sqrt(2 kbar) over the grid, stored x-major.
  CMatrix<Real> alpha(nx, np);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < np; ++j)
      alpha(i, j) = C(x_grid(i) * scale, p_grid(j) * scale) / std::sqrt(Real(2));

  const Real inv_pi = Real(1) / std::numbers::pi_v<Real>;
  std::vector<CMatrix<Real>> w_list(n, CMatrix<Real>::Zero(nx, np));
  w_list[0] = ((-Real(2) * alpha.cwiseAbs2()).array().exp() * inv_pi).template cast<C>();
  RMatrix<Real> w = r(0, 0).real() * w_list[0].real();
  for (int k = 1; k < n; ++k) {
    w_list[k] = (Real(2) * alpha.array() * w_list[k - 1].array()).matrix() / std::sqrt(Real(k));
    w += Real(2) * (r(0, k) * w_list[k]).real();
  }
  for (int m = 1; m < n; ++m) {
    CMatrix<Real> temp = w_list[m];
    w_list[m] = (Real(2) * alpha.conjugate().array() * temp.array() -
                 std::sqrt(Real(m)) * w_list[m - 1].array()).matrix() / std::sqrt(Real(m));
    w += (r(m, m) * w_list[m]).real();
    for (int k = m + 1; k < n; ++k) {
      CMatrix<Real> temp2 = (Real(2) * alpha.array() * w_list[k - 1].array() -
                             std::sqrt(Real(m)) * temp.array()).matrix() / std::sqrt(Real(k));
      temp = w_list[k];
      w_list[k] = std::move(temp2);
      w += Real(2) * (r(m, k) * w_list[k]).real();
    }
  }
  return w / kbar;
}

/// Classical feedback function f(x, p) for each generator: 2xp, x^2, p^2 - x^2.
template <typename Real>
Real feedback_function(FeedbackKind kind, Real x, Real p) {
  switch (kind) {
    case FeedbackKind::XpSym: return Real(2) * x * p;
    case FeedbackKind::XSquared: return x * x;
    case FeedbackKind::P2MinusX2: return p * p - x * x;
  }
  return Real(0);
}

/// Hamiltonian flow of amplitude * f: Vx = {x, f} = df/dp, Vp = {p, f} = -df/dx.
/// Rows index x_grid, columns index p_grid.
template <typename Real>
std::pair<RMatrix<Real>, RMatrix<Real>> phase_flow(FeedbackKind kind, const RVector<Real>& x_grid,
                                                   const RVector<Real>& p_grid,
                                                   Real amplitude = Real(1)) {
  const int nx = static_cast<int>(x_grid.size());
  const int np = static_cast<int>(p_grid.size());
  RMatrix<Real> vx(nx, np), vp(nx, np);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < np; ++j) {
      const Real x = x_grid(i), p = p_grid(j);
      Real dfdx = 0, dfdp = 0;
      switch (kind) {
        case FeedbackKind::XpSym: dfdx = 2 * p; dfdp = 2 * x; break;
        case FeedbackKind::XSquared: dfdx = 2 * x; dfdp = 0; break;
        case FeedbackKind::P2MinusX2: dfdx = -2 * x; dfdp = 2 * p; break;
      }
      vx(i, j) = amplitude * dfdp;
      vp(i, j) = -amplitude * dfdx;
    }
  }
  return {std::move(vx), std::move(vp)};
}

/// Classical double-well potential V(x) = (h/b^4)((x - a)^2 - b^2)^2.
template <typename Real>
Real double_well_potential(const DoubleWellParams<Real>& params, Real x) {
  const Real s = (x - params.a_offset) * (x - params.a_offset) - params.b * params.b;
  return params.h / std::pow(params.b, 4) * s * s;
}

using Fock = FockSpace<double>;
using Op = Operator<double>;
using Rho = DensityMatrix<double>;
using Ket = PureState<double>;
using DwParams = DoubleWellParams<double>;
using CMatrixd = CMatrix<double>;
using CVectord = CVector<double>;

}  // namespace dwq
