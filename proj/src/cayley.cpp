#include "mourre/cayley.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace mourre {

namespace {

constexpr cplx kI{0.0, 1.0};

void require_unit(cplx theta) {
  if (std::abs(std::abs(theta) - 1.0) > 1e-12)
    throw PreconditionError("base point must lie on the unit circle");
}

DenseOperator identity_like(const DenseOperator& U) {
  return DenseOperator::Identity(U.rows(), U.cols());
}

}  // namespace

CayleyOperator build_cayley(const DenseOperator& U, cplx theta, const CayleyOptions& opts) {
  return build_cayley(U, diagonalize_unitary(U), theta, opts);
}

CayleyOperator build_cayley(const DenseOperator& U, const UnitaryEigen& eig, cplx theta,
                            const CayleyOptions& opts) {
  require_unit(theta);
  if (U.rows() != U.cols() || eig.values.size() != U.rows())
    throw PreconditionError("eigen-decomposition does not match the unitary");
  CayleyOperator c;
  c.base_point = theta;
  c.source = U;
  const cplx tb = std::conj(theta);
  const DenseOperator I = identity_like(U);
  c.resolvent_at_i = 0.5 * kI * (I - tb * U);

  const double arg_theta = std::arg(theta);
  double dmin = std::numeric_limits<double>::infinity();
  double fmin = std::numeric_limits<double>::infinity(), fmax = 0.0;
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    dmin = std::min(dmin, angular_distance(eig.angles(k), arg_theta));
    double f = std::abs(1.0 - tb * eig.values(k));
    fmin = std::min(fmin, f);
    fmax = std::max(fmax, f);
  }
  c.base_distance = dmin;
  c.condition = fmin > 0.0 ? fmax / fmin : std::numeric_limits<double>::infinity();
  if (!(dmin > opts.guard_band)) {
    std::ostringstream os;
    os << "base point within " << dmin << " of the spectrum; dense H withheld";
    c.warnings.push_back(os.str());
    return c;
  }
  Eigen::PartialPivLU<DenseOperator> lu(I - tb * U);
  DenseOperator H = -kI * lu.solve(DenseOperator(I + tb * U));
  c.asymmetry = operator_norm(DenseOperator(H - H.adjoint()));
  c.dense_H = 0.5 * (H + H.adjoint());
  return c;
}

cplx largest_gap_base_point(const Eigen::VectorXd& angles) {
  if (angles.size() == 0) return {1.0, 0.0};
  std::vector<double> a(angles.data(), angles.data() + angles.size());
  for (double& x : a) x = wrap_angle(x);
  std::sort(a.begin(), a.end());
  double best_gap = a.front() + kTwoPi - a.back();
  double best_mid = a.back() + 0.5 * best_gap;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    double gap = a[i + 1] - a[i];
    if (gap > best_gap) {
      best_gap = gap;
      best_mid = a[i] + 0.5 * gap;
    }
  }
  return std::polar(1.0, best_mid);
}

double spectral_map(cplx theta_prime, cplx theta) {
  require_unit(theta);
  require_unit(theta_prime);
  const double phi = std::arg(std::conj(theta) * theta_prime);
  if (phi == 0.0) throw PreconditionError("theta' = theta maps to infinity");
  return std::cos(0.5 * phi) / std::sin(0.5 * phi);
}

cplx inverse_spectral_map(double lambda, cplx theta) {
  require_unit(theta);
  if (!std::isfinite(lambda)) throw PreconditionError("lambda must be a finite real number");
  return theta * (lambda + kI) / (lambda - kI);
}

// ---------------------------------------------------------------------------

Resolvent cayley_resolvent(const DenseOperator& U, cplx theta, cplx z) {
  require_unit(theta);
  if (z.imag() == 0.0) throw PreconditionError("resolvent needs Im z != 0");
  const cplx tb = std::conj(theta);
  const DenseOperator I = identity_like(U);
  Eigen::PartialPivLU<DenseOperator> lu(DenseOperator((kI + z) * I - tb * (z - kI) * U));
  Resolvent r;
  const double rc = lu.rcond();
  r.condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!(r.condition <= 1e14)) {
    std::ostringstream os;
    os << "resolvent solve is ill-conditioned (condition estimate " << r.condition << ")";
    throw ConvergenceError(os.str(), r.condition);
  }
  r.R = -(I - tb * U) * lu.solve(I);
  return r;
}

Resolvent cayley_resolvent(const CayleyOperator& H, cplx z) {
  Resolvent r = cayley_resolvent(H.source, H.base_point, z);
  if (H.dense_H) {
    const DenseOperator I = identity_like(H.source);
    r.residual = operator_norm(DenseOperator((*H.dense_H - z * I) * r.R - I));
  }
  return r;
}

// ---------------------------------------------------------------------------

json to_json(const IdentityReport& r) {
  return json{{"model", r.model},
              {"theta", {r.theta.real(), r.theta.imag()}},
              {"identity", r.identity},
              {"residual", r.residual},
              {"tolerance", r.tolerance},
              {"condition", r.condition},
              {"pass", r.pass}};
}

IdentityReport verify_identity_a(const DenseOperator& U, const DenseOperator& A, cplx theta,
                                 std::string model) {
  require_unit(theta);
  const cplx tb = std::conj(theta);
  const DenseOperator I = identity_like(U);
  const DenseOperator Ri = 0.5 * kI * (I - tb * U);
  IdentityReport r;
  r.model = std::move(model);
  r.theta = theta;
  r.identity = "a";
  r.residual =
      operator_norm(DenseOperator(commutator(A, Ri) + 0.5 * kI * tb * commutator(A, U)));
  r.tolerance = 1e-12 * static_cast<double>(U.rows());
  r.pass = r.residual <= r.tolerance;
  return r;
}

IdentityReport verify_identity_b(const CayleyOperator& H, const DenseOperator& A,
                                 std::string model) {
  if (!H.dense_H) throw PreconditionError("identity (b) needs dense H (base point in spectrum)");
  const DenseOperator& U = H.source;
  const cplx tb = std::conj(H.base_point);
  const DenseOperator I = identity_like(U);
  Eigen::PartialPivLU<DenseOperator> lu(I - tb * U);
  const DenseOperator R = lu.solve(I);
  const DenseOperator lhs = kI * commutator(*H.dense_H, A);
  const DenseOperator rhs = 2.0 * R.adjoint() * U.adjoint() * commutator(A, U) * R;
  IdentityReport r;
  r.model = std::move(model);
  r.theta = H.base_point;
  r.identity = "b";
  r.residual = operator_norm(DenseOperator(lhs - rhs));
  r.condition = H.condition;
  r.tolerance = 1e-8 * H.condition;
  r.pass = r.residual <= r.tolerance;
  return r;
}

IdentityReport verify_identity_b(const DenseOperator& U, const DenseOperator& A, cplx theta,
                                 std::string model) {
  return verify_identity_b(build_cayley(U, theta), A, std::move(model));
}

// ---------------------------------------------------------------------------

namespace {

TransferReport transfer_on(const CayleyOperator& H, const DenseOperator& X, Interval I,
                           double a) {
  if (!H.dense_H) throw PreconditionError("Mourre transfer needs dense H");
  Eigen::SelfAdjointEigenSolver<DenseOperator> es(*H.dense_H);
  if (es.info() != Eigen::Success)
    throw ConvergenceError("eigen-decomposition of H failed", 0.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    if (I.contains(es.eigenvalues()(k))) keep.push_back(k);
  TransferReport t;
  t.bound = 0.5 * a;
  t.rank = static_cast<int>(keep.size());
  if (keep.empty()) {
    t.vacuous = true;
    t.pass = true;
    return t;
  }
  DenseOperator B(X.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    B.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]);
  t.lhs_min_eig = hermitian_min_eigenvalue(DenseOperator(B.adjoint() * X * B));
  t.pass = t.lhs_min_eig >= t.bound - 1e-8;
  return t;
}

}  // namespace

TransferReport mourre_transfer(const CayleyOperator& H, const DenseOperator& A, Interval I,
                               double a) {
  if (!H.dense_H) throw PreconditionError("Mourre transfer needs dense H");
  return transfer_on(H, DenseOperator(kI * commutator(*H.dense_H, A)), I, a);
}

TransferReport mourre_transfer_form(const CayleyOperator& H, const DenseOperator& form,
                                    Interval I, double a) {
  const DenseOperator& U = H.source;
  const DenseOperator Id = identity_like(U);
  Eigen::PartialPivLU<DenseOperator> lu(Id - std::conj(H.base_point) * U);
  const DenseOperator R = lu.solve(Id);
  return transfer_on(H, DenseOperator(2.0 * R.adjoint() * form * R), I, a);
}

Interval arc_image(const SpectralWindow& window, cplx theta) {
  require_unit(theta);
  const double inf = std::numeric_limits<double>::infinity();
  const double at = std::arg(theta);
  if (window.width() >= kTwoPi) {
    if (angular_distance(window.lo, at) < 1e-12) return {-inf, inf};
    throw PreconditionError("window contains the base point");
  }
  double rel_lo = wrap_angle(window.lo - at);
  if (rel_lo > kTwoPi - 1e-15) rel_lo = 0.0;
  const double rel_hi = rel_lo + window.width();
  if (rel_hi > kTwoPi + 1e-12) throw PreconditionError("window contains the base point");
  auto cot_half = [&](double phi) {
    if (phi <= 0.0) return inf;
    if (phi >= kTwoPi) return -inf;
    return std::cos(0.5 * phi) / std::sin(0.5 * phi);
  };
  return {cot_half(rel_hi), cot_half(rel_lo)};
}

double projection_transport_residual(const CayleyOperator& H, const SpectralWindow& window) {
  if (!H.dense_H) throw PreconditionError("projection transport needs dense H");
  const Interval J = arc_image(window, H.base_point);
  DenseOperator EU = spectral_projection(diagonalize_unitary(H.source), window, 0.0).E;
  Eigen::SelfAdjointEigenSolver<DenseOperator> es(*H.dense_H);
  const Eigen::Index n = H.source.rows();
  DenseOperator EH = DenseOperator::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double l = es.eigenvalues()(k);
    if (l > J.lo && l < J.hi) EH += es.eigenvectors().col(k) * es.eigenvectors().col(k).adjoint();
  }
  return operator_norm(DenseOperator(EU - EH));
}

}  // namespace mourre
