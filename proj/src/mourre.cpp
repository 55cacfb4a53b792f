#include "mourre/mourre.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace mourre {

MourreCertificate certify_mourre(const UnitaryEigen& eig, const DenseOperator& form,
                                 const SpectralWindow& window, int allowance_rank) {
  if (allowance_rank < 0) throw PreconditionError("allowance rank must be nonnegative");
  if (form.rows() != eig.vectors.rows() || form.cols() != form.rows())
    throw PreconditionError("form does not match the section");
  Projection p = spectral_projection(eig, window, 0.0);
  MourreCertificate c;
  c.window = window;
  c.section_size = static_cast<int>(form.rows());
  c.window_rank = static_cast<int>(p.basis.cols());
  c.compact_allowance.rank = allowance_rank;
  if (c.window_rank <= allowance_rank) {
    c.vacuous = true;
    c.warnings.push_back("spectral subspace of the window has dimension " +
                         std::to_string(c.window_rank) + ", nothing left after the allowance");
    return c;
  }
  DenseOperator X = p.basis.adjoint() * form * p.basis;
  X = 0.5 * (X + X.adjoint());
  Eigen::SelfAdjointEigenSolver<DenseOperator> es(X);
  if (es.info() != Eigen::Success) throw ConvergenceError("compressed form eigensolve failed", 0.0);
  const Eigen::VectorXd& ev = es.eigenvalues();
  c.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  c.a_estimate = ev(allowance_rank);
  c.compact_allowance.norm = allowance_rank > 0 ? c.a_estimate - ev(0) : 0.0;
  c.min_eig_after_allowance = c.a_estimate;
  c.residual = std::max(std::abs(ev(0) - c.a_estimate), std::abs(ev(ev.size() - 1) - c.a_estimate));
  c.pass = c.a_estimate > 0.0;
  return c;
}

MourreCertificate certify_mourre(Realization& r, const SpectralWindow& window, int allowance_rank) {
  MourreCertificate c = certify_mourre(r.spectrum(), r.form, window, allowance_rank);
  c.interior_margin = r.margin;
  return c;
}

json to_json(const MourreCertificate& c, const std::string& model) {
  return json{{"model", model},
              {"window", {c.window.lo, c.window.hi}},
              {"a_estimate", c.a_estimate},
              {"allowance", {{"rank", c.compact_allowance.rank}, {"norm", c.compact_allowance.norm}}},
              {"K", c.section_size},
              {"window_rank", c.window_rank},
              {"residual", c.residual},
              {"vacuous", c.vacuous},
              {"pass", c.pass}};
}

// ---------------------------------------------------------------------------

namespace {

VirialReport virial_common(const DenseOperator& U, const Vec& phi, double tol,
                           const std::function<cplx(const Vec&)>& form_value) {
  if (phi.size() != U.cols()) throw PreconditionError("vector does not match the section");
  const double nrm2 = phi.squaredNorm();
  if (!(nrm2 > 0.0)) throw PreconditionError("virial check needs a nonzero vector");
  VirialReport r;
  r.tolerance = tol;
  const Vec Uphi = U * phi;
  const cplx q = phi.dot(Uphi) / nrm2;
  r.eigenvalue = std::abs(q) > 0.0 ? q / std::abs(q) : cplx(1.0, 0.0);
  r.eigen_residual = (Uphi - q * phi).norm() / std::sqrt(nrm2);
  if (r.eigen_residual > tol / 10.0) {
    std::ostringstream os;
    os << "not an approximate eigenvector: residual " << r.eigen_residual << " exceeds "
       << tol / 10.0;
    throw PreconditionError(os.str());
  }
  r.virial_value = form_value(phi) / nrm2;
  r.pass = std::abs(r.virial_value) <= tol;
  return r;
}

}  // namespace

VirialReport virial_check(const DenseOperator& U, const DenseOperator& A, const Vec& phi,
                          double tol) {
  return virial_common(U, phi, tol, [&](const Vec& v) {
    const Vec Uv = U * v;
    return Uv.dot(A * Uv) - v.dot(A * v);
  });
}

VirialReport virial_check_form(const DenseOperator& U, const DenseOperator& form, const Vec& phi,
                               double tol) {
  return virial_common(U, phi, tol, [&](const Vec& v) { return v.dot(form * v); });
}

// ---------------------------------------------------------------------------

int count_window_eigenvalues(const DenseOperator& U, const SpectralWindow& window) {
  Eigen::VectorXd a = unitary_angles(U);
  int n = 0;
  for (Eigen::Index k = 0; k < a.size(); ++k) n += window.contains_angle(a(k)) ? 1 : 0;
  return n;
}

WindowCount count_window_eigenvalues(Realization& r, const SpectralWindow& window,
                                     const LatticeOperator* lattice, double weyl_tol) {
  const UnitaryEigen& eig = r.spectrum();
  WindowCount w;
  for (Eigen::Index k = 0; k < eig.angles.size(); ++k) {
    if (!window.contains_angle(eig.angles(k))) continue;
    ++w.count;
    w.angles.push_back(eig.angles(k));
    if (!lattice) continue;
    LatticeVector phi = LatticeVector::from_section(r.section, eig.vectors.col(k));
    LatticeVector res = lattice->apply(phi);
    res.axpy(-eig.values(k), phi);
    double rel = res.norm() / phi.norm();
    w.lattice_residuals.push_back(rel);
    w.spurious.push_back(rel > weyl_tol);
  }
  w.open_boundary_artifact =
      !w.spurious.empty() && std::all_of(w.spurious.begin(), w.spurious.end(), [](bool b) { return b; });
  return w;
}

// ---------------------------------------------------------------------------

DenseOperator ExponentialPerturbation::commutator_with(const DenseOperator& A,
                                                       int* terms_used) const {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw PreconditionError("conjugate operator does not match the perturbation");
  const DenseOperator C = A * B - B * A;
  const double cnorm = C.norm();
  DenseOperator sum = DenseOperator::Zero(B.rows(), B.cols());
  if (terms_used) *terms_used = 0;
  if (cnorm == 0.0) return sum;
  // S_k = sum_{l<k} B^{k-1-l} C B^l, S_{k+1} = B S_k + C B^k
  DenseOperator S = C;
  DenseOperator Bk = B;
  cplx coeff(0.0, 1.0);  // i^k / k!
  constexpr int kMaxTerms = 1000;
  for (int k = 1; k <= kMaxTerms; ++k) {
    DenseOperator term = coeff * S;
    sum += term;
    // Frobenius norm bounds the operator norm from above
    if (term.norm() < series_tol * cnorm) {
      if (terms_used) *terms_used = k;
      return sum;
    }
    S = B * S + C * Bk;
    Bk = Bk * B;
    coeff *= cplx(0.0, 1.0) / static_cast<double>(k + 1);
  }
  throw ConvergenceError("commutator series did not decay", sum.norm());
}

ExponentialPerturbation exponential_perturbation(const DenseOperator& B, double series_tol) {
  if (B.rows() != B.cols()) throw PreconditionError("B must be square");
  if ((B - B.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, B.cwiseAbs().maxCoeff()))
    throw PreconditionError("B must be Hermitian");
  if (!(series_tol > 0.0)) throw PreconditionError("series tolerance must be positive");
  Eigen::SelfAdjointEigenSolver<DenseOperator> es(0.5 * (B + B.adjoint()));
  ExponentialPerturbation e;
  e.B = B;
  e.series_tol = series_tol;
  const Eigen::VectorXd& l = es.eigenvalues();
  const double scale = l.cwiseAbs().maxCoeff();
  Vec phases(l.size());
  for (Eigen::Index k = 0; k < l.size(); ++k) {
    phases(k) = std::polar(1.0, l(k));
    if (std::abs(l(k)) > 1e-12 * std::max(scale, 1.0)) ++e.rank;
  }
  e.V = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
  const DenseOperator I = DenseOperator::Identity(B.rows(), B.cols());
  if ((e.V.adjoint() * e.V - I).norm() > 1e-12 * static_cast<double>(B.rows()))
    throw ConvergenceError("exponential is not unitary to 1e-12", (e.V.adjoint() * e.V - I).norm());
  return e;
}

int perturbation_rank(const DenseOperator& V, double tol) {
  DenseOperator D = V - DenseOperator::Identity(V.rows(), V.cols());
  Eigen::BDCSVD<DenseOperator> svd(D);
  int r = 0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
    if (svd.singularValues()(k) > tol) ++r;
  return r;
}

bool window_inside(const SpectralWindow& inner, const SpectralWindow& outer) {
  if (outer.width() >= kTwoPi) {
    if (!outer.base_point_excluded) return true;
    // punctured circle: the closed inner arc must avoid the puncture
    double x = wrap_angle(*outer.base_point_excluded - inner.lo);
    return x > inner.width();
  }
  double start = wrap_angle(inner.lo - outer.lo);
  if (start >= kTwoPi - 1e-15) start = 0.0;
  return start > 0.0 && start + inner.width() < outer.width();
}

PerturbedCertificate perturbed_certificate(Realization& base, Realization& perturbed,
                                           const DenseOperator& V, const DenseOperator& comm_AV,
                                           const SpectralWindow& inner,
                                           const MourreCertificate& base_cert) {
  if (!window_inside(inner, base_cert.window))
    throw PreconditionError("inner window must lie compactly inside the base window");
  if (V.rows() != base.U.rows() || perturbed.U.rows() != base.U.rows())
    throw PreconditionError("perturbation does not match the section");
  PerturbedCertificate p;
  p.v_rank = perturbation_rank(V);
  if (p.v_rank > std::max<Eigen::Index>(1, V.rows() / 4)) {
    std::ostringstream os;
    os << "V - 1 has rank " << p.v_rank << " on a section of size " << V.rows()
       << "; the compact-perturbation hypothesis is not verifiable";
    throw PreconditionError(os.str());
  }
  const DenseOperator I = DenseOperator::Identity(V.rows(), V.cols());
  p.v_minus_one_norm = operator_norm(DenseOperator(V - I));
  p.commutator_V_norm = operator_norm(comm_AV);
  p.difference_bound =
      p.commutator_V_norm + 2.0 * p.v_minus_one_norm * operator_norm(base.commutator);
  p.certificate =
      certify_mourre(perturbed, inner, p.v_rank + base_cert.compact_allowance.rank);
  Projection E = spectral_projection(perturbed.spectrum(), inner, 0.0);
  p.difference_norm =
      E.basis.cols() == 0
          ? 0.0
          : operator_norm(DenseOperator(E.basis.adjoint() * (perturbed.form - base.form) * E.basis));
  return p;
}

PerturbedCertificate perturbed_certificate(const DenseOperator& U, const DenseOperator& V,
                                           const DenseOperator& A, const SpectralWindow& inner,
                                           const MourreCertificate& base_cert) {
  Realization base = realize_dense(U, A, "U");
  Realization pert = realize_dense(DenseOperator(V * U), A, "VU");
  return perturbed_certificate(base, pert, V, commutator(A, V), inner, base_cert);
}

}  // namespace mourre
