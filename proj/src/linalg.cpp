#include "mourre/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace mourre {

namespace {

// below this size the Gram matrix is diagonalized directly
constexpr Eigen::Index kDirectNormDim = 640;

// Lanczos on M = S*S. Returns the largest eigenvalue of M.
double lanczos_top(const LinearMap& M, Eigen::Index dim, const NormOptions& opts) {
  if (dim == 0) return 0.0;
  const int m = static_cast<int>(std::min<Eigen::Index>(opts.basis_size, dim));
  Vec start = Vec::Ones(dim) / std::sqrt(static_cast<double>(dim));
  double last = 0.0;
  double previous = 0.0;
  for (int restart = 0; restart < opts.max_restarts; ++restart) {
    DenseOperator Q(dim, m);
    std::vector<double> alpha, beta;
    Q.col(0) = start;
    int k = 0;
    bool invariant = false;
    double tail_beta = 0.0;
    for (; k < m; ++k) {
      Vec w = M(Q.col(k));
      double a = Q.col(k).dot(w).real();
      alpha.push_back(a);
      // two passes of classical Gram-Schmidt against the whole basis
      for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).adjoint() * w);
      double b = w.norm();
      double scale = std::max(std::abs(a), 1e-300);
      if (b <= 1e-14 * scale || b == 0.0) {
        invariant = true;
        ++k;
        break;
      }
      if (k + 1 < m) {
        beta.push_back(b);
        Q.col(k + 1) = w / b;
      } else {
        tail_beta = b;
      }
    }
    const int size = static_cast<int>(alpha.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(size, size);
    for (int i = 0; i < size; ++i) T(i, i) = alpha[static_cast<std::size_t>(i)];
    for (int i = 0; i + 1 < size; ++i) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    double theta = es.eigenvalues()(size - 1);
    Eigen::VectorXd y = es.eigenvectors().col(size - 1);
    last = std::max(theta, 0.0);
    if (invariant || theta <= 0.0 || size == dim) return last;
    double residual = std::abs(tail_beta * y(size - 1));
    if (residual <= opts.rel_tol * theta) return last;
    // clustered top eigenvalues: Ritz values have stalled and the residual is small
    if (restart > 0 && theta - previous <= 1e-3 * opts.rel_tol * theta &&
        residual <= std::sqrt(opts.rel_tol) * theta)
      return last;
    previous = theta;
    start = Q.leftCols(size) * y.cast<cplx>();
    start.normalize();
  }
  std::ostringstream os;
  os << "operator norm did not converge after " << opts.max_restarts << " restarts";
  throw ConvergenceError(os.str(), std::sqrt(last));
}

}  // namespace

double operator_norm(const LinearMap& apply, const LinearMap& apply_adjoint, Eigen::Index dim,
                     const NormOptions& opts) {
  LinearMap gram = [&](const Vec& v) { return apply_adjoint(apply(v)); };
  try {
    return std::sqrt(lanczos_top(gram, dim, opts));
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(e.what(), e.last_estimate());
  }
}

double operator_norm(const DenseOperator& op, const NormOptions& opts) {
  if (op.rows() == 0 || op.cols() == 0) return 0.0;
  DenseOperator gram = op.rows() >= op.cols() ? DenseOperator(op.adjoint() * op)
                                              : DenseOperator(op * op.adjoint());
  if (gram.rows() <= kDirectNormDim) {
    gram = 0.5 * (gram + gram.adjoint());
    Eigen::SelfAdjointEigenSolver<DenseOperator> es(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(es.eigenvalues()(gram.rows() - 1), 0.0));
  }
  return std::sqrt(lanczos_top([&](const Vec& v) { return Vec(gram * v); }, gram.rows(), opts));
}

double operator_norm(const SparseOperator& op, const NormOptions& opts) {
  SparseOperator adj = op.adjoint();
  return operator_norm([&](const Vec& v) { return Vec(op * v); },
                       [&](const Vec& v) { return Vec(adj * v); }, op.cols(), opts);
}

// ---------------------------------------------------------------------------

DenseOperator commutator(const DenseOperator& A, const DenseOperator& S) {
  if (A.rows() != S.rows() || A.cols() != S.cols() || A.rows() != A.cols())
    throw PreconditionError("commutator of incompatible realizations");
  return A * S - S * A;
}

DenseOperator commutator(const ConjugateOp& A, const DenseOperator& S, const Section& s) {
  if (S.rows() != s.size || S.cols() != s.size)
    throw PreconditionError("operator does not match the section");
  if (!A.is_diagonal()) return commutator(A.section(s), S);
  DenseOperator out(s.size, s.size);
  for (int k = 0; k < s.size; ++k)
    for (int j = 0; j < s.size; ++j) out(j, k) = A.difference(s.site(j), s.site(k)) * S(j, k);
  return out;
}

LatticeOperator commutator(const ConjugateOp& A, const LatticeOperator& S) {
  if (!A.is_diagonal())
    throw PreconditionError("lattice commutator needs a diagonal conjugate operator");
  std::map<int, LatticeOperator::Coefficient> bands;
  const bool affine = A.affine_form().has_value();
  for (int d : S.offsets()) {
    if (affine) {
      double factor = A.affine_form()->slope * d;
      if (factor == 0.0) continue;
      LatticeOperator S_copy = S;
      bands[d] = [S_copy, d, factor](long k) { return factor * S_copy.coefficient(d, k); };
    } else {
      LatticeOperator S_copy = S;
      ConjugateOp A_copy = A;
      bands[d] = [S_copy, A_copy, d](long k) {
        return A_copy.difference(k + d, k) * S_copy.coefficient(d, k);
      };
    }
  }
  return LatticeOperator(std::move(bands), "[" + A.label() + "," + S.label() + "]",
                         S.translation_invariant() && affine);
}

DenseOperator heisenberg_conjugate(const ConjugateOp& A, const DenseOperator& S,
                                   const Section& s, double t) {
  if (S.rows() != s.size || S.cols() != s.size)
    throw PreconditionError("operator does not match the section");
  if (t == 0.0) return S;
  if (A.is_diagonal()) {
    Eigen::VectorXd a = A.diagonal_section(s);
    DenseOperator out(s.size, s.size);
    for (int k = 0; k < s.size; ++k)
      for (int j = 0; j < s.size; ++j)
        out(j, k) = std::polar(1.0, -t * A.difference(s.site(j), s.site(k))) * S(j, k);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<DenseOperator> es(A.section(s));
  if (es.info() != Eigen::Success)
    throw ConvergenceError("eigen-decomposition of the conjugate operator failed", 0.0);
  const DenseOperator& V = es.eigenvectors();
  Vec phases(s.size);
  for (int i = 0; i < s.size; ++i) phases(i) = std::polar(1.0, t * es.eigenvalues()(i));
  DenseOperator inner = V.adjoint() * S * V;
  for (int k = 0; k < s.size; ++k)
    for (int j = 0; j < s.size; ++j) inner(j, k) *= std::conj(phases(j)) * phases(k);
  return V * inner * V.adjoint();
}

LatticeOperator heisenberg_conjugate(const ConjugateOp& A, const LatticeOperator& S, double t) {
  if (!A.is_diagonal())
    throw PreconditionError("lattice conjugation needs a diagonal conjugate operator");
  std::map<int, LatticeOperator::Coefficient> bands;
  for (int d : S.offsets()) {
    LatticeOperator S_copy = S;
    ConjugateOp A_copy = A;
    bands[d] = [S_copy, A_copy, d, t](long k) {
      return std::polar(1.0, -t * A_copy.difference(k + d, k)) * S_copy.coefficient(d, k);
    };
  }
  return LatticeOperator(std::move(bands), S.label() + "(t)",
                         S.translation_invariant() && A.affine_form().has_value());
}

// ---------------------------------------------------------------------------

UnitaryEigen diagonalize_unitary(const DenseOperator& U) {
  Eigen::ComplexSchur<DenseOperator> schur(U, true);
  if (schur.info() != Eigen::Success)
    throw ConvergenceError("Schur decomposition of the unitary failed", 0.0);
  UnitaryEigen out;
  out.values = schur.matrixT().diagonal();
  out.vectors = schur.matrixU();
  out.angles.resize(out.values.size());
  for (Eigen::Index i = 0; i < out.values.size(); ++i) out.angles(i) = std::arg(out.values(i));
  return out;
}

UnitaryEigen diagonalize_closure(const LatticeOperator& op, const Section& s, double twist) {
  if (!op.translation_invariant())
    throw PreconditionError("closed-form diagonalization needs a translation-invariant operator");
  const int n = s.size;
  UnitaryEigen out;
  out.values.resize(n);
  out.angles.resize(n);
  out.vectors.resize(n, n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (int m = 0; m < n; ++m) {
    double kappa = (kTwoPi * m - twist) / n;
    cplx value = 0.0;
    for (int d : op.offsets()) value += op.coefficient(d, 0) * std::polar(1.0, -kappa * d);
    out.values(m) = value;
    out.angles(m) = std::arg(value);
    for (int i = 0; i < n; ++i) out.vectors(i, m) = std::polar(norm, kappa * i);
  }
  return out;
}

Eigen::VectorXd unitary_angles(const DenseOperator& U) {
  Eigen::ComplexSchur<DenseOperator> schur(U, false);
  if (schur.info() != Eigen::Success)
    throw ConvergenceError("Schur decomposition of the unitary failed", 0.0);
  Vec values = schur.matrixT().diagonal();
  Eigen::VectorXd angles(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) angles(i) = std::arg(values(i));
  return angles;
}

Projection spectral_projection(const UnitaryEigen& eig, const SpectralWindow& window,
                               double guard_band) {
  std::vector<Eigen::Index> selected;
  Projection p;
  int near_boundary = 0;
  for (Eigen::Index i = 0; i < eig.angles.size(); ++i) {
    if (window.distance_to_boundary(eig.angles(i)) < guard_band) ++near_boundary;
    if (window.contains_angle(eig.angles(i))) selected.push_back(i);
  }
  if (near_boundary > 0)
    p.warnings.push_back(std::to_string(near_boundary) +
                         " eigenvalue(s) within the guard band of the window boundary");
  const Eigen::Index n = eig.vectors.rows();
  p.basis.resize(n, static_cast<Eigen::Index>(selected.size()));
  for (std::size_t c = 0; c < selected.size(); ++c)
    p.basis.col(static_cast<Eigen::Index>(c)) = eig.vectors.col(selected[c]);
  p.E = p.basis * p.basis.adjoint();
  return p;
}

cplx arc_fourier_coefficient(const SpectralWindow& window, int n) {
  if (n == 0) return window.width() / kTwoPi;
  const cplx i(0.0, 1.0);
  return (std::polar(1.0, -n * window.lo) - std::polar(1.0, -n * window.hi)) /
         (i * static_cast<double>(n) * kTwoPi);
}

Projection spectral_projection(const DenseOperator& U, const SpectralWindow& window,
                               const ProjectionOptions& opts) {
  if (opts.method == ProjectionMethod::diagonalize)
    return spectral_projection(diagonalize_unitary(U), window, opts.guard_band);
  if (opts.fejer_order < 1) throw PreconditionError("fejer order must be >= 1");
  const int N = opts.fejer_order;
  const Eigen::Index n = U.rows();
  Projection p;
  p.E = arc_fourier_coefficient(window, 0) * DenseOperator::Identity(n, n);
  DenseOperator power = DenseOperator::Identity(n, n);
  for (int k = 1; k <= N; ++k) {
    power = power * U;
    double w = 1.0 - static_cast<double>(k) / (N + 1);
    cplx c = w * arc_fourier_coefficient(window, k);
    DenseOperator term = c * power;
    p.E += term + term.adjoint();
  }
  p.smoothing_width = kTwoPi / (N + 1);
  return p;
}

LatticeVector fejer_apply(const LatticeOperator& U, const SpectralWindow& window, int order,
                          const LatticeVector& v) {
  if (order < 1) throw PreconditionError("fejer order must be >= 1");
  LatticeOperator Uadj = U.adjoint();
  LatticeVector out = v;
  out.scale(arc_fourier_coefficient(window, 0));
  LatticeVector fwd = v, back = v;
  for (int k = 1; k <= order; ++k) {
    fwd = U.apply(fwd);
    back = Uadj.apply(back);
    double w = 1.0 - static_cast<double>(k) / (order + 1);
    out.axpy(w * arc_fourier_coefficient(window, k), fwd);
    out.axpy(w * arc_fourier_coefficient(window, -k), back);
  }
  return out;
}

// ---------------------------------------------------------------------------

DenseOperator product_section(const std::vector<LatticeOperator>& ops, const Section& interior,
                              int padding) {
  if (ops.empty()) throw PreconditionError("empty product");
  Section ext{interior.first - padding, interior.size + 2 * padding};
  SparseOperator acc = ops.back().sparse_section(ext);
  for (auto it = ops.rbegin() + 1; it != ops.rend(); ++it) acc = (it->sparse_section(ext) * acc).pruned();
  DenseOperator full(acc);
  return full.block(padding, padding, interior.size, interior.size);
}

DenseOperator product_section(const std::vector<LatticeOperator>& ops, const Section& interior) {
  int padding = 0;
  for (const auto& op : ops) padding += op.bandwidth();
  return product_section(ops, interior, padding);
}

DenseOperator interior_block(const DenseOperator& m, int margin) {
  const Eigen::Index n = m.rows() - 2 * margin;
  if (n <= 0) throw PreconditionError("interior margin too large for the section");
  return m.block(margin, margin, n, n);
}

double hermitian_min_eigenvalue(const DenseOperator& m) {
  if (m.rows() == 0) return std::numeric_limits<double>::infinity();
  DenseOperator h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<DenseOperator> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace mourre
