#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mourre/core.hpp"

namespace mourre {

using LinearMap = std::function<Vec(const Vec&)>;

struct NormOptions {
  double rel_tol = 1e-10;
  int basis_size = 40;
  int max_restarts = 60;
};

/// Largest singular value by restarted Lanczos on S*S with full
/// reorthogonalization, started from the normalized all-ones vector.
double operator_norm(const LinearMap& apply, const LinearMap& apply_adjoint, Eigen::Index dim,
                     const NormOptions& opts = {});
double operator_norm(const DenseOperator& op, const NormOptions& opts = {});
double operator_norm(const SparseOperator& op, const NormOptions& opts = {});

/// [A,S] = AS - SA.
DenseOperator commutator(const DenseOperator& A, const DenseOperator& S);
/// [A,S] for a diagonal conjugate on a section.
DenseOperator commutator(const ConjugateOp& A, const DenseOperator& S, const Section& s);
/// Lattice-exact [A,S] for a diagonal conjugate: band d scaled by a(k+d) - a(k).
LatticeOperator commutator(const ConjugateOp& A, const LatticeOperator& S);

/// e^{-itA} S e^{itA} on a section.
DenseOperator heisenberg_conjugate(const ConjugateOp& A, const DenseOperator& S,
                                   const Section& s, double t);
/// Lattice-exact e^{-itA} S e^{itA} for a diagonal conjugate.
LatticeOperator heisenberg_conjugate(const ConjugateOp& A, const LatticeOperator& S, double t);

/// Eigen-decomposition of a unitary matrix with orthonormal eigenvectors.
struct UnitaryEigen {
  Vec values;
  Eigen::VectorXd angles;  // arg of values, in (-pi, pi]
  DenseOperator vectors;
};

UnitaryEigen diagonalize_unitary(const DenseOperator& U);

/// Closed-form eigen-decomposition of the twisted periodic closure of a
/// translation-invariant lattice operator on a section of length n.
UnitaryEigen diagonalize_closure(const LatticeOperator& op, const Section& s, double twist);

/// Eigenvalue angles of a unitary (no vectors).
Eigen::VectorXd unitary_angles(const DenseOperator& U);

enum class ProjectionMethod { diagonalize, fejer };

struct Projection {
  DenseOperator E;
  DenseOperator basis;  // orthonormal columns spanning ran E (diagonalize only)
  double smoothing_width = 0.0;
  std::vector<std::string> warnings;
};

struct ProjectionOptions {
  ProjectionMethod method = ProjectionMethod::diagonalize;
  int fejer_order = 32;
  double guard_band = 1e-8;
};

Projection spectral_projection(const UnitaryEigen& eig, const SpectralWindow& window,
                               double guard_band = 1e-8);
Projection spectral_projection(const DenseOperator& U, const SpectralWindow& window,
                               const ProjectionOptions& opts = {});

/// Fourier coefficients of the arc indicator, c_n = (1/2pi) int_lo^hi e^{-in phi}.
cplx arc_fourier_coefficient(const SpectralWindow& window, int n);
/// Fejer-weighted arc indicator applied to a lattice vector: sum c_n w_n U^n v.
LatticeVector fejer_apply(const LatticeOperator& U, const SpectralWindow& window, int order,
                          const LatticeVector& v);

/// Dense section of the product ops[0] * ops[1] * ... restricted to `interior`,
/// exact on l2(Z) because products are formed on a padded section first.
DenseOperator product_section(const std::vector<LatticeOperator>& ops, const Section& interior);
/// Same as above with an explicit padding per side.
DenseOperator product_section(const std::vector<LatticeOperator>& ops, const Section& interior,
                              int padding);

/// Lower-left to upper-right interior block of a dense section.
DenseOperator interior_block(const DenseOperator& m, int margin);

double hermitian_min_eigenvalue(const DenseOperator& m);

}  // namespace mourre
