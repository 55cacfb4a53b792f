#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mourre/core.hpp"
#include "mourre/linalg.hpp"

namespace mourre {

/// Dense view of a (U, A) pair on one section. U is unitary (twisted
/// periodic closure for lattice models); commutator and form are the
/// lattice-exact [A,U] and U*[A,U] cut to the section with open boundary.
struct Realization {
  std::string label;
  Section section;
  DenseOperator U;
  DenseOperator A;
  DenseOperator commutator;
  DenseOperator form;
  int margin = 0;
  std::optional<UnitaryEigen> eigen;

  /// Eigen-decomposition, from the closed form when available.
  const UnitaryEigen& spectrum();
};

/// Realization of a lattice pair on `s`. Translation-invariant unitaries get
/// their eigen-decomposition in closed form.
Realization realize_lattice(const LatticeOperator& U, const ConjugateOp& A, const Section& s,
                            double twist = kPi, std::string label = {});

/// Realization of a dense pair; commutator and form are the matrix ones.
Realization realize_dense(const DenseOperator& U, const DenseOperator& A, std::string label);

/// The diagonal conjugate as a lattice operator (band 0).
LatticeOperator diagonal_operator(const ConjugateOp& A);

/// Unitary equal to `block` on sites first..first+r-1 and to the identity elsewhere.
LatticeOperator local_unitary(const DenseOperator& block, long first_site, std::string label);

// ---------------------------------------------------------------------------

struct ShiftModel {
  UnitaryOp U;
  ConjugateOp A;
  Realization realize(int K, double twist = kPi) const;
};

ShiftModel build_shift();

struct DilationModel {
  double t = 0.0;
  double dy = 0.0;
  int steps = 0;  // t / dy
  int K = 0;
  UnitaryOp U;
  ConjugateOp A;
  Realization realize(double twist = kPi) const;
};

DilationModel build_dilation(double t, double dy, int K);

struct FreeEvolutionModel {
  double T = 1.0;
  double Xi = 8.0;
  int M = 256;
  double dxi = 0.0;
  Eigen::VectorXd xi;
  Eigen::VectorXd symbol;  // 2T xi^2 / (xi^2 + 1)
  UnitaryOp U;
  ConjugateOp A;
  Realization realize() const;
  /// Closed-form U*[A,U] as a diagonal matrix.
  DenseOperator symbol_form() const;
};

FreeEvolutionModel build_free_evolution(double T, double Xi, int M);

struct FreeEvolutionError {
  Eigen::VectorXd row_error;  // |(C 1)_i - symbol_i| / max symbol, interior rows
  double max_relative_error = 0.0;
  int boundary_rows = 0;
};

/// Compares the discrete U*[A,U] against the symbol on the constant test vector.
FreeEvolutionError free_evolution_error(const FreeEvolutionModel& model);

struct RationalApproximation {
  long p = 0;
  long q = 1;
  double error = 0.0;
  bool small_denominator = false;
};

/// Best rational approximation of theta within `tol` by continued fractions;
/// flagged when the denominator is at most `max_denominator`.
RationalApproximation irrationality_proxy(double theta, double tol = 1e-15,
                                          long max_denominator = 1000000);

struct CocycleModel {
  int m = 1;
  std::map<int, cplx> h_hat;  // l >= 1; h_{-l} = conj(h_l)
  double theta = 0.0;
  int K = 32;
  std::map<int, cplx> g_hat;
  double tail_mass = 0.0;
  int fft_size = 4096;
  std::vector<std::string> warnings;
  UnitaryOp U;
  ConjugateOp P;

  Realization realize(double twist = kPi) const;
  /// f'(x) = m + h'(x).
  double f_prime(double x) const;
  /// h'(x).
  double h_prime(double x) const;
};

struct CocycleOptions {
  int fft_size = 4096;
  double drop_floor = 1e-14;
};

CocycleModel build_cocycle(int m, const std::map<int, cplx>& h_hat, double theta, int K,
                           const CocycleOptions& opts = {});

/// Multiplication by e^{2 pi i x} in the Fourier basis (shift by +1).
LatticeOperator rotation_generator();

// ---------------------------------------------------------------------------

struct AveragedConjugate {
  ConjugateOp A_n;
  Section interior;
  double lemma_residual = 0.0;
};

/// A_n = (1/n) sum_{j<n} U^{-j} A U^j, exact on the interior |k| <= K - margin(n).
AveragedConjugate averaged_conjugate(const LatticeOperator& U, const ConjugateOp& A, int n, int K);
/// Dense version on the full section.
AveragedConjugate averaged_conjugate(const DenseOperator& U, const ConjugateOp& A,
                                     const Section& s, int n);

/// Padding that makes n-fold conjugation exact.
int averaging_margin(const LatticeOperator& U, int n);

/// || [A_n,U] - (1/n) sum_j U^{-j}[A,U]U^j || on the interior block |k| <= K.
double lemma_a_residual(const LatticeOperator& U, const ConjugateOp& A, int n, int K);
double lemma_a_residual(const DenseOperator& U, const DenseOperator& A, int n);

struct ErgodicBound {
  double sup = 0.0;       // refined maximum over x
  double grid_sup = 0.0;  // maximum over the grid points
  double argmax = 0.0;
  std::vector<std::string> warnings;
};

/// sup_x |(1/n) sum_{j=1}^n h'(x - j theta)| for h given by its Fourier coefficients.
ErgodicBound ergodic_average_bound(const std::map<int, cplx>& h_hat, double theta, int n,
                                   int grid_size = 4096);

/// Smallest n <= n_max with ergodic bound < 1/2, or nullopt.
std::optional<int> smallest_averaging_order(const std::map<int, cplx>& h_hat, double theta,
                                            int n_max = 64, int grid_size = 4096);

struct CocycleMourreConstant {
  double min_eig = 0.0;
  double ergodic_bound = 0.0;
  double lower_bound = 0.0;  // 2 pi (|m| - bound)
  int n = 1;
  int K = 0;
  double tolerance = 0.0;
};

/// Interior-compressed min eigenvalue of U*[P_n,U] (P replaced by -P when m < 0).
CocycleMourreConstant mourre_constant_cocycle(const CocycleModel& model, int n, int K);

/// U*[P_n,U] on the interior |k| <= K, lattice exact.
DenseOperator averaged_form(const LatticeOperator& U, const ConjugateOp& A, int n, int K);

}  // namespace mourre
