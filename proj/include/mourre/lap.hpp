#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "mourre/core.hpp"
#include "mourre/linalg.hpp"
#include "mourre/serialize.hpp"

namespace mourre {

// ---------------------------------------------------------------------------
// delta(U, z)

struct DeltaKernel {
  DenseOperator delta;
  double factorization_residual = 0.0;  // against (1-|z|^2) G G*, G = (1 - z U*)^{-1}
  double min_eigenvalue = 0.0;          // of the Hermitian part
};

/// delta(U,z) = (1 - z U*)^{-1} - (1 - conj(z)^{-1} U*)^{-1}.
DeltaKernel delta_kernel(const DenseOperator& U, cplx z);

// ---------------------------------------------------------------------------
// Limiting absorption

/// (H_theta - z)^{-1} on the twisted periodic closure of a lattice unitary,
/// through sparse LU of (i + z) - conj(theta)(z - i) U.
class ClosureResolvent {
 public:
  ClosureResolvent(const LatticeOperator& U, cplx theta, cplx z, const Section& s,
                   double twist = kPi);
  Vec apply(const Vec& x) const;
  /// R(z)* = R(conj z).
  Vec apply_adjoint(const Vec& x) const;
  Eigen::Index dim() const { return n_; }

 private:
  using LU = Eigen::SparseLU<SparseOperator, Eigen::COLAMDOrdering<int>>;
  Eigen::Index n_ = 0;
  SparseOperator one_minus_;  // 1 - conj(theta) U
  std::shared_ptr<LU> lu_z_;
  std::shared_ptr<LU> lu_zbar_;
};

/// ||<A>^{-s} (H_theta - z)^{-1} <A>^{-s}|| on the closure of section K.
double weighted_resolvent_norm(const LatticeOperator& U, const ConjugateOp& A, cplx theta, cplx z,
                               double s, int K, const NormOptions& opts = {1e-8, 40, 200});
/// |Im z| ||<A>^{-s} (H_theta - z)^{-1}||^2.
double resolvent_imaginary_part(const LatticeOperator& U, const ConjugateOp& A, cplx theta, cplx z,
                                double s, int K, const NormOptions& opts = {1e-8, 40, 200});

struct LapOptions {
  double rel_change = 0.01;  // stabilization threshold across the last two K
  double k_factor = 1.0;     // K_0 = ceil(k_factor / eps)
  int k_min = 32;
  int max_doublings = 6;
  int k_cap = 1 << 20;
  NormOptions norm{1e-8, 40, 200};
};

struct LapCell {
  double lambda = 0.0;
  double eps = 0.0;
  std::vector<int> K;
  std::vector<double> norms;
  bool stabilized = false;
  double imaginary_part = 0.0;  // at the final K
};

struct LapSweep {
  cplx theta{1.0, 0.0};
  double s = 0.6;
  std::vector<double> lambda_grid;
  std::vector<double> eps_grid;
  std::vector<LapCell> cells;  // lambda-major
  double sup_bound = 0.0;      // over stabilized cells only
  int unstabilized = 0;
  std::vector<std::string> warnings;

  const LapCell& cell(std::size_t lambda_index, std::size_t eps_index) const {
    return cells[lambda_index * eps_grid.size() + eps_index];
  }
};

/// Double-limit sweep: for each (lambda, eps) grow K until the weighted norm
/// changes by at most rel_change.
LapSweep lap_sweep(const LatticeOperator& U, const ConjugateOp& A, cplx theta,
                   const std::vector<double>& lambda_grid, double s,
                   const std::vector<double>& eps_grid, const LapOptions& opts = {});

/// Least-squares slope of log norm against log eps over the smallest decade
/// of stabilized cells at one lambda.
double last_decade_slope(const LapSweep& sweep, std::size_t lambda_index);

std::string to_csv(const LapSweep& sweep, const std::string& comment);

// ---------------------------------------------------------------------------
// U-smoothness

struct SmoothnessReport {
  std::string B_label;
  std::string window;  // "global" or "[lo,hi]"
  std::vector<int> N_schedule;
  std::vector<double> partial_sums;     // sum_{|n| <= N}
  std::vector<double> tail_decrements;  // partial_sums[i] - partial_sums[i-1]
  std::vector<double> dyadic_tails;     // sum over 2^k <= |n| < 2^{k+1}, k = 0, 1, ...
  std::vector<std::string> notes;
  std::optional<double> sup_over_disk;
};

/// Lattice-exact sums of ||<A>^{-s} U^n phi||^2 over |n| <= N.
SmoothnessReport smooth_sum(const LatticeOperator& U, const ConjugateOp& A, double s,
                            const LatticeVector& phi, const std::vector<int>& N_schedule,
                            const ApplyLimits& limits = {});
/// Dense sums of ||<A>^{-s} U^n E phi||^2 with E = E^U(window) on a section.
SmoothnessReport smooth_sum(const DenseOperator& U, const DenseOperator& weight, const Vec& phi,
                            const SpectralWindow& window, const std::vector<int>& N_schedule);

/// Lattice first, dense closure on `fallback` when the support cap is hit.
SmoothnessReport smooth_sum_with_fallback(const LatticeOperator& U, const ConjugateOp& A, double s,
                                          const LatticeVector& phi,
                                          const std::vector<int>& N_schedule,
                                          const Section& fallback, const ApplyLimits& limits = {});

/// Whether the dyadic tails decrease strictly over k in [k_lo, k_hi].
bool dyadic_tails_decrease(const SmoothnessReport& r, int k_lo, int k_hi);

/// sup over z in the grid and the probes of |<phi, B delta(U,z) E B phi>|.
double smooth_sup_disk(const DenseOperator& U, const DenseOperator& B, const SpectralWindow& window,
                       const std::vector<cplx>& z_grid, const std::vector<Vec>& probes);

std::string to_csv(const SmoothnessReport& r, const std::string& comment);

// ---------------------------------------------------------------------------
// Wiener-type diagnostic

struct WienerDiagnostic {
  std::vector<int> N;           // dyadic checkpoints
  std::vector<double> cesaro;   // (1/N) sum_{n=1}^N |<phi, U^n phi>|^2
  double coeff_decay_fit = 0.0; // slope of log |c_n| vs log n at dyadic n; NaN if all vanish
  double max_support = 0.0;     // largest support reached by U^n phi
  double trimmed_mass = 0.0;    // squared l2 mass dropped by trimming
};

WienerDiagnostic wiener_diagnostic(const LatticeOperator& U, const LatticeVector& phi, int N,
                                   double trim_floor = 1e-18);

std::string to_csv(const WienerDiagnostic& w, const std::string& comment);

}  // namespace mourre
