#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mourre/core.hpp"
#include "mourre/linalg.hpp"
#include "mourre/serialize.hpp"

namespace mourre {

/// H_theta = -i(1 + conj(theta) U)(1 - conj(theta) U)^{-1} on a dense section,
/// kept resolvent-first: (H - i)^{-1} = (i/2)(1 - conj(theta) U) always exists.
struct CayleyOperator {
  cplx base_point{1.0, 0.0};
  DenseOperator source;
  std::optional<DenseOperator> dense_H;
  DenseOperator resolvent_at_i;
  double asymmetry = 0.0;      // ||H - H*|| before symmetrization
  double base_distance = 0.0;  // angular distance from theta to sigma(U)
  double condition = 0.0;      // max |1 - conj(theta) l| / min |1 - conj(theta) l|
  std::vector<std::string> warnings;
};

struct CayleyOptions {
  double guard_band = 1e-6;  // angle
};

CayleyOperator build_cayley(const DenseOperator& U, cplx theta, const CayleyOptions& opts = {});
/// Same, reusing a known eigen-decomposition of U for the guard and condition.
CayleyOperator build_cayley(const DenseOperator& U, const UnitaryEigen& eig, cplx theta,
                            const CayleyOptions& opts = {});

/// Midpoint of the largest gap between eigenvalue angles.
cplx largest_gap_base_point(const Eigen::VectorXd& angles);

/// lambda = -i(1 + conj(theta) t)/(1 - conj(theta) t) = cot(phi/2), phi = arg(conj(theta) t).
double spectral_map(cplx theta_prime, cplx theta);
/// theta (lambda + i)/(lambda - i).
cplx inverse_spectral_map(double lambda, cplx theta);

struct Resolvent {
  DenseOperator R;
  double condition = 0.0;          // 1 / rcond of the solved matrix
  std::optional<double> residual;  // ||(H - z) R - 1|| when dense_H exists
};

/// (H_theta - z)^{-1} = -(1 - conj(theta) U)[(i + z) - conj(theta)(z - i) U]^{-1}.
Resolvent cayley_resolvent(const CayleyOperator& H, cplx z);
Resolvent cayley_resolvent(const DenseOperator& U, cplx theta, cplx z);

struct IdentityReport {
  std::string model;
  cplx theta{1.0, 0.0};
  std::string identity;  // "a", "b" or "transfer"
  double residual = 0.0;
  double tolerance = 0.0;
  double condition = 1.0;
  bool pass = false;
};

json to_json(const IdentityReport& r);

/// ||[A,(i/2)(1 - conj(theta) U)] + (i conj(theta)/2)[A,U]||, tolerance 1e-12 n.
IdentityReport verify_identity_a(const DenseOperator& U, const DenseOperator& A, cplx theta,
                                 std::string model = {});

/// ||i[H,A] - 2 R* U*[A,U] R|| with R = (1 - conj(theta) U)^{-1}, tolerance 1e-8 cond.
IdentityReport verify_identity_b(const CayleyOperator& H, const DenseOperator& A,
                                 std::string model = {});
IdentityReport verify_identity_b(const DenseOperator& U, const DenseOperator& A, cplx theta,
                                 std::string model = {});

struct Interval {
  double lo = -1.0;
  double hi = 1.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct TransferReport {
  double lhs_min_eig = 0.0;
  double bound = 0.0;  // a / 2
  int rank = 0;        // dim ran E^H(I)
  bool vacuous = false;
  bool pass = false;
};

/// min eigenvalue of E^H(I) i[H,A] E^H(I) on ran E, against a/2.
TransferReport mourre_transfer(const CayleyOperator& H, const DenseOperator& A, Interval I,
                               double a);
/// Same with i[H,A] formed as 2 R* F R from a given U*[A,U] = F (lattice-exact forms).
TransferReport mourre_transfer_form(const CayleyOperator& H, const DenseOperator& form,
                                    Interval I, double a);

/// Image of an arc avoiding theta under the spectral map (open interval).
Interval arc_image(const SpectralWindow& window, cplx theta);

/// ||E^U(window) - E^H(arc_image(window))||.
double projection_transport_residual(const CayleyOperator& H, const SpectralWindow& window);

}  // namespace mourre
