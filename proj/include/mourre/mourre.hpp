#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mourre/core.hpp"
#include "mourre/linalg.hpp"
#include "mourre/models.hpp"
#include "mourre/serialize.hpp"

namespace mourre {

struct CompactAllowance {
  int rank = 0;
  double norm = 0.0;  // a_estimate - lowest eigenvalue when rank > 0
};

/// E(Theta) U*[A,U] E(Theta) on ran E, with the lowest `rank` eigenvalues
/// absorbed into the compact part.
struct MourreCertificate {
  SpectralWindow window;
  double a_estimate = 0.0;
  CompactAllowance compact_allowance;
  double min_eig_after_allowance = 0.0;
  int section_size = 0;
  int interior_margin = 0;
  int window_rank = 0;    // dim ran E
  double residual = 0.0;  // ||compression - a_estimate|| (0 for scalar compressions)
  std::vector<double> eigenvalues;  // of the compression, ascending
  bool vacuous = false;
  bool pass = false;
  std::vector<std::string> warnings;
};

MourreCertificate certify_mourre(const UnitaryEigen& eig, const DenseOperator& form,
                                 const SpectralWindow& window, int allowance_rank = 0);
MourreCertificate certify_mourre(Realization& r, const SpectralWindow& window,
                                 int allowance_rank = 0);

json to_json(const MourreCertificate& c, const std::string& model);

struct VirialReport {
  cplx eigenvalue;
  double eigen_residual = 0.0;  // ||U phi - theta phi|| / ||phi||
  cplx virial_value;            // <phi, U*[A,U] phi> / ||phi||^2
  double tolerance = 0.0;
  bool pass = false;
};

/// Virial check with the matrix form U*AU - A.
VirialReport virial_check(const DenseOperator& U, const DenseOperator& A, const Vec& phi,
                          double tol);
/// Virial check with a given form F = U*[A,U] (lattice-exact sections).
VirialReport virial_check_form(const DenseOperator& U, const DenseOperator& form, const Vec& phi,
                               double tol);

struct WindowCount {
  int count = 0;
  std::vector<double> angles;
  // ||U phi - l phi|| for the section eigenvector embedded in l2(Z); only with a lattice U
  std::vector<double> lattice_residuals;
  std::vector<bool> spurious;
  bool open_boundary_artifact = false;
};

int count_window_eigenvalues(const DenseOperator& U, const SpectralWindow& window);
/// Counts section eigenvalues in the window. With a lattice operator every
/// eigenvector is tested as a Weyl vector of the lattice unitary; those with
/// residual above `weyl_tol` are flagged spurious.
WindowCount count_window_eigenvalues(Realization& r, const SpectralWindow& window,
                                     const LatticeOperator* lattice = nullptr,
                                     double weyl_tol = 1e-6);

/// V = e^{iB} with the commutator series
/// [A, e^{iB}] = sum_{k>=1} (i^k/k!) sum_{l<k} B^{k-1-l}[A,B]B^l.
struct ExponentialPerturbation {
  DenseOperator B;
  DenseOperator V;
  int rank = 0;  // numerical rank of B
  double series_tol = 1e-14;

  /// Series value of [A,V]; terms_used receives the number of terms summed.
  DenseOperator commutator_with(const DenseOperator& A, int* terms_used = nullptr) const;
};

ExponentialPerturbation exponential_perturbation(const DenseOperator& B,
                                                 double series_tol = 1e-14);

/// Numerical rank of V - 1.
int perturbation_rank(const DenseOperator& V, double tol = 1e-10);

struct PerturbedCertificate {
  MourreCertificate certificate;  // for VU on the inner window
  int v_rank = 0;
  double v_minus_one_norm = 0.0;
  double commutator_V_norm = 0.0;  // ||[A,V]||
  double difference_norm = 0.0;    // ||E ((VU)*[A,VU] - U*[A,U]) E||, E = E^{VU}(inner)
  double difference_bound = 0.0;   // ||[A,V]|| + 2||V-1|| ||[A,U]||
};

/// Certificate for VU on `inner` from the base certificate for U. `base` and
/// `perturbed` are realizations of U and VU on the same section; `V` and
/// `comm_AV` are the sections of V and [A,V].
PerturbedCertificate perturbed_certificate(Realization& base, Realization& perturbed,
                                           const DenseOperator& V, const DenseOperator& comm_AV,
                                           const SpectralWindow& inner,
                                           const MourreCertificate& base_cert);
/// Dense pairs: forms are the matrix ones.
PerturbedCertificate perturbed_certificate(const DenseOperator& U, const DenseOperator& V,
                                           const DenseOperator& A, const SpectralWindow& inner,
                                           const MourreCertificate& base_cert);

/// True when the closure of `inner` lies inside `outer`.
bool window_inside(const SpectralWindow& inner, const SpectralWindow& outer);

}  // namespace mourre
