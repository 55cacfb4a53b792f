#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mourre/core.hpp"
#include "mourre/linalg.hpp"

namespace mourre {

/// Evaluates the two regularity integrands of a (U, A) pair on one section.
/// Lattice pairs precompute exact sections of U and [A,U]; conjugation by a
/// diagonal A is then an entrywise phase.
class RegularityProbe {
 public:
  static RegularityProbe lattice(const LatticeOperator& U, const ConjugateOp& A, int K,
                                 int margin = -1);
  static RegularityProbe dense(const DenseOperator& U, const ConjugateOp& A, const Section& s,
                               int margin = 0);

  /// ||e^{-itA}Ue^{itA} + e^{itA}Ue^{-itA} - 2U|| on the interior.
  double c11(double t) const;
  /// ||e^{-itA}[A,U]e^{itA} - [A,U]|| on the interior.
  double c1plus0(double t) const;
  /// ||[A,U]|| on the interior.
  double commutator_norm() const;

  int section_size() const { return section_.size; }
  int margin() const { return margin_; }

 private:
  DenseOperator conjugate(const DenseOperator& S, double t) const;
  double masked_norm(const DenseOperator& m) const;

  Section section_;
  int margin_ = 0;
  DenseOperator U_;
  DenseOperator C_;
  // diagonal conjugate: values on the section; Hermitian conjugate: eigenpairs
  bool diagonal_ = true;
  Eigen::VectorXd a_;
  DenseOperator V_;
};

/// Default grid: n log-spaced points from t_min to 1.
std::vector<double> log_grid(double t_min = 1e-4, int n = 64);

enum class DivergenceFlag { converged, growing, inconclusive };
std::string to_string(DivergenceFlag f);

struct RegularityOptions {
  double k_tol = 0.01;       // relative change across the two largest K
  double decade_tol = 0.05;  // last-decade share of the running integral
};

struct IntegralEstimate {
  double value = 0.0;            // grid part plus extrapolated tail below t_min
  double tail = 0.0;             // extrapolated contribution of (0, t_min)
  double last_decade_share = 0;  // share of the grid part from [t_min, 10 t_min]
  std::vector<double> running;   // integral over [t_j, 1], j from the top
};

/// Trapezoid in u = ln t of f(t) / t^power over the grid, plus a power-law tail.
IntegralEstimate log_trapezoid(const std::vector<double>& t, const std::vector<double>& f,
                               int power);

struct RegularityReport {
  std::string label;
  std::vector<double> t_grid;
  std::vector<int> section_sizes;  // K per schedule entry
  // [K index][t index]
  std::vector<std::vector<double>> c11_integrand;
  std::vector<std::vector<double>> c1plus0_integrand;
  std::vector<IntegralEstimate> c11_estimates;
  std::vector<IntegralEstimate> c1plus0_estimates;
  double c11 = 0.0;      // estimate at the largest K
  double c1plus0 = 0.0;  // estimate at the largest K
  double t_min = 0.0;
  DivergenceFlag c11_flag = DivergenceFlag::inconclusive;
  DivergenceFlag c1plus0_flag = DivergenceFlag::inconclusive;
};

/// Builds a probe for section size K.
using ProbeFactory = std::function<RegularityProbe(int K)>;

RegularityReport classify(const ProbeFactory& factory, const std::vector<double>& t_grid,
                          const std::vector<int>& K_schedule, const RegularityOptions& opts = {},
                          std::string label = {});

/// h' = sum_{k>=1, 2^k <= max_harmonic} k^{-2} cos(2 pi 2^k x): modulus of
/// continuity ~ 1/log(1/t), so the Dini integral diverges as harmonics are added.
std::map<int, cplx> lacunary_h_hat(int max_harmonic);

}  // namespace mourre
