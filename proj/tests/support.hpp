#pragma once

// Test-only helpers: seeded random matrices and brute-force oracles.

#include <random>

#include <Eigen/Dense>

#include "mourre/core.hpp"

namespace testsupport {

using mourre::cplx;
using mourre::DenseOperator;

inline DenseOperator random_matrix(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  DenseOperator m(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) m(i, j) = cplx(g(rng), g(rng));
  return m;
}

inline DenseOperator random_unitary(int n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<DenseOperator> qr(random_matrix(n, rng));
  return qr.householderQ() * DenseOperator::Identity(n, n);
}

inline DenseOperator random_hermitian(int n, std::mt19937_64& rng) {
  DenseOperator m = random_matrix(n, rng);
  return 0.5 * (m + m.adjoint());
}

// spectral norm by full SVD
inline double svd_norm(const DenseOperator& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<DenseOperator> svd(m);
  return svd.singularValues()(0);
}

inline double max_abs(const DenseOperator& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace testsupport
