#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mourre/cayley.hpp"
#include "mourre/models.hpp"
#include "support.hpp"

using namespace mourre;
using testsupport::max_abs;
using testsupport::svd_norm;

namespace {

const cplx kI{0.0, 1.0};

DenseOperator diag(std::initializer_list<cplx> v) {
  Vec d(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (cplx x : v) d(i++) = x;
  return d.asDiagonal();
}

}  // namespace

TEST_CASE("build_cayley: scalar and diagonal examples") {
  CayleyOperator c = build_cayley(diag({-1.0}), 1.0);
  REQUIRE(c.dense_H.has_value());
  CHECK(std::abs((*c.dense_H)(0, 0)) <= 1e-15);

  c = build_cayley(diag({kI, -kI}), 1.0);
  REQUIRE(c.dense_H.has_value());
  CHECK(max_abs(*c.dense_H - diag({1.0, -1.0})) <= 1e-14);

  c = build_cayley(diag({1.0, kI}), 1.0);
  CHECK_FALSE(c.dense_H.has_value());
  CHECK_FALSE(c.warnings.empty());
  CHECK(max_abs(c.resolvent_at_i - 0.5 * kI * (DenseOperator::Identity(2, 2) - diag({1.0, kI}))) ==
        0.0);
  CHECK_THROWS_AS(build_cayley(diag({1.0}), cplx(1.0, 0.1)), PreconditionError);
}

TEST_CASE("build_cayley: structural invariants on random unitaries") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 12 + 4 * trial;
    DenseOperator U = testsupport::random_unitary(n, rng);
    cplx theta = largest_gap_base_point(unitary_angles(U));
    CayleyOperator c = build_cayley(U, theta);
    REQUIRE(c.dense_H.has_value());
    const DenseOperator I = DenseOperator::Identity(n, n);
    const cplx tb = std::conj(theta);
    CHECK(max_abs(c.resolvent_at_i - 0.5 * kI * (I - tb * U)) <= 1e-14);
    CHECK(c.asymmetry <= 1e-10 * c.condition);
    const DenseOperator& H = *c.dense_H;
    CHECK(max_abs(H - H.adjoint()) == 0.0);
    CHECK(svd_norm((I - tb * U) * H + kI * (I + tb * U)) <= 1e-8 * n);

    // spectral mapping: sorted pairing of eigenvalues
    Eigen::SelfAdjointEigenSolver<DenseOperator> es(H);
    std::vector<double> mapped;
    Eigen::ComplexEigenSolver<DenseOperator> ces(U);
    for (Eigen::Index k = 0; k < n; ++k) mapped.push_back(spectral_map(ces.eigenvalues()(k), theta));
    std::sort(mapped.begin(), mapped.end());
    for (int k = 0; k < n; ++k)
      CHECK(std::abs(mapped[static_cast<std::size_t>(k)] - es.eigenvalues()(k)) <=
            1e-8 * std::max(1.0, std::abs(mapped[static_cast<std::size_t>(k)])));
  }
}

TEST_CASE("spectral_map examples and round trip") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int i = 0; i < 10; ++i) {
    cplx theta = std::polar(1.0, ang(rng));
    CHECK(std::abs(spectral_map(-theta, theta)) <= 1e-15);
  }
  CHECK(spectral_map(kI, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  // direct formula
  cplx tp = std::polar(1.0, 0.7), th = std::polar(1.0, -1.9);
  cplx direct = -kI * (1.0 + std::conj(th) * tp) / (1.0 - std::conj(th) * tp);
  CHECK(std::abs(direct.imag()) <= 1e-15);
  CHECK(std::abs(spectral_map(tp, th) - direct.real()) <= 1e-13);
  for (int i = 0; i < 100; ++i) {
    cplx theta = std::polar(1.0, ang(rng));
    cplx t = std::polar(1.0, ang(rng));
    double l = spectral_map(t, theta);
    CHECK(std::abs(inverse_spectral_map(l, theta) - t) <= 1e-12);
    double l2 = 10.0 * std::tan(0.49 * ang(rng));
    CHECK(std::abs(spectral_map(inverse_spectral_map(l2, theta), theta) - l2) <=
          1e-12 * std::max(1.0, l2 * l2));
  }
  CHECK_THROWS_AS(spectral_map(1.0, 1.0), PreconditionError);
}

TEST_CASE("cayley_resolvent") {
  std::mt19937_64 rng(47);
  const int n = 16;
  DenseOperator U = testsupport::random_unitary(n, rng);
  cplx theta = largest_gap_base_point(unitary_angles(U));
  CayleyOperator c = build_cayley(U, theta);
  Resolvent ri = cayley_resolvent(c, kI);
  CHECK(max_abs(ri.R - c.resolvent_at_i) <= 1e-12);

  // scalar oracle
  cplx tp = std::polar(1.0, 2.2);
  Resolvent rs = cayley_resolvent(diag({tp}), 1.0, 2.0 * kI);
  CHECK(std::abs(rs.R(0, 0) - 1.0 / (spectral_map(tp, 1.0) - 2.0 * kI)) <= 1e-14);

  std::normal_distribution<double> g(0.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    cplx z(g(rng), g(rng));
    if (std::abs(z.imag()) < 0.05) z += cplx(0.0, 0.1);
    Resolvent r = cayley_resolvent(c, z);
    CHECK(svd_norm(r.R) <= (1.0 + 1e-10) / std::abs(z.imag()));
    REQUIRE(r.residual.has_value());
    CHECK(*r.residual <= 1e-8);
  }
  CHECK_THROWS_AS(cayley_resolvent(U, theta, cplx(1.0, 0.0)), PreconditionError);
}

TEST_CASE("identity (a) on the shift, commuting and random pairs") {
  Realization r = build_shift().realize(31);
  IdentityReport a = verify_identity_a(r.U, r.A, 1.0, "shift");
  CHECK(a.pass);
  CHECK(a.residual <= 1e-12 * 63);

  DenseOperator D = diag({1.0, kI, -1.0});
  a = verify_identity_a(D, diag({0.3, 2.0, -1.0}), 1.0);
  CHECK(a.residual == 0.0);

  std::mt19937_64 rng(53);
  for (int i = 0; i < 10; ++i) {
    DenseOperator U = testsupport::random_unitary(16, rng);
    DenseOperator A = testsupport::random_hermitian(16, rng);
    cplx theta = largest_gap_base_point(unitary_angles(U));
    a = verify_identity_a(U, A, theta);
    CHECK(a.residual <= 1e-12 * 16);
    json j = to_json(a);
    CHECK(j["identity"] == "a");
    CHECK(j["pass"] == true);
  }
}

TEST_CASE("identity (b) on the shift, commuting and random pairs") {
  Realization r = build_shift().realize(31);
  CayleyOperator c = build_cayley(r.U, r.spectrum(), largest_gap_base_point(r.spectrum().angles));
  IdentityReport b = verify_identity_b(c, r.A, "shift");
  CHECK(b.pass);
  MESSAGE("shift identity (b) residual " << b.residual << " cond " << b.condition);

  DenseOperator D = diag({1.0, kI, -1.0});
  b = verify_identity_b(D, diag({0.3, 2.0, -1.0}), -kI);
  CHECK(b.residual <= 1e-14);

  std::mt19937_64 rng(59);
  for (int i = 0; i < 10; ++i) {
    DenseOperator U = testsupport::random_unitary(16, rng);
    DenseOperator A = testsupport::random_hermitian(16, rng);
    cplx theta = largest_gap_base_point(unitary_angles(U));
    b = verify_identity_b(U, A, theta);
    CHECK(b.pass);
    CHECK(b.residual <= 1e-8 * b.condition);
  }
  CayleyOperator bad = build_cayley(D, 1.0);
  CHECK_THROWS_AS(verify_identity_b(bad, D), PreconditionError);
}

TEST_CASE("Mourre transfer") {
  // shift: U*[A,U] = 1 on the lattice, so 2R*R has eigenvalues (1 + l^2)/2
  Realization r = build_shift().realize(40);
  CayleyOperator c = build_cayley(r.U, r.spectrum(), 1.0);
  REQUIRE(c.dense_H.has_value());
  TransferReport t = mourre_transfer_form(c, r.form, {-1.0, 1.0}, 1.0);
  CHECK(t.pass);
  CHECK(t.rank > 0);
  CHECK(t.lhs_min_eig >= 0.5 - 1e-8);
  double lmin = 1e300;
  Eigen::SelfAdjointEigenSolver<DenseOperator> es(*c.dense_H);
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    if (std::abs(es.eigenvalues()(k)) <= 1.0) lmin = std::min(lmin, std::abs(es.eigenvalues()(k)));
  CHECK(std::abs(t.lhs_min_eig - 0.5 * (1 + lmin * lmin)) <= 1e-8);

  TransferReport v = mourre_transfer_form(c, r.form, {1e6, 2e6}, 1.0);
  CHECK(v.vacuous);
  CHECK(v.pass);

  // constructed strict estimate: F >= c_0 gives E 2R*FR E >= c_0 / 2
  std::mt19937_64 rng(61);
  const int n = 20;
  DenseOperator U = testsupport::random_unitary(n, rng);
  DenseOperator G = testsupport::random_matrix(n, rng);
  const double c0 = 0.7;
  DenseOperator F = G * G.adjoint() + c0 * DenseOperator::Identity(n, n);
  cplx theta = largest_gap_base_point(unitary_angles(U));
  CayleyOperator cu = build_cayley(U, theta);
  t = mourre_transfer_form(cu, F, {-3.0, 3.0}, c0);
  CHECK(t.pass);
  // oracle through the eigenvectors of U
  Eigen::ComplexEigenSolver<DenseOperator> ces(U);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < n; ++k)
    if (std::abs(spectral_map(ces.eigenvalues()(k) / std::abs(ces.eigenvalues()(k)), theta)) <= 3.0)
      keep.push_back(k);
  REQUIRE(static_cast<int>(keep.size()) == t.rank);
  DenseOperator V(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    Vec v0 = ces.eigenvectors().col(keep[j]);
    V.col(static_cast<Eigen::Index>(j)) = v0 / v0.norm();
  }
  Eigen::HouseholderQR<DenseOperator> qr(V);
  DenseOperator Q = qr.householderQ() * DenseOperator::Identity(n, V.cols());
  DenseOperator R = (DenseOperator::Identity(n, n) - std::conj(theta) * U).inverse();
  DenseOperator X = Q.adjoint() * (2.0 * R.adjoint() * F * R) * Q;
  Eigen::SelfAdjointEigenSolver<DenseOperator> ox(0.5 * (X + X.adjoint()));
  CHECK(std::abs(ox.eigenvalues()(0) - t.lhs_min_eig) <= 1e-8 * ox.eigenvalues()(0));
}

TEST_CASE("finite-matrix i[H,A] has zero trace on spectral subspaces") {
  std::mt19937_64 rng(67);
  DenseOperator U = testsupport::random_unitary(14, rng);
  DenseOperator A = testsupport::random_hermitian(14, rng);
  CayleyOperator c = build_cayley(U, largest_gap_base_point(unitary_angles(U)));
  TransferReport t = mourre_transfer(c, A, {-2.0, 2.0}, 1.0);
  REQUIRE(t.rank > 0);
  CHECK(t.lhs_min_eig <= 1e-10);
}

TEST_CASE("projection transport E^U(arc) = E^H(image)") {
  std::mt19937_64 rng(71);
  const int n = 18;
  DenseOperator U = testsupport::random_unitary(n, rng);
  UnitaryEigen eig = diagonalize_unitary(U);
  cplx theta = largest_gap_base_point(eig.angles);
  CayleyOperator c = build_cayley(U, eig, theta);
  const double at = std::arg(theta);
  int checked = 0;
  for (double w0 : {0.3, 1.1, 2.0, 3.5, 5.0}) {
    for (double w : {0.4, 1.0, 2.5}) {
      double lo = at + w0, hi = lo + w;
      if (w0 + w >= kTwoPi - 1e-3) continue;
      bool near = false;
      for (Eigen::Index k = 0; k < n; ++k)
        near = near || angular_distance(eig.angles(k), lo) < 1e-6 ||
               angular_distance(eig.angles(k), hi) < 1e-6;
      if (near) continue;
      SpectralWindow win = SpectralWindow::arc(lo, hi);
      CHECK(projection_transport_residual(c, win) <= 1e-8);
      ++checked;
    }
  }
  CHECK(checked >= 10);
  Interval J = arc_image(SpectralWindow::arc(at + kPi - 0.5, at + kPi + 0.5), theta);
  CHECK(J.lo == doctest::Approx(-std::tan(0.25)).epsilon(1e-12));
  CHECK(J.hi == doctest::Approx(std::tan(0.25)).epsilon(1e-12));
  CHECK_THROWS_AS(arc_image(SpectralWindow::arc(at - 0.1, at + 0.1), theta), PreconditionError);
}
