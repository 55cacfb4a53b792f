#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/LU>

#include "mourre/lap.hpp"
#include "mourre/models.hpp"
#include "support.hpp"

using namespace mourre;
using testsupport::max_abs;
using testsupport::random_unitary;
using testsupport::svd_norm;

namespace {

const cplx kI{0.0, 1.0};
const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;

LatticeOperator planted_swap() {
  DenseOperator block(2, 2);
  block << 0.0, 1.0, 1.0, 0.0;
  return local_unitary(block, -1, "swap");
}

// (H_theta - z)^{-1} from the dense Cayley transform
DenseOperator dense_resolvent(const DenseOperator& U, cplx theta, cplx z) {
  const auto n = U.rows();
  const DenseOperator I = DenseOperator::Identity(n, n);
  const DenseOperator tU = std::conj(theta) * U;
  const DenseOperator H = -kI * (I + tU) * Eigen::PartialPivLU<DenseOperator>(I - tU).inverse();
  return Eigen::PartialPivLU<DenseOperator>(H - z * I).inverse();
}

Vec random_vec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = cplx(g(rng), g(rng));
  return v;
}

}  // namespace

TEST_CASE("delta kernel: factorization and positivity inside the disk") {
  std::mt19937_64 rng(11);
  const DenseOperator U = random_unitary(12, rng);
  std::uniform_real_distribution<double> r01(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    double r = trial < 14 ? 0.05 + 0.9 * r01(rng) : 1.1 + 2.0 * r01(rng);
    cplx z = std::polar(r, 2.0 * kPi * r01(rng));
    DeltaKernel d = delta_kernel(U, z);
    INFO("z = " << z);
    CHECK(d.factorization_residual <= 1e-10 * std::max(1.0, svd_norm(d.delta)));
    if (r < 1.0) {
      CHECK(d.min_eigenvalue >= -1e-10);
    } else {
      CHECK(hermitian_min_eigenvalue(DenseOperator(-d.delta)) >= -1e-10);
    }
  }
  DenseOperator one = DenseOperator::Identity(1, 1);
  CHECK(std::abs(delta_kernel(one, 0.5).delta(0, 0) - 3.0) < 1e-14);
  CHECK_THROWS_AS(delta_kernel(U, std::polar(1.0, 0.4)), PreconditionError);
  CHECK_THROWS_AS(delta_kernel(U, 0.0), PreconditionError);
}

TEST_CASE("delta kernel: Poisson kernel of the shift") {
  const Section s = Section::centered(80);
  const DenseOperator U = LatticeOperator::shift(1).closure(s, kPi);
  for (double r : {0.5, 0.8}) {
    DenseOperator d = delta_kernel(U, r).delta;
    int o = s.index(0);
    CHECK(std::abs(d(o, o) - 1.0) < 1e-10);
    // <e_1, delta e_0> = r, <e_-1, delta e_0> = r
    CHECK(std::abs(d(o + 1, o) - r) < 1e-10);
    CHECK(std::abs(d(o - 1, o) - r) < 1e-10);
  }
}

TEST_CASE("closure resolvent agrees with the dense Cayley resolvent") {
  std::mt19937_64 rng(5);
  const LatticeOperator U = LatticeOperator::shift(1).compose(planted_swap());
  const Section s = Section::centered(8);
  const DenseOperator Ud = U.closure(s, kPi);
  for (cplx theta : {std::polar(1.0, 0.7), std::polar(1.0, 2.1)}) {
    for (cplx z : {cplx(0.3, 0.2), cplx(-1.5, -0.05), cplx(4.0, 1.0)}) {
      ClosureResolvent R(U, theta, z, s);
      const DenseOperator Rd = dense_resolvent(Ud, theta, z);
      const Vec x = random_vec(s.size, rng);
      CHECK((R.apply(x) - Rd * x).norm() <= 1e-10 * Rd.norm() * x.norm());
      CHECK((R.apply_adjoint(x) - Rd.adjoint() * x).norm() <= 1e-10 * Rd.norm() * x.norm());
    }
  }
  CHECK_THROWS_AS(ClosureResolvent(U, 1.0, cplx(0.2, 0.0), s), PreconditionError);
  CHECK_THROWS_AS(ClosureResolvent(U, cplx(0.9), cplx(0.2, 0.1), s), PreconditionError);
}

TEST_CASE("weighted resolvent norm: dense oracle, conjugate symmetry, far bound") {
  const LatticeOperator U = LatticeOperator::shift(1);
  const ConjugateOp A = ConjugateOp::number();
  const int K = 20;
  const Section s = Section::centered(K);
  const DenseOperator W = A.weight_power(s, -0.6);
  for (cplx z : {cplx(0.0, 0.1), cplx(1.3, 0.02)}) {
    double oracle = svd_norm(W * dense_resolvent(U.closure(s, kPi), 1.0, z) * W);
    double n = weighted_resolvent_norm(U, A, 1.0, z, 0.6, K);
    CHECK(std::abs(n - oracle) <= 1e-6 * oracle);
    double nc = weighted_resolvent_norm(U, A, 1.0, std::conj(z), 0.6, K);
    CHECK(std::abs(n - nc) <= 1e-6 * n);
    // Im R(z) = eps R* R, compressed by the weights
    double im = resolvent_imaginary_part(U, A, 1.0, z, 0.6, K);
    CHECK(im <= n * (1.0 + 1e-6) + 1e-12);
    CHECK(im > 0.0);
  }
  // ||(H - z)^{-1}|| <= 1 / |Im z| and the weights are at most 1
  CHECK(weighted_resolvent_norm(U, A, 1.0, cplx(0.0, 5.0), 0.6, 200) <= 0.2 + 1e-9);
  CHECK_THROWS_AS(weighted_resolvent_norm(U, A, 1.0, cplx(0.0, 0.1), 0.5, K), PreconditionError);
}

TEST_CASE("LAP sweep: shift stays bounded, planted eigenvalue blows up like 1/eps") {
  const ConjugateOp A = ConjugateOp::number();
  const std::vector<double> eps{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  LapSweep shift = lap_sweep(LatticeOperator::shift(1), A, 1.0, {0.0, 2.0}, 0.6, eps);
  CHECK(shift.unstabilized == 0);
  CHECK(shift.cells.size() == 10);
  for (const LapCell& c : shift.cells) {
    CHECK(c.stabilized);
    CHECK(c.K.front() >= static_cast<int>(std::ceil(1.0 / c.eps)));
    for (std::size_t i = 1; i < c.K.size(); ++i) CHECK(c.K[i] == 2 * c.K[i - 1]);
  }
  double slope = last_decade_slope(shift, 0);
  MESSAGE("shift last-decade slope " << slope << ", sup " << shift.sup_bound);
  CHECK(std::abs(slope) < 0.3);
  CHECK(std::isfinite(shift.sup_bound));

  // VU e_{-1} = e_{-1}; with theta = -1 that eigenvalue sits at lambda = 0
  const LatticeOperator VU = planted_swap().compose(LatticeOperator::shift(1));
  LapSweep swap = lap_sweep(VU, A, -1.0, {0.0}, 0.6, eps);
  double swap_slope = last_decade_slope(swap, 0);
  MESSAGE("planted swap slope " << swap_slope);
  CHECK(std::abs(swap_slope + 1.0) < 0.1);

  std::string csv = to_csv(shift, "sweep");
  CHECK(csv.rfind("# sweep", 0) == 0);
  CHECK(csv.find("lambda,eps,K,norm,stabilized") != std::string::npos);

  CHECK_THROWS_AS(lap_sweep(LatticeOperator::shift(1), A, 1.0, {0.0}, 0.6, {1e-2, 1e-1}),
                  PreconditionError);
}

TEST_CASE("smooth sums: shift closed form and eigenvector control") {
  const ConjugateOp A = ConjugateOp::number();
  const double s = 0.6;
  const std::vector<int> N{1, 3, 7, 15, 31, 63, 127, 255};
  SmoothnessReport r = smooth_sum(LatticeOperator::shift(1), A, s, LatticeVector::delta(0), N);
  for (std::size_t i = 0; i < N.size(); ++i) {
    double oracle = 1.0;
    for (int n = 1; n <= N[i]; ++n) oracle += 2.0 * std::pow(1.0 + double(n) * n, -s);
    CHECK(std::abs(r.partial_sums[i] - oracle) <= 1e-12 * oracle);
  }
  CHECK(r.dyadic_tails.size() == 8);
  CHECK(dyadic_tails_decrease(r, 3, 7));

  LatticeOperator D({{0, [](long k) { return std::polar(1.0, 0.37 * static_cast<double>(k)); }}},
                    "diagonal");
  SmoothnessReport e = smooth_sum(D, A, s, LatticeVector::delta(0), N);
  for (std::size_t i = 0; i < N.size(); ++i)
    CHECK(std::abs(e.partial_sums[i] - (2.0 * N[i] + 1.0)) < 1e-9);
  CHECK_FALSE(dyadic_tails_decrease(e, 3, 7));

  CHECK_THROWS_AS(smooth_sum(LatticeOperator::shift(1), A, 0.5, LatticeVector::delta(0), N),
                  PreconditionError);
  CHECK_THROWS_AS(smooth_sum(LatticeOperator::shift(1), A, s, LatticeVector::delta(0), {4, 2}),
                  PreconditionError);
}

TEST_CASE("smooth sums: cocycle tails decrease; support cap falls back to the closure") {
  CocycleModel cm = build_cocycle(1, {{1, cplx(0.0, -1.0 / (4.0 * kPi))}}, kGolden, 32);
  const std::vector<int> N{1, 3, 7, 15, 31, 63, 127, 255};
  SmoothnessReport r = smooth_sum(cm.U.as_lattice(), cm.P, 0.6, LatticeVector::delta(0), N);
  CHECK(dyadic_tails_decrease(r, 3, 7));

  ApplyLimits tight;
  tight.support_cap = 20;
  SmoothnessReport f = smooth_sum_with_fallback(cm.U.as_lattice(), cm.P, 0.6,
                                                LatticeVector::delta(0), {1, 3, 15},
                                                Section::centered(40), tight);
  bool noted = false;
  for (const auto& n : f.notes) noted = noted || n.find("fallback") != std::string::npos;
  CHECK(noted);
  CHECK(f.partial_sums.size() == 3);
}

TEST_CASE("dense smooth sums match direct powers of U E phi") {
  std::mt19937_64 rng(3);
  const Section s = Section::centered(16);
  const DenseOperator U = LatticeOperator::shift(1).compose(planted_swap()).closure(s, kPi);
  const DenseOperator W = ConjugateOp::number().weight_power(s, -0.7);
  Vec phi = random_vec(s.size, rng);
  phi.normalize();
  const SpectralWindow w = SpectralWindow::arc(0.2, 1.5);
  SmoothnessReport r = smooth_sum(U, W, phi, w, {0, 2, 9});
  const DenseOperator E = spectral_projection(U, w).E;
  const DenseOperator Us = U.adjoint();
  double acc = (W * E * phi).squaredNorm();
  Vec fwd = E * phi, bwd = E * phi;
  std::vector<double> oracle{acc};
  for (int n = 1; n <= 9; ++n) {
    fwd = U * fwd;
    bwd = Us * bwd;
    acc += (W * fwd).squaredNorm() + (W * bwd).squaredNorm();
    if (n == 2 || n == 9) oracle.push_back(acc);
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(r.partial_sums[i] - oracle[i]) < 1e-10);
}

TEST_CASE("sup over the disk of the weighted delta kernel") {
  const Section s = Section::centered(16);
  const DenseOperator U = LatticeOperator::shift(1).closure(s, kPi);
  const DenseOperator B = ConjugateOp::number().weight_power(s, -0.6);
  const SpectralWindow w = SpectralWindow::arc(-1.0, 1.0);
  std::vector<cplx> grid{0.0, 0.5, std::polar(0.9, 1.0), std::polar(0.99, -0.3)};
  Vec e0 = Vec::Zero(s.size);
  e0(s.index(0)) = 1.0;
  double sup = smooth_sup_disk(U, B, w, grid, {e0});
  const DenseOperator E = spectral_projection(U, w).E;
  double oracle = std::abs((B * e0).dot(E * B * e0));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const DenseOperator d = delta_kernel(U, grid[i]).delta;
    oracle = std::max(oracle, std::abs((B * e0).dot(d * E * B * e0)));
  }
  CHECK(std::abs(sup - oracle) < 1e-12);
  CHECK(smooth_sup_disk(U, B, w, grid, {Vec::Zero(s.size)}) == 0.0);
  CHECK_THROWS_AS(smooth_sup_disk(U, B, w, {std::polar(0.9995, 0.1)}, {e0}), PreconditionError);
}

TEST_CASE("wiener diagnostic: identity keeps mass, shift loses it") {
  WienerDiagnostic id = wiener_diagnostic(LatticeOperator::identity(), LatticeVector::delta(0), 64);
  for (double c : id.cesaro) CHECK(std::abs(c - 1.0) < 1e-14);
  CHECK(std::abs(id.coeff_decay_fit) < 1e-12);
  WienerDiagnostic sh = wiener_diagnostic(LatticeOperator::shift(1), LatticeVector::delta(0), 100);
  CHECK(sh.N.back() == 100);
  CHECK(sh.N.size() == 8);
  for (double c : sh.cesaro) CHECK(c == 0.0);
  CHECK(std::isnan(sh.coeff_decay_fit));
  CHECK(to_csv(sh, "w").find("N,cesaro,fit") != std::string::npos);
}
