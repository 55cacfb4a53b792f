#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "mourre/models.hpp"
#include "mourre/regularity.hpp"
#include "support.hpp"

using namespace mourre;

namespace {

const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;

double shift_c11_oracle() {
  auto f = [](double t) {
    // 2(1 - cos t)/t^2 written without cancellation
    double s = std::sin(t / 2.0);
    return t == 0.0 ? 1.0 : 4.0 * s * s / (t * t);
  };
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, 10, 1e-14);
}

RegularityProbe shift_probe(int K) {
  ShiftModel sm = build_shift();
  return RegularityProbe::lattice(sm.U.as_lattice(), sm.A, K);
}

}  // namespace

TEST_CASE("shift integrands have the closed forms") {
  RegularityProbe p = shift_probe(32);
  for (double t : log_grid(1e-4, 64)) {
    CHECK(std::abs(p.c11(t) - 2.0 * (1.0 - std::cos(t))) <= 1e-10);
    CHECK(std::abs(p.c1plus0(t) - 2.0 * std::abs(std::sin(t / 2.0))) <= 1e-10);
  }
  CHECK(p.commutator_norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identity unitary gives zero integrands") {
  RegularityProbe p =
      RegularityProbe::lattice(LatticeOperator::identity(), ConjugateOp::number(), 16);
  for (double t : {1e-4, 0.01, 0.5, 1.0}) {
    CHECK(p.c11(t) == 0.0);
    CHECK(p.c1plus0(t) == 0.0);
  }
  RegularityReport r = classify(
      [](int K) {
        return RegularityProbe::lattice(LatticeOperator::identity(), ConjugateOp::number(), K);
      },
      log_grid(), {16, 32});
  CHECK(r.c11 == 0.0);
  CHECK(r.c1plus0 == 0.0);
  CHECK(r.c11_flag == DivergenceFlag::converged);
  CHECK(r.c1plus0_flag == DivergenceFlag::converged);
}

TEST_CASE("integrand precondition on t") {
  RegularityProbe p = shift_probe(8);
  CHECK_THROWS_AS(p.c11(0.0), PreconditionError);
  CHECK_THROWS_AS(p.c1plus0(-0.1), PreconditionError);
}

TEST_CASE("shift Dini integral matches the quadrature oracle") {
  const double oracle = shift_c11_oracle();
  CHECK(oracle == doctest::Approx(0.97276).epsilon(1e-4));
  RegularityReport r = classify(shift_probe, log_grid(), {32, 64, 128}, {}, "shift");
  CHECK(std::abs(r.c11 - oracle) <= 2e-3);
  CHECK(std::abs(0.5 * r.c11 - 0.4864) <= 2e-3);
  CHECK(r.c11_flag == DivergenceFlag::converged);
  CHECK(r.c1plus0_flag == DivergenceFlag::converged);
  // c1plus0 integral: int_0^1 2 sin(t/2)/t dt
  auto g = [](double t) { return t == 0.0 ? 1.0 : 2.0 * std::sin(t / 2.0) / t; };
  double oracle10 =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 10, 1e-14);
  CHECK(std::abs(r.c1plus0 - oracle10) <= 2e-3);
  // exact K-stability
  for (std::size_t k = 1; k < r.section_sizes.size(); ++k)
    for (std::size_t i = 0; i < r.t_grid.size(); ++i) {
      CHECK(std::abs(r.c11_integrand[k][i] - r.c11_integrand[0][i]) <= 1e-10);
      CHECK(std::abs(r.c1plus0_integrand[k][i] - r.c1plus0_integrand[0][i]) <= 1e-10);
    }
}

TEST_CASE("running integral is nondecreasing as grid points are added") {
  RegularityReport r = classify(shift_probe, log_grid(1e-4, 48), {24, 48});
  for (const auto& est : r.c11_estimates)
    for (std::size_t i = 0; i + 1 < est.running.size(); ++i)
      CHECK(est.running[i] >= est.running[i + 1]);
  for (const auto& est : r.c1plus0_estimates)
    for (std::size_t i = 0; i + 1 < est.running.size(); ++i)
      CHECK(est.running[i] >= est.running[i + 1]);
}

TEST_CASE("log trapezoid on power laws") {
  std::vector<double> t = log_grid(1e-4, 200);
  std::vector<double> f(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) f[i] = t[i] * t[i];
  IntegralEstimate e = log_trapezoid(t, f, 2);  // int_0^1 dt = 1
  CHECK(e.value == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(e.tail == doctest::Approx(1e-4).epsilon(1e-6));
  for (std::size_t i = 0; i < t.size(); ++i) f[i] = t[i];
  e = log_trapezoid(t, f, 2);  // int t^{-1}: divergent tail
  CHECK(std::isinf(e.value));
}

TEST_CASE("small-t slope and scaling inequality") {
  std::vector<RegularityProbe> probes = {shift_probe(24)};
  CocycleModel cm = build_cocycle(1, {{1, cplx(0.0, -1.0 / (4.0 * kPi))}}, kGolden, 24);
  probes.push_back(RegularityProbe::lattice(cm.U.as_lattice(), cm.P, 48));
  std::mt19937_64 rng(7);
  DenseOperator W = testsupport::random_unitary(20, rng);
  Section s{0, 20};
  probes.push_back(RegularityProbe::dense(W, ConjugateOp::number(), s));
  probes.push_back(RegularityProbe::dense(
      W, ConjugateOp::hermitian(testsupport::random_hermitian(20, rng), s, "rand"), s));
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const RegularityProbe& p = probes[k];
    double cn = p.commutator_norm();
    for (double t : log_grid(1e-3, 24)) {
      CHECK(p.c11(t) <= 2.0 * cn * t * (1 + 1e-10) + 1e-12);
      CHECK(p.c1plus0(t) <= 2.0 * cn + 1e-10);
      // c11(t) <= int_0^t c1plus0(2s) ds <= t sup_{s <= 2t} c1plus0(s)
      double sup2 = 0.0;
      for (int j = 1; j <= 32; ++j) sup2 = std::max(sup2, p.c1plus0(2.0 * t * j / 32.0));
      CHECK(p.c11(t) <= t * sup2 * (1 + 1e-8) + 1e-12);
    }
  }
  // for the shift the sharper form sup_{s <= t} also holds
  const RegularityProbe& p = probes[0];
  for (double t : log_grid(1e-3, 24)) CHECK(p.c11(t) <= t * p.c1plus0(t) + 1e-12);
}

TEST_CASE("lacunary cocycle is flagged as growing") {
  auto factory = [](int K) {
    CocycleModel cm = build_cocycle(1, lacunary_h_hat(K / 8), kGolden, K);
    return RegularityProbe::lattice(cm.U.as_lattice(), cm.P, K);
  };
  for (int K : {64, 128, 256}) {
    CocycleModel cm = build_cocycle(1, lacunary_h_hat(K / 8), kGolden, K);
    MESSAGE("K " << K << " bandwidth " << cm.U.as_lattice().bandwidth());
  }
  RegularityReport r = classify(factory, log_grid(), {64, 128, 256}, {}, "lacunary");
  MESSAGE("lacunary c1plus0 estimates " << r.c1plus0_estimates[0].value << " "
                                        << r.c1plus0_estimates[1].value << " "
                                        << r.c1plus0_estimates[2].value << " decade share "
                                        << r.c1plus0_estimates[2].last_decade_share);
  CHECK(r.c1plus0_estimates[2].value > r.c1plus0_estimates[1].value);
  CHECK(r.c1plus0_estimates[1].value > r.c1plus0_estimates[0].value);
  CHECK(r.c1plus0_flag == DivergenceFlag::growing);
}

TEST_CASE("classify validates its inputs") {
  CHECK_THROWS_AS(classify(shift_probe, log_grid(1e-4, 8), {16}), PreconditionError);
  CHECK_THROWS_AS(classify(shift_probe, log_grid(), {32, 16}), PreconditionError);
  CHECK_THROWS_AS(log_grid(0.0, 10), PreconditionError);
}
