#include "mourre/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace mourre {

RegularityProbe RegularityProbe::lattice(const LatticeOperator& U, const ConjugateOp& A, int K,
                                         int margin) {
  if (!A.is_diagonal()) throw PreconditionError("lattice probe needs a diagonal conjugate");
  RegularityProbe p;
  p.section_ = Section::centered(K);
  p.margin_ = margin < 0 ? U.bandwidth() : margin;
  p.U_ = U.section(p.section_);
  p.C_ = commutator(A, U).section(p.section_);
  p.a_ = A.diagonal_section(p.section_);
  p.section_.interior(p.margin_);  // validates the margin
  return p;
}

RegularityProbe RegularityProbe::dense(const DenseOperator& U, const ConjugateOp& A,
                                       const Section& s, int margin) {
  RegularityProbe p;
  p.section_ = s;
  p.margin_ = margin;
  p.U_ = U;
  if (A.is_diagonal()) {
    p.a_ = A.diagonal_section(s);
    p.C_ = commutator(A, U, s);
  } else {
    p.diagonal_ = false;
    DenseOperator Am = A.section(s);
    Eigen::SelfAdjointEigenSolver<DenseOperator> es(Am);
    if (es.info() != Eigen::Success)
      throw ConvergenceError("eigen-decomposition of the conjugate operator failed", 0.0);
    p.a_ = es.eigenvalues();
    p.V_ = es.eigenvectors();
    p.C_ = commutator(Am, U);
  }
  p.section_.interior(p.margin_);
  return p;
}

DenseOperator RegularityProbe::conjugate(const DenseOperator& S, double t) const {
  const int n = section_.size;
  if (diagonal_) {
    DenseOperator out(n, n);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) out(j, k) = std::polar(1.0, -t * (a_(j) - a_(k))) * S(j, k);
    return out;
  }
  DenseOperator inner = V_.adjoint() * S * V_;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j) inner(j, k) *= std::polar(1.0, -t * (a_(j) - a_(k)));
  return V_ * inner * V_.adjoint();
}

double RegularityProbe::masked_norm(const DenseOperator& m) const {
  NormOptions opts{1e-12, 40, 60};
  return operator_norm(DenseOperator(interior_block(m, margin_)), opts);
}

double RegularityProbe::c11(double t) const {
  if (!(t > 0.0 && t <= 2.0)) throw PreconditionError("c11 integrand needs 0 < t <= 2");
  return masked_norm(DenseOperator(conjugate(U_, t) + conjugate(U_, -t) - 2.0 * U_));
}

double RegularityProbe::c1plus0(double t) const {
  if (!(t > 0.0 && t <= 2.0)) throw PreconditionError("c1plus0 integrand needs 0 < t <= 2");
  return masked_norm(DenseOperator(conjugate(C_, t) - C_));
}

double RegularityProbe::commutator_norm() const { return masked_norm(C_); }

// ---------------------------------------------------------------------------

std::vector<double> log_grid(double t_min, int n) {
  if (!(t_min > 0.0 && t_min < 1.0) || n < 2) throw PreconditionError("bad logarithmic grid");
  std::vector<double> t(static_cast<std::size_t>(n));
  const double lo = std::log(t_min);
  for (int i = 0; i < n; ++i)
    t[static_cast<std::size_t>(i)] = std::exp(lo * (1.0 - static_cast<double>(i) / (n - 1)));
  t.back() = 1.0;
  t.front() = t_min;
  return t;
}

std::string to_string(DivergenceFlag f) {
  switch (f) {
    case DivergenceFlag::converged:
      return "converged";
    case DivergenceFlag::growing:
      return "growing";
    default:
      return "inconclusive";
  }
}

IntegralEstimate log_trapezoid(const std::vector<double>& t, const std::vector<double>& f,
                               int power) {
  const std::size_t n = t.size();
  if (n < 2 || f.size() != n) throw PreconditionError("integrand and grid sizes differ");
  // integrand in u = ln t: f(t) t^{1 - power}
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = f[i] * std::pow(t[i], 1 - power);
  IntegralEstimate est;
  est.running.assign(n, 0.0);
  for (std::size_t i = n - 1; i-- > 0;) {
    double du = std::log(t[i + 1]) - std::log(t[i]);
    est.running[i] = est.running[i + 1] + 0.5 * du * (g[i] + g[i + 1]);
  }
  const double grid_part = est.running[0];
  // power-law tail f ~ c t^p below t_min from the two lowest points
  if (f[0] > 0.0 && f[1] > 0.0) {
    double p = std::log(f[1] / f[0]) / std::log(t[1] / t[0]);
    double q = p + 1 - power;  // f t^{-power} ~ c t^{q-1}
    est.tail = q > 0 ? f[0] * std::pow(t[0], 1 - power) / q
                     : std::numeric_limits<double>::infinity();
  }
  est.value = grid_part + est.tail;
  const double decade = t[0] * 10.0;
  std::size_t idx = 0;
  while (idx + 1 < n && t[idx + 1] <= decade * (1 + 1e-12)) ++idx;
  est.last_decade_share = grid_part > 0 ? (grid_part - est.running[idx]) / grid_part : 0.0;
  return est;
}

namespace {

DivergenceFlag flag_for(const IntegralEstimate& last, const IntegralEstimate* prev,
                        const RegularityOptions& opts) {
  if (!std::isfinite(last.value)) return DivergenceFlag::growing;
  double trend = 0.0;
  if (prev && last.value > 0.0) trend = (last.value - prev->value) / last.value;
  if (last.value == 0.0 && (!prev || prev->value == 0.0)) return DivergenceFlag::converged;
  bool stable = std::abs(trend) <= opts.k_tol;
  bool flat = last.last_decade_share <= opts.decade_tol;
  if (stable && flat) return DivergenceFlag::converged;
  if (trend < -opts.k_tol) return DivergenceFlag::inconclusive;
  return DivergenceFlag::growing;
}

}  // namespace

RegularityReport classify(const ProbeFactory& factory, const std::vector<double>& t_grid,
                          const std::vector<int>& K_schedule, const RegularityOptions& opts,
                          std::string label) {
  if (t_grid.size() < 16) throw PreconditionError("regularity grid needs at least 16 points");
  for (std::size_t i = 0; i + 1 < t_grid.size(); ++i)
    if (!(t_grid[i] > 0.0 && t_grid[i] < t_grid[i + 1]))
      throw PreconditionError("t grid must be increasing in (0,1]");
  if (t_grid.back() > 1.0) throw PreconditionError("t grid must lie in (0,1]");
  if (K_schedule.empty()) throw PreconditionError("empty K schedule");
  for (std::size_t i = 0; i + 1 < K_schedule.size(); ++i)
    if (K_schedule[i] >= K_schedule[i + 1]) throw PreconditionError("K schedule must increase");

  RegularityReport r;
  r.label = std::move(label);
  r.t_grid = t_grid;
  r.section_sizes = K_schedule;
  r.t_min = t_grid.front();
  for (int K : K_schedule) {
    RegularityProbe probe = factory(K);
    std::vector<double> a(t_grid.size()), b(t_grid.size());
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
      a[i] = probe.c11(t_grid[i]);
      b[i] = probe.c1plus0(t_grid[i]);
    }
    r.c11_estimates.push_back(log_trapezoid(t_grid, a, 2));
    r.c1plus0_estimates.push_back(log_trapezoid(t_grid, b, 1));
    r.c11_integrand.push_back(std::move(a));
    r.c1plus0_integrand.push_back(std::move(b));
  }
  const std::size_t last = K_schedule.size() - 1;
  const IntegralEstimate* prev11 = last > 0 ? &r.c11_estimates[last - 1] : nullptr;
  const IntegralEstimate* prev10 = last > 0 ? &r.c1plus0_estimates[last - 1] : nullptr;
  r.c11 = r.c11_estimates[last].value;
  r.c1plus0 = r.c1plus0_estimates[last].value;
  r.c11_flag = flag_for(r.c11_estimates[last], prev11, opts);
  r.c1plus0_flag = flag_for(r.c1plus0_estimates[last], prev10, opts);
  return r;
}

std::map<int, cplx> lacunary_h_hat(int max_harmonic) {
  std::map<int, cplx> h;
  for (int k = 1; (1 << k) <= max_harmonic; ++k) {
    double l = static_cast<double>(1 << k);
    // k^{-2} cos(2 pi l x) = h' with h_l = -i k^{-2} / (4 pi l)
    h[1 << k] = cplx(0.0, -1.0 / (static_cast<double>(k) * k * 4.0 * kPi * l));
  }
  return h;
}

}  // namespace mourre
