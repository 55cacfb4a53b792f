#include "mourre/lap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace mourre {

namespace {

constexpr cplx kI{0.0, 1.0};

// Lanczos basis vectors held at once are capped at this many complex entries.
constexpr double kLanczosEntries = 8.0e6;

NormOptions memory_bounded(NormOptions opts, Eigen::Index n) {
  int cap = static_cast<int>(kLanczosEntries / static_cast<double>(std::max<Eigen::Index>(n, 1)));
  opts.basis_size = std::clamp(cap, 8, opts.basis_size);
  return opts;
}

Eigen::VectorXd weights(const ConjugateOp& A, const Section& s, double exponent) {
  if (!A.is_diagonal()) throw PreconditionError("lattice weights need a diagonal conjugate");
  Eigen::VectorXd w = A.diagonal_section(s);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::pow(1.0 + w(i) * w(i), exponent / 2.0);
  return w;
}

double weighted_norm_sq(const LatticeVector& v, const ConjugateOp& A, double s) {
  double total = 0.0;
  long site = v.offset();
  for (const cplx& c : v.entries()) {
    double a = A.value(site++);
    total += std::norm(c) * std::pow(1.0 + a * a, -s);
  }
  return total;
}

double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

// ---------------------------------------------------------------------------

DeltaKernel delta_kernel(const DenseOperator& U, cplx z) {
  const double r = std::abs(z);
  if (r == 0.0) throw PreconditionError("delta kernel needs z != 0");
  if (std::abs(r - 1.0) <= 1e-12) throw PreconditionError("delta kernel needs |z| != 1");
  const DenseOperator I = DenseOperator::Identity(U.rows(), U.cols());
  const DenseOperator Us = U.adjoint();
  Eigen::PartialPivLU<DenseOperator> lu1(DenseOperator(I - z * Us));
  Eigen::PartialPivLU<DenseOperator> lu2(DenseOperator(I - Us / std::conj(z)));
  const DenseOperator G1 = lu1.solve(I);
  DeltaKernel d;
  d.delta = G1 - lu2.solve(I);
  const DenseOperator factored = (1.0 - r * r) * G1 * G1.adjoint();
  d.factorization_residual = operator_norm(DenseOperator(d.delta - factored));
  d.min_eigenvalue = hermitian_min_eigenvalue(d.delta);
  return d;
}

// ---------------------------------------------------------------------------

ClosureResolvent::ClosureResolvent(const LatticeOperator& U, cplx theta, cplx z, const Section& s,
                                   double twist) {
  if (std::abs(std::abs(theta) - 1.0) > 1e-12)
    throw PreconditionError("base point must lie on the unit circle");
  if (z.imag() == 0.0) throw PreconditionError("resolvent needs Im z != 0");
  n_ = s.size;
  const SparseOperator Uc = U.sparse_closure(s, twist);
  SparseOperator I(n_, n_);
  I.setIdentity();
  const cplx tb = std::conj(theta);
  one_minus_ = I - tb * Uc;
  auto factor = [&](cplx w) {
    auto lu = std::make_shared<LU>();
    SparseOperator M = (kI + w) * I - tb * (w - kI) * Uc;
    M.makeCompressed();
    lu->analyzePattern(M);
    lu->factorize(M);
    if (lu->info() != Eigen::Success) throw ConvergenceError("sparse LU of the resolvent failed", 0.0);
    return lu;
  };
  lu_z_ = factor(z);
  lu_zbar_ = factor(std::conj(z));
}

Vec ClosureResolvent::apply(const Vec& x) const { return -(one_minus_ * Vec(lu_z_->solve(x))); }

Vec ClosureResolvent::apply_adjoint(const Vec& x) const {
  return -(one_minus_ * Vec(lu_zbar_->solve(x)));
}

double weighted_resolvent_norm(const LatticeOperator& U, const ConjugateOp& A, cplx theta, cplx z,
                               double s, int K, const NormOptions& opts) {
  if (!(s > 0.5)) throw PreconditionError("weight exponent s must exceed 1/2");
  const Section sec = Section::centered(K);
  ClosureResolvent R(U, theta, z, sec);
  const Vec w = weights(A, sec, -s).cast<cplx>();
  return operator_norm([&](const Vec& x) { return Vec(w.cwiseProduct(R.apply(w.cwiseProduct(x)))); },
                       [&](const Vec& x) {
                         return Vec(w.cwiseProduct(R.apply_adjoint(w.cwiseProduct(x))));
                       },
                       R.dim(), memory_bounded(opts, R.dim()));
}

double resolvent_imaginary_part(const LatticeOperator& U, const ConjugateOp& A, cplx theta, cplx z,
                                double s, int K, const NormOptions& opts) {
  const Section sec = Section::centered(K);
  ClosureResolvent R(U, theta, z, sec);
  const Vec w = weights(A, sec, -s).cast<cplx>();
  double n = operator_norm([&](const Vec& x) { return Vec(w.cwiseProduct(R.apply(x))); },
                           [&](const Vec& x) { return R.apply_adjoint(w.cwiseProduct(x)); },
                           R.dim(), memory_bounded(opts, R.dim()));
  return std::abs(z.imag()) * n * n;
}

LapSweep lap_sweep(const LatticeOperator& U, const ConjugateOp& A, cplx theta,
                   const std::vector<double>& lambda_grid, double s,
                   const std::vector<double>& eps_grid, const LapOptions& opts) {
  if (!(s > 0.5)) throw PreconditionError("weight exponent s must exceed 1/2");
  if (eps_grid.empty() || lambda_grid.empty()) throw PreconditionError("empty LAP grid");
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    if (!(eps_grid[i] > 0.0)) throw PreconditionError("eps grid must be positive");
    if (i > 0 && !(eps_grid[i] < eps_grid[i - 1]))
      throw PreconditionError("eps grid must be decreasing");
  }
  LapSweep sw;
  sw.theta = theta;
  sw.s = s;
  sw.lambda_grid = lambda_grid;
  sw.eps_grid = eps_grid;
  for (double lambda : lambda_grid) {
    for (double eps : eps_grid) {
      LapCell c;
      c.lambda = lambda;
      c.eps = eps;
      const cplx z(lambda, eps);
      double k0 = std::ceil(opts.k_factor / eps);
      int K = static_cast<int>(std::min<double>(std::max<double>(opts.k_min, k0), opts.k_cap));
      for (int j = 0; j <= opts.max_doublings; ++j) {
        if (j > 0) {
          if (2L * K > opts.k_cap) break;
          K *= 2;
        }
        c.K.push_back(K);
        c.norms.push_back(weighted_resolvent_norm(U, A, theta, z, s, K, opts.norm));
        const std::size_t m = c.norms.size();
        if (m >= 2 && std::abs(c.norms[m - 1] - c.norms[m - 2]) <= opts.rel_change * c.norms[m - 1]) {
          c.stabilized = true;
          break;
        }
      }
      c.imaginary_part = resolvent_imaginary_part(U, A, theta, z, s, c.K.back(), opts.norm);
      if (c.stabilized) {
        sw.sup_bound = std::max(sw.sup_bound, c.norms.back());
      } else {
        ++sw.unstabilized;
        std::ostringstream os;
        os << "lambda " << lambda << " eps " << eps << " not stabilized by K = " << c.K.back();
        sw.warnings.push_back(os.str());
      }
      sw.cells.push_back(std::move(c));
    }
  }
  return sw;
}

double last_decade_slope(const LapSweep& sweep, std::size_t lambda_index) {
  double eps_min = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < sweep.eps_grid.size(); ++e) {
    const LapCell& c = sweep.cell(lambda_index, e);
    if (c.stabilized) eps_min = std::min(eps_min, c.eps);
  }
  std::vector<double> x, y;
  for (std::size_t e = 0; e < sweep.eps_grid.size(); ++e) {
    const LapCell& c = sweep.cell(lambda_index, e);
    if (!c.stabilized || c.eps > 10.0 * eps_min * (1 + 1e-9)) continue;
    x.push_back(std::log(c.eps));
    y.push_back(std::log(c.norms.back()));
  }
  return lsq_slope(x, y);
}

std::string to_csv(const LapSweep& sweep, const std::string& comment) {
  CsvTable t({"lambda", "eps", "K", "norm", "stabilized"});
  for (const LapCell& c : sweep.cells)
    for (std::size_t i = 0; i < c.K.size(); ++i)
      t.add_row({format_number(c.lambda), format_number(c.eps), std::to_string(c.K[i]),
                 format_number(c.norms[i]),
                 (c.stabilized && i + 1 == c.K.size()) ? "true" : "false"});
  return t.render(comment);
}

// ---------------------------------------------------------------------------

namespace {

void fill_sums(SmoothnessReport& r, const std::vector<double>& forward,
               const std::vector<double>& backward) {
  // forward[n] = term at +n (n >= 0), backward[n] = term at -n (n >= 1)
  const int nmax = static_cast<int>(forward.size()) - 1;
  std::vector<double> cumulative(static_cast<std::size_t>(nmax) + 1);
  double acc = forward[0];
  cumulative[0] = acc;
  for (int n = 1; n <= nmax; ++n) {
    acc += forward[static_cast<std::size_t>(n)] + backward[static_cast<std::size_t>(n)];
    cumulative[static_cast<std::size_t>(n)] = acc;
  }
  for (std::size_t i = 0; i < r.N_schedule.size(); ++i) {
    r.partial_sums.push_back(cumulative[static_cast<std::size_t>(r.N_schedule[i])]);
    r.tail_decrements.push_back(i == 0 ? r.partial_sums[0]
                                       : r.partial_sums[i] - r.partial_sums[i - 1]);
  }
  for (int k = 0; (2 << k) - 1 <= nmax; ++k) {
    double block = 0.0;
    for (int n = 1 << k; n < (2 << k); ++n)
      block += forward[static_cast<std::size_t>(n)] + backward[static_cast<std::size_t>(n)];
    r.dyadic_tails.push_back(block);
  }
}

void check_schedule(const std::vector<int>& N) {
  if (N.empty()) throw PreconditionError("empty N schedule");
  for (std::size_t i = 0; i < N.size(); ++i) {
    if (N[i] < 0) throw PreconditionError("N schedule must be nonnegative");
    if (i > 0 && N[i] <= N[i - 1]) throw PreconditionError("N schedule must increase");
  }
}

}  // namespace

SmoothnessReport smooth_sum(const LatticeOperator& U, const ConjugateOp& A, double s,
                            const LatticeVector& phi, const std::vector<int>& N_schedule,
                            const ApplyLimits& limits) {
  if (!(s > 0.5)) throw PreconditionError("weight exponent s must exceed 1/2");
  if (std::abs(phi.norm() - 1.0) > 1e-10) throw PreconditionError("probe vector must be normalized");
  check_schedule(N_schedule);
  SmoothnessReport r;
  r.B_label = "<" + A.label() + ">^-" + format_number(s);
  r.window = "global";
  r.N_schedule = N_schedule;
  const int nmax = N_schedule.back();
  std::vector<double> fwd(static_cast<std::size_t>(nmax) + 1), bwd(static_cast<std::size_t>(nmax) + 1);
  const LatticeOperator Ustar = U.adjoint();
  double trimmed = 0.0;
  LatticeVector v = phi, w = phi;
  fwd[0] = weighted_norm_sq(phi, A, s);
  for (int n = 1; n <= nmax; ++n) {
    v = U.apply(v, limits);
    trimmed += v.trim(1e-30);
    w = Ustar.apply(w, limits);
    trimmed += w.trim(1e-30);
    fwd[static_cast<std::size_t>(n)] = weighted_norm_sq(v, A, s);
    bwd[static_cast<std::size_t>(n)] = weighted_norm_sq(w, A, s);
  }
  fill_sums(r, fwd, bwd);
  r.notes.push_back("lattice-exact iteration; trimmed mass " + format_number(trimmed));
  return r;
}

SmoothnessReport smooth_sum(const DenseOperator& U, const DenseOperator& weight, const Vec& phi,
                            const SpectralWindow& window, const std::vector<int>& N_schedule) {
  if (phi.size() != U.rows()) throw PreconditionError("probe vector does not match the section");
  if (std::abs(phi.norm() - 1.0) > 1e-10) throw PreconditionError("probe vector must be normalized");
  check_schedule(N_schedule);
  SmoothnessReport r;
  r.B_label = "weight";
  std::ostringstream os;
  os << "[" << window.lo << "," << window.hi << "]";
  r.window = os.str();
  r.N_schedule = N_schedule;
  UnitaryEigen eig = diagonalize_unitary(U);
  Projection p = spectral_projection(eig, window, 0.0);
  // coordinates of E phi in the eigenbasis
  Vec c = eig.vectors.adjoint() * (p.E * phi);
  const DenseOperator BV = weight * eig.vectors;
  const int nmax = N_schedule.back();
  std::vector<double> fwd(static_cast<std::size_t>(nmax) + 1), bwd(static_cast<std::size_t>(nmax) + 1);
  for (int n = 0; n <= nmax; ++n) {
    Vec cp(c.size()), cm(c.size());
    for (Eigen::Index k = 0; k < c.size(); ++k) {
      cp(k) = std::polar(1.0, n * eig.angles(k)) * c(k);
      cm(k) = std::polar(1.0, -n * eig.angles(k)) * c(k);
    }
    fwd[static_cast<std::size_t>(n)] = (BV * cp).squaredNorm();
    bwd[static_cast<std::size_t>(n)] = (BV * cm).squaredNorm();
  }
  fill_sums(r, fwd, bwd);
  r.notes.push_back("dense section of size " + std::to_string(U.rows()));
  return r;
}

SmoothnessReport smooth_sum_with_fallback(const LatticeOperator& U, const ConjugateOp& A, double s,
                                          const LatticeVector& phi,
                                          const std::vector<int>& N_schedule,
                                          const Section& fallback, const ApplyLimits& limits) {
  try {
    return smooth_sum(U, A, s, phi, N_schedule, limits);
  } catch (const TruncationNeeded& e) {
    SmoothnessReport r =
        smooth_sum(U.closure(fallback, kPi), A.weight_power(fallback, -s),
                   phi.restrict_to(fallback), SpectralWindow::punctured(kPi), N_schedule);
    r.B_label = "<" + A.label() + ">^-" + format_number(s);
    r.window = "global";
    r.notes.push_back(std::string("support cap reached on the lattice path (") + e.what() +
                      "); dense closure fallback");
    return r;
  }
}

bool dyadic_tails_decrease(const SmoothnessReport& r, int k_lo, int k_hi) {
  if (k_lo < 0 || k_hi >= static_cast<int>(r.dyadic_tails.size()) || k_lo >= k_hi) return false;
  for (int k = k_lo; k < k_hi; ++k)
    if (!(r.dyadic_tails[static_cast<std::size_t>(k + 1)] < r.dyadic_tails[static_cast<std::size_t>(k)]))
      return false;
  return true;
}

double smooth_sup_disk(const DenseOperator& U, const DenseOperator& B, const SpectralWindow& window,
                       const std::vector<cplx>& z_grid, const std::vector<Vec>& probes) {
  for (cplx z : z_grid)
    if (!(std::abs(z) <= 1.0 - 1e-3)) throw PreconditionError("disk grid must keep |z| <= 1 - 1e-3");
  const DenseOperator E = spectral_projection(diagonalize_unitary(U), window, 0.0).E;
  std::vector<Vec> weighted;
  for (const Vec& phi : probes) weighted.push_back(B * phi);
  double sup = 0.0;
  for (cplx z : z_grid) {
    if (z == cplx(0.0)) {
      // delta(U,0) = 1 as the limit of the factorized form
      for (const Vec& b : weighted) sup = std::max(sup, std::abs(b.dot(E * b)));
      continue;
    }
    const DenseOperator D = delta_kernel(U, z).delta * E;
    for (const Vec& b : weighted) sup = std::max(sup, std::abs(b.dot(D * b)));
  }
  return sup;
}

std::string to_csv(const SmoothnessReport& r, const std::string& comment) {
  CsvTable t({"N", "partial_sum", "tail"});
  for (std::size_t i = 0; i < r.N_schedule.size(); ++i)
    t.add_row({std::to_string(r.N_schedule[i]), format_number(r.partial_sums[i]),
               format_number(r.tail_decrements[i])});
  return t.render(comment);
}

// ---------------------------------------------------------------------------

WienerDiagnostic wiener_diagnostic(const LatticeOperator& U, const LatticeVector& phi, int N,
                                   double trim_floor) {
  if (N < 1) throw PreconditionError("wiener diagnostic needs N >= 1");
  if (std::abs(phi.norm() - 1.0) > 1e-10) throw PreconditionError("probe vector must be normalized");
  WienerDiagnostic w;
  LatticeVector v = phi;
  double acc = 0.0;
  std::vector<double> lx, ly;
  int next = 1;
  for (int n = 1; n <= N; ++n) {
    v = U.apply(v);
    w.trimmed_mass += v.trim(trim_floor);
    w.max_support = std::max(w.max_support, static_cast<double>(v.support_size()));
    const cplx c = phi.dot(v);
    acc += std::norm(c);
    if (n == next || n == N) {
      w.N.push_back(n);
      w.cesaro.push_back(acc / n);
      if (std::abs(c) > 0.0) {
        lx.push_back(std::log(static_cast<double>(n)));
        ly.push_back(std::log(std::abs(c)));
      }
      if (n == next) next *= 2;
    }
  }
  w.coeff_decay_fit = lsq_slope(lx, ly);
  return w;
}

std::string to_csv(const WienerDiagnostic& w, const std::string& comment) {
  CsvTable t({"N", "cesaro", "fit"});
  for (std::size_t i = 0; i < w.N.size(); ++i)
    t.add_row({std::to_string(w.N[i]), format_number(w.cesaro[i]), format_number(w.coeff_decay_fit)});
  return t.render(comment);
}

}  // namespace mourre
