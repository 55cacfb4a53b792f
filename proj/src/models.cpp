#include "mourre/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/tools/minima.hpp>
#include <unsupported/Eigen/FFT>

namespace mourre {

const UnitaryEigen& Realization::spectrum() {
  if (!eigen) eigen = diagonalize_unitary(U);
  return *eigen;
}

Realization realize_lattice(const LatticeOperator& U, const ConjugateOp& A, const Section& s,
                            double twist, std::string label) {
  Realization r;
  r.label = label.empty() ? U.label() : std::move(label);
  r.section = s;
  r.U = U.closure(s, twist);
  r.A = A.section(s);
  LatticeOperator C = commutator(A, U);
  r.commutator = C.section(s);
  r.form = product_section({U.adjoint(), C}, s);
  r.margin = U.bandwidth();
  if (U.translation_invariant()) r.eigen = diagonalize_closure(U, s, twist);
  return r;
}

Realization realize_dense(const DenseOperator& U, const DenseOperator& A, std::string label) {
  Realization r;
  r.label = std::move(label);
  r.section = Section{0, static_cast<int>(U.rows())};
  r.U = U;
  r.A = A;
  r.commutator = commutator(A, U);
  r.form = U.adjoint() * r.commutator;
  return r;
}

LatticeOperator diagonal_operator(const ConjugateOp& A) {
  ConjugateOp copy = A;
  std::map<int, LatticeOperator::Coefficient> bands;
  bands[0] = [copy](long k) { return cplx(copy.value(k)); };
  return LatticeOperator(std::move(bands), A.label(), false);
}

LatticeOperator local_unitary(const DenseOperator& block, long first_site, std::string label) {
  const int r = static_cast<int>(block.rows());
  if (block.cols() != r) throw PreconditionError("local unitary block must be square");
  std::map<int, LatticeOperator::Coefficient> bands;
  const long last = first_site + r - 1;
  for (int d = -(r - 1); d <= r - 1; ++d) {
    bands[d] = [block, first_site, last, d](long k) -> cplx {
      long target = k + d;
      bool in_k = k >= first_site && k <= last;
      bool in_t = target >= first_site && target <= last;
      if (in_k && in_t) return block(target - first_site, k - first_site);
      if (!in_k && d == 0) return 1.0;
      return 0.0;
    };
  }
  return LatticeOperator(std::move(bands), std::move(label), false);
}

// ---------------------------------------------------------------------------

Realization ShiftModel::realize(int K, double twist) const {
  return realize_lattice(U.as_lattice(), A, Section::centered(K), twist, "shift");
}

ShiftModel build_shift() {
  return ShiftModel{UnitaryOp::lattice(LatticeOperator::shift(1), "shift"), ConjugateOp::number()};
}

Realization DilationModel::realize(double twist) const {
  return realize_lattice(U.as_lattice(), A, Section::centered(K), twist, "dilation");
}

DilationModel build_dilation(double t, double dy, int K) {
  if (!(dy > 0.0)) throw PreconditionError("dilation grid step must be positive");
  if (K < 8) throw PreconditionError("dilation section needs K >= 8");
  double ratio = t / dy;
  long steps = std::lround(ratio);
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-9) {
    std::ostringstream os;
    os << "flow time " << t << " is not an integer multiple of the grid step " << dy;
    throw PreconditionError(os.str());
  }
  if (std::abs(steps) >= K) throw PreconditionError("flow time exceeds the section");
  DilationModel d;
  d.dy = dy;
  d.steps = static_cast<int>(steps);
  d.t = static_cast<double>(steps) * dy;
  d.K = K;
  d.U = UnitaryOp::lattice(LatticeOperator::shift(-d.steps), "dilation");
  d.A = ConjugateOp::affine(-2.0 * dy, 0.0, "-g");
  return d;
}

// ---------------------------------------------------------------------------

FreeEvolutionModel build_free_evolution(double T, double Xi, int M) {
  if (!(T > 0.0)) throw PreconditionError("free evolution needs T > 0");
  if (!(Xi > 0.0)) throw PreconditionError("free evolution needs Xi > 0");
  if (M < 8) throw PreconditionError("free evolution needs M >= 8");
  FreeEvolutionModel f;
  f.T = T;
  f.Xi = Xi;
  f.M = M;
  f.dxi = 2.0 * Xi / (M - 1);
  f.xi.resize(M);
  f.symbol.resize(M);
  Vec phases(M);
  Eigen::VectorXd w(M);
  for (int i = 0; i < M; ++i) {
    double x = -Xi + i * f.dxi;
    f.xi(i) = x;
    f.symbol(i) = 2.0 * T * x * x / (x * x + 1.0);
    phases(i) = std::polar(1.0, -T * x * x);
    w(i) = x / (x * x + 1.0);
  }
  DenseOperator U = phases.asDiagonal();
  // Q = i * central difference, W = P (P^2+1)^{-1}, A = (WQ + QW)/2
  DenseOperator A = DenseOperator::Zero(M, M);
  const cplx q(0.0, 1.0 / (2.0 * f.dxi));
  for (int i = 0; i + 1 < M; ++i) {
    cplx v = 0.5 * (w(i) + w(i + 1)) * q;
    A(i, i + 1) = v;
    A(i + 1, i) = -v;
  }
  f.U = UnitaryOp::dense(U, "free_evolution");
  f.A = ConjugateOp::hermitian(A, Section{0, M}, "yokoyama");
  return f;
}

Realization FreeEvolutionModel::realize() const {
  return realize_dense(U.as_dense(), A.matrix(), "free_evolution");
}

DenseOperator FreeEvolutionModel::symbol_form() const {
  return symbol.cast<cplx>().asDiagonal();
}

FreeEvolutionError free_evolution_error(const FreeEvolutionModel& model) {
  Realization r = model.realize();
  Vec v = r.form * Vec::Ones(model.M);
  FreeEvolutionError e;
  e.boundary_rows = 2;
  e.row_error.resize(model.M - 2);
  double scale = model.symbol.maxCoeff();
  for (int i = 1; i + 1 < model.M; ++i) {
    double err = std::abs(v(i) - model.symbol(i)) / scale;
    e.row_error(i - 1) = err;
    e.max_relative_error = std::max(e.max_relative_error, err);
  }
  return e;
}

// ---------------------------------------------------------------------------

RationalApproximation irrationality_proxy(double theta, double tol, long max_denominator) {
  RationalApproximation best;
  long h1 = 1, h2 = 0, k1 = 0, k2 = 1;
  double x = theta;
  for (int iter = 0; iter < 64; ++iter) {
    double a = std::floor(x);
    if (a > 1e12) break;
    long ai = static_cast<long>(a);
    long h = ai * h1 + h2;
    long k = ai * k1 + k2;
    best.p = h;
    best.q = k;
    best.error = std::abs(theta - static_cast<double>(h) / static_cast<double>(k));
    if (best.error <= tol) break;
    double frac = x - a;
    if (frac <= 0.0) break;
    x = 1.0 / frac;
    h2 = h1;
    h1 = h;
    k2 = k1;
    k1 = k;
  }
  best.small_denominator = best.error <= tol && best.q <= max_denominator;
  return best;
}

double CocycleModel::h_prime(double x) const {
  double acc = 0.0;
  for (const auto& [l, c] : h_hat) {
    if (l == 0) continue;
    cplx term = cplx(0.0, kTwoPi * l) * c * std::polar(1.0, kTwoPi * l * x);
    acc += 2.0 * term.real();
  }
  return acc;
}

double CocycleModel::f_prime(double x) const { return m + h_prime(x); }

Realization CocycleModel::realize(double twist) const {
  return realize_lattice(U.as_lattice(), P, Section::centered(K), twist, "cocycle");
}

CocycleModel build_cocycle(int m, const std::map<int, cplx>& h_hat, double theta, int K,
                           const CocycleOptions& opts) {
  if (m == 0) throw PreconditionError("cocycle degree m must be nonzero");
  if (!(theta > 0.0 && theta < 1.0)) throw PreconditionError("rotation number must lie in (0,1)");
  if (K < 8) throw PreconditionError("cocycle section needs K >= 8");
  for (const auto& [l, c] : h_hat) {
    if (l < 0) throw PreconditionError("give h_hat for l >= 0 only; h is real");
    if (l == 0 && std::abs(c.imag()) > 0.0) throw PreconditionError("h_hat[0] must be real");
  }
  CocycleModel cm;
  cm.m = m;
  cm.h_hat = h_hat;
  cm.theta = theta;
  cm.K = K;
  cm.fft_size = opts.fft_size;

  RationalApproximation ra = irrationality_proxy(theta);
  if (ra.small_denominator) {
    std::ostringstream os;
    os << "rotation number is within " << ra.error << " of " << ra.p << "/" << ra.q
       << "; ergodic averaging degrades";
    cm.warnings.push_back(os.str());
  }

  const int N = opts.fft_size;
  std::vector<cplx> samples(static_cast<std::size_t>(N));
  for (int j = 0; j < N; ++j) {
    double x = static_cast<double>(j) / N;
    double h = 0.0;
    for (const auto& [l, c] : h_hat) {
      if (l == 0)
        h += c.real();
      else
        h += 2.0 * (c * std::polar(1.0, kTwoPi * l * x)).real();
    }
    samples[static_cast<std::size_t>(j)] = std::polar(1.0, kTwoPi * (m * x + h));
  }
  Eigen::FFT<double> fft;
  std::vector<cplx> spectrum;
  fft.fwd(spectrum, samples);
  for (int l = 0; l < N; ++l) {
    int freq = l < N / 2 ? l : l - N;
    cplx c = spectrum[static_cast<std::size_t>(l)] / static_cast<double>(N);
    if (std::abs(c) <= opts.drop_floor)
      cm.tail_mass += std::norm(c);
    else
      cm.g_hat[freq] = c;
  }

  std::map<int, LatticeOperator::Coefficient> bands;
  for (const auto& [d, c] : cm.g_hat) {
    cplx gd = c;
    bands[d] = [gd, theta](long k) {
      return gd * std::polar(1.0, kTwoPi * std::fmod(static_cast<double>(k) * theta, 1.0));
    };
  }
  cm.U = UnitaryOp::lattice(LatticeOperator(std::move(bands), "cocycle", false), "cocycle");
  cm.P = ConjugateOp::affine(kTwoPi, 0.0, "P");
  return cm;
}

LatticeOperator rotation_generator() { return LatticeOperator::shift(1); }

// ---------------------------------------------------------------------------

namespace {

// Relative floor below which trailing lattice entries are dropped during
// long power chains; keeps supports from growing by the full band width.
constexpr double kChainFloor = 1e-30;

// (1/n) sum_{j<n} U^{-j} X U^j, optionally premultiplied by U*, cut to s.
// Column by column with a Horner recursion: r <- X U^j e_k + U* r.
DenseOperator averaged_section(const LatticeOperator& U, const LatticeOperator& X, int n,
                               const Section& s, bool leading_adjoint) {
  LatticeOperator Ua = U.adjoint();
  DenseOperator out(s.size, s.size);
  std::vector<LatticeVector> powers(static_cast<std::size_t>(n));
  for (int i = 0; i < s.size; ++i) {
    powers[0] = LatticeVector::delta(s.site(i));
    for (int j = 1; j < n; ++j) {
      powers[static_cast<std::size_t>(j)] = U.apply(powers[static_cast<std::size_t>(j - 1)]);
      powers[static_cast<std::size_t>(j)].trim(kChainFloor);
    }
    LatticeVector r = X.apply(powers[static_cast<std::size_t>(n - 1)]);
    for (int j = n - 2; j >= 0; --j) {
      r = Ua.apply(r);
      r.axpy(1.0, X.apply(powers[static_cast<std::size_t>(j)]));
      r.trim(kChainFloor * r.norm());
    }
    if (leading_adjoint) r = Ua.apply(r);
    out.col(i) = r.restrict_to(s) / static_cast<double>(n);
  }
  return out;
}

}  // namespace

int averaging_margin(const LatticeOperator& U, int n) { return n * std::max(U.bandwidth(), 1); }

AveragedConjugate averaged_conjugate(const LatticeOperator& U, const ConjugateOp& A, int n, int K) {
  if (n < 1) throw PreconditionError("averaging order n must be >= 1");
  int margin = averaging_margin(U, n);
  if (K - margin < 1) {
    std::ostringstream os;
    os << "section too small for " << n << "-fold conjugation: need K >= " << margin + 1;
    throw PreconditionError(os.str());
  }
  Section interior = Section::centered(K - margin);
  DenseOperator An = averaged_section(U, diagonal_operator(A), n, interior, false);
  An = 0.5 * (An + An.adjoint());
  AveragedConjugate out{ConjugateOp::hermitian(An, interior, A.label() + "_n"), interior, 0.0};
  out.lemma_residual = lemma_a_residual(U, A, n, K - margin);
  return out;
}

AveragedConjugate averaged_conjugate(const DenseOperator& U, const ConjugateOp& A,
                                     const Section& s, int n) {
  if (n < 1) throw PreconditionError("averaging order n must be >= 1");
  DenseOperator Amat = A.section(s);
  DenseOperator An = DenseOperator::Zero(s.size, s.size);
  DenseOperator P = DenseOperator::Identity(s.size, s.size);
  for (int j = 0; j < n; ++j) {
    An += P.adjoint() * Amat * P;
    P = P * U;
  }
  An /= static_cast<double>(n);
  An = 0.5 * (An + An.adjoint());
  AveragedConjugate out{ConjugateOp::hermitian(An, s, A.label() + "_n"), s, 0.0};
  out.lemma_residual = lemma_a_residual(U, Amat, n);
  return out;
}

double lemma_a_residual(const LatticeOperator& U, const ConjugateOp& A, int n, int K) {
  Section interior = Section::centered(K);
  const int bw = std::max(U.bandwidth(), 1);
  Section ext = Section::centered(K + bw);
  DenseOperator An = averaged_section(U, diagonal_operator(A), n, ext, false);
  DenseOperator Us = U.section(ext);
  DenseOperator lhs = interior_block(An * Us - Us * An, bw);
  DenseOperator rhs = averaged_section(U, commutator(A, U), n, interior, false);
  return operator_norm(DenseOperator(lhs - rhs));
}

double lemma_a_residual(const DenseOperator& U, const DenseOperator& A, int n) {
  const auto dim = U.rows();
  DenseOperator C = commutator(A, U);
  DenseOperator An = DenseOperator::Zero(dim, dim), rhs = DenseOperator::Zero(dim, dim);
  DenseOperator P = DenseOperator::Identity(dim, dim);
  for (int j = 0; j < n; ++j) {
    An += P.adjoint() * A * P;
    rhs += P.adjoint() * C * P;
    P = P * U;
  }
  An /= static_cast<double>(n);
  rhs /= static_cast<double>(n);
  return operator_norm(DenseOperator(commutator(An, U) - rhs));
}

// ---------------------------------------------------------------------------

ErgodicBound ergodic_average_bound(const std::map<int, cplx>& h_hat, double theta, int n,
                                   int grid_size) {
  if (n < 1) throw PreconditionError("averaging order n must be >= 1");
  if (grid_size < 2) throw PreconditionError("grid needs at least two points");
  auto it0 = h_hat.find(0);
  if (it0 != h_hat.end() && std::abs(it0->second) != 0.0)
    throw PreconditionError("ergodic_average_bound: h_hat[0] must vanish (mean-zero h required)");
  // averaged h' has Fourier coefficients a_l D_l with D_l the Dirichlet average
  std::vector<std::pair<int, cplx>> coeffs;
  for (const auto& [l, c] : h_hat) {
    if (l <= 0) continue;
    cplx D = 0.0;
    for (int j = 1; j <= n; ++j) D += std::polar(1.0, -kTwoPi * std::fmod(static_cast<double>(l) * j * theta, 1.0));
    D /= static_cast<double>(n);
    coeffs.emplace_back(l, cplx(0.0, kTwoPi * l) * c * D);
  }
  auto F = [&coeffs](double x) {
    double acc = 0.0;
    for (const auto& [l, a] : coeffs) acc += 2.0 * (a * std::polar(1.0, kTwoPi * l * x)).real();
    return std::abs(acc);
  };
  ErgodicBound out;
  int best = 0;
  for (int i = 0; i < grid_size; ++i) {
    double v = F(static_cast<double>(i) / grid_size);
    if (v > out.grid_sup) {
      out.grid_sup = v;
      best = i;
    }
  }
  out.sup = out.grid_sup;
  out.argmax = static_cast<double>(best) / grid_size;
  if (out.grid_sup > 0.0) {
    double h = 1.0 / grid_size;
    double lo = out.argmax - h, hi = out.argmax + h;
    auto r = boost::math::tools::brent_find_minima([&F](double x) { return -F(x); }, lo, hi,
                                                   std::numeric_limits<double>::digits);
    if (-r.second > out.sup) {
      out.sup = -r.second;
      out.argmax = r.first;
    }
  }
  RationalApproximation ra = irrationality_proxy(theta);
  if (ra.small_denominator) {
    std::ostringstream os;
    os << "rotation number is close to " << ra.p << "/" << ra.q
       << "; resonant harmonics do not average out";
    out.warnings.push_back(os.str());
  }
  return out;
}

std::optional<int> smallest_averaging_order(const std::map<int, cplx>& h_hat, double theta,
                                            int n_max, int grid_size) {
  for (int n = 1; n <= n_max; ++n)
    if (ergodic_average_bound(h_hat, theta, n, grid_size).sup < 0.5) return n;
  return std::nullopt;
}

DenseOperator averaged_form(const LatticeOperator& U, const ConjugateOp& A, int n, int K) {
  return averaged_section(U, commutator(A, U), n, Section::centered(K), true);
}

CocycleMourreConstant mourre_constant_cocycle(const CocycleModel& model, int n, int K) {
  ErgodicBound eb = ergodic_average_bound(model.h_hat, model.theta, n);
  if (!(eb.sup < 0.5)) {
    std::ostringstream os;
    os << "ergodic_average_bound precondition unmet: bound " << eb.sup << " >= 1/2 at n = " << n;
    throw PreconditionError(os.str());
  }
  ConjugateOp A = model.m > 0 ? model.P : ConjugateOp::affine(-kTwoPi, 0.0, "-P");
  CocycleMourreConstant out;
  out.n = n;
  out.K = K;
  out.ergodic_bound = eb.sup;
  out.lower_bound = kTwoPi * (std::abs(model.m) - eb.sup);
  out.min_eig = hermitian_min_eigenvalue(averaged_form(model.U.as_lattice(), A, n, K));
  double reach = 0.0;
  for (const auto& [d, c] : model.g_hat) reach = std::max(reach, std::abs(static_cast<double>(d)));
  out.tolerance = 1e-10 + kTwoPi * (1.0 + reach) * std::sqrt(model.tail_mass);
  return out;
}

}  // namespace mourre
