#include "mourre/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mourre {

Section Section::interior(int margin) const {
  if (margin < 0 || size - 2 * margin <= 0) {
    std::ostringstream os;
    os << "interior margin " << margin << " leaves nothing of a section of size " << size;
    throw PreconditionError(os.str());
  }
  return Section{first + margin, size - 2 * margin};
}

// ---------------------------------------------------------------------------

LatticeVector LatticeVector::delta(long site, cplx value) { return LatticeVector(site, {value}); }

LatticeVector LatticeVector::from_section(const Section& s, const Vec& v) {
  if (v.size() != s.size) throw PreconditionError("vector length does not match section");
  return LatticeVector(s.first, std::vector<cplx>(v.data(), v.data() + v.size()));
}

cplx LatticeVector::at(long site) const {
  if (site < offset_ || site > last()) return 0.0;
  return entries_[static_cast<std::size_t>(site - offset_)];
}

double LatticeVector::norm() const {
  double acc = 0.0;
  for (const auto& e : entries_) acc += std::norm(e);
  return std::sqrt(acc);
}

cplx LatticeVector::dot(const LatticeVector& other) const {
  long lo = std::max(offset_, other.offset_);
  long hi = std::min(last(), other.last());
  cplx acc = 0.0;
  for (long k = lo; k <= hi; ++k) acc += std::conj(at(k)) * other.at(k);
  return acc;
}

Vec LatticeVector::restrict_to(const Section& s, double* dropped_mass) const {
  Vec out = Vec::Zero(s.size);
  double dropped = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    long site = offset_ + static_cast<long>(i);
    if (s.contains(site))
      out(s.index(site)) = entries_[i];
    else
      dropped += std::norm(entries_[i]);
  }
  if (dropped_mass) *dropped_mass = dropped;
  return out;
}

double LatticeVector::trim(double floor) {
  std::size_t lo = 0, hi = entries_.size();
  double removed = 0.0;
  while (lo < hi && std::abs(entries_[lo]) <= floor) removed += std::norm(entries_[lo++]);
  while (hi > lo && std::abs(entries_[hi - 1]) <= floor) removed += std::norm(entries_[--hi]);
  if (lo == hi) {
    entries_.clear();
    offset_ = 0;
    return removed;
  }
  entries_ = std::vector<cplx>(entries_.begin() + static_cast<long>(lo),
                               entries_.begin() + static_cast<long>(hi));
  offset_ += static_cast<long>(lo);
  return removed;
}

void LatticeVector::scale(cplx factor) {
  for (auto& e : entries_) e *= factor;
}

void LatticeVector::axpy(cplx alpha, const LatticeVector& x) {
  if (x.empty()) return;
  if (empty()) {
    *this = x;
    scale(alpha);
    return;
  }
  long lo = std::min(offset_, x.offset_);
  long hi = std::max(last(), x.last());
  std::vector<cplx> merged(static_cast<std::size_t>(hi - lo + 1), 0.0);
  for (std::size_t i = 0; i < entries_.size(); ++i)
    merged[static_cast<std::size_t>(offset_ - lo) + i] = entries_[i];
  for (std::size_t i = 0; i < x.entries_.size(); ++i)
    merged[static_cast<std::size_t>(x.offset_ - lo) + i] += alpha * x.entries_[i];
  offset_ = lo;
  entries_ = std::move(merged);
}

// ---------------------------------------------------------------------------

LatticeOperator::LatticeOperator(std::map<int, Coefficient> bands, std::string label,
                                 bool translation_invariant)
    : impl_(std::make_shared<Impl>(Impl{std::move(bands)})),
      label_(std::move(label)),
      translation_invariant_(translation_invariant) {}

LatticeOperator LatticeOperator::identity() {
  return toeplitz({{0, 1.0}}, "identity");
}

LatticeOperator LatticeOperator::shift(int step, cplx coefficient) {
  return toeplitz({{step, coefficient}}, "shift(" + std::to_string(step) + ")");
}

LatticeOperator LatticeOperator::toeplitz(const std::map<int, cplx>& coefficients,
                                          std::string label) {
  std::map<int, Coefficient> bands;
  for (const auto& [d, c] : coefficients) {
    cplx value = c;
    bands[d] = [value](long) { return value; };
  }
  return LatticeOperator(std::move(bands), std::move(label), true);
}

int LatticeOperator::lower_bandwidth() const {
  if (!impl_ || impl_->bands.empty()) return 0;
  return std::max(-impl_->bands.begin()->first, 0);
}

int LatticeOperator::upper_bandwidth() const {
  if (!impl_ || impl_->bands.empty()) return 0;
  return std::max(impl_->bands.rbegin()->first, 0);
}

std::vector<int> LatticeOperator::offsets() const {
  std::vector<int> out;
  if (impl_)
    for (const auto& [d, c] : impl_->bands) out.push_back(d);
  return out;
}

cplx LatticeOperator::coefficient(int d, long source) const {
  if (!impl_) return 0.0;
  auto it = impl_->bands.find(d);
  return it == impl_->bands.end() ? cplx(0.0) : it->second(source);
}

LatticeVector LatticeOperator::apply(const LatticeVector& v, const ApplyLimits& limits) const {
  if (!impl_ || impl_->bands.empty() || v.empty()) return {};
  int dmin = impl_->bands.begin()->first;
  int dmax = impl_->bands.rbegin()->first;
  std::size_t size = v.support_size() + static_cast<std::size_t>(dmax - dmin);
  if (size > limits.support_cap) {
    std::ostringstream os;
    os << "truncation needed: support " << size << " exceeds cap " << limits.support_cap;
    throw TruncationNeeded(os.str());
  }
  std::vector<cplx> out(size, 0.0);
  const auto& in = v.entries();
  for (const auto& [d, c] : impl_->bands) {
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] == cplx(0.0)) continue;
      long site = v.offset() + static_cast<long>(i);
      out[i + static_cast<std::size_t>(d - dmin)] += c(site) * in[i];
    }
  }
  return LatticeVector(v.offset() + dmin, std::move(out));
}

LatticeOperator LatticeOperator::adjoint() const {
  std::map<int, Coefficient> bands;
  if (impl_)
    for (const auto& [d, c] : impl_->bands) {
      Coefficient f = c;
      int dd = d;
      bands[-d] = [f, dd](long j) { return std::conj(f(j - dd)); };
    }
  return LatticeOperator(std::move(bands), label_ + "*", translation_invariant_);
}

LatticeOperator LatticeOperator::compose(const LatticeOperator& rhs) const {
  std::map<int, std::vector<std::pair<int, std::pair<Coefficient, Coefficient>>>> terms;
  if (impl_ && rhs.impl_)
    for (const auto& [d1, s] : impl_->bands)
      for (const auto& [d2, t] : rhs.impl_->bands) terms[d1 + d2].push_back({d2, {s, t}});
  std::map<int, Coefficient> bands;
  for (auto& [d, list] : terms) {
    auto parts = list;
    bands[d] = [parts](long k) {
      cplx acc = 0.0;
      for (const auto& [d2, st] : parts) acc += st.first(k + d2) * st.second(k);
      return acc;
    };
  }
  return LatticeOperator(std::move(bands), label_ + "." + rhs.label_,
                         translation_invariant_ && rhs.translation_invariant_);
}

LatticeOperator LatticeOperator::scaled(cplx factor) const {
  std::map<int, Coefficient> bands;
  if (impl_)
    for (const auto& [d, c] : impl_->bands) {
      Coefficient f = c;
      bands[d] = [f, factor](long k) { return factor * f(k); };
    }
  return LatticeOperator(std::move(bands), label_, translation_invariant_);
}

LatticeOperator LatticeOperator::plus(const LatticeOperator& rhs) const {
  std::map<int, std::vector<Coefficient>> terms;
  if (impl_)
    for (const auto& [d, c] : impl_->bands) terms[d].push_back(c);
  if (rhs.impl_)
    for (const auto& [d, c] : rhs.impl_->bands) terms[d].push_back(c);
  std::map<int, Coefficient> bands;
  for (auto& [d, list] : terms) {
    auto fs = list;
    bands[d] = [fs](long k) {
      cplx acc = 0.0;
      for (const auto& f : fs) acc += f(k);
      return acc;
    };
  }
  return LatticeOperator(std::move(bands), label_ + "+" + rhs.label_,
                         translation_invariant_ && rhs.translation_invariant_);
}

SparseOperator LatticeOperator::sparse_section(const Section& s) const {
  std::vector<Eigen::Triplet<cplx>> trips;
  if (impl_)
    for (const auto& [d, c] : impl_->bands)
      for (int i = 0; i < s.size; ++i) {
        long target = s.site(i) + d;
        if (!s.contains(target)) continue;
        cplx value = c(s.site(i));
        if (value != cplx(0.0)) trips.emplace_back(s.index(target), i, value);
      }
  SparseOperator m(s.size, s.size);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

DenseOperator LatticeOperator::section(const Section& s) const {
  return DenseOperator(sparse_section(s));
}

SparseOperator LatticeOperator::sparse_closure(const Section& s, double twist) const {
  if (bandwidth() >= s.size) throw PreconditionError("section smaller than the band width");
  std::vector<Eigen::Triplet<cplx>> trips;
  const cplx up = std::polar(1.0, twist);
  const cplx down = std::conj(up);
  if (impl_)
    for (const auto& [d, c] : impl_->bands)
      for (int i = 0; i < s.size; ++i) {
        long target = s.site(i) + d;
        cplx phase = 1.0;
        if (target > s.last()) {
          target -= s.size;
          phase = up;
        } else if (target < s.first) {
          target += s.size;
          phase = down;
        }
        cplx value = phase * c(s.site(i));
        if (value != cplx(0.0)) trips.emplace_back(s.index(target), i, value);
      }
  SparseOperator m(s.size, s.size);
  m.setFromTriplets(trips.begin(), trips.end());  // duplicates are summed
  return m;
}

DenseOperator LatticeOperator::closure(const Section& s, double twist) const {
  return DenseOperator(sparse_closure(s, twist));
}

// ---------------------------------------------------------------------------

UnitaryOp UnitaryOp::dense(DenseOperator matrix, std::string label, double tol_per_dim) {
  if (matrix.rows() != matrix.cols()) throw PreconditionError("unitary must be square");
  const auto n = matrix.rows();
  double defect =
      (matrix.adjoint() * matrix - DenseOperator::Identity(n, n)).norm();
  if (defect > tol_per_dim * static_cast<double>(std::max<Eigen::Index>(n, 1))) {
    std::ostringstream os;
    os << "matrix '" << label << "' is not unitary: ||U*U - I||_F = " << defect;
    throw PreconditionError(os.str());
  }
  return UnitaryOp{std::move(matrix), std::move(label)};
}

UnitaryOp UnitaryOp::lattice(LatticeOperator op, std::string label) {
  if (label.empty()) label = op.label();
  LatticeOperator back = op.adjoint();
  std::vector<LatticeVector> probes = {LatticeVector::delta(0), LatticeVector::delta(7)};
  std::vector<cplx> ramp;
  for (int k = -5; k <= 5; ++k) ramp.emplace_back(1.0 / (1.0 + k * k), 0.1 * k);
  probes.emplace_back(-5, ramp);
  for (const auto& p : probes) {
    LatticeVector r = back.apply(op.apply(p));
    r.axpy(-1.0, p);
    if (r.norm() > 1e-12 * p.norm()) {
      std::ostringstream os;
      os << "lattice operator '" << label << "' is not unitary on probes: defect " << r.norm();
      throw PreconditionError(os.str());
    }
  }
  return UnitaryOp{std::move(op), std::move(label)};
}

const LatticeOperator& UnitaryOp::as_lattice() const {
  if (!is_lattice()) throw PreconditionError("'" + label + "' has no lattice realization");
  return std::get<LatticeOperator>(realization);
}

const DenseOperator& UnitaryOp::as_dense() const {
  if (is_lattice()) throw PreconditionError("'" + label + "' has no dense realization");
  return std::get<DenseOperator>(realization);
}

// ---------------------------------------------------------------------------

ConjugateOp ConjugateOp::diagonal(std::function<double(long)> values, std::string label) {
  ConjugateOp a;
  a.values_ = std::move(values);
  a.label_ = std::move(label);
  return a;
}

ConjugateOp ConjugateOp::affine(double slope, double intercept, std::string label) {
  ConjugateOp a = diagonal(
      [slope, intercept](long k) { return slope * static_cast<double>(k) + intercept; },
      std::move(label));
  a.affine_ = Affine{slope, intercept};
  return a;
}

ConjugateOp ConjugateOp::hermitian(DenseOperator matrix, Section section, std::string label) {
  if (matrix.rows() != section.size || matrix.cols() != section.size)
    throw PreconditionError("conjugate matrix does not match its section");
  double scale = std::max(matrix.norm(), 1.0);
  if ((matrix - matrix.adjoint()).norm() > 1e-12 * scale)
    throw PreconditionError("conjugate matrix '" + label + "' is not Hermitian");
  ConjugateOp a;
  a.matrix_ = std::move(matrix);
  a.matrix_section_ = section;
  a.label_ = std::move(label);
  return a;
}

double ConjugateOp::value(long site) const {
  if (!is_diagonal()) throw PreconditionError("conjugate '" + label_ + "' is not diagonal");
  return values_(site);
}

double ConjugateOp::weight(long site) const { return std::hypot(1.0, value(site)); }

double ConjugateOp::difference(long j, long k) const {
  if (affine_) return affine_->slope * static_cast<double>(j - k);
  return value(j) - value(k);
}

Eigen::VectorXd ConjugateOp::diagonal_section(const Section& s) const {
  Eigen::VectorXd d(s.size);
  for (int i = 0; i < s.size; ++i) d(i) = value(s.site(i));
  return d;
}

DenseOperator ConjugateOp::section(const Section& s) const {
  if (is_diagonal()) return diagonal_section(s).cast<cplx>().asDiagonal();
  if (s.first != matrix_section_.first || s.size != matrix_section_.size)
    throw PreconditionError("conjugate '" + label_ + "' is only defined on its own section");
  return *matrix_;
}

const Section& ConjugateOp::matrix_section() const {
  if (is_diagonal()) throw PreconditionError("diagonal conjugate has no fixed section");
  return matrix_section_;
}

const DenseOperator& ConjugateOp::matrix() const {
  if (is_diagonal()) throw PreconditionError("diagonal conjugate has no matrix");
  return *matrix_;
}

DenseOperator ConjugateOp::weight_power(const Section& s, double exponent) const {
  if (is_diagonal()) {
    Eigen::VectorXd d = diagonal_section(s);
    for (int i = 0; i < d.size(); ++i) d(i) = std::pow(1.0 + d(i) * d(i), exponent / 2.0);
    return d.cast<cplx>().asDiagonal();
  }
  Eigen::SelfAdjointEigenSolver<DenseOperator> es(section(s));
  Eigen::VectorXd w = es.eigenvalues();
  for (int i = 0; i < w.size(); ++i) w(i) = std::pow(1.0 + w(i) * w(i), exponent / 2.0);
  return es.eigenvectors() * w.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
}

// ---------------------------------------------------------------------------

double wrap_angle(double phi) {
  double r = std::fmod(phi, kTwoPi);
  if (r < 0) r += kTwoPi;
  return r;
}

double angular_distance(double a, double b) {
  double d = wrap_angle(a - b);
  return std::min(d, kTwoPi - d);
}

SpectralWindow SpectralWindow::arc(double lo, double hi, std::optional<double> excluded) {
  double w = hi - lo;
  if (!(w > 0.0) || w > kTwoPi) throw PreconditionError("window arc must satisfy 0 < hi - lo <= 2 pi");
  SpectralWindow win{lo, hi, excluded};
  if (excluded && w < kTwoPi) {
    double x = wrap_angle(*excluded - lo);
    if (x <= w) throw PreconditionError("excluded base point lies in the closed window");
  }
  return win;
}

SpectralWindow SpectralWindow::punctured(double angle) {
  return SpectralWindow{angle, angle + kTwoPi, angle};
}

bool SpectralWindow::contains_angle(double phi) const {
  double x = wrap_angle(phi - lo);
  return x > 0.0 && x < width();
}

double SpectralWindow::distance_to_boundary(double phi) const {
  return std::min(angular_distance(phi, lo), angular_distance(phi, hi));
}

}  // namespace mourre
