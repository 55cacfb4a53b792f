#pragma once

// Operator model shared by every module: lattice (banded, exact on l2(Z))
// and dense (finite section) realizations, conjugate operators, windows.

#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace mourre {

using cplx = std::complex<double>;
using DenseOperator = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using SparseOperator = Eigen::SparseMatrix<cplx>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lattice application would exceed the configured support cap.
class TruncationNeeded : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside its domain (bad parameters, wrong realization).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_estimate)
      : Error(what), last_estimate_(last_estimate) {}
  double last_estimate() const { return last_estimate_; }

 private:
  double last_estimate_;
};

// ---------------------------------------------------------------------------
// Sections

/// Contiguous block of lattice sites [first, first + size).
struct Section {
  long first = 0;
  int size = 0;

  static Section centered(int K) { return Section{-static_cast<long>(K), 2 * K + 1}; }

  long site(int i) const { return first + i; }
  int index(long site) const { return static_cast<int>(site - first); }
  long last() const { return first + size - 1; }
  bool contains(long site) const { return site >= first && site <= last(); }

  /// Sub-section dropping `margin` sites at each end.
  Section interior(int margin) const;
};

// ---------------------------------------------------------------------------
// Finitely supported lattice vectors

class LatticeVector {
 public:
  LatticeVector() = default;
  LatticeVector(long offset, std::vector<cplx> entries)
      : offset_(offset), entries_(std::move(entries)) {}

  static LatticeVector delta(long site, cplx value = 1.0);
  static LatticeVector from_section(const Section& s, const Vec& v);

  long offset() const { return offset_; }
  long last() const { return offset_ + static_cast<long>(entries_.size()) - 1; }
  std::size_t support_size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<cplx>& entries() const { return entries_; }

  cplx at(long site) const;
  double norm() const;
  cplx dot(const LatticeVector& other) const;  // <this, other>, antilinear in this

  /// Dense copy on the section; entries outside the section are dropped and
  /// their squared mass returned through `dropped_mass`.
  Vec restrict_to(const Section& s, double* dropped_mass = nullptr) const;

  /// Removes leading/trailing entries of magnitude <= floor. Returns the
  /// squared l2 mass removed so callers can account for it.
  double trim(double floor);

  void scale(cplx factor);
  void axpy(cplx alpha, const LatticeVector& x);  // this += alpha * x

 private:
  long offset_ = 0;
  std::vector<cplx> entries_;
};

struct ApplyLimits {
  std::size_t support_cap = std::size_t{1} << 22;
};

// ---------------------------------------------------------------------------
// Banded lattice operators

/// Banded operator on l2(Z). Band d holds the coefficient function c_d of the
/// source site: (S e_k) = sum_d c_d(k) e_{k+d}.
class LatticeOperator {
 public:
  using Coefficient = std::function<cplx(long)>;

  LatticeOperator() = default;
  LatticeOperator(std::map<int, Coefficient> bands, std::string label,
                  bool translation_invariant = false);

  static LatticeOperator identity();
  /// (S e_k) = e_{k+step}
  static LatticeOperator shift(int step, cplx coefficient = 1.0);
  /// Constant coefficients: (S e_k) = sum_d c[d] e_{k+d}.
  static LatticeOperator toeplitz(const std::map<int, cplx>& coefficients, std::string label);

  const std::string& label() const { return label_; }
  int lower_bandwidth() const;  // max(-d, 0)
  int upper_bandwidth() const;  // max(d, 0)
  int bandwidth() const { return std::max(lower_bandwidth(), upper_bandwidth()); }
  bool translation_invariant() const { return translation_invariant_; }
  std::vector<int> offsets() const;
  cplx coefficient(int d, long source) const;

  LatticeVector apply(const LatticeVector& v, const ApplyLimits& limits = {}) const;

  LatticeOperator adjoint() const;
  /// this * rhs (rhs applied first).
  LatticeOperator compose(const LatticeOperator& rhs) const;
  LatticeOperator scaled(cplx factor) const;
  LatticeOperator plus(const LatticeOperator& rhs) const;

  /// Open-boundary section: entries with source or target outside are dropped.
  SparseOperator sparse_section(const Section& s) const;
  DenseOperator section(const Section& s) const;
  /// Twisted periodic closure: couplings leaving the block re-enter on the
  /// other side with phase e^{+-i twist}. Unitary whenever the operator is.
  DenseOperator closure(const Section& s, double twist) const;
  SparseOperator sparse_closure(const Section& s, double twist) const;

 private:
  struct Impl {
    std::map<int, Coefficient> bands;
  };
  std::shared_ptr<const Impl> impl_;
  std::string label_;
  bool translation_invariant_ = false;
};

// ---------------------------------------------------------------------------
// Unitary operators

struct UnitaryOp {
  std::variant<LatticeOperator, DenseOperator> realization;
  std::string label;

  /// Checks ||U*U - I|| <= 1e-12 n (Frobenius).
  static UnitaryOp dense(DenseOperator matrix, std::string label, double tol_per_dim = 1e-12);
  /// Checks U then U* restores deterministic probe vectors to 1e-12.
  static UnitaryOp lattice(LatticeOperator op, std::string label = {});

  bool is_lattice() const { return std::holds_alternative<LatticeOperator>(realization); }
  const LatticeOperator& as_lattice() const;
  const DenseOperator& as_dense() const;
};

// ---------------------------------------------------------------------------
// Conjugate operators

struct Affine {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Self-adjoint conjugate operator: real diagonal on the lattice or a
/// Hermitian matrix on a fixed section.
class ConjugateOp {
 public:
  static ConjugateOp diagonal(std::function<double(long)> values, std::string label);
  /// value(k) = slope * k + intercept; commutators use slope * (j - k) exactly.
  static ConjugateOp affine(double slope, double intercept, std::string label);
  static ConjugateOp number() { return affine(1.0, 0.0, "number"); }
  static ConjugateOp hermitian(DenseOperator matrix, Section section, std::string label);

  bool is_diagonal() const { return !matrix_.has_value(); }
  const std::optional<Affine>& affine_form() const { return affine_; }
  const std::string& label() const { return label_; }

  double value(long site) const;
  /// Domain weight <value> = sqrt(1 + value^2).
  double weight(long site) const;

  /// Difference value(j) - value(k), exact for affine diagonals.
  double difference(long j, long k) const;

  Eigen::VectorXd diagonal_section(const Section& s) const;
  DenseOperator section(const Section& s) const;
  const Section& matrix_section() const;
  const DenseOperator& matrix() const;

  /// <A>^{-s} on the section.
  DenseOperator weight_power(const Section& s, double exponent) const;

 private:
  std::function<double(long)> values_;
  std::optional<Affine> affine_;
  std::optional<DenseOperator> matrix_;
  Section matrix_section_;
  std::string label_;
};

// ---------------------------------------------------------------------------
// Spectral windows

/// Open arc {e^{i phi} : lo < phi < hi} of the unit circle.
struct SpectralWindow {
  double lo = 0.0;
  double hi = kPi;
  std::optional<double> base_point_excluded;

  static SpectralWindow arc(double lo, double hi, std::optional<double> excluded = std::nullopt);
  /// Full circle minus a single angle.
  static SpectralWindow punctured(double angle);

  double width() const { return hi - lo; }
  bool contains_angle(double phi) const;
  bool contains(cplx z) const { return contains_angle(std::arg(z)); }
  /// Angular distance from phi to the boundary of the arc.
  double distance_to_boundary(double phi) const;
};

/// Maps an angle into [0, 2 pi).
double wrap_angle(double phi);
/// Shortest angular distance between two angles.
double angular_distance(double a, double b);

}  // namespace mourre
