#ifndef OTMS_CORE_HPP_
#define OTMS_CORE_HPP_

// Shared domain types for multiview recovery under unknown local permutations:
// pixel lattice, signals, marginals, measurement and deformation operators,
// and the small numeric primitives (marginal map, threshold rule, NMSE, SNR
// noise) that every other module builds on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace otms {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

enum class ErrorCode {
  EmptySupport,
  ZeroReference,
  ZeroClean,
  DimensionMismatch,
  InvalidArgument,
  InfeasibleMarginals,
  NumericalUnderflow,
  NonFiniteIterate,
  LetterDoesNotFit,
  NoCollisionFreePlacement,
  ZeroRows,
  EmptyResult,
  Io,
  Parse,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptySupport: return "EmptySupport";
    case ErrorCode::ZeroReference: return "ZeroReference";
    case ErrorCode::ZeroClean: return "ZeroClean";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InfeasibleMarginals: return "InfeasibleMarginals";
    case ErrorCode::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorCode::NonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::LetterDoesNotFit: return "LetterDoesNotFit";
    case ErrorCode::NoCollisionFreePlacement: return "NoCollisionFreePlacement";
    case ErrorCode::ZeroRows: return "ZeroRows";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

inline void require_same_size(Index a, Index b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + " (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

// Noiseless sentinel for every snr_db parameter.
inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

inline bool is_noiseless(double snr_db) { return std::isinf(snr_db) && snr_db > 0; }

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive hash of a list of 64-bit words; used to split one seed into
// independent streams.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t w : words) h = splitmix64(h ^ splitmix64(w));
  return h;
}

inline std::uint64_t double_bits(double v) {
  std::uint64_t bits = 0;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(v));
  return bits;
}

// ---------------------------------------------------------------------------
// Grid

struct Coord {
  int row = 0;
  int col = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

// Row-major 2-D lattice. Pixel n sits at (n / cols, n % cols).
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols) : rows_(rows), cols_(cols) {
    require(rows > 0 && cols > 0, ErrorCode::InvalidArgument, "grid dimensions must be positive");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  Index size() const noexcept { return Index(rows_) * cols_; }

  Coord position(Index n) const { return {int(n / cols_), int(n % cols_)}; }
  Index index(Coord c) const { return Index(c.row) * cols_ + c.col; }
  bool contains(Coord c) const {
    return c.row >= 0 && c.row < rows_ && c.col >= 0 && c.col < cols_;
  }

  // ||l[n] - l[m]||^2
  double squared_distance(Index n, Index m) const {
    const Coord a = position(n), b = position(m);
    const double dr = a.row - b.row, dc = a.col - b.col;
    return dr * dr + dc * dc;
  }

  Matrix squared_distance_matrix() const {
    const Index n = size();
    Matrix d(n, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) d(i, j) = squared_distance(i, j);
    return d;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int rows_ = 1;
  int cols_ = 1;
};

// ---------------------------------------------------------------------------
// Signal

class Signal {
 public:
  Signal() = default;
  Signal(Grid grid, Vector values) : grid_(grid), values_(std::move(values)) {
    require_same_size(values_.size(), grid_.size(), "signal length must equal grid size");
  }
  static Signal zeros(Grid grid) { return Signal(grid, Vector::Zero(grid.size())); }

  const Grid& grid() const noexcept { return grid_; }
  const Vector& values() const noexcept { return values_; }
  Vector& values() noexcept { return values_; }
  Index size() const noexcept { return values_.size(); }
  double operator[](Index n) const { return values_[n]; }

 private:
  Grid grid_;
  Vector values_;
};

// ---------------------------------------------------------------------------
// SupportSet

class SupportSet {
 public:
  SupportSet() = default;
  explicit SupportSet(std::vector<Index> indices) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
    require(!indices_.empty(), ErrorCode::EmptySupport, "support set must be nonempty");
    require(indices_.front() >= 0, ErrorCode::InvalidArgument, "negative support index");
  }

  // Indices of strictly positive entries.
  static SupportSet of(const Vector& x) {
    std::vector<Index> idx;
    for (Index n = 0; n < x.size(); ++n)
      if (x[n] > 0) idx.push_back(n);
    return SupportSet(std::move(idx));
  }

  const std::vector<Index>& indices() const noexcept { return indices_; }
  Index size() const noexcept { return Index(indices_.size()); }
  bool contains(Index n) const { return std::binary_search(indices_.begin(), indices_.end(), n); }

  void check_within(Index n) const {
    require(indices_.back() < n, ErrorCode::DimensionMismatch, "support index outside the grid");
  }

  // Zeroes every entry outside the set.
  void project(Vector& x) const {
    Vector kept = Vector::Zero(x.size());
    for (Index n : indices_) kept[n] = x[n];
    x = std::move(kept);
  }

  friend bool operator==(const SupportSet&, const SupportSet&) = default;

 private:
  std::vector<Index> indices_;
};

// ---------------------------------------------------------------------------
// Marginal

class Marginal {
 public:
  Marginal() = default;
  explicit Marginal(Vector weights) : weights_(std::move(weights)) {
    require(weights_.size() > 0, ErrorCode::EmptySupport, "marginal has no entries");
    require((weights_.array() >= 0).all() && weights_.allFinite(), ErrorCode::InvalidArgument,
            "marginal weights must be finite and nonnegative");
    require(std::abs(weights_.sum() - 1.0) <= 1e-12, ErrorCode::InvalidArgument,
            "marginal weights must sum to one");
    for (Index n = 0; n < weights_.size(); ++n)
      if (weights_[n] > 0) support_.push_back(n);
    require(!support_.empty(), ErrorCode::EmptySupport, "marginal has empty support");
  }

  // Uniform distribution over `support` on a vector of length n.
  static Marginal uniform(Index n, const std::vector<Index>& support) {
    require(!support.empty(), ErrorCode::EmptySupport, "uniform marginal over empty set");
    Vector w = Vector::Zero(n);
    const double mass = 1.0 / double(support.size());
    for (Index k : support) w[k] = mass;
    return Marginal(std::move(w));
  }

  const Vector& weights() const noexcept { return weights_; }
  Index size() const noexcept { return weights_.size(); }
  const std::vector<Index>& support() const noexcept { return support_; }
  double operator[](Index n) const { return weights_[n]; }

  bool is_uniform() const {
    const double w0 = weights_[support_.front()];
    for (Index k : support_)
      if (std::abs(weights_[k] - w0) > 1e-15 * w0 * double(support_.size())) return false;
    return true;
  }

 private:
  Vector weights_;
  std::vector<Index> support_;
};

// ---------------------------------------------------------------------------
// Permutation: (P x)[m] = x[source[m]], i.e. P[m, source[m]] = 1.

class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<Index> source) : source_(std::move(source)) {
    require(is_valid(source_), ErrorCode::InvalidArgument, "index vector is not a permutation");
  }
  static Permutation identity(Index n) {
    std::vector<Index> s(static_cast<std::size_t>(n));
    std::iota(s.begin(), s.end(), Index{0});
    return Permutation(std::move(s));
  }

  static bool is_valid(const std::vector<Index>& source) {
    std::vector<char> seen(source.size(), 0);
    for (Index s : source) {
      if (s < 0 || s >= Index(source.size()) || seen[std::size_t(s)]) return false;
      seen[std::size_t(s)] = 1;
    }
    return true;
  }

  Index size() const noexcept { return Index(source_.size()); }
  const std::vector<Index>& source() const noexcept { return source_; }
  Index operator[](Index m) const { return source_[std::size_t(m)]; }

  Vector apply(const Vector& x) const {
    require_same_size(x.size(), size(), "permutation applied to vector of wrong length");
    Vector out(x.size());
    for (Index m = 0; m < size(); ++m) out[m] = x[source_[std::size_t(m)]];
    return out;
  }
  Vector apply_transpose(const Vector& x) const {
    require_same_size(x.size(), size(), "permutation applied to vector of wrong length");
    Vector out(x.size());
    for (Index m = 0; m < size(); ++m) out[source_[std::size_t(m)]] = x[m];
    return out;
  }
  Permutation inverse() const {
    std::vector<Index> inv(source_.size());
    for (std::size_t m = 0; m < source_.size(); ++m) inv[std::size_t(source_[m])] = Index(m);
    return Permutation(std::move(inv));
  }
  // this * other
  Permutation compose(const Permutation& other) const {
    require_same_size(size(), other.size(), "composing permutations of different size");
    std::vector<Index> s(source_.size());
    for (std::size_t m = 0; m < s.size(); ++m) s[m] = other.source_[std::size_t(source_[m])];
    return Permutation(std::move(s));
  }
  Matrix matrix() const {
    Matrix p = Matrix::Zero(size(), size());
    for (Index m = 0; m < size(); ++m) p(m, source_[std::size_t(m)]) = 1.0;
    return p;
  }
  bool is_identity() const {
    for (std::size_t m = 0; m < source_.size(); ++m)
      if (source_[m] != Index(m)) return false;
    return true;
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<Index> source_;
};

// Exact 0/1 check: each row and column holds a single 1.
inline bool is_permutation_matrix(const Matrix& p) {
  if (p.rows() != p.cols()) return false;
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j)
      if (p(i, j) != 0.0 && p(i, j) != 1.0) return false;
  return (p.rowwise().sum().array() == 1.0).all() && (p.colwise().sum().array() == 1.0).all();
}

// ---------------------------------------------------------------------------
// Operators

class LinearMeasurementOp {
 public:
  LinearMeasurementOp() = default;
  explicit LinearMeasurementOp(Matrix matrix) : matrix_(std::move(matrix)) {
    require(matrix_.rows() >= 1, ErrorCode::ZeroRows, "measurement operator needs at least one row");
  }
  static LinearMeasurementOp identity(Index n) { return LinearMeasurementOp(Matrix::Identity(n, n)); }

  const Matrix& matrix() const noexcept { return matrix_; }
  Index rows() const noexcept { return matrix_.rows(); }
  Index cols() const noexcept { return matrix_.cols(); }
  double rate() const noexcept { return double(rows()) / double(cols()); }

 private:
  Matrix matrix_;
};

class DeformationOp {
 public:
  DeformationOp() = default;
  explicit DeformationOp(Permutation perm)
      : matrix_(perm.matrix()), permutation_(std::move(perm)) {}
  explicit DeformationOp(Matrix matrix) : matrix_(std::move(matrix)) {
    require(matrix_.rows() == matrix_.cols(), ErrorCode::DimensionMismatch,
            "deformation operator must be square");
    if (is_permutation_matrix(matrix_)) {
      std::vector<Index> s(std::size_t(matrix_.rows()));
      for (Index m = 0; m < matrix_.rows(); ++m) matrix_.row(m).maxCoeff(&s[std::size_t(m)]);
      permutation_ = Permutation(std::move(s));
    }
  }
  static DeformationOp identity(Index n) { return DeformationOp(Permutation::identity(n)); }

  const Matrix& matrix() const noexcept { return matrix_; }
  Index size() const noexcept { return matrix_.rows(); }
  bool is_permutation() const noexcept { return permutation_.has_value(); }
  const Permutation& permutation() const {
    require(is_permutation(), ErrorCode::InvalidArgument, "deformation is not a permutation");
    return *permutation_;
  }

  Vector apply(const Vector& x) const {
    if (permutation_) return permutation_->apply(x);
    require_same_size(x.size(), size(), "deformation applied to vector of wrong length");
    return matrix_ * x;
  }
  Vector apply_transpose(const Vector& x) const {
    if (permutation_) return permutation_->apply_transpose(x);
    require_same_size(x.size(), size(), "deformation applied to vector of wrong length");
    return matrix_.transpose() * x;
  }

 private:
  Matrix matrix_;
  std::optional<Permutation> permutation_;
};

struct ViewData {
  Vector y;
  LinearMeasurementOp A;
  DeformationOp F;

  ViewData() = default;
  ViewData(Vector y_, LinearMeasurementOp A_, DeformationOp F_)
      : y(std::move(y_)), A(std::move(A_)), F(std::move(F_)) {
    require_same_size(y.size(), A.rows(), "measurement length must equal operator rows");
    require_same_size(A.cols(), F.size(), "measurement operator columns must equal signal length");
  }
  Index signal_size() const noexcept { return F.size(); }
};

// ---------------------------------------------------------------------------
// Marginal map and threshold rule

// Uniform distribution over the entries strictly above T.
inline Marginal reflectivity_marginal(const Vector& x, double threshold) {
  require(threshold > 0, ErrorCode::InvalidArgument, "threshold must be positive");
  std::vector<Index> above;
  for (Index n = 0; n < x.size(); ++n)
    if (x[n] > threshold) above.push_back(n);
  require(!above.empty(), ErrorCode::EmptySupport, "no entry exceeds the threshold");
  return Marginal::uniform(x.size(), above);
}

inline Marginal reflectivity_marginal(const Signal& x, double threshold) {
  return reflectivity_marginal(x.values(), threshold);
}

namespace detail {

inline std::vector<double> sorted_descending(const Vector& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end(), std::greater<>());
  return v;
}

}  // namespace detail

// Threshold that keeps the k largest entries; tied entries at the k-th value
// all pass. The returned value lies strictly between the k-th largest value
// and the next strictly smaller one.
inline double threshold_for_support(const Vector& x, Index k) {
  require(k >= 1 && k <= x.size(), ErrorCode::InvalidArgument, "support size out of range");
  const std::vector<double> v = detail::sorted_descending(x);
  const double kth = v[std::size_t(k - 1)];
  require(kth > 0, ErrorCode::EmptySupport, "k-th largest value is not positive");
  auto next = std::find_if(v.begin() + k, v.end(), [&](double e) { return e < kth; });
  double t = next == v.end() ? 0.5 * kth : 0.5 * (kth + *next);
  if (t <= 0 || t >= kth) t = 0.5 * kth;
  return t;
}

inline double threshold_for_support(const Signal& x, Index k) {
  return threshold_for_support(x.values(), k);
}

// Values at or below this are treated as vanished when thresholding iterates.
inline constexpr double kThresholdFloor = 1e-12;

// Marginal map with the k-largest threshold rule, falling back to an
// index-ordered top-k selection when the k-th largest value is below the
// numerical floor (iterates can go negative mid-run).
inline Marginal support_marginal(const Vector& x, Index k) {
  require(k >= 1 && k <= x.size(), ErrorCode::InvalidArgument, "support size out of range");
  const std::vector<double> v = detail::sorted_descending(x);
  if (v[std::size_t(k - 1)] > kThresholdFloor)
    return reflectivity_marginal(x, threshold_for_support(x, k));
  std::vector<Index> order(std::size_t(x.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return x[a] > x[b]; });
  order.resize(std::size_t(k));
  std::sort(order.begin(), order.end());
  return Marginal::uniform(x.size(), order);
}

// ---------------------------------------------------------------------------
// Metrics

inline double nmse(const Vector& x_hat, const Vector& x) {
  require_same_size(x_hat.size(), x.size(), "nmse arguments differ in length");
  const double ref = x.squaredNorm();
  require(ref > 0, ErrorCode::ZeroReference, "reference signal has zero norm");
  return (x_hat - x).squaredNorm() / ref;
}

inline double nmse(const Signal& x_hat, const Signal& x) {
  require(x_hat.grid() == x.grid(), ErrorCode::DimensionMismatch, "nmse arguments on different grids");
  return nmse(x_hat.values(), x.values());
}

inline double snr_db(const Vector& clean, const Vector& noise) {
  return 10.0 * std::log10(clean.squaredNorm() / noise.squaredNorm());
}

// Gaussian noise rescaled so ||clean||^2 / ||noise||^2 = 10^(snr_db/10)
// exactly. kNoiseless yields the zero vector without touching the stream.
inline Vector noise_for_snr(const Vector& clean, double snr_db, Rng& rng) {
  const double energy = clean.squaredNorm();
  require(energy > 0, ErrorCode::ZeroClean, "clean signal has zero norm");
  if (is_noiseless(snr_db)) return Vector::Zero(clean.size());
  require(std::isfinite(snr_db), ErrorCode::InvalidArgument, "snr_db must be finite or +inf");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector noise(clean.size());
  do {
    for (Index n = 0; n < noise.size(); ++n) noise[n] = normal(rng);
  } while (noise.squaredNorm() == 0.0);
  const double target = energy / std::pow(10.0, snr_db / 10.0);
  noise *= std::sqrt(target / noise.squaredNorm());
  return noise;
}

inline void require_finite(const Vector& x, const char* what) {
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteIterate, what);
}

}  // namespace otms

#endif  // OTMS_CORE_HPP_
