#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mlml {

/// Guard below which a vector is considered to have no direction.
inline constexpr double kNormEpsilon = 1e-12;

/// Default central-difference step for gradient checks.
inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Random engine used everywhere a seed is accepted.
using Rng = std::mt19937_64;

/// Uniform index in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const noexcept;
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);

/// Scales `v` to unit Euclidean norm. Throws DegenerateInputError when
/// ||v|| < kNormEpsilon.
std::vector<double> l2_normalize(std::span<const double> v);

/// One named parameter: value plus same-shape gradient and momentum buffers.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix momentum;
};

/// Gradient buffer laid out slot-for-slot like a ParamStore.
using GradBuffer = std::vector<Matrix>;

/// Ordered collection of named parameters. Iteration order is insertion
/// order, which keeps reductions and serialization deterministic.
class ParamStore {
 public:
  /// Adds a slot; gradient and momentum start at zero. Throws ContractError on
  /// a duplicate name.
  std::size_t add(std::string name, Matrix value);

  std::size_t size() const noexcept { return slots_.size(); }
  bool contains(std::string_view name) const noexcept;
  std::size_t index_of(std::string_view name) const;

  Param& operator[](std::size_t i) { return slots_[i]; }
  const Param& operator[](std::size_t i) const { return slots_[i]; }
  Param& at(std::string_view name) { return slots_[index_of(name)]; }
  const Param& at(std::string_view name) const { return slots_[index_of(name)]; }

  auto begin() { return slots_.begin(); }
  auto end() { return slots_.end(); }
  auto begin() const { return slots_.begin(); }
  auto end() const { return slots_.end(); }

  void zero_grad();
  void zero_momentum();
  std::size_t parameter_count() const noexcept;

  GradBuffer make_grad_buffer() const;
  /// grad[i] += scale * buffer[i] for every slot.
  void accumulate(const GradBuffer& buffer, double scale = 1.0);

  /// Value arrays only; used for checkpoint comparison and best-model snapshots.
  std::vector<Matrix> snapshot_values() const;
  void restore_values(const std::vector<Matrix>& values);

 private:
  std::vector<Param> slots_;
};

/// Objective for check_gradient: returns f(point) and accumulates the analytic
/// gradient into the store's grad buffers.
using Objective = std::function<double(ParamStore&)>;

/// Maximum over all coordinates of |g_a - g_fd| / max(1, |g_a|, |g_fd|), where
/// g_fd is the central finite difference with the given step. Values of the
/// point are restored on return. Throws EvaluationError if f is non-finite at
/// any evaluated point.
double check_gradient(const Objective& f, ParamStore& point,
                      double step = kFiniteDifferenceStep);

/// Convenience form for a function of a single flat vector. `f` returns the
/// value and writes its gradient into the second argument.
using VectorObjective =
    std::function<double(std::span<const double>, std::span<double>)>;
double check_gradient(const VectorObjective& f, std::span<const double> x,
                      double step = kFiniteDifferenceStep);

}  // namespace mlml
