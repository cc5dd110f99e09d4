#include "mlml/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mlml/error.hpp"

namespace mlml {

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw ContractError("uniform_index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = norm2(v);
  if (!(n >= kNormEpsilon)) {
    throw DegenerateInputError("l2_normalize: norm " + std::to_string(n) +
                               " below guard");
  }
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

std::size_t ParamStore::add(std::string name, Matrix value) {
  if (contains(name)) throw ContractError("duplicate parameter slot: " + name);
  Matrix grad(value.rows(), value.cols());
  Matrix momentum(value.rows(), value.cols());
  slots_.push_back(
      Param{std::move(name), std::move(value), std::move(grad), std::move(momentum)});
  return slots_.size() - 1;
}

bool ParamStore::contains(std::string_view name) const noexcept {
  return std::any_of(slots_.begin(), slots_.end(),
                     [&](const Param& p) { return p.name == name; });
}

std::size_t ParamStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i)
    if (slots_[i].name == name) return i;
  throw ContractError("unknown parameter slot: " + std::string(name));
}

void ParamStore::zero_grad() {
  for (auto& p : slots_) p.grad.fill(0.0);
}

void ParamStore::zero_momentum() {
  for (auto& p : slots_) p.momentum.fill(0.0);
}

std::size_t ParamStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : slots_) n += p.value.size();
  return n;
}

GradBuffer ParamStore::make_grad_buffer() const {
  GradBuffer buf;
  buf.reserve(slots_.size());
  for (const auto& p : slots_) buf.emplace_back(p.value.rows(), p.value.cols());
  return buf;
}

void ParamStore::accumulate(const GradBuffer& buffer, double scale) {
  if (buffer.size() != slots_.size())
    throw DimensionError("gradient buffer slot count mismatch");
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (!buffer[i].same_shape(slots_[i].grad))
      throw DimensionError("gradient buffer shape mismatch in " + slots_[i].name);
    auto dst = slots_[i].grad.data();
    auto src = buffer[i].data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
  }
}

std::vector<Matrix> ParamStore::snapshot_values() const {
  std::vector<Matrix> out;
  out.reserve(slots_.size());
  for (const auto& p : slots_) out.push_back(p.value);
  return out;
}

void ParamStore::restore_values(const std::vector<Matrix>& values) {
  if (values.size() != slots_.size())
    throw DimensionError("snapshot slot count mismatch");
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (!values[i].same_shape(slots_[i].value))
      throw DimensionError("snapshot shape mismatch in " + slots_[i].name);
    slots_[i].value = values[i];
  }
}

namespace {

double evaluate_finite(const Objective& f, ParamStore& point) {
  point.zero_grad();
  const double v = f(point);
  if (!std::isfinite(v))
    throw EvaluationError("check_gradient: objective is not finite");
  return v;
}

}  // namespace

double check_gradient(const Objective& f, ParamStore& point, double step) {
  evaluate_finite(f, point);
  std::vector<Matrix> analytic;
  analytic.reserve(point.size());
  for (const auto& p : point) analytic.push_back(p.grad);

  double worst = 0.0;
  for (std::size_t s = 0; s < point.size(); ++s) {
    const std::size_t n = point[s].value.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double x0 = point[s].value.data()[k];
      point[s].value.data()[k] = x0 + step;
      const double fp = evaluate_finite(f, point);
      point[s].value.data()[k] = x0 - step;
      const double fm = evaluate_finite(f, point);
      point[s].value.data()[k] = x0;

      const double g_fd = (fp - fm) / (2.0 * step);
      const double g_a = analytic[s].data()[k];
      const double denom = std::max({1.0, std::abs(g_a), std::abs(g_fd)});
      worst = std::max(worst, std::abs(g_a - g_fd) / denom);
    }
  }
  point.zero_grad();
  return worst;
}

double check_gradient(const VectorObjective& f, std::span<const double> x,
                      double step) {
  ParamStore store;
  store.add("x", Matrix(1, x.size(), std::vector<double>(x.begin(), x.end())));
  Objective wrapped = [&f](ParamStore& ps) {
    auto& p = ps[0];
    return f(p.value.data(), p.grad.data());
  };
  return check_gradient(wrapped, store, step);
}

}  // namespace mlml
