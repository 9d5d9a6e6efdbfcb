#include "leopard/matrix.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace leopard {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m;
  for (const auto& r : rows) m.append_row(Vector(r));
  return m;
}

Matrix Matrix::row_vector(const Vector& v) {
  Matrix m;
  m.append_row(v);
  return m;
}

Vector Matrix::row(std::size_t r) const {
  return Vector(data_.begin() + r * cols_, data_.begin() + (r + 1) * cols_);
}

void Matrix::set_row(std::size_t r, const Vector& v) {
  assert(v.size() == cols_);
  std::copy(v.begin(), v.end(), data_.begin() + r * cols_);
}

void Matrix::append_row(const Vector& v) {
  if (rows_ == 0 && cols_ == 0) cols_ = v.size();
  if (v.size() != cols_) throw std::invalid_argument("append_row: width mismatch");
  data_.insert(data_.end(), v.begin(), v.end());
  ++rows_;
}

void Matrix::remove_row(std::size_t r) {
  if (r >= rows_) throw std::invalid_argument("remove_row: index out of range");
  data_.erase(data_.begin() + r * cols_, data_.begin() + (r + 1) * cols_);
  --rows_;
}

void Matrix::append_col(const Vector& v) {
  if (rows_ == 0 && cols_ == 0) {
    for (double x : v) data_.push_back(x);
    rows_ = v.size();
    cols_ = 1;
    return;
  }
  if (v.size() != rows_) throw std::invalid_argument("append_col: height mismatch");
  Vector next;
  next.reserve(rows_ * (cols_ + 1));
  for (std::size_t r = 0; r < rows_; ++r) {
    next.insert(next.end(), data_.begin() + r * cols_, data_.begin() + (r + 1) * cols_);
    next.push_back(v[r]);
  }
  data_ = std::move(next);
  ++cols_;
}

void Matrix::remove_col(std::size_t c) {
  if (c >= cols_) throw std::invalid_argument("remove_col: index out of range");
  Vector next;
  next.reserve(rows_ * (cols_ - 1));
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t j = 0; j < cols_; ++j) {
      if (j != c) next.push_back(data_[r * cols_ + j]);
    }
  }
  data_ = std::move(next);
  --cols_;
}

bool Matrix::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Vector matvec(const Matrix& w, const Vector& x) {
  if (x.size() != w.cols()) throw std::invalid_argument("matvec: dimension mismatch");
  Vector y(w.rows(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

Vector matvec_transpose(const Matrix& w, const Vector& x) {
  if (x.size() != w.rows()) throw std::invalid_argument("matvec_transpose: dimension mismatch");
  Vector y(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < w.cols(); ++j) y[j] += w(i, j) * xi;
  }
  return y;
}

void add_outer(Matrix& w, const Vector& a, const Vector& b, double scale) {
  if (a.size() != w.rows() || b.size() != w.cols())
    throw std::invalid_argument("add_outer: dimension mismatch");
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double ai = scale * a[i];
    for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) += ai * b[j];
  }
}

double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(Vector& y, const Vector& x, double alpha) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

double squared_distance(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

bool all_finite(const Vector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace leopard
