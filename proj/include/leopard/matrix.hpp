#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace leopard {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Rows and columns can be appended or
/// removed in place, which is how the network mutates its own shape.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(const Vector& v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  Vector row(std::size_t r) const;
  void set_row(std::size_t r, const Vector& v);

  void append_row(const Vector& v);
  void remove_row(std::size_t r);
  void append_col(const Vector& v);
  void remove_col(std::size_t c);

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

// y = W x
Vector matvec(const Matrix& w, const Vector& x);
// y = W^T x
Vector matvec_transpose(const Matrix& w, const Vector& x);
// w += scale * outer(a, b), i.e. w(i,j) += scale * a[i] * b[j]
void add_outer(Matrix& w, const Vector& a, const Vector& b, double scale = 1.0);

double dot(const Vector& a, const Vector& b);
void axpy(Vector& y, const Vector& x, double alpha);
double squared_distance(const Vector& a, const Vector& b);
double norm2(const Vector& a);
bool all_finite(const Vector& v);

}  // namespace leopard
