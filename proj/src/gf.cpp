#include "ccm/gf.hpp"

#include <cmath>
#include <sstream>

namespace ccm::gf {

bool is_prime(Elem n) {
  if (n < 2) return false;
  if (n % 2 == 0) return n == 2;
  for (Elem d = 3; d * d <= n; d += 2) {
    if (n % d == 0) return false;
  }
  return true;
}

Elem next_prime(Elem n) {
  if (n <= 2) return 2;
  for (Elem p = n; p <= kMaxModulus; ++p) {
    if (is_prime(p)) return p;
  }
  throw std::overflow_error("no prime modulus below 2^32 at or above " + std::to_string(n));
}

Elem admissible_modulus(std::size_t frame_size, std::size_t sparsity) {
  if (sparsity == 0) return 2;
  long double bound = 2.0L * static_cast<long double>(sparsity) *
                      std::pow(static_cast<long double>(frame_size), 2.0L * sparsity);
  if (bound > static_cast<long double>(kMaxModulus)) {
    throw std::overflow_error("field bound 2*eps*B^(2*eps) = " + std::to_string(static_cast<double>(bound)) +
                              " exceeds the supported modulus cap");
  }
  return next_prime(static_cast<Elem>(std::ceil(bound)));
}

Field::Field(Elem modulus) : q_(modulus) {
  if (modulus > kMaxModulus) throw std::invalid_argument("modulus exceeds 2^32 - 1");
  if (!is_prime(modulus)) throw std::invalid_argument("modulus " + std::to_string(modulus) + " is not prime");
}

double Field::bits_per_symbol() const { return std::log2(static_cast<double>(q_)); }

Elem Field::pow(Elem a, std::uint64_t e) const {
  Elem result = 1 % q_;
  a %= q_;
  while (e > 0) {
    if (e & 1) result = mul(result, a);
    a = mul(a, a);
    e >>= 1;
  }
  return result;
}

Elem Field::inv(Elem a) const {
  a %= q_;
  if (a == 0) throw std::domain_error("inverse of zero");
  return pow(a, q_ - 2);
}

Matrix::Matrix(const Field& f, std::size_t rows, std::size_t cols, std::vector<Elem> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows * cols) throw DimensionError("entry count does not match shape");
  for (auto& e : data_) e = f.reduce(e);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
  return m;
}

Matrix Matrix::column(const Vec& v) {
  Matrix m(v.size(), 1);
  m.data_ = v;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::select_columns(std::span<const std::size_t> cols) const {
  Matrix m(rows_, cols.size());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = 0; k < cols.size(); ++k) m(r, k) = (*this)(r, cols[k]);
  return m;
}

Matrix Matrix::row_block(std::size_t first, std::size_t count) const {
  if (first + count > rows_) throw DimensionError("row block out of range");
  Matrix m(count, cols_);
  std::copy(data_.begin() + first * cols_, data_.begin() + (first + count) * cols_, m.data_.begin());
  return m;
}

Matrix Matrix::col_block(std::size_t first, std::size_t count) const {
  if (first + count > cols_) throw DimensionError("column block out of range");
  Matrix m(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < count; ++c) m(r, c) = (*this)(r, first + c);
  return m;
}

bool Matrix::is_zero() const {
  for (auto e : data_)
    if (e != 0) return false;
  return true;
}

Matrix mat_mul(const Field& f, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("mat_mul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      Elem aik = a(i, k);
      if (aik == 0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) = f.add(c(i, j), f.mul(aik, b(k, j)));
    }
  }
  return c;
}

Vec mat_vec(const Field& f, const Matrix& a, std::span<const Elem> x) {
  if (a.cols() != x.size()) throw DimensionError("mat_vec: column count does not match vector length");
  Vec y(a.rows(), 0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Elem acc = 0;
    for (std::size_t k = 0; k < a.cols(); ++k) acc = f.add(acc, f.mul(a(i, k), x[k]));
    y[i] = acc;
  }
  return y;
}

Matrix mat_add(const Field& f, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("mat_add: shape mismatch");
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = f.add(a(i, j), b(i, j));
  return c;
}

Vec vec_add(const Field& f, std::span<const Elem> a, std::span<const Elem> b) {
  if (a.size() != b.size()) throw DimensionError("vec_add: length mismatch");
  Vec c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = f.add(a[i], b[i]);
  return c;
}

Vec vec_sub(const Field& f, std::span<const Elem> a, std::span<const Elem> b) {
  if (a.size() != b.size()) throw DimensionError("vec_sub: length mismatch");
  Vec c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = f.sub(a[i], b[i]);
  return c;
}

Matrix vstack(const std::vector<Matrix>& blocks, std::size_t cols) {
  std::size_t rows = 0;
  for (const auto& b : blocks) {
    if (b.cols() != cols) throw DimensionError("vstack: column count mismatch");
    rows += b.rows();
  }
  Matrix m(rows, cols);
  std::size_t r0 = 0;
  for (const auto& b : blocks) {
    for (std::size_t r = 0; r < b.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) m(r0 + r, c) = b(r, c);
    r0 += b.rows();
  }
  return m;
}

Matrix hstack(const std::vector<Matrix>& blocks, std::size_t rows) {
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) throw DimensionError("hstack: row count mismatch");
    cols += b.cols();
  }
  Matrix m(rows, cols);
  std::size_t c0 = 0;
  for (const auto& b : blocks) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < b.cols(); ++c) m(r, c0 + c) = b(r, c);
    c0 += b.cols();
  }
  return m;
}

Echelon echelon(const Field& f, Matrix a) {
  Echelon out;
  std::size_t pivot_row = 0;
  for (std::size_t col = 0; col < a.cols() && pivot_row < a.rows(); ++col) {
    std::size_t sel = pivot_row;
    while (sel < a.rows() && a(sel, col) == 0) ++sel;
    if (sel == a.rows()) continue;
    if (sel != pivot_row) {
      for (std::size_t c = 0; c < a.cols(); ++c) std::swap(a(sel, c), a(pivot_row, c));
    }
    Elem inv = f.inv(a(pivot_row, col));
    for (std::size_t c = col; c < a.cols(); ++c) a(pivot_row, c) = f.mul(a(pivot_row, c), inv);
    for (std::size_t r = 0; r < a.rows(); ++r) {
      if (r == pivot_row || a(r, col) == 0) continue;
      Elem factor = a(r, col);
      for (std::size_t c = col; c < a.cols(); ++c) a(r, c) = f.sub(a(r, c), f.mul(factor, a(pivot_row, c)));
    }
    out.pivots.push_back(col);
    ++pivot_row;
  }
  out.reduced = std::move(a);
  return out;
}

std::size_t rank(const Field& f, const Matrix& a) { return echelon(f, a).pivots.size(); }

std::optional<Vec> solve(const Field& f, const Matrix& a, std::span<const Elem> b) {
  if (a.rows() != b.size()) throw DimensionError("solve: right-hand side length mismatch");
  // Reduce the augmented matrix [a | b].
  Matrix aug(a.rows(), a.cols() + 1);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) aug(r, c) = a(r, c);
    aug(r, a.cols()) = f.reduce(b[r]);
  }
  Echelon e = echelon(f, std::move(aug));
  if (!e.pivots.empty() && e.pivots.back() == a.cols()) return std::nullopt;
  Vec x(a.cols(), 0);
  for (std::size_t r = 0; r < e.pivots.size(); ++r) x[e.pivots[r]] = e.reduced(r, a.cols());
  return x;
}

std::optional<Matrix> inverse(const Field& f, const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("inverse: matrix is not square");
  const std::size_t n = a.rows();
  Matrix aug = hstack({a, Matrix::identity(n)}, n);
  Echelon e = echelon(f, std::move(aug));
  if (e.pivots.size() < n || e.pivots[n - 1] != n - 1) return std::nullopt;
  return e.reduced.col_block(n, n);
}

std::vector<std::size_t> independent_rows(const Field& f, const Matrix& a) {
  // Echelon form of the transpose: pivot columns are independent rows of a.
  return echelon(f, a.transpose()).pivots;
}

std::string to_string(const Matrix& m) {
  std::ostringstream os;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    os << '[';
    for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
    os << "]\n";
  }
  return os.str();
}

}  // namespace ccm::gf
