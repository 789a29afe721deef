#pragma once

// Prime-field scalar and dense matrix arithmetic.
//
// Elements are stored as uint64_t reduced modulo q. The modulus is capped at
// kMaxModulus (< 2^32) so that a product of two reduced elements fits in 64
// bits before reduction.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccm::gf {

using Elem = std::uint64_t;

inline constexpr Elem kMaxModulus = (Elem{1} << 32) - 1;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

bool is_prime(Elem n);

// Smallest prime p >= n. Throws std::overflow_error above kMaxModulus.
Elem next_prime(Elem n);

// Smallest prime at or above 2*eps*B^(2*eps) (and at least 2).
Elem admissible_modulus(std::size_t frame_size, std::size_t sparsity);

class Field {
 public:
  explicit Field(Elem modulus);

  Elem modulus() const { return q_; }
  double bits_per_symbol() const;

  Elem reduce(Elem a) const { return a % q_; }
  Elem add(Elem a, Elem b) const {
    Elem s = a + b;
    return s >= q_ ? s - q_ : s;
  }
  Elem sub(Elem a, Elem b) const { return a >= b ? a - b : a + q_ - b; }
  Elem neg(Elem a) const { return a == 0 ? 0 : q_ - a; }
  Elem mul(Elem a, Elem b) const { return (a * b) % q_; }
  Elem pow(Elem a, std::uint64_t e) const;
  // Throws std::domain_error for zero.
  Elem inv(Elem a) const;

  template <class Rng>
  Elem random(Rng& rng) const {
    std::uniform_int_distribution<Elem> dist(0, q_ - 1);
    return dist(rng);
  }
  template <class Rng>
  Elem random_nonzero(Rng& rng) const {
    std::uniform_int_distribution<Elem> dist(1, q_ - 1);
    return dist(rng);
  }

  bool operator==(const Field&) const = default;

 private:
  Elem q_;
};

using Vec = std::vector<Elem>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0) {}
  // Entries are reduced modulo the field on construction.
  Matrix(const Field& f, std::size_t rows, std::size_t cols, std::vector<Elem> entries);

  static Matrix identity(std::size_t n);
  static Matrix column(const Vec& v);

  template <class Rng>
  static Matrix random(const Field& f, std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& e : m.data_) e = f.random(rng);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  Elem& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Elem operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const Elem> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<Elem>& entries() const { return data_; }

  Matrix transpose() const;
  Matrix select_columns(std::span<const std::size_t> cols) const;
  Matrix row_block(std::size_t first, std::size_t count) const;
  Matrix col_block(std::size_t first, std::size_t count) const;
  bool is_zero() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Elem> data_;
};

Matrix mat_mul(const Field& f, const Matrix& a, const Matrix& b);
Vec mat_vec(const Field& f, const Matrix& a, std::span<const Elem> x);
Matrix mat_add(const Field& f, const Matrix& a, const Matrix& b);
Vec vec_add(const Field& f, std::span<const Elem> a, std::span<const Elem> b);
Vec vec_sub(const Field& f, std::span<const Elem> a, std::span<const Elem> b);

// Stack blocks vertically; all blocks must share a column count (cols is used
// when the list is empty).
Matrix vstack(const std::vector<Matrix>& blocks, std::size_t cols);
// Concatenate blocks horizontally; all blocks must share a row count.
Matrix hstack(const std::vector<Matrix>& blocks, std::size_t rows);

// Row echelon form with first-nonzero pivoting.
struct Echelon {
  Matrix reduced;                  // reduced row echelon form
  std::vector<std::size_t> pivots; // pivot column per nonzero row
};
Echelon echelon(const Field& f, Matrix a);

std::size_t rank(const Field& f, const Matrix& a);

// Some x with a*x == b, or nullopt when the system is inconsistent.
std::optional<Vec> solve(const Field& f, const Matrix& a, std::span<const Elem> b);

// Inverse of a square matrix, or nullopt when singular.
std::optional<Matrix> inverse(const Field& f, const Matrix& a);

// Indices of rank(a) linearly independent rows, picked greedily top-down.
std::vector<std::size_t> independent_rows(const Field& f, const Matrix& a);

std::string to_string(const Matrix& m);

}  // namespace ccm::gf
