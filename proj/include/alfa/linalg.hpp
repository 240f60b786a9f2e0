#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "alfa/error.hpp"

namespace alfa {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    fail(ErrorCode::dimension_mismatch,
         "dot of vectors with sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Returns a / |a|. Throws degenerate when |a| is (numerically) zero.
inline Vec normalized(std::span<const double> a, double min_norm = 1e-12) {
  const double n = norm(a);
  if (!(n > min_norm) || !std::isfinite(n)) fail(ErrorCode::degenerate, "cannot normalize a zero or non-finite vector");
  Vec out(a.begin(), a.end());
  for (auto& v : out) v /= n;
  return out;
}

inline bool is_unit(std::span<const double> a, double tol = 1e-3) { return std::abs(norm(a) - 1.0) <= tol; }

// Dense row-major stack of equally sized vectors (prompt embeddings, bank rows,
// a flattened grid of local embeddings).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  template <typename T>
  static Matrix from(std::size_t r, std::size_t c, std::span<const T> values) {
    if (values.size() != r * c) fail(ErrorCode::shape_mismatch, "matrix data does not match its shape");
    Matrix m(r, c);
    for (std::size_t i = 0; i < values.size(); ++i) m.data[i] = static_cast<double>(values[i]);
    return m;
  }
};

// rows x cols field of scalars, row-major. Used for patch-level anomaly maps
// as well as full-resolution maps.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::size_t size() const { return values.size(); }
  bool same_shape(const Grid& other) const { return rows == other.rows && cols == other.cols; }

  bool operator==(const Grid&) const = default;
};

}  // namespace alfa
