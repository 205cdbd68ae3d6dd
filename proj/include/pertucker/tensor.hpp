#pragma once

// Dense K-mode tensors and the multilinear primitives used throughout the library.
//
// Storage is the canonical linearization: mode 0 varies fastest (column-major over
// modes), so entry (i_0, ..., i_{K-1}) lives at i_0 + I_0 * (i_1 + I_1 * (i_2 + ...)).
// Under this layout the mode-0 unfolding is a plain reshape, and the mode-k unfolding
// places entry (i_0..i_{K-1}) at row i_k, column sum_{q != k} i_q * J_q with
// J_q = prod_{m < q, m != k} I_m.
//
// Modes are 0-based everywhere in the C++ API.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pertucker/errors.hpp"

namespace pertucker {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Dims = std::vector<std::size_t>;

inline std::size_t product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string dims_to_string(std::span<const std::size_t> dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

/// Immutable dense tensor of doubles. Extents may be zero (an empty factor rank
/// produces an empty core); every constructor rejects non-finite entries.
class DenseTensor {
 public:
  DenseTensor() : dims_{0} {}

  /// All-zero tensor of the given shape.
  explicit DenseTensor(Dims dims) : dims_(std::move(dims)) {
    detail::require(!dims_.empty(), "tensor order must be at least 1");
    data_.assign(product(dims_), 0.0);
  }

  DenseTensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
    detail::require(!dims_.empty(), "tensor order must be at least 1");
    if (data_.size() != product(dims_)) {
      throw ArgumentError("tensor data length " + std::to_string(data_.size()) +
                          " does not match dims " + dims_to_string(dims_));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw NumericError("tensor entries must be finite");
    }
  }

  std::size_t order() const { return dims_.size(); }
  const Dims& dims() const { return dims_; }
  std::size_t dim(std::size_t k) const { return dims_.at(k); }
  std::size_t size() const { return data_.size(); }
  std::span<const double> data() const { return data_; }

  double operator()(std::span<const std::size_t> index) const { return data_[offset(index)]; }
  double at(std::initializer_list<std::size_t> index) const {
    return (*this)(std::span<const std::size_t>(index.begin(), index.size()));
  }

  std::size_t offset(std::span<const std::size_t> index) const {
    detail::require(index.size() == dims_.size(), "index arity does not match tensor order");
    std::size_t off = 0;
    std::size_t stride = 1;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      detail::require(index[k] < dims_[k], "tensor index out of range");
      off += index[k] * stride;
      stride *= dims_[k];
    }
    return off;
  }

  /// Tensor whose entries are produced by f(flat offset).
  template <class F>
  static DenseTensor generate(Dims dims, F&& f) {
    std::vector<double> data(product(dims));
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = f(i);
    return DenseTensor(std::move(dims), std::move(data));
  }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

namespace detail {

struct ModeSplit {
  std::size_t before;  // product of extents of modes < k
  std::size_t extent;  // I_k
  std::size_t after;   // product of extents of modes > k
};

inline ModeSplit split_at(const Dims& dims, std::size_t k) {
  if (k >= dims.size()) {
    throw ArgumentError("mode " + std::to_string(k) + " out of range for tensor of order " +
                        std::to_string(dims.size()));
  }
  std::span<const std::size_t> d(dims);
  return {product(d.first(k)), dims[k], product(d.subspan(k + 1))};
}

inline void require_same_dims(const DenseTensor& a, const DenseTensor& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw ArgumentError(std::string(op) + ": shape mismatch " + dims_to_string(a.dims()) + " vs " +
                        dims_to_string(b.dims()));
  }
}

}  // namespace detail

/// Mode-k unfolding: I_k rows, prod_{q != k} I_q columns.
inline Matrix unfold(const DenseTensor& x, std::size_t k) {
  const auto [before, extent, after] = detail::split_at(x.dims(), k);
  Matrix m(extent, before * after);
  const double* src = x.data().data();
  for (std::size_t b = 0; b < after; ++b) {
    for (std::size_t i = 0; i < extent; ++i) {
      const double* slab = src + before * (i + extent * b);
      for (std::size_t a = 0; a < before; ++a) m(i, a + before * b) = slab[a];
    }
  }
  return m;
}

/// Inverse of unfold for a tensor of the given dims.
inline DenseTensor fold(const Matrix& m, const Dims& dims, std::size_t k) {
  const auto [before, extent, after] = detail::split_at(dims, k);
  if (static_cast<std::size_t>(m.rows()) != extent || static_cast<std::size_t>(m.cols()) != before * after) {
    throw ArgumentError("fold: matrix shape does not match dims " + dims_to_string(dims) +
                        " at mode " + std::to_string(k));
  }
  std::vector<double> data(product(dims));
  for (std::size_t b = 0; b < after; ++b) {
    for (std::size_t i = 0; i < extent; ++i) {
      double* slab = data.data() + before * (i + extent * b);
      for (std::size_t a = 0; a < before; ++a) slab[a] = m(i, a + before * b);
    }
  }
  return DenseTensor(dims, std::move(data));
}

namespace detail {

// x ×_k op(v), op(v) = v or vᵀ. Works on the canonical layout slab by slab without
// forming the unfolding.
inline DenseTensor mode_product_impl(const DenseTensor& x, const Matrix& v, std::size_t k, bool transpose) {
  const auto [before, extent, after] = split_at(x.dims(), k);
  const std::size_t in_cols = static_cast<std::size_t>(transpose ? v.rows() : v.cols());
  const std::size_t out_extent = static_cast<std::size_t>(transpose ? v.cols() : v.rows());
  if (in_cols != extent) {
    throw ArgumentError("mode_product: matrix with " + std::to_string(in_cols) +
                        " columns cannot act on mode " + std::to_string(k) + " of extent " +
                        std::to_string(extent));
  }
  Dims out_dims = x.dims();
  out_dims[k] = out_extent;
  std::vector<double> out(before * out_extent * after, 0.0);
  if (out.empty() || extent == 0) return DenseTensor(std::move(out_dims), std::move(out));

  using Map = Eigen::Map<Matrix>;
  using ConstMap = Eigen::Map<const Matrix>;
  const auto rows = [](std::size_t n) { return static_cast<Eigen::Index>(n); };
  if (before == 1) {
    ConstMap xs(x.data().data(), rows(extent), rows(after));
    Map os(out.data(), rows(out_extent), rows(after));
    if (transpose) {
      os.noalias() = v.transpose() * xs;
    } else {
      os.noalias() = v * xs;
    }
  } else {
    for (std::size_t b = 0; b < after; ++b) {
      ConstMap xs(x.data().data() + b * before * extent, rows(before), rows(extent));
      Map os(out.data() + b * before * out_extent, rows(before), rows(out_extent));
      if (transpose) {
        os.noalias() = xs * v;
      } else {
        os.noalias() = xs * v.transpose();
      }
    }
  }
  return DenseTensor(std::move(out_dims), std::move(out));
}

}  // namespace detail

/// x ×_k v: replaces extent I_k by v.rows(). Requires v.cols() == I_k.
inline DenseTensor mode_product(const DenseTensor& x, const Matrix& v, std::size_t k) {
  return detail::mode_product_impl(x, v, k, false);
}

/// x ×_k vᵀ without materializing the transpose.
inline DenseTensor mode_product_transposed(const DenseTensor& x, const Matrix& v, std::size_t k) {
  return detail::mode_product_impl(x, v, k, true);
}

/// One factor of a multi-mode product. The matrix is borrowed.
struct ModeFactor {
  const Matrix* matrix;
  std::size_t mode;
  bool transpose = false;
};

/// Sequential mode products; modes must be distinct.
inline DenseTensor multi_mode_product(const DenseTensor& x, std::span<const ModeFactor> factors) {
  std::vector<bool> seen(x.order(), false);
  for (const auto& f : factors) {
    detail::require(f.matrix != nullptr, "multi_mode_product: null factor");
    if (f.mode >= x.order()) {
      throw ArgumentError("multi_mode_product: mode " + std::to_string(f.mode) + " out of range");
    }
    if (seen[f.mode]) throw ArgumentError("multi_mode_product: mode " + std::to_string(f.mode) + " repeated");
    seen[f.mode] = true;
  }
  DenseTensor out = x;
  for (const auto& f : factors) out = detail::mode_product_impl(out, *f.matrix, f.mode, f.transpose);
  return out;
}

inline double inner(const DenseTensor& a, const DenseTensor& b) {
  detail::require_same_dims(a, b, "inner");
  const auto da = a.data();
  const auto db = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) s += da[i] * db[i];
  return s;
}

inline double squared_norm(const DenseTensor& a) { return inner(a, a); }

inline double frobenius_norm(const DenseTensor& a) { return std::sqrt(squared_norm(a)); }

inline DenseTensor operator+(const DenseTensor& a, const DenseTensor& b) {
  detail::require_same_dims(a, b, "add");
  return DenseTensor::generate(a.dims(), [&](std::size_t i) { return a.data()[i] + b.data()[i]; });
}

inline DenseTensor operator-(const DenseTensor& a, const DenseTensor& b) {
  detail::require_same_dims(a, b, "subtract");
  return DenseTensor::generate(a.dims(), [&](std::size_t i) { return a.data()[i] - b.data()[i]; });
}

inline DenseTensor operator*(double c, const DenseTensor& a) {
  return DenseTensor::generate(a.dims(), [&](std::size_t i) { return c * a.data()[i]; });
}

/// ‖a − b‖_F² without allocating the difference.
inline double squared_distance(const DenseTensor& a, const DenseTensor& b) {
  detail::require_same_dims(a, b, "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return s;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// ms[0] ⊗ ms[1] ⊗ ... in the given order.
inline Matrix kron_chain(std::span<const Matrix> ms) {
  if (ms.empty()) throw ArgumentError("kron_chain: empty list");
  Matrix out = ms[0];
  for (std::size_t i = 1; i < ms.size(); ++i) out = kron(out, ms[i]);
  return out;
}

/// Concatenate tensors along their last mode; all other extents must agree.
inline DenseTensor concat_last(std::span<const DenseTensor> parts) {
  detail::require(!parts.empty(), "concat_last: no tensors");
  Dims dims = parts[0].dims();
  const std::size_t last = dims.size() - 1;
  std::size_t total = 0;
  std::vector<double> data;
  for (const auto& p : parts) {
    if (p.order() != dims.size() ||
        !std::equal(dims.begin(), dims.begin() + static_cast<std::ptrdiff_t>(last), p.dims().begin())) {
      throw ArgumentError("concat_last: leading extents differ: " + dims_to_string(dims) + " vs " +
                          dims_to_string(p.dims()));
    }
    total += p.dim(last);
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  dims[last] = total;
  return DenseTensor(std::move(dims), std::move(data));
}

/// Samples [begin, begin + count) along the last mode.
inline DenseTensor slice_last(const DenseTensor& x, std::size_t begin, std::size_t count) {
  const std::size_t last = x.order() - 1;
  detail::require(begin + count <= x.dim(last), "slice_last: range exceeds last extent");
  const std::size_t stride = x.size() / std::max<std::size_t>(x.dim(last), 1);
  Dims dims = x.dims();
  dims[last] = count;
  std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                           x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
  return DenseTensor(std::move(dims), std::move(data));
}

/// Adds a trailing mode of extent 1.
inline DenseTensor append_unit_mode(const DenseTensor& x) {
  Dims dims = x.dims();
  dims.push_back(1);
  return DenseTensor(std::move(dims), std::vector<double>(x.data().begin(), x.data().end()));
}

}  // namespace pertucker
