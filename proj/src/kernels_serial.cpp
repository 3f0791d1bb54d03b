#include "advtext/kernels.hpp"

#include <limits>

#include "advtext/errors.hpp"

namespace advtext::kernels {

namespace {

void check_query(MatrixView matrix, std::span<const double> query) {
  if (query.size() != matrix.cols) {
    throw DimensionError("query length " + std::to_string(query.size()) +
                         " does not match matrix width " + std::to_string(matrix.cols));
  }
}

}  // namespace

namespace serial {

std::size_t nearest_row(MatrixView matrix, std::span<const double> query,
                        std::span<const std::uint8_t> skip) {
  check_query(matrix, query);
  std::size_t best = kNoRow;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    if (!skip.empty() && skip[r]) continue;
    const double* row = matrix.data.data() + r * matrix.cols;
    double dist = 0.0;
    for (std::size_t c = 0; c < matrix.cols; ++c) {
      const double diff = query[c] - row[c];
      dist += diff * diff;
    }
    if (best == kNoRow || dist < best_dist) {
      best = r;
      best_dist = dist;
    }
  }
  return best;
}

void row_dots(MatrixView matrix, std::span<const double> query, std::span<double> out) {
  check_query(matrix, query);
  if (out.size() != matrix.rows) throw DimensionError("row_dots output size mismatch");
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    const double* row = matrix.data.data() + r * matrix.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < matrix.cols; ++c) acc += row[c] * query[c];
    out[r] = acc;
  }
}

void gemm_nt(MatrixView a, MatrixView b, std::span<double> out) {
  if (a.cols != b.cols) {
    throw DimensionError("gemm_nt inner dimensions differ: " + std::to_string(a.cols) + " vs " +
                         std::to_string(b.cols));
  }
  if (out.size() != a.rows * b.rows) throw DimensionError("gemm_nt output size mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* br = b.data.data() + j * b.cols;
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      out[i * b.rows + j] = acc;
    }
  }
}

}  // namespace serial

std::size_t nearest_row(Backend backend, MatrixView matrix, std::span<const double> query,
                        std::span<const std::uint8_t> skip) {
  return backend == Backend::kSerial ? serial::nearest_row(matrix, query, skip)
                                     : parallel::nearest_row(matrix, query, skip);
}

void row_dots(Backend backend, MatrixView matrix, std::span<const double> query,
              std::span<double> out) {
  if (backend == Backend::kSerial) {
    serial::row_dots(matrix, query, out);
  } else {
    parallel::row_dots(matrix, query, out);
  }
}

void gemm_nt(Backend backend, MatrixView a, MatrixView b, std::span<double> out) {
  if (backend == Backend::kSerial) {
    serial::gemm_nt(a, b, out);
  } else {
    parallel::gemm_nt(a, b, out);
  }
}

}  // namespace advtext::kernels
