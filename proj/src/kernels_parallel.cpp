#include <omp.h>

#include <limits>

#include "advtext/errors.hpp"
#include "advtext/kernels.hpp"

namespace advtext::kernels::parallel {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kMinParallelWork = 1 << 14;

}  // namespace

std::size_t nearest_row(MatrixView matrix, std::span<const double> query,
                        std::span<const std::uint8_t> skip) {
  if (query.size() != matrix.cols) {
    throw DimensionError("query length " + std::to_string(query.size()) +
                         " does not match matrix width " + std::to_string(matrix.cols));
  }
  const auto rows = static_cast<std::ptrdiff_t>(matrix.rows);
  const std::size_t cols = matrix.cols;
  std::size_t best = kNoRow;
  double best_dist = std::numeric_limits<double>::infinity();

#pragma omp parallel if (matrix.rows * cols >= kMinParallelWork)
  {
    std::size_t local_best = kNoRow;
    double local_dist = std::numeric_limits<double>::infinity();
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
      if (!skip.empty() && skip[r]) continue;
      const double* row = matrix.data.data() + r * cols;
      double dist = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double diff = query[c] - row[c];
        dist += diff * diff;
      }
      if (local_best == kNoRow || dist < local_dist) {
        local_best = static_cast<std::size_t>(r);
        local_dist = dist;
      }
    }
#pragma omp critical(advtext_nearest_row)
    {
      if (local_best != kNoRow &&
          (best == kNoRow || local_dist < best_dist ||
           (local_dist == best_dist && local_best < best))) {
        best = local_best;
        best_dist = local_dist;
      }
    }
  }
  return best;
}

void row_dots(MatrixView matrix, std::span<const double> query, std::span<double> out) {
  if (query.size() != matrix.cols) {
    throw DimensionError("query length " + std::to_string(query.size()) +
                         " does not match matrix width " + std::to_string(matrix.cols));
  }
  if (out.size() != matrix.rows) throw DimensionError("row_dots output size mismatch");
  const auto rows = static_cast<std::ptrdiff_t>(matrix.rows);
  const std::size_t cols = matrix.cols;
#pragma omp parallel for schedule(static) if (matrix.rows * cols >= kMinParallelWork)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const double* row = matrix.data.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * query[c];
    out[r] = acc;
  }
}

void gemm_nt(MatrixView a, MatrixView b, std::span<double> out) {
  if (a.cols != b.cols) {
    throw DimensionError("gemm_nt inner dimensions differ: " + std::to_string(a.cols) + " vs " +
                         std::to_string(b.cols));
  }
  if (out.size() != a.rows * b.rows) throw DimensionError("gemm_nt output size mismatch");
  const auto m = static_cast<std::ptrdiff_t>(a.rows);
  const auto n = static_cast<std::ptrdiff_t>(b.rows);
  const std::size_t k = a.cols;
#pragma omp parallel for collapse(2) schedule(static) if (a.rows * b.rows * k >= kMinParallelWork)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const double* ar = a.data.data() + i * k;
      const double* br = b.data.data() + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += ar[t] * br[t];
      out[i * n + j] = acc;
    }
  }
}

}  // namespace advtext::kernels::parallel
