#pragma once

// Data-parallel scan kernels used by embedding search and flip scoring.
//
// Every kernel has a serial reference implementation and an OpenMP
// implementation. The two perform identical per-element arithmetic, so their
// results are bit-identical; tests hold them to that.

#include <cstddef>
#include <cstdint>
#include <span>

namespace advtext::kernels {

enum class Backend { kSerial, kParallel };

// Row-major view of a rows x cols matrix.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const double> row(std::size_t r) const { return data.subspan(r * cols, cols); }
};

inline constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);

// Index of the row with the smallest squared Euclidean distance to `query`.
// Rows with skip[r] != 0 are ignored (an empty skip span skips nothing).
// Ties go to the lower row index. Returns kNoRow when every row is skipped.
std::size_t nearest_row(Backend backend, MatrixView matrix, std::span<const double> query,
                        std::span<const std::uint8_t> skip);

// out[r] = dot(matrix.row(r), query).
void row_dots(Backend backend, MatrixView matrix, std::span<const double> query,
              std::span<double> out);

// out (a.rows x b.rows) = a * b^T.
void gemm_nt(Backend backend, MatrixView a, MatrixView b, std::span<double> out);

namespace serial {
std::size_t nearest_row(MatrixView matrix, std::span<const double> query,
                        std::span<const std::uint8_t> skip);
void row_dots(MatrixView matrix, std::span<const double> query, std::span<double> out);
void gemm_nt(MatrixView a, MatrixView b, std::span<double> out);
}  // namespace serial

namespace parallel {
std::size_t nearest_row(MatrixView matrix, std::span<const double> query,
                        std::span<const std::uint8_t> skip);
void row_dots(MatrixView matrix, std::span<const double> query, std::span<double> out);
void gemm_nt(MatrixView a, MatrixView b, std::span<double> out);
}  // namespace parallel

}  // namespace advtext::kernels
