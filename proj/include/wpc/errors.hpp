#pragma once

#include <stdexcept>
#include <string>

namespace wpc {

// Base class for everything thrown by the library. CLI maps subtypes to
// exit codes, so catch this rather than std::exception when dispatching.
struct WpcError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatches and out-of-range structural arguments (rank, degree, ...).
struct DimensionError : WpcError {
  using WpcError::WpcError;
};

// A factorization certified that the matrix is not positive definite.
// pivot is the first failing Cholesky pivot (0-based), or -1 if unknown.
struct DefinitenessError : WpcError {
  explicit DefinitenessError(const std::string& what, int pivot_index = -1)
      : WpcError(what), pivot(pivot_index) {}
  int pivot;
};

// Iterative routine failed to converge or produced a non-finite value.
// iterations is the count reached when the failure was detected.
struct NumericalError : WpcError {
  explicit NumericalError(const std::string& what, long iteration_count = -1)
      : WpcError(what), iterations(iteration_count) {}
  long iterations;
};

// Rank-deficient input where full column rank is required.
struct RankError : WpcError {
  using WpcError::WpcError;
};

// HAC bandwidth incompatible with the sample length.
struct BandwidthError : WpcError {
  using WpcError::WpcError;
};

// A cross-section series with zero residual variance; its index is kept so
// callers can report which series broke the heteroskedastic weighting.
struct DegenerateSeriesError : WpcError {
  explicit DegenerateSeriesError(const std::string& what, int series_index)
      : WpcError(what), series(series_index) {}
  int series;
};

// Malformed text input. row/col are 1-based positions in the source file,
// 0 when not applicable.
struct ParseError : WpcError {
  explicit ParseError(const std::string& what, long row_1based = 0, long col_1based = 0)
      : WpcError(what), row(row_1based), col(col_1based) {}
  long row;
  long col;
};

}  // namespace wpc
