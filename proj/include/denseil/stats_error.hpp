#pragma once

#include <stdexcept>

namespace denseil {

/// Eval-mode normalisation requested before any training pass recorded
/// running statistics.
struct MissingStatisticsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace denseil
