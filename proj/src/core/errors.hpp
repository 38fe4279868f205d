#pragma once

#include <stdexcept>
#include <string>

namespace dnr {

// Violated precondition, malformed file, or inconsistent dimensions.
// Maps to process exit code 1.
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric failure while computing. Maps to process exit code 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Not enough foreground or a rank-deficient OD cloud for stain estimation.
struct DegenerateTissue : NumericError {
  using NumericError::NumericError;
};

// Clustering input with no usable geometry (e.g. all points identical).
struct DegenerateData : NumericError {
  using NumericError::NumericError;
};

// A sample has an empty positive set where one is required.
struct MissingNeighbors : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct DivergedTraining : NumericError {
  int epoch;
  explicit DivergedTraining(int epoch_index)
      : NumericError("non-finite loss at epoch " + std::to_string(epoch_index)),
        epoch(epoch_index) {}
};

// Newton failed: monotone likelihood, separation, or iteration cap.
struct NonConverged : NumericError {
  using NumericError::NumericError;
};

// Library bug or broken platform assumption, not a user error.
struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace dnr
