#pragma once

#include <stdexcept>
#include <string>

namespace msps {

// Shape/rank mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Out-of-range parameter value (m = 0, r <= 0, ...).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EmptySequenceError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid permutation or index.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Token layout does not match the sequence it describes.
struct LayoutError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation requested on an object in the wrong state (e.g. empty cache).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace msps
