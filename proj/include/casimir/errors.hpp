#pragma once

#include <stdexcept>
#include <string>

namespace casimir {

// Error taxonomy maps one-to-one onto CLI exit codes:
//   ValidationError -> 1 (bad inputs, bad config, failed quality gates)
//   IoError         -> 2 (missing/unreadable/unwritable files)
//   NumericalError  -> 3 (non-convergence, degenerate or singular fits)
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return 1;
  if (dynamic_cast<const IoError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  return 3;
}

}  // namespace casimir
