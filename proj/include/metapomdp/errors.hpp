#pragma once

#include <stdexcept>
#include <string>

namespace metapomdp {

/// Invalid or unresolvable configuration (bad geometry, unknown key, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or vector dimensions that do not agree.
class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// An operation was called outside its contract (e.g. stepping a finished trial).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Evidence with zero likelihood under every task in the current belief.
class InconsistentEvidence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exhaustive search exceeded its node budget.
class SearchSpaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regression target has no variance, so R^2 is undefined.
class DegenerateTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace metapomdp
