#pragma once

#include <stdexcept>
#include <string>

namespace salnet {

// Shape or axis mismatch between tensors, or against an op contract.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents (PNM images, FCNW1 containers, manifests).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid model or training configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller misuse of an API or CLI (bad flag values, wrong call sequence).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem problems: missing paths, unreadable or unwritable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace salnet
