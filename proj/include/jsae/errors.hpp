#pragma once

#include <stdexcept>
#include <string>

namespace jsae {

// A computation reached a numerically meaningless configuration, e.g. a zero
// decoder column asked to be unit-normalized or an explained-variance
// denominator of zero.
class NumericDegeneracy : public std::runtime_error {
 public:
  explicit NumericDegeneracy(const std::string& what_arg)
      : std::runtime_error(what_arg) {}
};

// A finite-difference probe cannot run because the TopK selection is not
// stable under the requested perturbation (selection margin too small, or a
// support flip was detected at a perturbed point).
class DegenerateInput : public std::runtime_error {
 public:
  explicit DegenerateInput(const std::string& what_arg)
      : std::runtime_error(what_arg) {}
};

// A weight container or activation dump failed validation on read.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what_arg)
      : std::runtime_error(what_arg) {}
};

// An activation source ran out of tokens before a consumer was done.
class DataExhausted : public std::runtime_error {
 public:
  explicit DataExhausted(const std::string& what_arg)
      : std::runtime_error(what_arg) {}
};

}  // namespace jsae
