#pragma once

#include <Eigen/Core>

namespace jsae {

// A stream of activation vectors of fixed width. next() fills out and
// returns true, or returns false once the stream is exhausted.
class ActivationSource {
 public:
  virtual ~ActivationSource() = default;
  virtual Eigen::Index width() const = 0;
  virtual bool next(Eigen::VectorXd& out) = 0;
};

}  // namespace jsae
