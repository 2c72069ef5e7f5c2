#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace loadshift {

/// Smooth-ish NLP over a box: min f(z) s.t. g(z) <= 0, lower <= z <= upper.
class NlpFunctions {
 public:
  virtual ~NlpFunctions() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::size_t constraint_count() const = 0;
  virtual const Eigen::VectorXd& lower() const = 0;
  virtual const Eigen::VectorXd& upper() const = 0;

  virtual double objective(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const = 0;
  /// g is resized to constraint_count(); jac (if given) to constraint_count() x dimension().
  virtual void constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g,
                           Eigen::MatrixXd* jac) const = 0;
};

}  // namespace loadshift
