#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ddvar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Invalid input or configuration (usage-level failure).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Breakdown, divergence or failed factorization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CostBreakdown {
  double J = 0.0;
  double Jb = 0.0;
  double Jo = 0.0;
};

inline CostBreakdown make_cost(double jb, double jo) { return {jb + jo, jb, jo}; }

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace ddvar
