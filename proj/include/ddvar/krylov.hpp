#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ddvar/covariance.hpp"
#include "ddvar/types.hpp"

namespace ddvar {

struct LinearOperator {
  long dim = 0;
  std::function<Vector(const Vector&)> apply;
  std::function<Vector(const Vector&)> apply_transpose;  // optional

  Vector operator()(const Vector& v) const { return apply(v); }
};

LinearOperator identity_operator(long dim);
LinearOperator matrix_operator(const Matrix& m);

struct SolverOptions {
  double tol = 1e-10;
  int maxit = 100;
  bool reorthogonalize = false;
  bool keep_iterates = false;
};

struct SolveReport {
  std::string solver;
  Vector solution;
  std::vector<Vector> iterates;       // filled when keep_iterates is set
  std::vector<double> residuals;      // relative to the initial residual, one per iterate
  std::vector<double> quadratic;      // generic solvers: q(x_k) = 1/2 x'Ax - b'x
  std::vector<CostBreakdown> costs;   // variational solvers: J(x_k)
  int iterations = 0;
  bool converged = false;
};

// Called after every iterate k >= 0 with x_k and the residual b - A x_k.
using PcgObserver = std::function<void(int, const Vector&, const Vector&)>;
// Called after every iterate k >= 0 with x_k and A x_k.
using MinresObserver = std::function<void(int, const Vector&, const Vector&)>;

SolveReport pcg(const LinearOperator& a, const Vector& b, const LinearOperator& precond, const SolverOptions& opt,
                const PcgObserver& observer = {});
SolveReport minres(const LinearOperator& a, const Vector& b, const SolverOptions& opt,
                   const MinresObserver& observer = {});

// Incremental 4D-Var normal equations in operator form: H = G o M on control
// space, B, R and the innovations d.
struct VarSystem {
  long control_size = 0;
  std::function<Vector(const Vector&)> h;
  std::function<Vector(const Vector&)> ht;
  std::function<Vector(const Vector&)> b;
  CovarianceR r;
  Vector d;
};

CostBreakdown observation_cost(const VarSystem& sys, const Vector& hx, double jb);

// B-preconditioned CG on (B^-1 + H'R^-1 H) dz = H'R^-1 d.
SolveReport primal_pcg(const VarSystem& sys, const SolverOptions& opt);
// CG on (R^-1/2 H B H' R^-1/2 + I) w^ = R^-1/2 d with dz = B H' R^-1/2 w^.
SolveReport dual_cg_rhalf(const VarSystem& sys, const SolverOptions& opt);
// MINRES on the same R^-1/2 scaled dual system.
SolveReport minres_dual(const VarSystem& sys, const SolverOptions& opt);
// Restricted B-preconditioned CG: observation-space recurrences reproducing primal_pcg.
SolveReport rpcg(const VarSystem& sys, const SolverOptions& opt);

}  // namespace ddvar
