#include "doctest.h"
#include "helpers.hpp"

using namespace ddvar;
using testing::randn;

namespace {

VarSystem dense_system(const Matrix& h, const Matrix& b, const Vector& r, const Vector& d) {
  VarSystem s;
  s.control_size = h.cols();
  s.h = [h](const Vector& v) -> Vector { return h * v; };
  s.ht = [h](const Vector& v) -> Vector { return h.transpose() * v; };
  s.b = [b](const Vector& v) -> Vector { return b * v; };
  s.r = CovarianceR(r);
  s.d = d;
  return s;
}

VarSystem scalar(double b, double r, double g, double d) {
  return dense_system(Matrix::Constant(1, 1, g), Matrix::Constant(1, 1, b), Vector::Constant(1, r),
                      Vector::Constant(1, d));
}

Matrix random_spd(int n, std::mt19937_64& rng, double shift = 1.0) {
  Matrix a(n, n);
  for (int c = 0; c < n; ++c) a.col(c) = randn(n, rng);
  return a * a.transpose() + shift * Matrix::Identity(n, n);
}

struct Instance {
  Matrix h, b;
  Vector r, d, oracle;
};

Instance random_instance(int nz, int nobs, std::mt19937_64& rng) {
  Instance in;
  in.h.resize(nobs, nz);
  for (int c = 0; c < nz; ++c) in.h.col(c) = randn(nobs, rng);
  in.b = random_spd(nz, rng) / nz;
  in.r = (0.5 + randn(nobs, rng).array().abs()).matrix();
  in.d = randn(nobs, rng);
  const Matrix ri = in.r.cwiseInverse().asDiagonal();
  const Matrix a = in.b.inverse() + in.h.transpose() * ri * in.h;
  in.oracle = a.ldlt().solve(in.h.transpose() * ri * in.d);
  return in;
}

SolverOptions tight(int maxit = 200) {
  SolverOptions o;
  o.tol = 1e-12;
  o.maxit = maxit;
  return o;
}

}  // namespace

TEST_CASE("pcg small systems") {
  const Vector b = Vector::LinSpaced(5, 1, 5);
  const SolveReport id = pcg(identity_operator(5), b, identity_operator(5), tight());
  CHECK(id.iterations == 1);
  CHECK((id.solution - b).norm() < 1e-15);
  CHECK(id.residuals.size() == static_cast<std::size_t>(id.iterations + 1));

  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2;
  a(1, 1) = 1;
  const SolveReport r = pcg(matrix_operator(a), Vector(Vector::Ones(2) + Vector::Unit(2, 0)), identity_operator(2),
                            tight());
  CHECK(r.iterations <= 2);
  CHECK((r.solution - Vector::Ones(2)).norm() < 1e-14);
}

TEST_CASE("pcg matches a direct solve and decreases the quadratic") {
  std::mt19937_64 rng(1);
  const Matrix a = random_spd(30, rng);
  const Vector b = randn(30, rng);
  const Matrix p = random_spd(30, rng);
  const SolveReport r = pcg(matrix_operator(a), b, matrix_operator(p), tight());
  const Vector x = a.ldlt().solve(b);
  CHECK((r.solution - x).norm() <= 1e-9 * x.norm());
  CHECK(r.converged);
  for (std::size_t k = 1; k < r.quadratic.size(); ++k)
    CHECK(r.quadratic[k] <= r.quadratic[k - 1] + 1e-12 * std::abs(r.quadratic[k - 1]));
}

TEST_CASE("pcg reports a breakdown on an indefinite operator") {
  Matrix a = Matrix::Identity(2, 2);
  a(1, 1) = -1;
  CHECK_THROWS_AS(pcg(matrix_operator(a), Vector::Unit(2, 1), identity_operator(2), tight()), NumericalError);
}

TEST_CASE("operators are linear") {
  std::mt19937_64 rng(2);
  const Matrix m = random_spd(8, rng);
  const LinearOperator op = matrix_operator(m);
  const Vector u = randn(8, rng), v = randn(8, rng);
  CHECK((op(2.0 * u - 3.0 * v) - (2.0 * op(u) - 3.0 * op(v))).norm() < 1e-12 * op(u).norm());
}

TEST_CASE("scalar variational systems") {
  for (Solver s : {Solver::Primal, Solver::DualCG, Solver::Minres, Solver::Rpcg}) {
    CAPTURE(to_string(s));
    CHECK(run_solver(s, scalar(1, 1, 1, 2), tight()).solution[0] == doctest::Approx(1.0).epsilon(1e-14));
    const SolveReport r = run_solver(s, scalar(2, 1, 1, 3), tight());
    CHECK(r.solution[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(r.iterations == 1);
  }
}

TEST_CASE("zero innovations give a zero increment without iterating") {
  std::mt19937_64 rng(3);
  Instance in = random_instance(10, 4, rng);
  const VarSystem sys = dense_system(in.h, in.b, in.r, Vector::Zero(4));
  for (Solver s : {Solver::Primal, Solver::DualCG, Solver::Minres, Solver::Rpcg}) {
    const SolveReport r = run_solver(s, sys, tight());
    CHECK(r.iterations == 0);
    CHECK(r.solution.isZero(0));
  }
}

TEST_CASE("single observation converges in one iteration") {
  std::mt19937_64 rng(4);
  Instance in = random_instance(12, 1, rng);
  const VarSystem sys = dense_system(in.h, in.b, in.r, in.d);
  for (Solver s : {Solver::Primal, Solver::DualCG, Solver::Minres, Solver::Rpcg}) {
    CAPTURE(to_string(s));
    const SolveReport r = run_solver(s, sys, tight());
    CHECK(r.iterations == 1);
    CHECK((r.solution - in.oracle).norm() <= 1e-10 * in.oracle.norm());
  }
}

TEST_CASE("all solvers agree with the direct oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Instance in = random_instance(20 + 4 * trial, 3 + trial, rng);
    const VarSystem sys = dense_system(in.h, in.b, in.r, in.d);
    for (Solver s : {Solver::Primal, Solver::DualCG, Solver::Minres, Solver::Rpcg}) {
      CAPTURE(to_string(s));
      const SolveReport r = run_solver(s, sys, tight());
      CHECK((r.solution - in.oracle).norm() <= 1e-8 * in.oracle.norm());
      for (double res : r.residuals) CHECK(std::isfinite(res));
    }
  }
}

TEST_CASE("minres residuals are nonincreasing") {
  std::mt19937_64 rng(6);
  Instance in = random_instance(40, 15, rng);
  const SolveReport r = minres_dual(dense_system(in.h, in.b, in.r, in.d), tight());
  for (std::size_t k = 1; k < r.residuals.size(); ++k) CHECK(r.residuals[k] <= r.residuals[k - 1] + 1e-12);
  const SolveReport id = minres(identity_operator(6), Vector::LinSpaced(6, 1, 2), tight());
  CHECK(id.iterations == 1);
}

TEST_CASE("rpcg reproduces the primal cost history") {
  std::mt19937_64 rng(7);
  for (bool reorth : {false, true}) {
    Instance in = random_instance(50, 14, rng);
    const VarSystem sys = dense_system(in.h, in.b, in.r, in.d);
    SolverOptions o = tight();
    o.reorthogonalize = reorth;
    const SolveReport p = primal_pcg(sys, o), q = rpcg(sys, o);
    const std::size_t n = std::min(p.costs.size(), q.costs.size());
    REQUIRE(n >= 5);
    for (std::size_t k = 0; k < n; ++k) CHECK(testing::rel(p.costs[k].J, q.costs[k].J) <= 1e-8);
    for (std::size_t k = 1; k < p.costs.size(); ++k) CHECK(p.costs[k].J <= p.costs[k - 1].J + 1e-10);
  }
}

TEST_CASE("cost breakdown sums exactly") {
  std::mt19937_64 rng(8);
  Instance in = random_instance(16, 6, rng);
  const SolveReport r = dual_cg_rhalf(dense_system(in.h, in.b, in.r, in.d), tight());
  for (const CostBreakdown& c : r.costs) {
    CHECK(c.J == c.Jb + c.Jo);
    CHECK(c.Jb >= 0);
    CHECK(c.Jo >= 0);
  }
}
