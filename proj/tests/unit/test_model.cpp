#include "doctest.h"
#include "helpers.hpp"

using namespace ddvar;
using testing::randn;
using testing::rel;

namespace {

ForcingSeries zero_forcing(const Model& m, int n) { return ForcingSeries(n, Vector::Zero(m.state_size())); }

// Independent periodic Burgers stepper on 2D arrays.
std::vector<std::vector<double>> burgers_ref(const std::vector<std::vector<double>>& u,
                                             const std::vector<std::vector<double>>& v, int nx, int ny, double dx,
                                             double dy, double dt, double nu, bool first) {
  const auto& q = first ? u : v;
  std::vector<std::vector<double>> out(nx, std::vector<double>(ny));
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      const int ip = (i + 1) % nx, im = (i + nx - 1) % nx, jp = (j + 1) % ny, jm = (j + ny - 1) % ny;
      const double qx = (q[ip][j] - q[im][j]) / (2 * dx), qy = (q[i][jp] - q[i][jm]) / (2 * dy);
      const double lap = (q[ip][j] - 2 * q[i][j] + q[im][j]) / (dx * dx) + (q[i][jp] - 2 * q[i][j] + q[i][jm]) / (dy * dy);
      out[i][j] = q[i][j] + dt * (-u[i][j] * qx - v[i][j] * qy + nu * lap);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("fixed points of the nonlinear step") {
  const Grid g{6, 5, 1, 1, 0.1, 3};
  const Model m(g, testing::linear_cfg(BoundaryKind::Periodic));
  CHECK(m.step_nl(Vector::Zero(30), Vector::Zero(30), Vector()).isZero(0));
  const Model d(g, testing::linear_cfg(BoundaryKind::Periodic, 0.0, 0.0, 0.3));
  const Vector c = Vector::Constant(30, 2.5);
  const Vector out = d.step_nl(c, Vector::Zero(30), Vector());
  CHECK((out - c).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("Burgers step matches an independent stepper") {
  const int nx = 6, ny = 6;
  const Grid g{nx, ny, 0.9, 1.1, 0.05, 1};
  const Model m(g, testing::burgers_cfg(BoundaryKind::Periodic));
  std::mt19937_64 rng(3);
  const Vector x = randn(2 * nx * ny, rng);
  std::vector<std::vector<double>> u(nx, std::vector<double>(ny)), v = u;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      u[i][j] = x[g.index(i, j)];
      v[i][j] = x[nx * ny + g.index(i, j)];
    }
  const Vector out = m.step_nl(x, Vector::Zero(x.size()), Vector());
  const auto ru = burgers_ref(u, v, nx, ny, g.dx, g.dy, g.dt, 0.05, true);
  const auto rv = burgers_ref(u, v, nx, ny, g.dx, g.dy, g.dt, 0.05, false);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      CHECK(out[g.index(i, j)] == doctest::Approx(ru[i][j]).epsilon(1e-14));
      CHECK(out[nx * ny + g.index(i, j)] == doctest::Approx(rv[i][j]).epsilon(1e-14));
    }
}

TEST_CASE("run_nl with no steps returns the initial state") {
  const Grid g{5, 5, 1, 1, 0.1, 3};
  const Model m(g, testing::linear_cfg());
  const Vector x = Vector::LinSpaced(25, 0, 1);
  const Trajectory t = m.run_nl(x, {}, {});
  REQUIRE(t.size() == 1);
  CHECK(t[0] == x);
}

TEST_CASE("linear model is exactly linear") {
  const Grid g{8, 7, 1, 1, 0.1, 5};
  std::mt19937_64 rng(4);
  for (BoundaryKind bk : {BoundaryKind::Periodic, BoundaryKind::Prescribed}) {
    const Model m(g, testing::linear_cfg(bk));
    const Vector x0 = randn(m.state_size(), rng), dx = randn(m.state_size(), rng);
    const BoundarySeries b(5, m.boundary_of(x0)), db(5, Vector::Zero(m.boundary_size()));
    const Trajectory a = m.run_nl(x0, zero_forcing(m, 5), b);
    const Trajectory c = m.run_nl(x0 + dx, zero_forcing(m, 5), b);
    Vector v = dx;
    for (int l = 1; l <= 5; ++l) {
      v = m.step_tl(a[l - 1], v, Vector::Zero(m.state_size()), db[0]);
      CHECK((c[l] - a[l] - v).norm() <= 1e-13 * v.norm());
    }
    CHECK(m.step_tl(x0, Vector::Zero(m.state_size()), Vector::Zero(m.state_size()), db[0]).isZero(0));
    const Vector zf = Vector::Zero(m.state_size());
    CHECK((m.step_tl(x0, dx, zf, db[0]) - m.step_nl(dx, zf, db[0])).norm() <= 1e-14 * dx.norm());
  }
}

TEST_CASE("Burgers tangent linear converges like a first-order Taylor remainder") {
  const Grid g{10, 8, 1, 1, 0.05, 1};
  const Model m(g, testing::burgers_cfg());
  std::mt19937_64 rng(5);
  const Vector x = smooth_state(g, ModelKind::Burgers, 1.0);
  const Vector d = randn(m.state_size(), rng);
  const Vector zf = Vector::Zero(m.state_size());
  const Vector b = m.boundary_of(x);
  const Vector tl = m.step_tl(x, d, zf, Vector::Zero(m.boundary_size()));
  double prev = 0.0;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    const Vector fd = (m.step_nl(x + eps * d, zf, b) - m.step_nl(x, zf, b)) / eps;
    const double err = (fd - tl).norm() / tl.norm();
    if (prev > 0) CHECK(err < 0.2 * prev);
    prev = err;
  }
  const Vector fd8 = (m.step_nl(x + 1e-8 * d, zf, b) - m.step_nl(x - 1e-8 * d, zf, b)) / 2e-8;
  CHECK((fd8 - tl).norm() / tl.norm() < 1e-6);
}

TEST_CASE("adjoint identity for steps and windows") {
  std::mt19937_64 rng(6);
  const Grid g{8, 8, 1, 1, 0.05, 6};
  for (const ModelConfig& mc : {testing::linear_cfg(BoundaryKind::Periodic), testing::linear_cfg(),
                                testing::burgers_cfg(), testing::burgers_cfg(BoundaryKind::Periodic)}) {
    const Model m(g, mc);
    const int n = m.state_size(), nb = m.boundary_size();
    CHECK(m.step_ad(randn(n, rng), Vector::Zero(n)).x.isZero(0));
    for (int t = 0; t < 10; ++t) {
      const Vector x = randn(n, rng), dx = randn(n, rng), df = randn(n, rng), db = randn(nb, rng), p = randn(n, rng);
      const Vector tl = m.step_tl(x, dx, df, db);
      const AdjointStep ad = m.step_ad(x, p);
      const double lhs = tl.dot(p), rhs = dx.dot(ad.x) + df.dot(ad.f) + db.dot(ad.b);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * (tl.norm() * p.norm() + dx.norm() * ad.x.norm()));
    }
    const Vector x0 = smooth_state(g, mc.kind, 1.0);
    const Trajectory traj = m.run_nl(x0, zero_forcing(m, 6), BoundarySeries(6, m.boundary_of(x0)));
    const TimeWindows w = build_time_windows(6, 2);
    for (int k = 0; k < 2; ++k) {
      const WindowOperator op = window_operator(m, traj, w, k);
      const Vector dx = randn(n, rng), df = randn(n, rng), db = randn(nb, rng), p = randn(n, rng);
      const Vector tl = op.apply_tl(dx, df, db);
      const AdjointStep ad = op.apply_ad(p);
      CHECK(rel(tl.dot(p), dx.dot(ad.x) + df.dot(ad.f) + db.dot(ad.b)) <= 1e-12);
    }
    CHECK_THROWS_AS(window_operator(m, traj, w, 2), InvalidArgument);
  }
}

TEST_CASE("window operators compose to the full-interval operator") {
  std::mt19937_64 rng(7);
  const Grid g{8, 6, 1, 1, 0.05, 5};
  const Model m(g, testing::burgers_cfg());
  const Vector x0 = smooth_state(g, ModelKind::Burgers, 1.0);
  const Trajectory traj = m.run_nl(x0, zero_forcing(m, 5), BoundarySeries(5, m.boundary_of(x0)));
  const Vector dx = randn(m.state_size(), rng), df = randn(m.state_size(), rng), db = randn(m.boundary_size(), rng);
  const WindowOperator one = window_operator(m, traj, build_time_windows(5, 1), 0);
  Vector v = dx;
  for (int l = 1; l <= 5; ++l) v = m.step_tl(traj[l - 1], v, df, db);
  CHECK((one.apply_tl(dx, df, db) - v).norm() <= 1e-14 * v.norm());
  const WindowOperator single(m, traj, 2, 3);
  CHECK(single.apply_tl(dx, df, db) == m.step_tl(traj[2], dx, df, db));
}

TEST_CASE("pure periodic diffusion is self-adjoint") {
  const Grid g{5, 5, 1, 1, 0.1, 1};
  const Model m(g, testing::linear_cfg(BoundaryKind::Periodic, 0.0, 0.0, 0.2));
  const int n = 25;
  Matrix tl(n, n), ad(n, n);
  const Vector x = Vector::Zero(n), z = Vector::Zero(n);
  for (int c = 0; c < n; ++c) {
    tl.col(c) = m.step_tl(x, Vector::Unit(n, c), z, Vector());
    ad.col(c) = m.step_ad(x, Vector::Unit(n, c)).x;
  }
  CHECK((tl - ad).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("stability guard rejects unstable configurations") {
  const Grid g{8, 8, 1, 1, 0.1, 1};
  ModelConfig mc = testing::linear_cfg();
  mc.nu = 3.0;
  CHECK_THROWS_AS(Model(g, mc), InvalidArgument);
  mc = testing::linear_cfg(BoundaryKind::Prescribed, 4.0, 2.0);
  CHECK_THROWS_AS(Model(g, mc), InvalidArgument);
}

TEST_CASE("divergence names the failing step") {
  const Grid g{6, 6, 1, 1, 0.05, 4};
  const Model m(g, testing::burgers_cfg(BoundaryKind::Periodic));
  Vector x = Vector::Constant(m.state_size(), 1.0);
  x[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(m.run_nl(x, zero_forcing(m, 4), BoundarySeries(4, Vector())), NumericalError);
}
