#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

using namespace ddvar;
using testing::randn;

namespace {

ObservationSet one(const Grid& g, double x, double y, int time = 0, Platform p = Platform::SurfaceGrid) {
  return ObservationSet({{time, x, y, p, 0.0, 1.0}}, g);
}

}  // namespace

TEST_CASE("bilinear sampling") {
  const Grid g{6, 5, 1, 1, 0.1, 2};
  const Trajectory ones(3, Vector::Ones(30));
  std::mt19937_64 rng(1);
  const ObservationSet obs = testing::random_obs(g, 7, rng);
  const ObservationOperator op(g, 1, obs);
  CHECK((op.apply(ones) - Vector::Ones(7)).cwiseAbs().maxCoeff() < 1e-15);

  Vector f(30);
  for (int c = 0; c < 30; ++c) f[c] = g.col(c) + 10.0 * g.row(c);
  const Trajectory tf(3, f);
  CHECK(ObservationOperator(g, 1, one(g, 3, 2)).apply(tf)[0] == 23.0);
  CHECK(ObservationOperator(g, 1, one(g, 2.5, 1)).apply(tf)[0] == doctest::Approx(12.5));
  CHECK(ObservationOperator(g, 1, one(g, 5, 4)).apply(tf)[0] == doctest::Approx(45.0));
}

TEST_CASE("observations outside the domain are rejected") {
  const Grid g{6, 5, 1, 1, 0.1, 2};
  CHECK_THROWS_AS(one(g, 5.5, 1), InvalidArgument);
  CHECK_THROWS_AS(one(g, 1, 1, 3), InvalidArgument);
  CHECK_THROWS_AS(ObservationSet({{0, 1, 1, Platform::Track, 0.0, 0.0}}, g), InvalidArgument);
}

TEST_CASE("sampling transpose") {
  std::mt19937_64 rng(2);
  const Grid g{7, 6, 1, 1, 0.1, 3};
  const ObservationSet obs = testing::random_obs(g, 15, rng);
  const ObservationOperator op(g, 2, obs);
  Trajectory x(4);
  for (auto& s : x) s = randn(84, rng);
  const Vector w = randn(15, rng);
  const Trajectory a = op.adjoint(w);
  double rhs = 0;
  for (int l = 0; l < 4; ++l) rhs += x[l].dot(a[l]);
  CHECK(std::abs(op.apply(x).dot(w) - rhs) <= 1e-13 * std::abs(rhs));
  for (const Vector& s : op.adjoint(Vector::Zero(15))) CHECK(s.isZero(0));

  const ObservationOperator node(g, 1, one(g, 2, 3, 1));
  const Trajectory sc = node.adjoint(Vector::Ones(1));
  CHECK(sc[1][g.index(2, 3)] == 1.0);
  CHECK(sc[1].sum() == 1.0);
  CHECK(sc[0].isZero(0));
}

TEST_CASE("innovations") {
  std::mt19937_64 rng(3);
  const Grid g{6, 6, 1, 1, 0.1, 2};
  Trajectory bg(3);
  for (auto& s : bg) s = randn(36, rng);
  PlatformSpec spec;
  spec.counts = {5, 8, 3};
  spec.noise_factor = 0.0;
  const ObservationSet perfect = synthesize(bg, g, 1, spec, 9);
  const ObservationOperator op(g, 1, perfect);
  CHECK(innovations(bg, perfect, op).cwiseAbs().maxCoeff() < 1e-14);

  std::vector<Observation> shifted = perfect.all();
  for (auto& o : shifted) o.value += 1.0;
  const ObservationSet s(shifted, g);
  CHECK((innovations(bg, s, op) - Vector::Ones(16)).cwiseAbs().maxCoeff() < 1e-14);

  const ObservationSet r = testing::random_obs(g, 10, rng);
  std::vector<Observation> vals = r.all();
  for (auto& o : vals) o.value = 0.7;
  const ObservationSet rv(vals, g);
  const ObservationOperator rop(g, 1, rv);
  const Vector d = innovations(bg, rv, rop);
  for (int j = 0; j < 10; ++j) {
    const Stencil st = bilinear_stencil(g, 1, rv[j]);
    double h = 0;
    for (int q = 0; q < 4; ++q) h += st.weight[q] * bg[st.time][st.index[q]];
    CHECK(d[j] == doctest::Approx(0.7 - h).epsilon(1e-14));
  }
}

TEST_CASE("synthesis is deterministic and unbiased") {
  const Grid g{10, 10, 1, 1, 0.1, 2};
  const Trajectory zero(3, Vector::Zero(100));
  PlatformSpec spec;
  spec.counts = {4000, 4000, 2000};
  spec.sigma = {0.5, 0.5, 0.5};
  const ObservationSet a = synthesize(zero, g, 1, spec, 42);
  const ObservationSet b = synthesize(zero, g, 1, spec, 42);
  CHECK(a.values() == b.values());
  CHECK(std::abs(a.values().mean()) < 3 * 0.5 / 100);
  spec.counts = {0, 0, 0};
  CHECK_THROWS_AS(synthesize(zero, g, 1, spec, 1), InvalidArgument);
}

TEST_CASE("observation files round-trip") {
  std::mt19937_64 rng(5);
  const Grid g{6, 6, 1, 1, 0.1, 2};
  const ObservationSet a = testing::random_obs(g, 9, rng);
  std::stringstream ss;
  write_observations(ss, a);
  const ObservationSet b = read_observations(ss, g);
  REQUIRE(b.size() == 9);
  for (int j = 0; j < 9; ++j) {
    CHECK(b[j].x == a[j].x);
    CHECK(b[j].platform == a[j].platform);
    CHECK(b[j].variance == a[j].variance);
  }
  std::stringstream bad("0 1 1 surface-grid 2.0\n");
  CHECK_THROWS_AS(read_observations(bad, g), InvalidArgument);
}

TEST_CASE("shipped configs keep n_obs well below the state size") {
  for (const char* name : {"case1", "case2", "case3", "case4", "dd", "dd_spacetime", "impact", "burgers"}) {
    const ExperimentConfig c = load_config(std::string(DDVAR_CONFIGS) + "/" + name + ".cfg");
    const int n_obs = c.obs_surface + c.obs_track + c.obs_profile;
    const int np = c.nx * c.ny * (c.model == ModelKind::Linear ? 1 : 2);
    CHECK_MESSAGE(n_obs * 10 <= np, name);
  }
}
