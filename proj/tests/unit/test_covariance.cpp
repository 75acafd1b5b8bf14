#include "doctest.h"
#include "helpers.hpp"

using namespace ddvar;
using testing::randn;

TEST_CASE("vanishing length scale gives a scaled identity") {
  const Grid g{4, 3, 1, 1, 0.1, 1};
  const CovarianceB b = build_b(g, 1, 2.0, 1e-8, 1e-8);
  const Matrix expect = Matrix::Identity(12, 12) * (4.0 + 1e-8);
  CHECK((b.matrix() - expect).cwiseAbs().maxCoeff() < 1e-14);
  const Vector v = Vector::LinSpaced(12, -1, 1);
  CHECK((b.apply_inv(v) - v / (4.0 + 1e-8)).norm() < 1e-14);
}

TEST_CASE("factor reassembles B on a 6x6 grid") {
  const CovarianceB b = build_b({6, 6, 1, 1, 0.1, 1}, 2, 1.3, 1.5, 1e-8);
  CHECK((b.matrix() - b.matrix().transpose()).cwiseAbs().maxCoeff() == 0.0);
  const Matrix l = b.factor();
  CHECK((l * l.transpose() - b.matrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("correlation at one length scale is exp(-1/2)") {
  const CovarianceB b = build_b_points({{0, 0}, {2.0, 0}}, 1, 1.5, 2.0, 1e-10);
  CHECK(b.matrix()(0, 1) == doctest::Approx(std::exp(-0.5) * 2.25).epsilon(1e-14));
}

TEST_CASE("apply, inverse and square root are consistent") {
  std::mt19937_64 rng(2);
  const CovarianceB b = build_b({5, 4, 1, 1, 0.1, 1}, 1, 1.0, 1.0, 1e-8);
  CHECK(b.apply(Vector::Zero(20)).isZero(0));
  const Vector v = randn(20, rng);
  CHECK((b.apply_inv(b.apply(v)) - v).norm() <= 1e-10 * v.norm());
  CHECK((b.apply(v) - b.matrix() * v).norm() <= 1e-13 * (b.matrix() * v).norm());
  CHECK((b.apply_sqrt(b.apply_sqrt_t(v)) - b.apply(v)).norm() <= 1e-12 * b.apply(v).norm());
  for (int t = 0; t < 20; ++t) {
    const Vector w = randn(20, rng);
    CHECK(w.dot(b.apply(w)) > 0);
  }
}

TEST_CASE("restriction extracts the submatrix") {
  std::mt19937_64 rng(3);
  const CovarianceB b = build_b({6, 5, 1, 1, 0.1, 1}, 1, 1.0, 1.5, 1e-8);
  std::vector<int> all(30);
  for (int i = 0; i < 30; ++i) all[i] = i;
  CHECK(b.restrict(all).matrix() == b.matrix());
  CHECK(b.restrict({7}).matrix()(0, 0) == b.matrix()(7, 7));
  std::vector<int> idx = {3, 17, 0, 29, 11, 5, 22, 8, 14, 26};
  const CovarianceB s = b.restrict(idx);
  for (int a = 0; a < 10; ++a)
    for (int c = 0; c < 10; ++c) CHECK(s.matrix()(a, c) == b.matrix()(idx[a], idx[c]));
  CHECK_THROWS_AS(b.restrict({30}), InvalidArgument);
}

TEST_CASE("invalid covariance parameters are rejected") {
  const Grid g{4, 4, 1, 1, 0.1, 1};
  CHECK_THROWS_AS(build_b(g, 1, 0.0, 1.0, 1e-8), InvalidArgument);
  CHECK_THROWS_AS(build_b(g, 1, 1.0, -1.0, 1e-8), InvalidArgument);
  Matrix m = Matrix::Identity(3, 3);
  m(0, 1) = 0.5;
  CHECK_THROWS_AS(CovarianceB{m}, InvalidArgument);
  Matrix neg = -Matrix::Identity(2, 2);
  CHECK_THROWS_AS(CovarianceB{neg}, NumericalError);
  CHECK_THROWS_AS(CovarianceR(Vector::Zero(2)), InvalidArgument);
}

TEST_CASE("block covariance is block diagonal") {
  std::mt19937_64 rng(4);
  BlockCovariance bc;
  auto b1 = std::make_shared<const CovarianceB>(build_b({3, 3, 1, 1, 0.1, 1}, 1, 1.0, 1.0, 1e-8));
  auto b2 = std::make_shared<const CovarianceB>(b1->scaled(0.25));
  bc.add(b1);
  bc.add(b2);
  CHECK(bc.size() == 18);
  const Matrix d = bc.dense();
  CHECK(d.block(0, 9, 9, 9).isZero(0));
  CHECK((d.block(9, 9, 9, 9) - 0.25 * b1->matrix()).cwiseAbs().maxCoeff() < 1e-15);
  const Vector v = randn(18, rng);
  CHECK((bc.apply(v) - d * v).norm() < 1e-13 * (d * v).norm());
  CHECK((bc.apply_inv(bc.apply(v)) - v).norm() < 1e-9 * v.norm());
}
