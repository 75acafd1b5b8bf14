#pragma once

#include <memory>
#include <vector>

#include <Eigen/Cholesky>

#include "ddvar/grid.hpp"
#include "ddvar/types.hpp"

namespace ddvar {

class CovarianceB {
 public:
  // Factorizes the matrix; a failed Cholesky factorization is rejected.
  explicit CovarianceB(Matrix matrix);

  long size() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  Matrix factor() const { return llt_.matrixL(); }

  Vector apply(const Vector& v) const;
  Vector apply_inv(const Vector& v) const;
  Vector apply_sqrt(const Vector& v) const;
  Vector apply_sqrt_t(const Vector& v) const;

  CovarianceB restrict(const std::vector<int>& idx) const;
  CovarianceB scaled(double factor) const;

 private:
  void check(const Vector& v) const;
  Matrix m_;
  Eigen::LLT<Matrix> llt_;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// sigma^2 exp(-r^2 / 2L^2) + nugget on the diagonal, repeated block-diagonally per field.
CovarianceB build_b_points(const std::vector<Point>& points, int n_fields, double sigma, double length,
                           double nugget);
CovarianceB build_b(const Grid& grid, int n_fields, double sigma, double length, double nugget);

// Block-diagonal covariance over consecutive control segments.
class BlockCovariance {
 public:
  BlockCovariance() = default;
  void add(std::shared_ptr<const CovarianceB> block);

  long size() const { return size_; }
  int n_blocks() const { return static_cast<int>(blocks_.size()); }
  long offset(int i) const { return offsets_[i]; }
  const CovarianceB& block(int i) const { return *blocks_[i]; }
  std::shared_ptr<const CovarianceB> block_ptr(int i) const { return blocks_[i]; }

  Vector apply(const Vector& v) const;
  Vector apply_inv(const Vector& v) const;
  Vector apply_sqrt(const Vector& v) const;
  Vector apply_sqrt_t(const Vector& v) const;
  Matrix dense() const;

 private:
  template <class F>
  Vector blockwise(const Vector& v, F&& f) const;
  std::vector<std::shared_ptr<const CovarianceB>> blocks_;
  std::vector<long> offsets_;
  long size_ = 0;
};

class CovarianceR {
 public:
  CovarianceR() = default;
  explicit CovarianceR(Vector variances);

  long size() const { return var_.size(); }
  const Vector& variances() const { return var_; }
  Vector apply(const Vector& v) const;
  Vector apply_inv(const Vector& v) const;
  Vector apply_sqrt(const Vector& v) const;
  Vector apply_inv_sqrt(const Vector& v) const;
  CovarianceR restrict(const std::vector<int>& idx) const;

 private:
  Vector var_;
};

}  // namespace ddvar
