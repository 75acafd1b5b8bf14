#include "ddvar/covariance.hpp"

#include <cmath>

namespace ddvar {

CovarianceB::CovarianceB(Matrix matrix) : m_(std::move(matrix)) {
  require(m_.rows() == m_.cols(), "covariance: matrix must be square");
  require(m_.rows() > 0, "covariance: empty matrix");
  const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-14 * std::max(1.0, m_.cwiseAbs().maxCoeff()), "covariance: matrix is not symmetric");
  llt_.compute(m_);
  if (llt_.info() != Eigen::Success) throw NumericalError("covariance: Cholesky factorization failed (not SPD)");
  if (!(llt_.matrixL().toDenseMatrix().diagonal().array() > 0).all()) {
    throw NumericalError("covariance: Cholesky factor has a non-positive diagonal entry");
  }
}

void CovarianceB::check(const Vector& v) const {
  if (v.size() != m_.rows()) throw InvalidArgument("covariance: vector dimension mismatch");
}

Vector CovarianceB::apply(const Vector& v) const {
  check(v);
  return m_ * v;
}

Vector CovarianceB::apply_inv(const Vector& v) const {
  check(v);
  return llt_.solve(v);
}

Vector CovarianceB::apply_sqrt(const Vector& v) const {
  check(v);
  return llt_.matrixL() * v;
}

Vector CovarianceB::apply_sqrt_t(const Vector& v) const {
  check(v);
  return llt_.matrixU() * v;
}

CovarianceB CovarianceB::restrict(const std::vector<int>& idx) const {
  const long n = static_cast<long>(idx.size());
  Matrix sub(n, n);
  for (long a = 0; a < n; ++a) {
    require(idx[a] >= 0 && idx[a] < m_.rows(), "covariance: restriction index out of range");
    for (long b = 0; b < n; ++b) sub(a, b) = m_(idx[a], idx[b]);
  }
  return CovarianceB(std::move(sub));
}

CovarianceB CovarianceB::scaled(double factor) const {
  require(factor > 0, "covariance: scale factor must be positive");
  return CovarianceB(m_ * factor);
}

CovarianceB build_b_points(const std::vector<Point>& points, int n_fields, double sigma, double length,
                           double nugget) {
  require(sigma > 0, "build_b: sigma_b must be positive");
  require(length > 0, "build_b: correlation length must be positive");
  require(nugget >= 1e-10, "build_b: nugget must be >= 1e-10");
  require(n_fields >= 1, "build_b: n_fields must be >= 1");
  const long n = static_cast<long>(points.size());
  Matrix c(n, n);
  const double s2 = sigma * sigma;
  for (long a = 0; a < n; ++a) {
    for (long b = 0; b < n; ++b) {
      const double rx = points[a].x - points[b].x, ry = points[a].y - points[b].y;
      c(a, b) = s2 * std::exp(-(rx * rx + ry * ry) / (2.0 * length * length));
    }
    c(a, a) = s2 + nugget;
  }
  Matrix m = Matrix::Zero(n * n_fields, n * n_fields);
  for (int f = 0; f < n_fields; ++f) m.block(f * n, f * n, n, n) = c;
  return CovarianceB(std::move(m));
}

CovarianceB build_b(const Grid& grid, int n_fields, double sigma, double length, double nugget) {
  std::vector<Point> pts(grid.cells());
  for (int c = 0; c < grid.cells(); ++c) pts[c] = {grid.col(c) * grid.dx, grid.row(c) * grid.dy};
  return build_b_points(pts, n_fields, sigma, length, nugget);
}

void BlockCovariance::add(std::shared_ptr<const CovarianceB> block) {
  offsets_.push_back(size_);
  size_ += block->size();
  blocks_.push_back(std::move(block));
}

template <class F>
Vector BlockCovariance::blockwise(const Vector& v, F&& f) const {
  if (v.size() != size_) throw InvalidArgument("block covariance: vector dimension mismatch");
  Vector out(size_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const long n = blocks_[i]->size();
    out.segment(offsets_[i], n) = f(*blocks_[i], Vector(v.segment(offsets_[i], n)));
  }
  return out;
}

Vector BlockCovariance::apply(const Vector& v) const {
  return blockwise(v, [](const CovarianceB& b, const Vector& s) { return b.apply(s); });
}
Vector BlockCovariance::apply_inv(const Vector& v) const {
  return blockwise(v, [](const CovarianceB& b, const Vector& s) { return b.apply_inv(s); });
}
Vector BlockCovariance::apply_sqrt(const Vector& v) const {
  return blockwise(v, [](const CovarianceB& b, const Vector& s) { return b.apply_sqrt(s); });
}
Vector BlockCovariance::apply_sqrt_t(const Vector& v) const {
  return blockwise(v, [](const CovarianceB& b, const Vector& s) { return b.apply_sqrt_t(s); });
}

Matrix BlockCovariance::dense() const {
  Matrix m = Matrix::Zero(size_, size_);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    m.block(offsets_[i], offsets_[i], blocks_[i]->size(), blocks_[i]->size()) = blocks_[i]->matrix();
  return m;
}

CovarianceR::CovarianceR(Vector variances) : var_(std::move(variances)) {
  for (long j = 0; j < var_.size(); ++j) {
    if (!(var_[j] > 0) || !std::isfinite(var_[j])) {
      throw InvalidArgument("observation error variance must be positive (entry " + std::to_string(j) + ")");
    }
  }
}

Vector CovarianceR::apply(const Vector& v) const {
  require(v.size() == var_.size(), "R: dimension mismatch");
  return v.cwiseProduct(var_);
}
Vector CovarianceR::apply_inv(const Vector& v) const {
  require(v.size() == var_.size(), "R: dimension mismatch");
  return v.cwiseQuotient(var_);
}
Vector CovarianceR::apply_sqrt(const Vector& v) const {
  require(v.size() == var_.size(), "R: dimension mismatch");
  return v.cwiseProduct(var_.cwiseSqrt());
}
Vector CovarianceR::apply_inv_sqrt(const Vector& v) const {
  require(v.size() == var_.size(), "R: dimension mismatch");
  return v.cwiseQuotient(var_.cwiseSqrt());
}

CovarianceR CovarianceR::restrict(const std::vector<int>& idx) const {
  Vector v(static_cast<long>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) v[static_cast<long>(a)] = var_[idx[a]];
  return CovarianceR(std::move(v));
}

}  // namespace ddvar
