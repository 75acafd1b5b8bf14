#include "ddvar/assim.hpp"

#include <cmath>

namespace ddvar {

ControlVector::ControlVector(ControlLayout layout, Vector data) : layout_(layout), data_(std::move(data)) {
  require(data_.size() == layout_.size(), "control vector: dimension mismatch");
  require(data_.allFinite(), "control vector: non-finite entry");
}

BlockCovariance build_control_b(const Model& model, int n_windows, const CovarianceSpec& spec) {
  const Grid& g = model.grid();
  const int nf = model.n_fields();
  auto bx = std::make_shared<const CovarianceB>(build_b(g, nf, spec.sigma_b, spec.length, spec.nugget));
  const double fs = spec.sigma_f / spec.sigma_b;
  auto bf = std::make_shared<const CovarianceB>(bx->scaled(fs * fs));
  BlockCovariance b;
  b.add(bx);
  for (int k = 0; k < n_windows; ++k) b.add(bf);
  if (model.boundary_size() > 0) {
    std::vector<Point> pts;
    for (int c : model.mesh().prescribed) pts.push_back({g.col(c) * g.dx, g.row(c) * g.dy});
    const double bs = spec.sigma_bnd / spec.sigma_b;
    auto bb = std::make_shared<const CovarianceB>(
        build_b_points(pts, nf, spec.sigma_bnd, spec.length, spec.nugget * bs * bs));
    for (int k = 0; k < n_windows; ++k) b.add(bb);
  }
  return b;
}

Background apply_increment(const Background& bg, const ControlLayout& layout, const TimeWindows& windows,
                           const Vector& dz) {
  require(dz.size() == layout.size(), "apply_increment: control dimension mismatch");
  const ControlVector c(layout, dz);
  Background out = bg;
  out.x0 += c.x0();
  for (int l = 1; l <= static_cast<int>(bg.forcing.size()); ++l) {
    const int k = windows.window_of_step(l);
    out.forcing[l - 1] += c.forcing(k);
    if (layout.boundary_size > 0) out.boundary[l - 1] += c.boundary(k);
  }
  return out;
}

LinearizedProblem::LinearizedProblem(const Model& model, Trajectory lin, TimeWindows windows, ObservationOperator op)
    : model_(&model), lin_(std::move(lin)), windows_(std::move(windows)), op_(std::move(op)) {
  require(static_cast<int>(lin_.size()) == windows_.n_steps + 1, "linearization trajectory length must be N+1");
  layout_ = {model.state_size(), model.boundary_size(), windows_.n_t};
}

Trajectory LinearizedProblem::tl_trajectory(const Vector& dz) const {
  require(dz.size() == layout_.size(), "tangent sweep: control dimension mismatch");
  const ControlVector c(layout_, dz);
  Trajectory t;
  t.reserve(lin_.size());
  t.push_back(c.x0());
  for (int l = 1; l < static_cast<int>(lin_.size()); ++l) {
    const int k = windows_.window_of_step(l);
    t.push_back(model_->step_tl(lin_[l - 1], t.back(), c.forcing(k), c.boundary(k)));
  }
  return t;
}

Vector LinearizedProblem::apply_h(const Vector& dz) const {
  require(dz.size() == layout_.size(), "apply_h: control dimension mismatch");
  const ControlVector c(layout_, dz);
  Vector out = Vector::Zero(op_.size());
  Vector v = c.x0();
  op_.apply_at(0, v, out);
  for (int l = 1; l < static_cast<int>(lin_.size()); ++l) {
    const int k = windows_.window_of_step(l);
    v = model_->step_tl(lin_[l - 1], v, c.forcing(k), c.boundary(k));
    op_.apply_at(l, v, out);
  }
  return out;
}

Vector LinearizedProblem::adjoint_sweep(const Trajectory& forcing) const {
  require(forcing.size() == lin_.size(), "adjoint sweep: forcing length must be N+1");
  ControlVector out(layout_);
  const int n = static_cast<int>(lin_.size()) - 1;
  Vector lam = forcing[n];
  for (int l = n; l >= 1; --l) {
    const int k = windows_.window_of_step(l);
    AdjointStep s = model_->step_ad(lin_[l - 1], lam);
    out.forcing(k) += s.f;
    if (layout_.boundary_size > 0) out.boundary(k) += s.b;
    lam = std::move(s.x);
    lam += forcing[l - 1];
  }
  out.x0() = lam;
  return out.flatten();
}

Vector LinearizedProblem::apply_ht(const Vector& w) const {
  require(w.size() == op_.size(), "apply_ht: observation dimension mismatch");
  ControlVector out(layout_);
  const int n = static_cast<int>(lin_.size()) - 1;
  Vector lam = Vector::Zero(layout_.state_size);
  op_.adjoint_at(n, w, lam);
  for (int l = n; l >= 1; --l) {
    const int k = windows_.window_of_step(l);
    AdjointStep s = model_->step_ad(lin_[l - 1], lam);
    out.forcing(k) += s.f;
    if (layout_.boundary_size > 0) out.boundary(k) += s.b;
    lam = std::move(s.x);
    op_.adjoint_at(l - 1, w, lam);
  }
  out.x0() = lam;
  return out.flatten();
}

Matrix LinearizedProblem::dense_h() const {
  Matrix h(op_.size(), layout_.size());
  for (int j = 0; j < op_.size(); ++j) h.row(j) = apply_ht(Vector::Unit(op_.size(), j)).transpose();
  return h;
}

VarSystem LinearizedProblem::system(const BlockCovariance& b, const CovarianceR& r, const Vector& d) const {
  require(b.size() == layout_.size(), "system: B dimension does not match the control layout");
  require(r.size() == op_.size() && d.size() == op_.size(), "system: observation dimension mismatch");
  VarSystem s;
  s.control_size = layout_.size();
  s.h = [this](const Vector& v) { return apply_h(v); };
  s.ht = [this](const Vector& v) { return apply_ht(v); };
  s.b = [&b](const Vector& v) { return b.apply(v); };
  s.r = r;
  s.d = d;
  return s;
}

CostBreakdown cost(const Vector& dz, const Vector& d, const BlockCovariance& b, const CovarianceR& r,
                   const LinearizedProblem& h) {
  require(dz.size() == b.size(), "cost: control dimension mismatch");
  require(d.size() == r.size() && d.size() == h.n_obs(), "cost: observation dimension mismatch");
  const Vector m = h.apply_h(dz) - d;
  return make_cost(0.5 * dz.dot(b.apply_inv(dz)), 0.5 * m.dot(r.apply_inv(m)));
}

Vector gradient(const Vector& dz, const Vector& d, const BlockCovariance& b, const CovarianceR& r,
                const LinearizedProblem& h) {
  require(dz.size() == b.size(), "gradient: control dimension mismatch");
  require(d.size() == r.size() && d.size() == h.n_obs(), "gradient: observation dimension mismatch");
  return b.apply_inv(dz) + h.apply_ht(r.apply_inv(h.apply_h(dz) - d));
}

namespace {

void check_primal(const Vector& x, const Vector& d, const BlockCovariance& b, const CovarianceR& r,
                  const LinearizedProblem& h, const std::string& who) {
  const Vector rhs = b.apply(h.apply_ht(r.apply_inv(d)));
  const Vector res = rhs - x - b.apply(h.apply_ht(r.apply_inv(h.apply_h(x))));
  const double rel = rhs.norm() > 0 ? res.norm() / rhs.norm() : res.norm();
  if (!(rel <= 1e-10)) {
    throw NumericalError(who + ": solve did not converge (relative residual " + std::to_string(rel) + ")");
  }
}

}  // namespace

Vector primal_analysis(const Vector& d, const BlockCovariance& b, const CovarianceR& r, const LinearizedProblem& h,
                       SolveMethod method) {
  require(d.size() == h.n_obs() && r.size() == h.n_obs(), "primal_analysis: observation dimension mismatch");
  Vector x;
  if (method == SolveMethod::Dense) {
    const Matrix hm = h.dense_h();
    Matrix g(hm.rows(), hm.cols());
    for (long j = 0; j < hm.rows(); ++j) g.row(j) = b.apply_sqrt_t(hm.row(j).transpose()).transpose();
    const Matrix gr = r.variances().cwiseInverse().cwiseSqrt().asDiagonal() * g;
    Matrix a = gr.transpose() * gr;
    a.diagonal().array() += 1.0;
    x = b.apply_sqrt(a.llt().solve(g.transpose() * r.apply_inv(d)));
  } else {
    SolverOptions opt;
    opt.tol = 1e-13;
    opt.maxit = 10 * h.n_obs() + 50;
    x = primal_pcg(h.system(b, r, d), opt).solution;
  }
  check_primal(x, d, b, r, h, "primal_analysis");
  return x;
}

Vector dual_analysis(const Vector& d, const BlockCovariance& b, const CovarianceR& r, const LinearizedProblem& h,
                     SolveMethod method) {
  require(d.size() == h.n_obs() && r.size() == h.n_obs(), "dual_analysis: observation dimension mismatch");
  const VarSystem sys = h.system(b, r, d);
  Vector w;
  if (method == SolveMethod::Dense) {
    KalmanGain k(sys);
    return k.apply(d);
  }
  SolverOptions opt;
  opt.tol = 1e-13;
  opt.maxit = 10 * h.n_obs() + 50;
  SolveReport rep = dual_cg_rhalf(sys, opt);
  if (!rep.converged) {
    throw NumericalError("dual_analysis: solver did not converge (relative residual " +
                         std::to_string(rep.residuals.back()) + ")");
  }
  return rep.solution;
}

KalmanGain::KalmanGain(const BlockCovariance& b, const CovarianceR& r, const LinearizedProblem& h)
    : KalmanGain(h.system(b, r, Vector::Zero(h.n_obs()))) {}

KalmanGain::KalmanGain(const VarSystem& sys) {
  const long m = sys.d.size();
  bht_.resize(sys.control_size, m);
  for (long j = 0; j < m; ++j) bht_.col(j) = sys.b(sys.ht(Vector::Unit(m, j)));
  s_.resize(m, m);
  for (long j = 0; j < m; ++j) s_.col(j) = sys.h(bht_.col(j));
  s_ = 0.5 * (s_ + s_.transpose()).eval();
  factor(sys.r);
}

void KalmanGain::factor(const CovarianceR& r) {
  s_.diagonal() += r.variances();
  llt_.compute(s_);
  if (llt_.info() != Eigen::Success) throw NumericalError("Kalman gain: H B H' + R is not SPD");
}

Vector KalmanGain::apply(const Vector& d) const {
  require(d.size() == s_.rows(), "Kalman gain: observation dimension mismatch");
  const Vector w = llt_.solve(d);
  const Vector res = s_ * w - d;
  if (d.norm() > 0 && !(res.norm() <= 1e-10 * d.norm())) {
    throw NumericalError("Kalman gain: dual solve residual " + std::to_string(res.norm() / d.norm()));
  }
  return bht_ * w;
}

Vector KalmanGain::apply_adjoint(const Vector& v) const {
  require(v.size() == bht_.rows(), "Kalman gain adjoint: control dimension mismatch");
  return llt_.solve(bht_.transpose() * v);
}

std::string to_string(Solver s) {
  switch (s) {
    case Solver::Primal: return "is4dvar";
    case Solver::DualCG: return "rbl4dvar";
    case Solver::Minres: return "minres";
    case Solver::Rpcg: return "rpcg";
  }
  return "?";
}

Solver parse_solver(const std::string& s) {
  if (s == "is4dvar") return Solver::Primal;
  if (s == "rbl4dvar") return Solver::DualCG;
  if (s == "minres") return Solver::Minres;
  if (s == "rpcg") return Solver::Rpcg;
  throw InvalidArgument("unknown solver '" + s + "' (valid: is4dvar, rbl4dvar, minres, rpcg)");
}

SolveReport run_solver(Solver s, const VarSystem& sys, const SolverOptions& opt) {
  switch (s) {
    case Solver::Primal: return primal_pcg(sys, opt);
    case Solver::DualCG: return dual_cg_rhalf(sys, opt);
    case Solver::Minres: return minres_dual(sys, opt);
    case Solver::Rpcg: return rpcg(sys, opt);
  }
  throw InvalidArgument("unknown solver");
}

AnalysisResult incremental_outer_loop(const Model& model, const Background& bg, const ObservationSet& obs,
                                      const BlockCovariance& b, const TimeWindows& windows,
                                      const OuterLoopConfig& cfg) {
  require(cfg.nouter >= 1, "outer loop: Nouter must be >= 1");
  require(cfg.ninner >= 1, "outer loop: Ninner must be >= 1");
  require(obs.size() >= 1, "outer loop: no observations");
  const ObservationOperator op(model.grid(), model.n_fields(), obs);
  const CovarianceR r(obs.variances());
  const ControlLayout layout{model.state_size(), model.boundary_size(), windows.n_t};
  require(b.size() == layout.size(), "outer loop: B dimension does not match the control layout");

  AnalysisResult res;
  res.dz = Vector::Zero(layout.size());
  for (int o = 0; o < cfg.nouter; ++o) {
    const Background cur = apply_increment(bg, layout, windows, res.dz);
    Trajectory traj;
    try {
      traj = model.run_nl(cur.x0, cur.forcing, cur.boundary);
    } catch (const NumericalError& e) {
      throw NumericalError("outer loop " + std::to_string(o + 1) + ": " + e.what());
    }
    const LinearizedProblem h(model, std::move(traj), windows, op);
    const Vector d = innovations(h.trajectory(), obs, op) + h.apply_h(res.dz);
    SolverOptions opt;
    opt.tol = cfg.tol;
    opt.maxit = cfg.ninner;
    opt.reorthogonalize = cfg.reorthogonalize;
    SolveReport rep = run_solver(cfg.solver, h.system(b, r, d), opt);
    for (std::size_t k = 0; k < rep.costs.size(); ++k) {
      res.history.push_back({o + 1, static_cast<int>(k), rep.costs[k]});
    }
    res.dz = rep.solution;
    res.converged = rep.converged;
    res.reports.push_back(std::move(rep));
    res.outer_loops = o + 1;
  }
  const Background fin = apply_increment(bg, layout, windows, res.dz);
  res.analysis = model.run_nl(fin.x0, fin.forcing, fin.boundary);
  return res;
}

}  // namespace ddvar
