#include "ddvar/krylov.hpp"

#include <cmath>
#include <limits>

namespace ddvar {

LinearOperator identity_operator(long dim) {
  return {dim, [](const Vector& v) { return v; }, [](const Vector& v) { return v; }};
}

LinearOperator matrix_operator(const Matrix& m) {
  return {m.rows(), [m](const Vector& v) -> Vector { return m * v; },
          [m](const Vector& v) -> Vector { return m.transpose() * v; }};
}

namespace {

[[noreturn]] void breakdown(const std::string& solver, int k, double value) {
  throw NumericalError(solver + ": breakdown at iteration " + std::to_string(k) + " (curvature " +
                       std::to_string(value) + " <= 0, operator not SPD)");
}

// Projects r (and its preconditioned image z) against previous pairs in the z'r inner product.
void reorthogonalize(Vector& r, Vector& z, const std::vector<Vector>& rs, const std::vector<Vector>& zs) {
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double c = zs[i].dot(r) / zs[i].dot(rs[i]);
    r -= c * rs[i];
    z -= c * zs[i];
  }
}

}  // namespace

SolveReport pcg(const LinearOperator& a, const Vector& b, const LinearOperator& precond, const SolverOptions& opt,
                const PcgObserver& observer) {
  require(b.size() == a.dim, "pcg: right-hand side dimension mismatch");
  SolveReport rep;
  rep.solver = "pcg";
  Vector x = Vector::Zero(b.size());
  Vector r = b;
  Vector z = precond(r);
  const double bnorm = b.norm();
  rep.residuals.push_back(bnorm > 0 ? 1.0 : 0.0);
  rep.quadratic.push_back(0.0);
  if (opt.keep_iterates) rep.iterates.push_back(x);
  if (observer) observer(0, x, r);
  if (bnorm == 0.0) {
    rep.solution = x;
    rep.converged = true;
    return rep;
  }
  std::vector<Vector> rs, zs;
  if (opt.reorthogonalize) {
    rs.push_back(r);
    zs.push_back(z);
  }
  Vector p = z;
  double rz = r.dot(z);
  for (int k = 1; k <= opt.maxit; ++k) {
    const Vector ap = a(p);
    const double pap = p.dot(ap);
    if (!(pap > 0)) breakdown(rep.solver, k, pap);
    const double alpha = rz / pap;
    x += alpha * p;
    r -= alpha * ap;
    z = precond(r);
    if (opt.reorthogonalize) {
      reorthogonalize(r, z, rs, zs);
      rs.push_back(r);
      zs.push_back(z);
    }
    const double rz_new = r.dot(z);
    rep.iterations = k;
    rep.residuals.push_back(r.norm() / bnorm);
    rep.quadratic.push_back(-0.5 * x.dot(b + r));
    if (opt.keep_iterates) rep.iterates.push_back(x);
    if (observer) observer(k, x, r);
    if (rep.residuals.back() <= opt.tol) {
      rep.converged = true;
      break;
    }
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  rep.solution = x;
  return rep;
}

SolveReport minres(const LinearOperator& a, const Vector& b, const SolverOptions& opt,
                   const MinresObserver& observer) {
  require(b.size() == a.dim, "minres: right-hand side dimension mismatch");
  SolveReport rep;
  rep.solver = "minres";
  const long n = b.size();
  Vector x = Vector::Zero(n), ax = Vector::Zero(n);
  const double beta1 = b.norm();
  rep.residuals.push_back(beta1 > 0 ? 1.0 : 0.0);
  if (opt.keep_iterates) rep.iterates.push_back(x);
  if (observer) observer(0, x, ax);
  if (beta1 == 0.0) {
    rep.solution = x;
    rep.converged = true;
    return rep;
  }
  Vector r1 = b, r2 = b, y = b;
  Vector w = Vector::Zero(n), w1, w2 = Vector::Zero(n);
  Vector aw = Vector::Zero(n), aw1, aw2 = Vector::Zero(n);
  std::vector<Vector> basis;
  double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1, cs = -1.0, sn = 0.0;
  for (int k = 1; k <= opt.maxit; ++k) {
    Vector v = y / beta;
    if (opt.reorthogonalize) {
      for (const Vector& q : basis) v -= q.dot(v) * q;
      v.normalize();
      basis.push_back(v);
    }
    const Vector av = a(v);
    y = av;
    if (k >= 2) y -= (beta / oldb) * r1;
    const double alfa = v.dot(y);
    y -= (alfa / beta) * r2;
    r1 = r2;
    r2 = y;
    oldb = beta;
    beta = r2.norm();
    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;
    const double gamma = std::hypot(gbar, beta);
    if (!(gamma > 0)) throw NumericalError("minres: breakdown at iteration " + std::to_string(k));
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;
    w1 = w2;
    w2 = w;
    w = (v - oldeps * w1 - delta * w2) / gamma;
    aw1 = aw2;
    aw2 = aw;
    aw = (av - oldeps * aw1 - delta * aw2) / gamma;
    x += phi * w;
    ax += phi * aw;
    rep.iterations = k;
    rep.residuals.push_back(std::abs(phibar) / beta1);
    if (opt.keep_iterates) rep.iterates.push_back(x);
    if (observer) observer(k, x, ax);
    if (rep.residuals.back() <= opt.tol || beta <= 1e-14 * beta1) {
      rep.converged = rep.residuals.back() <= opt.tol || beta <= 1e-14 * beta1;
      break;
    }
  }
  rep.solution = x;
  return rep;
}

CostBreakdown observation_cost(const VarSystem& sys, const Vector& hx, double jb) {
  const Vector m = hx - sys.d;
  return make_cost(jb, 0.5 * m.dot(sys.r.apply_inv(m)));
}

SolveReport primal_pcg(const VarSystem& sys, const SolverOptions& opt) {
  SolveReport rep;
  rep.solver = "is4dvar";
  const long nz = sys.control_size;
  Vector x = Vector::Zero(nz), bix = Vector::Zero(nz);
  Vector hx = Vector::Zero(sys.d.size());
  Vector r = sys.ht(sys.r.apply_inv(sys.d));
  Vector z = sys.b(r);
  double rz = r.dot(z);
  const double rz0 = rz;
  rep.residuals.push_back(rz0 > 0 ? 1.0 : 0.0);
  rep.costs.push_back(observation_cost(sys, hx, 0.0));
  if (opt.keep_iterates) rep.iterates.push_back(x);
  if (rz0 <= 0) {
    rep.solution = x;
    rep.converged = true;
    return rep;
  }
  std::vector<Vector> rs, zs;
  if (opt.reorthogonalize) {
    rs.push_back(r);
    zs.push_back(z);
  }
  Vector p = z, bip = r;
  for (int k = 1; k <= opt.maxit; ++k) {
    const Vector hp = sys.h(p);
    const Vector ap = bip + sys.ht(sys.r.apply_inv(hp));
    const double pap = p.dot(ap);
    if (!(pap > 0)) breakdown(rep.solver, k, pap);
    const double alpha = rz / pap;
    x += alpha * p;
    bix += alpha * bip;
    hx += alpha * hp;
    r -= alpha * ap;
    z = sys.b(r);
    if (opt.reorthogonalize) {
      reorthogonalize(r, z, rs, zs);
      rs.push_back(r);
      zs.push_back(z);
    }
    const double rz_new = r.dot(z);
    rep.iterations = k;
    rep.residuals.push_back(std::sqrt(std::max(rz_new, 0.0) / rz0));
    rep.costs.push_back(observation_cost(sys, hx, 0.5 * x.dot(bix)));
    if (opt.keep_iterates) rep.iterates.push_back(x);
    if (rep.residuals.back() <= opt.tol) {
      rep.converged = true;
      break;
    }
    const double beta = rz_new / rz;
    p = z + beta * p;
    bip = r + beta * bip;
    rz = rz_new;
  }
  rep.solution = x;
  return rep;
}

namespace {

struct ScaledDual {
  LinearOperator op;
  Vector rhs;
};

ScaledDual scaled_dual(const VarSystem& sys) {
  const VarSystem* s = &sys;
  LinearOperator op{sys.d.size(), [s](const Vector& v) -> Vector {
                      const Vector w = s->r.apply_inv_sqrt(v);
                      return s->r.apply_inv_sqrt(s->h(s->b(s->ht(w)))) + v;
                    },
                    {}};
  op.apply_transpose = op.apply;
  return {op, sys.r.apply_inv_sqrt(sys.d)};
}

// Cost at w = R^-1/2 w^ given the image HBH'w.
CostBreakdown dual_cost(const VarSystem& sys, const Vector& w, const Vector& hbhw) {
  return observation_cost(sys, hbhw, 0.5 * w.dot(hbhw));
}

}  // namespace

SolveReport dual_cg_rhalf(const VarSystem& sys, const SolverOptions& opt) {
  const ScaledDual sd = scaled_dual(sys);
  std::vector<CostBreakdown> costs;
  std::vector<Vector> iterates;
  auto observe = [&](int, const Vector& wh, const Vector& rh) {
    const Vector w = sys.r.apply_inv_sqrt(wh);
    const Vector hbhw = sys.r.apply_sqrt(sd.rhs - rh - wh);
    costs.push_back(dual_cost(sys, w, hbhw));
    if (opt.keep_iterates) iterates.push_back(sys.b(sys.ht(w)));
  };
  SolverOptions o = opt;
  o.keep_iterates = false;
  SolveReport rep = pcg(sd.op, sd.rhs, identity_operator(sd.op.dim), o, observe);
  rep.solver = "rbl4dvar";
  rep.solution = sys.b(sys.ht(sys.r.apply_inv_sqrt(rep.solution)));
  rep.costs = std::move(costs);
  rep.iterates = std::move(iterates);
  rep.quadratic.clear();
  return rep;
}

SolveReport minres_dual(const VarSystem& sys, const SolverOptions& opt) {
  const ScaledDual sd = scaled_dual(sys);
  std::vector<CostBreakdown> costs;
  std::vector<Vector> iterates;
  auto observe = [&](int, const Vector& wh, const Vector& awh) {
    const Vector w = sys.r.apply_inv_sqrt(wh);
    const Vector hbhw = sys.r.apply_sqrt(awh - wh);
    costs.push_back(dual_cost(sys, w, hbhw));
    if (opt.keep_iterates) iterates.push_back(sys.b(sys.ht(w)));
  };
  SolverOptions o = opt;
  o.keep_iterates = false;
  SolveReport rep = minres(sd.op, sd.rhs, o, observe);
  rep.solver = "minres";
  rep.solution = sys.b(sys.ht(sys.r.apply_inv_sqrt(rep.solution)));
  rep.costs = std::move(costs);
  rep.iterates = std::move(iterates);
  return rep;
}

SolveReport rpcg(const VarSystem& sys, const SolverOptions& opt) {
  SolveReport rep;
  rep.solver = "rpcg";
  auto hbh = [&](const Vector& v) { return sys.h(sys.b(sys.ht(v))); };
  const long m = sys.d.size();
  Vector xh = Vector::Zero(m), v = Vector::Zero(m);
  Vector rh = sys.r.apply_inv(sys.d);
  Vector t = hbh(rh);
  double rz = rh.dot(t);
  const double rz0 = rz;
  rep.residuals.push_back(rz0 > 0 ? 1.0 : 0.0);
  rep.costs.push_back(observation_cost(sys, v, 0.0));
  if (opt.keep_iterates) rep.iterates.push_back(Vector::Zero(sys.control_size));
  if (rz0 <= 0) {
    rep.solution = Vector::Zero(sys.control_size);
    rep.converged = true;
    return rep;
  }
  std::vector<Vector> rs, ts;
  if (opt.reorthogonalize) {
    rs.push_back(rh);
    ts.push_back(t);
  }
  Vector ph = rh, w = t;
  for (int k = 1; k <= opt.maxit; ++k) {
    const Vector qh = ph + sys.r.apply_inv(w);
    const double pap = w.dot(qh);
    if (!(pap > 0)) breakdown(rep.solver, k, pap);
    const double alpha = rz / pap;
    xh += alpha * ph;
    v += alpha * w;
    rh -= alpha * qh;
    t = hbh(rh);
    if (opt.reorthogonalize) {
      reorthogonalize(rh, t, rs, ts);
      rs.push_back(rh);
      ts.push_back(t);
    }
    const double rz_new = rh.dot(t);
    rep.iterations = k;
    rep.residuals.push_back(std::sqrt(std::max(rz_new, 0.0) / rz0));
    rep.costs.push_back(observation_cost(sys, v, 0.5 * xh.dot(v)));
    if (opt.keep_iterates) rep.iterates.push_back(sys.b(sys.ht(xh)));
    if (rep.residuals.back() <= opt.tol) {
      rep.converged = true;
      break;
    }
    const double beta = rz_new / rz;
    ph = rh + beta * ph;
    w = t + beta * w;
    rz = rz_new;
  }
  rep.solution = sys.b(sys.ht(xh));
  return rep;
}

}  // namespace ddvar
