#include "ddvar/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace ddvar {

void TransportFunctional::validate(long state_size) const {
  require(h.size() == state_size, "functional: weight vector does not match the state size");
  require(h.allFinite(), "functional: weights must be finite");
  require(h.cwiseAbs().maxCoeff() > 0.0, "functional: weight vector is identically zero");
  require(count >= 1, "functional: averaging count must be >= 1");
}

TransportFunctional column_transport(const Grid& grid, int n_fields, int column, int count) {
  require(column >= 0 && column < grid.nx, "functional: section column outside the grid");
  require(n_fields >= 1, "functional: n_fields must be >= 1");
  TransportFunctional f;
  f.h = Vector::Zero(static_cast<long>(n_fields) * grid.cells());
  for (int j = 0; j < grid.ny; ++j) f.h[grid.index(column, j)] = grid.dy;
  f.count = count;
  return f;
}

double evaluate_functional(const Trajectory& traj, const TransportFunctional& f) {
  require(static_cast<int>(traj.size()) > f.count, "functional: trajectory shorter than the averaging count");
  double acc = 0.0;
  for (int i = 1; i <= f.count; ++i) {
    require(traj[i].size() == f.h.size(), "functional: state size mismatch");
    acc += f.h.dot(traj[i]);
  }
  return acc / f.count;
}

Vector adjoint_sensitivity(const LinearizedProblem& lp, const TransportFunctional& f) {
  const Model& m = lp.model();
  require(f.h.size() == m.state_size() && f.h.allFinite(), "functional: weights must be finite and match the state");
  require(f.count >= 1, "functional: averaging count must be >= 1");
  const int n = m.grid().n_steps;
  require(f.count <= n, "functional: averaging count exceeds the assimilation window");
  Trajectory forcing(n + 1, Vector::Zero(m.state_size()));
  for (int l = 1; l <= f.count; ++l) forcing[l] = f.h / f.count;
  return lp.adjoint_sweep(forcing);
}

namespace {

Vector mask(const Vector& v, long from, long len) {
  Vector out = Vector::Zero(v.size());
  out.segment(from, len) = v.segment(from, len);
  return out;
}

double functional_of(const Model& model, const Background& bg, const LinearizedProblem& lp, const Vector& dz,
                     const TransportFunctional& f) {
  const Background a = apply_increment(bg, lp.layout(), lp.windows(), dz);
  return evaluate_functional(model.run_nl(a.x0, a.forcing, a.boundary), f);
}

ImpactReport impact_about(const Model& model, const Background& bg, const ObservationSet& obs,
                          const LinearizedProblem& lp, const KalmanGain& k, const Vector& base, const Vector& delta,
                          const TransportFunctional& f) {
  require(delta.size() == obs.size() && base.size() == obs.size(), "impact: innovation dimension mismatch");
  const ControlLayout& cl = lp.layout();
  const Vector s = adjoint_sensitivity(lp, f);
  const long nx = cl.state_size;
  const long nf = static_cast<long>(cl.n_windows) * cl.state_size;
  const long nb = static_cast<long>(cl.n_windows) * cl.boundary_size;
  ImpactReport rep;
  rep.gx = k.apply_adjoint(mask(s, 0, nx));
  rep.gf = k.apply_adjoint(mask(s, nx, nf));
  rep.gb = nb > 0 ? k.apply_adjoint(mask(s, nx + nf, nb)) : Vector(Vector::Zero(obs.size()));
  rep.g = rep.gx + rep.gf + rep.gb;
  rep.contributions = delta.cwiseProduct(rep.g);

  const double i0 = functional_of(model, bg, lp, k.apply(base), f);
  for (int j = 0; j < obs.size(); ++j) {
    ImpactRow& row = rep.platforms[static_cast<int>(obs[j].platform)];
    row.count += 1;
    row.tl += rep.contributions[j];
    row.ic += delta[j] * rep.gx[j];
    row.fc += delta[j] * rep.gf[j];
    row.bc += delta[j] * rep.gb[j];
    rep.delta_i += rep.contributions[j];
  }
  for (int p = 0; p < kPlatformCount; ++p) {
    ImpactRow& row = rep.platforms[p];
    if (row.count == 0) continue;
    Vector dp = Vector::Zero(obs.size());
    for (int j = 0; j < obs.size(); ++j)
      if (static_cast<int>(obs[j].platform) == p) dp[j] = delta[j];
    row.nl = functional_of(model, bg, lp, k.apply(base + dp), f) - i0;
    rep.total.count += row.count;
    rep.total.ic += row.ic;
    rep.total.fc += row.fc;
    rep.total.bc += row.bc;
  }
  rep.total.tl = rep.delta_i;
  rep.total.nl = functional_of(model, bg, lp, k.apply(base + delta), f) - i0;
  return rep;
}

}  // namespace

ImpactReport observation_impact(const Model& model, const Background& bg, const ObservationSet& obs,
                                const LinearizedProblem& lp, const KalmanGain& k, const Vector& d,
                                const TransportFunctional& f) {
  return impact_about(model, bg, obs, lp, k, Vector::Zero(obs.size()), d, f);
}

ImpactReport observation_sensitivity(const Model& model, const Background& bg, const ObservationSet& obs,
                                     const LinearizedProblem& lp, const KalmanGain& k, const Vector& d,
                                     const Vector& dy, const TransportFunctional& f) {
  return impact_about(model, bg, obs, lp, k, d, dy, f);
}

ForecastImpact forecast_impact(const Model& model, const Vector& xa, const Vector& xb, int horizon,
                               const TransportFunctional& f, const std::vector<Observation>* verifying) {
  require(horizon >= 1, "forecast: horizon must be at least one step");
  require(xa.size() == model.state_size() && xb.size() == model.state_size(), "forecast: state size mismatch");
  f.validate(model.state_size());
  TransportFunctional fh = f;
  fh.count = horizon;
  auto run = [&](const Vector& x0) {
    return model.run_nl(x0, ForcingSeries(horizon, Vector::Zero(model.state_size())),
                        BoundarySeries(horizon, model.boundary_of(x0)));
  };
  const Trajectory ta = run(xa);
  const Trajectory tb = run(xb);
  ForecastImpact out;
  out.delta_i = evaluate_functional(ta, fh) - evaluate_functional(tb, fh);
  if (verifying != nullptr && !verifying->empty()) {
    Grid g = model.grid();
    g.n_steps = horizon;
    const ObservationSet vo(*verifying, g);
    const ObservationOperator op(g, model.n_fields(), vo);
    const CovarianceR r(vo.variances());
    auto misfit = [&](const Trajectory& t) {
      const Vector m = op.apply(t) - vo.values();
      return 0.5 * m.dot(r.apply_inv(m));
    };
    out.misfit_a = misfit(ta);
    out.misfit_b = misfit(tb);
    out.misfit_reduction = out.misfit_b - out.misfit_a;
    out.has_misfit = true;
  }
  return out;
}

CostHistoryReport cost_history_report(const std::vector<CostRow>& history, int n_obs) {
  require(!history.empty(), "cost history: empty history");
  require(n_obs >= 1, "cost history: n_obs must be >= 1");
  return {history, 0.5 * n_obs};
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void impact_row(std::ostream& os, const std::string& name, const ImpactRow& r) {
  os << name << ',' << r.count << ',' << num(r.nl) << ',' << num(r.tl) << ',' << num(r.ic) << ',' << num(r.fc)
     << ',' << num(r.bc) << '\n';
}

}  // namespace

void write_cost_history(std::ostream& os, const CostHistoryReport& rep) {
  os << "outer,inner,J,Jb,Jo,J_min\n";
  for (const CostRow& r : rep.rows) {
    os << r.outer << ',' << r.inner << ',' << num(r.cost.J) << ',' << num(r.cost.Jb) << ',' << num(r.cost.Jo) << ','
       << num(rep.j_min) << '\n';
  }
}

void write_impact(std::ostream& os, const ImpactReport& rep) {
  os << "platform,count,NL,TL,IC,FC,BC\n";
  for (int p = 0; p < kPlatformCount; ++p) impact_row(os, to_string(static_cast<Platform>(p)), rep.platforms[p]);
  impact_row(os, "total", rep.total);
}

}  // namespace ddvar
