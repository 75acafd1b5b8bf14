#include "ddvar/model.hpp"

#include <algorithm>
#include <cmath>

namespace ddvar {

std::string to_string(ModelKind kind) { return kind == ModelKind::Linear ? "linear" : "burgers"; }
std::string to_string(BoundaryKind kind) { return kind == BoundaryKind::Periodic ? "periodic" : "prescribed"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "linear") return ModelKind::Linear;
  if (s == "burgers") return ModelKind::Burgers;
  throw InvalidArgument("unknown model kind '" + s + "' (valid: linear, burgers)");
}

BoundaryKind parse_boundary_kind(const std::string& s) {
  if (s == "periodic") return BoundaryKind::Periodic;
  if (s == "prescribed") return BoundaryKind::Prescribed;
  throw InvalidArgument("unknown boundary treatment '" + s + "' (valid: periodic, prescribed)");
}

void ModelConfig::validate(const Grid& grid) const {
  grid.validate();
  require(nu >= 0 && std::isfinite(nu), "model: viscosity must be finite and >= 0");
  require(std::isfinite(cx) && std::isfinite(cy), "model: velocities must be finite");
  const double h = std::min(grid.dx, grid.dy);
  if (nu > 0 && grid.dt > h * h / (4.0 * nu)) {
    throw InvalidArgument("model: dt exceeds the diffusive stability bound min(dx,dy)^2/(4 nu)");
  }
  const double cfl = grid.dt * (std::abs(cx) / grid.dx + std::abs(cy) / grid.dy);
  if (cfl > 0.5) throw InvalidArgument("model: CFL number exceeds 0.5");
}

Mesh build_global_mesh(const Grid& grid, BoundaryKind boundary) {
  Mesh m;
  m.dx = grid.dx;
  m.dy = grid.dy;
  const int n = grid.cells();
  m.cell_ids.resize(n);
  m.nbr.resize(n);
  m.kind.assign(n, CellKind::Interior);
  m.slot.assign(n, -1);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const int c = grid.index(i, j);
      m.cell_ids[c] = c;
      if (boundary == BoundaryKind::Periodic) {
        m.nbr[c] = {grid.index((i + 1) % grid.nx, j), grid.index((i + grid.nx - 1) % grid.nx, j),
                    grid.index(i, (j + 1) % grid.ny), grid.index(i, (j + grid.ny - 1) % grid.ny)};
      } else {
        m.nbr[c] = {i + 1 < grid.nx ? grid.index(i + 1, j) : -1, i > 0 ? grid.index(i - 1, j) : -1,
                    j + 1 < grid.ny ? grid.index(i, j + 1) : -1, j > 0 ? grid.index(i, j - 1) : -1};
        if (i == 0 || j == 0 || i == grid.nx - 1 || j == grid.ny - 1) {
          m.kind[c] = CellKind::Prescribed;
          m.slot[c] = m.n_prescribed();
          m.prescribed.push_back(c);
        }
      }
    }
  }
  return m;
}

Mesh build_sub_mesh(const Mesh& global, const std::vector<int>& cells) {
  Mesh m;
  m.dx = global.dx;
  m.dy = global.dy;
  const int n = static_cast<int>(cells.size());
  std::vector<int> local_of(global.size(), -1);
  for (int q = 0; q < n; ++q) {
    require(cells[q] >= 0 && cells[q] < global.size(), "sub-mesh: cell id out of range");
    require(local_of[cells[q]] < 0, "sub-mesh: duplicate cell");
    local_of[cells[q]] = q;
  }
  m.cell_ids = cells;
  m.nbr.resize(n);
  m.kind.assign(n, CellKind::Interior);
  m.slot.assign(n, -1);
  for (int q = 0; q < n; ++q) {
    const int g = cells[q];
    bool complete = true;
    for (int s = 0; s < 4; ++s) {
      const int gn = global.nbr[g][s];
      m.nbr[q][s] = gn >= 0 ? local_of[gn] : -1;
      if (global.kind[g] == CellKind::Interior && m.nbr[q][s] < 0) complete = false;
    }
    if (global.kind[g] == CellKind::Prescribed) {
      m.kind[q] = CellKind::Prescribed;
      m.slot[q] = m.n_prescribed();
      m.prescribed.push_back(q);
    } else if (global.kind[g] == CellKind::Hold || !complete) {
      m.kind[q] = CellKind::Hold;
    }
  }
  return m;
}

Dynamics::Dynamics(ModelConfig config, double dt) : config_(config), dt_(dt) {}

namespace {

void check_sizes(const Mesh& m, int nf, const Vector& x, const Vector& f, const Vector& b) {
  const long n = static_cast<long>(nf) * m.size();
  require(x.size() == n, "model step: state size mismatch");
  require(f.size() == n, "model step: forcing size mismatch");
  require(b.size() == static_cast<long>(nf) * m.n_prescribed(), "model step: boundary size mismatch");
}

}  // namespace

Vector Dynamics::step_nl(const Mesh& m, const Vector& x, const Vector& f, const Vector& b) const {
  const int nf = n_fields();
  check_sizes(m, nf, x, f, b);
  const int n = m.size();
  const int nb = m.n_prescribed();
  const double ax = 1.0 / (2.0 * m.dx), ay = 1.0 / (2.0 * m.dy);
  const double lx = 1.0 / (m.dx * m.dx), ly = 1.0 / (m.dy * m.dy);
  const bool burgers = config_.kind == ModelKind::Burgers;
  Vector out(x.size());
  for (int a = 0; a < nf; ++a) {
    const double* xa = x.data() + a * n;
    for (int c = 0; c < n; ++c) {
      const int o = a * n + c;
      if (m.kind[c] == CellKind::Hold) {
        out[o] = x[o];
        continue;
      }
      if (m.kind[c] == CellKind::Prescribed) {
        out[o] = b[a * nb + m.slot[c]];
        continue;
      }
      const auto& nb4 = m.nbr[c];
      const double u = burgers ? x[c] : config_.cx;
      const double v = burgers ? x[n + c] : config_.cy;
      const double ddx = (xa[nb4[0]] - xa[nb4[1]]) * ax;
      const double ddy = (xa[nb4[2]] - xa[nb4[3]]) * ay;
      const double lap = (xa[nb4[0]] - 2.0 * xa[c] + xa[nb4[1]]) * lx + (xa[nb4[2]] - 2.0 * xa[c] + xa[nb4[3]]) * ly;
      out[o] = xa[c] + dt_ * (-u * ddx - v * ddy + config_.nu * lap + f[o]);
    }
  }
  return out;
}

Vector Dynamics::step_tl(const Mesh& m, const Vector& x, const Vector& dx, const Vector& df,
                         const Vector& db) const {
  const int nf = n_fields();
  check_sizes(m, nf, x, df, db);
  require(dx.size() == x.size(), "model step: increment size mismatch");
  const int n = m.size();
  const int nb = m.n_prescribed();
  const double ax = 1.0 / (2.0 * m.dx), ay = 1.0 / (2.0 * m.dy);
  const double lx = 1.0 / (m.dx * m.dx), ly = 1.0 / (m.dy * m.dy);
  const bool burgers = config_.kind == ModelKind::Burgers;
  Vector out(x.size());
  for (int a = 0; a < nf; ++a) {
    const double* xa = x.data() + a * n;
    const double* da = dx.data() + a * n;
    for (int c = 0; c < n; ++c) {
      const int o = a * n + c;
      if (m.kind[c] == CellKind::Hold) {
        out[o] = dx[o];
        continue;
      }
      if (m.kind[c] == CellKind::Prescribed) {
        out[o] = db[a * nb + m.slot[c]];
        continue;
      }
      const auto& nb4 = m.nbr[c];
      const double u = burgers ? x[c] : config_.cx;
      const double v = burgers ? x[n + c] : config_.cy;
      const double ddx = (da[nb4[0]] - da[nb4[1]]) * ax;
      const double ddy = (da[nb4[2]] - da[nb4[3]]) * ay;
      const double lap = (da[nb4[0]] - 2.0 * da[c] + da[nb4[1]]) * lx + (da[nb4[2]] - 2.0 * da[c] + da[nb4[3]]) * ly;
      double tend = -u * ddx - v * ddy + config_.nu * lap + df[o];
      if (burgers) {
        const double gx = (xa[nb4[0]] - xa[nb4[1]]) * ax;
        const double gy = (xa[nb4[2]] - xa[nb4[3]]) * ay;
        tend -= dx[c] * gx + dx[n + c] * gy;
      }
      out[o] = da[c] + dt_ * tend;
    }
  }
  return out;
}

AdjointStep Dynamics::step_ad(const Mesh& m, const Vector& x, const Vector& p) const {
  const int nf = n_fields();
  const int n = m.size();
  const int nb = m.n_prescribed();
  require(x.size() == static_cast<long>(nf) * n, "model adjoint: state size mismatch");
  require(p.size() == x.size(), "model adjoint: adjoint size mismatch");
  const double ax = 1.0 / (2.0 * m.dx), ay = 1.0 / (2.0 * m.dy);
  const double lx = 1.0 / (m.dx * m.dx), ly = 1.0 / (m.dy * m.dy);
  const bool burgers = config_.kind == ModelKind::Burgers;
  const double nu = config_.nu;
  AdjointStep r{Vector::Zero(x.size()), Vector::Zero(x.size()), Vector::Zero(static_cast<long>(nf) * nb)};
  for (int a = 0; a < nf; ++a) {
    const double* xa = x.data() + a * n;
    double* ra = r.x.data() + a * n;
    for (int c = 0; c < n; ++c) {
      const int o = a * n + c;
      const double pc = p[o];
      if (m.kind[c] == CellKind::Hold) {
        r.x[o] += pc;
        continue;
      }
      if (m.kind[c] == CellKind::Prescribed) {
        r.b[a * nb + m.slot[c]] += pc;
        continue;
      }
      const auto& nb4 = m.nbr[c];
      const double u = burgers ? x[c] : config_.cx;
      const double v = burgers ? x[n + c] : config_.cy;
      const double s = dt_ * pc;
      ra[c] += pc - s * nu * 2.0 * (lx + ly);
      ra[nb4[0]] += s * (-u * ax + nu * lx);
      ra[nb4[1]] += s * (u * ax + nu * lx);
      ra[nb4[2]] += s * (-v * ay + nu * ly);
      ra[nb4[3]] += s * (v * ay + nu * ly);
      r.f[o] += s;
      if (burgers) {
        const double gx = (xa[nb4[0]] - xa[nb4[1]]) * ax;
        const double gy = (xa[nb4[2]] - xa[nb4[3]]) * ay;
        r.x[c] -= s * gx;
        r.x[n + c] -= s * gy;
      }
    }
  }
  return r;
}

Model::Model(Grid grid, ModelConfig config)
    : grid_(grid), dyn_((config.validate(grid), config), grid.dt), mesh_(build_global_mesh(grid, config.boundary)) {}

Vector Model::step_nl(const Vector& x, const Vector& f, const Vector& b, int step) const {
  Vector out = dyn_.step_nl(mesh_, x, f, b);
  if (!out.allFinite()) {
    throw NumericalError("model diverged (non-finite state) at step " + std::to_string(step));
  }
  return out;
}

Trajectory Model::run_nl(const Vector& x0, const ForcingSeries& f, const BoundarySeries& b) const {
  require(f.size() == b.size(), "run_nl: forcing and boundary series lengths differ");
  Trajectory traj;
  traj.reserve(f.size() + 1);
  traj.push_back(x0);
  for (std::size_t l = 0; l < f.size(); ++l) traj.push_back(step_nl(traj.back(), f[l], b[l], static_cast<int>(l) + 1));
  return traj;
}

Vector Model::step_tl(const Vector& x, const Vector& dx, const Vector& df, const Vector& db) const {
  return dyn_.step_tl(mesh_, x, dx, df, db);
}

AdjointStep Model::step_ad(const Vector& x, const Vector& p) const { return dyn_.step_ad(mesh_, x, p); }

Vector Model::boundary_of(const Vector& x) const {
  const int n = grid_.cells();
  const int nb = mesh_.n_prescribed();
  Vector b(static_cast<long>(n_fields()) * nb);
  for (int a = 0; a < n_fields(); ++a)
    for (int s = 0; s < nb; ++s) b[a * nb + s] = x[a * n + mesh_.prescribed[s]];
  return b;
}

WindowOperator::WindowOperator(const Model& model, const Trajectory& traj, int start, int end)
    : model_(&model), traj_(&traj), start_(start), end_(end) {
  require(start >= 0 && end > start, "window operator: empty window");
  require(static_cast<int>(traj.size()) > end, "window operator: trajectory does not cover the window");
}

Vector WindowOperator::apply_tl(const Vector& dx, const Vector& df, const Vector& db) const {
  Vector v = dx;
  for (int l = start_ + 1; l <= end_; ++l) v = model_->step_tl((*traj_)[l - 1], v, df, db);
  return v;
}

AdjointStep WindowOperator::apply_ad(const Vector& p) const {
  AdjointStep acc{p, Vector::Zero(model_->state_size()), Vector::Zero(model_->boundary_size())};
  for (int l = end_; l > start_; --l) {
    AdjointStep s = model_->step_ad((*traj_)[l - 1], acc.x);
    acc.x = std::move(s.x);
    acc.f += s.f;
    acc.b += s.b;
  }
  return acc;
}

WindowOperator window_operator(const Model& model, const Trajectory& traj, const TimeWindows& windows, int k) {
  if (k < 0 || k >= windows.n_t) throw InvalidArgument("window index out of range");
  return WindowOperator(model, traj, windows.starts[k], windows.end(k));
}

}  // namespace ddvar
