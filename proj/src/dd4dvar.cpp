#include "ddvar/dd4dvar.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace ddvar {

std::string to_string(DDAcceleration a) { return a == DDAcceleration::Krylov ? "krylov" : "richardson"; }

DDAcceleration parse_acceleration(const std::string& s) {
  if (s == "krylov") return DDAcceleration::Krylov;
  if (s == "richardson") return DDAcceleration::Richardson;
  throw InvalidArgument("unknown DD acceleration '" + s + "' (valid: krylov, richardson)");
}

void DDConfig::validate() const {
  require(max_iter >= 1, "dd: max_iter (n-bar) must be >= 1");
  require(tol > 0, "dd: tau_dd must be positive");
  require(ninner >= 1, "dd: ninner must be >= 1");
  require(inner_tol > 0, "dd: inner tolerance must be positive");
  require(weights.alpha > 0, "dd: alpha must be positive");
  require(weights.beta_i >= 0 && weights.beta_j >= 0, "dd: beta weights must be >= 0");
  require(weights.gamma_i >= 0 && weights.gamma_j >= 0, "dd: gamma weights must be >= 0");
  require(relaxation > 0, "dd: relaxation must be positive");
}

NeighborTrace zero_trace(const LocalProblem& p) {
  return {Trajectory(p.n_steps() + 1, Vector::Zero(p.box_state_size())), Vector::Zero(p.control_size)};
}

Trajectory local_model_solve(const LocalProblem& p, const Vector& initial, const NeighborTrace& trace) {
  const int n = p.box_state_size();
  require(initial.size() == n, "local_model_solve: initial state shape mismatch");
  require(static_cast<int>(trace.states.size()) == p.n_steps() + 1, "local_model_solve: trace length mismatch");
  Trajectory out;
  out.reserve(p.n_steps() + 1);
  out.push_back(initial);
  for (int s = 0; s < p.n_steps(); ++s) {
    Vector v = p.dynamics->step_nl(p.mesh, out.back(), p.forcing[s], p.boundary[s]);
    const Vector& t = trace.states[s + 1];
    for (int e = 0; e < n; ++e)
      if (p.owned_mask[e] == 0.0) v[e] = t[e];
    if (!v.allFinite()) {
      throw NumericalError("local model diverged on tile " + std::to_string(p.tile) + ", window " +
                           std::to_string(p.window) + " at step " + std::to_string(p.start + s + 1));
    }
    out.push_back(std::move(v));
  }
  return out;
}

Vector theta_correction(const std::vector<int>& halo_entries, const std::function<Vector(const Vector&)>& action,
                        const Vector& own, const Vector& neighbor, double gamma) {
  Vector theta = Vector::Zero(own.size());
  if (halo_entries.empty() || gamma == 0.0) return theta;
  Vector diff = Vector::Zero(own.size());
  bool any = false;
  for (int e : halo_entries) {
    diff[e] = own[e] - neighbor[e];
    any = any || diff[e] != 0.0;
  }
  if (!any) return theta;
  return gamma * action(diff);
}

namespace {

void mask_to_halo(const LocalProblem& p, Vector& v) {
  for (long e = 0; e < v.size(); ++e)
    if (p.owned_mask[e] != 0.0) v[e] = 0.0;
}

}  // namespace

Vector local_tl_step(const LocalProblem& p, int l, const Vector& dx, const Vector& df, const Vector& db,
                     const Vector& trace_prev, const Vector& trace_next) {
  require(l > p.start && l <= p.end, "local_tl_step: step outside the window");
  const Vector& lin = p.lin[l - p.start - 1];
  const int n = p.box_state_size();
  Vector in(n);
  for (int e = 0; e < n; ++e) in[e] = p.owned_mask[e] != 0.0 ? dx[e] : trace_prev[e];
  Vector out = p.dynamics->step_tl(p.mesh, lin, in, df, db);
  const Vector zf = Vector::Zero(n), zb = Vector::Zero(db.size());
  auto action = [&](const Vector& v) {
    Vector r = p.dynamics->step_tl(p.mesh, lin, v, zf, zb);
    mask_to_halo(p, r);
    return r;
  };
  out += theta_correction(p.halo_i, action, dx, trace_prev, p.weights.gamma_i);
  out += theta_correction(p.halo_j, action, dx, trace_prev, p.weights.gamma_j);
  for (int e : p.hold) out[e] = trace_next[e];
  return out;
}

AdjointStep local_ad_step(const LocalProblem& p, int l, const Vector& q_in) {
  require(l > p.start && l <= p.end, "local_ad_step: step outside the window");
  const Vector& lin = p.lin[l - p.start - 1];
  Vector q = q_in;
  for (int e : p.hold) q[e] = 0.0;
  AdjointStep s = p.dynamics->step_ad(p.mesh, lin, q);
  s.x = s.x.cwiseProduct(Eigen::Map<const Vector>(p.owned_mask.data(), q.size()));
  Vector qh = q;
  mask_to_halo(p, qh);
  if (qh.cwiseAbs().maxCoeff() > 0.0 && (!p.halo_i.empty() || !p.halo_j.empty())) {
    const AdjointStep h = p.dynamics->step_ad(p.mesh, lin, qh);
    for (int e : p.halo_i) s.x[e] += p.weights.gamma_i * h.x[e];
    for (int e : p.halo_j) s.x[e] += p.weights.gamma_j * h.x[e];
  }
  return s;
}

OverlapValue overlap_operator(const LocalProblem& p, const Vector& y, const Vector& neighbor_control) {
  require(y.size() == p.control_size && neighbor_control.size() == p.control_size,
          "overlap_operator: control shape mismatch");
  OverlapValue o{0.0, Vector::Zero(p.control_size)};
  for (const HaloPenalty& h : p.penalties) {
    const double beta = h.direction == Direction::I ? p.weights.beta_i : p.weights.beta_j;
    if (beta == 0.0) continue;
    Vector diff(static_cast<long>(h.entries.size()));
    for (std::size_t a = 0; a < h.entries.size(); ++a) diff[a] = y[h.entries[a]] - neighbor_control[h.entries[a]];
    const Vector w = h.cov->apply_inv(diff);
    o.value += beta * diff.dot(w);
    for (std::size_t a = 0; a < h.entries.size(); ++a) o.gradient[h.entries[a]] += 2.0 * beta * w[a];
  }
  return o;
}

namespace {

Vector sample(const LocalProblem& p, const Trajectory& states) {
  Vector out(static_cast<long>(p.stencils.size()));
  for (std::size_t j = 0; j < p.stencils.size(); ++j) {
    const Stencil& s = p.stencils[j];
    const Vector& v = states[s.time - p.start];
    double acc = 0.0;
    for (int q = 0; q < 4; ++q) acc += s.weight[q] * v[s.index[q]];
    out[j] = acc;
  }
  return out;
}

// Adjoint of the local tangent sweep (linear part) driven by observation weights.
Vector local_ad_sweep(const LocalProblem& p, const Vector& w) {
  const int n = p.box_state_size();
  Trajectory forcing(p.n_steps() + 1, Vector::Zero(n));
  for (std::size_t j = 0; j < p.stencils.size(); ++j) {
    const Stencil& s = p.stencils[j];
    for (int q = 0; q < 4; ++q) forcing[s.time - p.start][s.index[q]] += s.weight[q] * w[j];
  }
  Vector g = Vector::Zero(p.control_size);
  Vector lam = forcing[p.n_steps()];
  for (int l = p.end; l > p.start; --l) {
    AdjointStep s = local_ad_step(p, l, lam);
    g.segment(p.f_offset, n) += s.f;
    if (s.b.size() > 0) g.segment(p.b_offset, s.b.size()) += s.b;
    lam = std::move(s.x);
    lam += forcing[l - 1 - p.start];
  }
  if (p.has_x0) g.segment(p.x0_offset, n) += lam;
  return g;
}

}  // namespace

Trajectory local_tl_sweep(const LocalProblem& p, const Vector& y, const NeighborTrace& trace) {
  require(y.size() == p.control_size, "local sweep: control shape mismatch");
  require(static_cast<int>(trace.states.size()) == p.n_steps() + 1, "local sweep: trace length mismatch");
  const int n = p.box_state_size();
  const Vector df = y.segment(p.f_offset, n);
  const Vector db = y.segment(p.b_offset, p.control_size - p.b_offset);
  Trajectory out;
  out.reserve(p.n_steps() + 1);
  out.push_back(p.has_x0 ? Vector(y.segment(p.x0_offset, n)) : trace.states[0]);
  for (int l = p.start + 1; l <= p.end; ++l) {
    out.push_back(local_tl_step(p, l, out.back(), df, db, trace.states[l - 1 - p.start], trace.states[l - p.start]));
  }
  return out;
}

LocalCost local_cost(const LocalProblem& p, const Vector& y, const NeighborTrace& trace) {
  require(y.size() == p.control_size, "local_cost: control shape mismatch");
  LocalCost c;
  c.Jb = 0.5 * p.weights.alpha * y.dot(p.b.apply_inv(y));
  const Vector m = sample(p, local_tl_sweep(p, y, trace)) - p.d;
  c.Jo = 0.5 * m.dot(p.r.apply_inv(m));
  c.O = overlap_operator(p, y, trace.control).value;
  c.J = c.Jb + c.Jo + c.O;
  return c;
}

Vector local_gradient(const LocalProblem& p, const Vector& y, const NeighborTrace& trace) {
  const Vector m = sample(p, local_tl_sweep(p, y, trace)) - p.d;
  return p.weights.alpha * p.b.apply_inv(y) + local_ad_sweep(p, p.r.apply_inv(m)) +
         overlap_operator(p, y, trace.control).gradient;
}

Vector local_hessian(const LocalProblem& p, const Vector& v) {
  const NeighborTrace z = zero_trace(p);
  const Vector hv = sample(p, local_tl_sweep(p, v, z));
  return p.weights.alpha * p.b.apply_inv(v) + local_ad_sweep(p, p.r.apply_inv(hv)) + overlap_operator(p, v, z.control).gradient;
}

LocalSolve local_solve(const LocalProblem& p, const Vector& y0, const NeighborTrace& trace, const Vector& coupling,
                       int ninner, double tol) {
  require(coupling.size() == p.control_size, "local_solve: coupling shape mismatch");
  const Vector rhs = -(local_gradient(p, y0, trace) + coupling);
  LinearOperator a{p.control_size, [&p](const Vector& v) { return local_hessian(p, v); }, {}};
  const double alpha = p.weights.alpha;
  LinearOperator m{p.control_size, [&p, alpha](const Vector& v) -> Vector { return p.b.apply(v) / alpha; }, {}};
  SolverOptions opt;
  opt.tol = tol;
  opt.maxit = ninner;
  const SolveReport rep = pcg(a, rhs, m, opt);
  LocalSolve out;
  out.correction = rep.solution;
  out.y = y0 + rep.solution;
  out.iterations = rep.iterations;
  out.cost = local_cost(p, out.y, trace);
  return out;
}

DDContext::DDContext(const Model& model, const Background& bg, const ObservationSet& obs, const BlockCovariance& b,
                     const TileLayout& layout, const TimeWindows& windows, const DDConfig& cfg,
                     std::shared_ptr<Network> net)
    : model_(&model),
      layout_(&layout),
      windows_(windows),
      cfg_(cfg),
      world_(layout.n_sub(), windows.n_t),
      clayout_{model.state_size(), model.boundary_size(), windows.n_t},
      net_(net ? std::move(net) : std::make_shared<Network>()),
      b_(&b),
      r_(obs.variances()) {
  cfg.validate();
  require(layout.grid.nx == model.grid().nx && layout.grid.ny == model.grid().ny, "dd: layout grid differs from the model grid");
  require(layout.periodic == (model.config().boundary == BoundaryKind::Periodic),
          "dd: tile layout periodicity must match the model boundary treatment");
  require(windows.n_steps == model.grid().n_steps, "dd: time windows do not match n_steps");
  require(b.size() == clayout_.size(), "dd: B dimension does not match the control layout");
  require(obs.size() >= 1, "dd: no observations");
  intra_ = split(world_, net_);
  inter_ = create_inter_all(world_, net_);
  timings_.resize(world_.n_ranks());
  for (int r = 0; r < world_.n_ranks(); ++r) timings_[r] = {r, world_.tile_of(r), world_.window_of(r), 0.0, 0, 0};
  build_problems(obs, b);
  setup_linearization(bg);
}

void DDContext::charge(int rank, double seconds) { timings_[rank].seconds += seconds; }

namespace {

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

void DDContext::build_problems(const ObservationSet& obs, const BlockCovariance& b) {
  const Mesh& gm = model_->mesh();
  const int nf = model_->n_fields();
  const int nc = model_->grid().cells();
  const int nring = gm.n_prescribed();
  const int nt = windows_.n_t;
  std::vector<Stencil> gstencils;
  for (int j = 0; j < obs.size(); ++j) gstencils.push_back(bilinear_stencil(model_->grid(), nf, obs[j]));

  problems_.resize(world_.n_ranks());
  for (int rank = 0; rank < world_.n_ranks(); ++rank) {
    const int i = world_.tile_of(rank), k = world_.window_of(rank);
    const Tile& tile = layout_->tiles[i];
    LocalProblem& p = problems_[rank];
    p.tile = i;
    p.window = k;
    p.start = windows_.starts[k];
    p.end = windows_.end(k);
    p.n_fields = nf;
    p.mesh = build_sub_mesh(gm, tile.box);
    p.dynamics = &model_->dynamics();
    p.weights = cfg_.weights;
    const int m = tile.box_size();
    std::vector<int> pos(nc, -1);
    for (int q = 0; q < m; ++q) pos[tile.box[q]] = q;

    p.owned_mask.assign(nf * m, 0.0);
    p.gamma_mask.assign(nf * m, 0.0);
    for (int a = 0; a < nf; ++a) {
      for (int q : tile.owned_local) p.owned_mask[a * m + q] = p.gamma_mask[a * m + q] = 1.0;
      for (const HaloSet& set : tile.halos) {
        for (int q : set.local) {
          if (set.direction == Direction::I) {
            p.halo_i.push_back(a * m + q);
            p.gamma_mask[a * m + q] = cfg_.weights.gamma_i;
          } else {
            p.halo_j.push_back(a * m + q);
            p.gamma_mask[a * m + q] = cfg_.weights.gamma_j;
          }
        }
      }
      for (int q = 0; q < m; ++q)
        if (p.mesh.kind[q] == CellKind::Hold) p.hold.push_back(a * m + q);
    }

    const int nbl = p.mesh.n_prescribed();
    p.has_x0 = k == 0;
    p.x0_offset = 0;
    p.f_offset = p.has_x0 ? static_cast<long>(nf) * m : 0;
    p.b_offset = p.f_offset + static_cast<long>(nf) * m;
    p.control_size = p.b_offset + static_cast<long>(nf) * nbl;
    for (int s = 0; s < nbl; ++s) p.bslot_global.push_back(gm.slot[tile.box[p.mesh.prescribed[s]]]);

    std::vector<int> cell_idx, bnd_idx;
    for (int a = 0; a < nf; ++a) {
      for (int q = 0; q < m; ++q) cell_idx.push_back(a * nc + tile.box[q]);
      for (int s = 0; s < nbl; ++s) bnd_idx.push_back(a * nring + p.bslot_global[s]);
    }
    p.global_index.resize(p.control_size);
    p.owned.resize(p.control_size);
    auto add_cells = [&](long off, long goff) {
      for (int a = 0; a < nf; ++a)
        for (int q = 0; q < m; ++q) {
          p.global_index[off + a * m + q] = goff + a * nc + tile.box[q];
          p.owned[off + a * m + q] = layout_->owner[tile.box[q]] == i;
        }
    };
    if (p.has_x0) add_cells(p.x0_offset, 0);
    add_cells(p.f_offset, clayout_.forcing_offset(k));
    for (int a = 0; a < nf; ++a)
      for (int s = 0; s < nbl; ++s) {
        p.global_index[p.b_offset + a * nbl + s] = clayout_.boundary_offset(k) + a * nring + p.bslot_global[s];
        p.owned[p.b_offset + a * nbl + s] = layout_->owner[tile.box[p.mesh.prescribed[s]]] == i;
      }

    if (p.has_x0) p.b.add(std::make_shared<const CovarianceB>(b.block(0).restrict(cell_idx)));
    p.b.add(std::make_shared<const CovarianceB>(b.block(1 + k).restrict(cell_idx)));
    if (nbl > 0) p.b.add(std::make_shared<const CovarianceB>(b.block(1 + nt + k).restrict(bnd_idx)));

    for (const HaloSet& set : tile.halos) {
      std::vector<int> gcell, gbnd, lcell_x0, lcell_f, lbnd;
      for (int a = 0; a < nf; ++a) {
        for (std::size_t c = 0; c < set.cells.size(); ++c) {
          gcell.push_back(a * nc + set.cells[c]);
          lcell_x0.push_back(static_cast<int>(p.x0_offset) + a * m + set.local[c]);
          lcell_f.push_back(static_cast<int>(p.f_offset) + a * m + set.local[c]);
          const int sl = p.mesh.slot[set.local[c]];
          if (sl >= 0) {
            gbnd.push_back(a * nring + p.bslot_global[sl]);
            lbnd.push_back(static_cast<int>(p.b_offset) + a * nbl + sl);
          }
        }
      }
      if (p.has_x0) {
        p.penalties.push_back({set.direction, set.neighbor, lcell_x0,
                               std::make_shared<const CovarianceB>(b.block(0).restrict(gcell))});
      }
      p.penalties.push_back({set.direction, set.neighbor, lcell_f,
                             std::make_shared<const CovarianceB>(b.block(1 + k).restrict(gcell))});
      if (!gbnd.empty()) {
        p.penalties.push_back({set.direction, set.neighbor, lbnd,
                               std::make_shared<const CovarianceB>(b.block(1 + nt + k).restrict(gbnd))});
      }
    }

    for (int j = 0; j < obs.size(); ++j) {
      const Stencil& gs = gstencils[j];
      const int base = gs.index[0] % nc;
      if (layout_->owner[base] != i || windows_.window_of_time(gs.time) != k) continue;
      Stencil ls = gs;
      for (int q = 0; q < 4; ++q) {
        const int a = gs.index[q] / nc, c = gs.index[q] % nc;
        require(pos[c] >= 0, "dd: observation stencil leaves the tile box");
        ls.index[q] = a * m + pos[c];
      }
      p.obs.push_back(j);
      p.stencils.push_back(ls);
    }
    p.r = r_.restrict(p.obs);
    p.d = Vector::Zero(static_cast<long>(p.obs.size()));
  }
}

LocalField DDContext::box_field(int tile, int window, const Vector& data) const {
  LocalField f;
  f.tile = tile;
  f.window = window;
  f.n_fields = model_->n_fields();
  f.with_halo = true;
  f.data = data;
  return f;
}

void DDContext::setup_linearization(const Background& bg) {
  bg_traj_ = model_->run_nl(bg.x0, bg.forcing, bg.boundary);
  const double amp = bg_traj_[0].cwiseAbs().maxCoeff();
  scale_ = amp > 0 ? amp : 1.0;
  const int nf = model_->n_fields();
  const int nc = model_->grid().cells();
  const int nring = model_->mesh().n_prescribed();
  const int nsub = world_.n_sub;
  const int it = exchange_++;
  for (int k = 0; k < windows_.n_t; ++k) {
    std::vector<NeighborTrace> traces(nsub);
    for (int l = windows_.starts[k]; l <= windows_.end(k); ++l) {
      std::vector<LocalField> fields;
      for (int i = 0; i < nsub; ++i) {
        const LocalProblem& p = problems_[world_.rank(i, k)];
        const Tile& t = layout_->tiles[i];
        const int m = t.box_size();
        Vector v = Vector::Zero(nf * m);
        for (int a = 0; a < nf; ++a)
          for (int q : t.owned_local) v[a * m + q] = bg_traj_[l][a * nc + t.box[q]];
        fields.push_back(box_field(i, k, v));
        (void)p;
      }
      halo_exchange(inter_[k], *layout_, fields, it * 4096 + l);
      for (int i = 0; i < nsub; ++i) traces[i].states.push_back(fields[i].data);
    }
    for (int i = 0; i < nsub; ++i) {
      const int rank = world_.rank(i, k);
      const auto t0 = Clock::now();
      LocalProblem& p = problems_[rank];
      const Tile& t = layout_->tiles[i];
      const int m = t.box_size();
      const int nbl = p.mesh.n_prescribed();
      p.forcing.clear();
      p.boundary.clear();
      for (int l = p.start + 1; l <= p.end; ++l) {
        Vector f(nf * m), bv(nf * nbl);
        for (int a = 0; a < nf; ++a) {
          for (int q = 0; q < m; ++q) f[a * m + q] = bg.forcing[l - 1][a * nc + t.box[q]];
          for (int s = 0; s < nbl; ++s) bv[a * nbl + s] = bg.boundary[l - 1][a * nring + p.bslot_global[s]];
        }
        p.forcing.push_back(std::move(f));
        p.boundary.push_back(std::move(bv));
      }
      Vector initial;
      if (k == 0) {
        initial = traces[i].states[0];
      } else {
        Request req = intra_[i].irecv(rank, world_.rank(i, k - 1), {it, 0, MessageKind::Interface});
        const std::vector<double> v = intra_[i].wait(req);
        initial = Eigen::Map<const Vector>(v.data(), static_cast<long>(v.size()));
      }
      traces[i].control = Vector::Zero(p.control_size);
      p.lin = local_model_solve(p, initial, traces[i]);
      if (k + 1 < windows_.n_t) {
        const Vector& last = p.lin.back();
        intra_[i].isend(rank, world_.rank(i, k + 1), {it, 0, MessageKind::Interface},
                        std::vector<double>(last.data(), last.data() + last.size()));
      }
      charge(rank, since(t0));
    }
  }
}

Vector DDContext::gather(int rank, const Vector& global) const {
  const LocalProblem& p = problems_[rank];
  Vector y(p.control_size);
  for (long e = 0; e < p.control_size; ++e) y[e] = global[p.global_index[e]];
  return y;
}

DDContext::TangentSweep DDContext::tl_sweep(const Vector& dz) {
  const int it = exchange_++;
  require(dz.size() == clayout_.size(), "dd tangent sweep: control dimension mismatch");
  const int nsub = world_.n_sub;
  TangentSweep out;
  out.states.resize(world_.n_ranks());
  out.hx = Vector::Zero(r_.size());
  std::vector<Vector> carry(nsub);
  for (int k = 0; k < windows_.n_t; ++k) {
    std::vector<LocalField> fields(nsub);
    std::vector<Vector> df(nsub), db(nsub);
    for (int i = 0; i < nsub; ++i) {
      const int rank = world_.rank(i, k);
      const auto t0 = Clock::now();
      const LocalProblem& p = problems_[rank];
      const Vector y = gather(rank, dz);
      const int n = p.box_state_size();
      df[i] = y.segment(p.f_offset, n);
      db[i] = y.segment(p.b_offset, p.control_size - p.b_offset);
      Vector v;
      if (k == 0) {
        v = y.segment(p.x0_offset, n).cwiseProduct(Eigen::Map<const Vector>(p.owned_mask.data(), n));
      } else {
        Request req = intra_[i].irecv(rank, world_.rank(i, k - 1), {it, 0, MessageKind::Interface});
        const std::vector<double> buf = intra_[i].wait(req);
        v = Eigen::Map<const Vector>(buf.data(), static_cast<long>(buf.size()));
      }
      fields[i] = box_field(i, k, v);
      charge(rank, since(t0));
    }
    if (k == 0) halo_exchange(inter_[k], *layout_, fields, it * 4096);
    for (int i = 0; i < nsub; ++i) out.states[world_.rank(i, k)].push_back(fields[i].data);
    for (int l = windows_.starts[k] + 1; l <= windows_.end(k); ++l) {
      for (int i = 0; i < nsub; ++i) {
        const int rank = world_.rank(i, k);
        const auto t0 = Clock::now();
        const LocalProblem& p = problems_[rank];
        fields[i].data = p.dynamics->step_tl(p.mesh, p.lin[l - 1 - p.start], fields[i].data, df[i], db[i]);
        charge(rank, since(t0));
      }
      halo_exchange(inter_[k], *layout_, fields, it * 4096 + l);
      for (int i = 0; i < nsub; ++i) out.states[world_.rank(i, k)].push_back(fields[i].data);
    }
    for (int i = 0; i < nsub; ++i) {
      const int rank = world_.rank(i, k);
      const LocalProblem& p = problems_[rank];
      const Vector hx = sample(p, out.states[rank]);
      for (std::size_t j = 0; j < p.obs.size(); ++j) out.hx[p.obs[j]] = hx[j];
      if (k + 1 < windows_.n_t) {
        const Vector& last = fields[i].data;
        intra_[i].isend(rank, world_.rank(i, k + 1), {it, 0, MessageKind::Interface},
                        std::vector<double>(last.data(), last.data() + last.size()));
      }
    }
    (void)carry;
  }
  return out;
}

Vector DDContext::ad_sweep(const Vector& w) {
  const int it = exchange_++;
  require(w.size() == r_.size(), "dd adjoint sweep: observation dimension mismatch");
  const int nsub = world_.n_sub;
  const int nf = model_->n_fields();
  const int nc = model_->grid().cells();
  const int nring = model_->mesh().n_prescribed();
  Vector g = Vector::Zero(clayout_.size());
  for (int k = windows_.n_t - 1; k >= 0; --k) {
    std::vector<LocalField> lam(nsub);
    std::vector<Trajectory> forcing(nsub);
    for (int i = 0; i < nsub; ++i) {
      const int rank = world_.rank(i, k);
      const LocalProblem& p = problems_[rank];
      const int n = p.box_state_size();
      forcing[i].assign(p.n_steps() + 1, Vector::Zero(n));
      for (std::size_t j = 0; j < p.stencils.size(); ++j) {
        const Stencil& s = p.stencils[j];
        for (int q = 0; q < 4; ++q) forcing[i][s.time - p.start][s.index[q]] += s.weight[q] * w[p.obs[j]];
      }
      Vector v = Vector::Zero(n);
      if (k + 1 < windows_.n_t) {
        Request req = intra_[i].irecv(rank, world_.rank(i, k + 1), {it, 1, MessageKind::Interface});
        const std::vector<double> buf = intra_[i].wait(req);
        v = Eigen::Map<const Vector>(buf.data(), static_cast<long>(buf.size()));
      }
      v += forcing[i].back();
      lam[i] = box_field(i, k, v);
    }
    halo_accumulate(inter_[k], *layout_, lam, it * 4096 + windows_.end(k) + 1);
    for (int l = windows_.end(k); l > windows_.starts[k]; --l) {
      for (int i = 0; i < nsub; ++i) {
        const int rank = world_.rank(i, k);
        const auto t0 = Clock::now();
        const LocalProblem& p = problems_[rank];
        const Tile& t = layout_->tiles[i];
        const int m = t.box_size();
        const int nbl = p.mesh.n_prescribed();
        AdjointStep s = p.dynamics->step_ad(p.mesh, p.lin[l - 1 - p.start], lam[i].data);
        for (int a = 0; a < nf; ++a) {
          for (int q : t.owned_local) g[clayout_.forcing_offset(k) + a * nc + t.box[q]] += s.f[a * m + q];
          for (int sl = 0; sl < nbl; ++sl) {
            if (layout_->owner[t.box[p.mesh.prescribed[sl]]] == i) {
              g[clayout_.boundary_offset(k) + a * nring + p.bslot_global[sl]] += s.b[a * nbl + sl];
            }
          }
        }
        lam[i].data = std::move(s.x);
        lam[i].data += forcing[i][l - 1 - p.start];
        charge(rank, since(t0));
      }
      halo_accumulate(inter_[k], *layout_, lam, it * 4096 + l);
    }
    for (int i = 0; i < nsub; ++i) {
      const int rank = world_.rank(i, k);
      const Tile& t = layout_->tiles[i];
      const int m = t.box_size();
      if (k > 0) {
        const Vector& v = lam[i].data;
        intra_[i].isend(rank, world_.rank(i, k - 1), {it, 1, MessageKind::Interface},
                        std::vector<double>(v.data(), v.data() + v.size()));
      } else {
        for (int a = 0; a < nf; ++a)
          for (int q : t.owned_local) g[a * nc + t.box[q]] = lam[i].data[a * m + q];
      }
    }
  }
  return g;
}

Vector DDContext::assemble_corrections(const std::vector<Vector>& locals) {
  const int it = exchange_++;
  require(static_cast<int>(locals.size()) == world_.n_ranks(), "dd assembly: one correction per rank required");
  const int nsub = world_.n_sub;
  const int nf = model_->n_fields();
  const int nc = model_->grid().cells();
  const int nring = model_->mesh().n_prescribed();
  Vector z = Vector::Zero(clayout_.size());
  for (int k = 0; k < windows_.n_t; ++k) {
    for (int seg = 0; seg < 3; ++seg) {
      if (seg == 0 && k != 0) continue;
      if (seg == 2 && clayout_.boundary_size == 0) continue;
      std::vector<LocalField> fields(nsub);
      for (int i = 0; i < nsub; ++i) {
        const LocalProblem& p = problems_[world_.rank(i, k)];
        const Vector& c = locals[world_.rank(i, k)];
        require(c.size() == p.control_size, "dd assembly: correction shape mismatch");
        const int n = p.box_state_size();
        const int m = layout_->tiles[i].box_size();
        const int nbl = p.mesh.n_prescribed();
        Vector v = Vector::Zero(n);
        if (seg == 0) v = c.segment(p.x0_offset, n);
        if (seg == 1) v = c.segment(p.f_offset, n);
        if (seg == 2)
          for (int a = 0; a < nf; ++a)
            for (int s = 0; s < nbl; ++s) v[a * m + p.mesh.prescribed[s]] = c[p.b_offset + a * nbl + s];
        fields[i] = box_field(i, k, v);
      }
      halo_accumulate(inter_[k], *layout_, fields, it * 4096 + seg);
      for (int i = 0; i < nsub; ++i) {
        const LocalProblem& p = problems_[world_.rank(i, k)];
        const Tile& t = layout_->tiles[i];
        const int m = t.box_size();
        for (int a = 0; a < nf; ++a) {
          for (int q : t.owned_local) {
            const double v = fields[i].data[a * m + q];
            if (seg == 0) z[a * nc + t.box[q]] = v;
            if (seg == 1) z[clayout_.forcing_offset(k) + a * nc + t.box[q]] = v;
            if (seg == 2 && p.mesh.slot[q] >= 0)
              z[clayout_.boundary_offset(k) + a * nring + p.bslot_global[p.mesh.slot[q]]] = v;
          }
        }
      }
    }
  }
  return z;
}

DDResult DDContext::solve(const Vector& d, const DDConfig& cfg) {
  cfg.validate();
  require(d.size() == r_.size(), "dd solve: innovation dimension mismatch");
  d_ = d;
  for (LocalProblem& p : problems_) {
    p.d.resize(static_cast<long>(p.obs.size()));
    for (std::size_t j = 0; j < p.obs.size(); ++j) p.d[j] = d[p.obs[j]];
    p.weights = cfg.weights;
  }
  const int nr = world_.n_ranks();
  DDResult res;
  const Vector rinv_d = r_.apply_inv(d);
  Vector x = Vector::Zero(clayout_.size());
  Vector bix = Vector::Zero(clayout_.size());
  Vector hx = Vector::Zero(d.size());
  Vector r = ad_sweep(rinv_d);
  std::vector<Trajectory> states(nr);
  for (int rank = 0; rank < nr; ++rank) states[rank] = zero_trace(problems_[rank]).states;
  auto global_cost = [&]() {
    const Vector m = hx - d;
    return make_cost(0.5 * x.dot(bix), 0.5 * m.dot(r_.apply_inv(m)));
  };
  res.costs.push_back(global_cost());
  std::vector<Vector> ps, aps;

  for (int n = 0; n < cfg.max_iter; ++n) {
    std::vector<Vector> corr(nr);
    double mismatch = 0.0;
    for (int rank = 0; rank < nr; ++rank) {
      const auto t0 = Clock::now();
      const LocalProblem& p = problems_[rank];
      NeighborTrace trace{states[rank], gather(rank, x)};
      const Vector y0 = trace.control;
      const Vector coupling = -gather(rank, r) - local_gradient(p, y0, trace);
      LocalSolve ls = local_solve(p, y0, trace, coupling, cfg.ninner, cfg.inner_tol);
      double halo = 0.0, full = 0.0;
      for (long e = 0; e < p.control_size; ++e) {
        const double a = std::abs(ls.correction[e]);
        full = std::max(full, a);
        if (!p.owned[e]) halo = std::max(halo, a);
      }
      if (p.window + 1 < windows_.n_t) {
        const Vector last = local_tl_sweep(p, ls.correction, zero_trace(p)).back();
        for (long e = 0; e < last.size(); ++e)
          if (p.owned_mask[e] != 0.0) halo = std::max(halo, std::abs(last[e]));
      }
      full = std::max(full, halo);
      mismatch = std::max(mismatch, full / scale_);
      res.trace.push_back({n + 1, p.tile, p.window, ls.iterations, ls.cost.J, halo / scale_});
      corr[rank] = std::move(ls.correction);
      charge(rank, since(t0));
    }
    const Vector z = assemble_corrections(corr);
    res.mismatch.push_back(mismatch);
    if (mismatch <= cfg.tol) {
      res.converged = true;
      break;
    }
    Vector p;
    if (cfg.acceleration == DDAcceleration::Krylov) {
      p = z;
      for (std::size_t j = 0; j < ps.size(); ++j) p -= (aps[j].dot(z) / aps[j].dot(ps[j])) * ps[j];
    } else {
      p = cfg.relaxation * z;
    }
    const TangentSweep tp = tl_sweep(p);
    const Vector bip = b_->apply_inv(p);
    const Vector ap = bip + ad_sweep(r_.apply_inv(tp.hx));
    const double pap = p.dot(ap);
    if (!(pap > 0)) throw NumericalError("dd: breakdown at iteration " + std::to_string(n + 1));
    const double alpha = cfg.acceleration == DDAcceleration::Krylov ? p.dot(r) / pap : 1.0;
    x += alpha * p;
    r -= alpha * ap;
    hx += alpha * tp.hx;
    bix += alpha * bip;
    for (int rank = 0; rank < nr; ++rank)
      for (std::size_t s = 0; s < states[rank].size(); ++s) states[rank][s] += alpha * tp.states[rank][s];
    if (cfg.acceleration == DDAcceleration::Krylov) {
      ps.push_back(p);
      aps.push_back(ap);
    }
    res.costs.push_back(global_cost());
    res.iterations = n + 1;
  }
  res.dz = x;
  for (const LogEntry& e : net_->log()) {
    timings_[e.sender].messages = 0;
    timings_[e.sender].bytes = 0;
  }
  for (const LogEntry& e : net_->log()) {
    ++timings_[e.sender].messages;
    timings_[e.sender].bytes += static_cast<long>(e.bytes);
  }
  return res;
}

DDAnalysis dd_outer_loop(const Model& model, const Background& bg, const ObservationSet& obs,
                         const BlockCovariance& b, const TileLayout& layout, const TimeWindows& windows,
                         const DDConfig& cfg, int nouter, std::shared_ptr<Network> net) {
  require(nouter >= 1, "dd: Nouter must be >= 1");
  cfg.validate();
  if (!net) net = std::make_shared<Network>();
  const ControlLayout cl{model.state_size(), model.boundary_size(), windows.n_t};
  const ObservationOperator op(model.grid(), model.n_fields(), obs);
  DDAnalysis out;
  out.analysis.dz = Vector::Zero(cl.size());
  for (int o = 0; o < nouter; ++o) {
    const Background cur = apply_increment(bg, cl, windows, out.analysis.dz);
    DDContext ctx(model, cur, obs, b, layout, windows, cfg, net);
    Vector d = ddvar::innovations(ctx.background_trajectory(), obs, op);
    if (o > 0) d += ctx.tl_sweep(out.analysis.dz).hx;
    DDResult res = ctx.solve(d, cfg);
    for (std::size_t n = 0; n < res.costs.size(); ++n)
      out.analysis.history.push_back({o + 1, static_cast<int>(n), res.costs[n]});
    out.analysis.dz = res.dz;
    out.analysis.converged = res.converged;
    out.analysis.outer_loops = o + 1;
    if (out.timings.empty()) {
      out.timings = ctx.timings();
    } else {
      for (std::size_t r = 0; r < out.timings.size(); ++r) {
        out.timings[r].seconds += ctx.timings()[r].seconds;
        out.timings[r].messages = ctx.timings()[r].messages;
        out.timings[r].bytes = ctx.timings()[r].bytes;
      }
    }
    out.solves.push_back(std::move(res));
  }
  const Background fin = apply_increment(bg, cl, windows, out.analysis.dz);
  out.analysis.analysis = model.run_nl(fin.x0, fin.forcing, fin.boundary);
  return out;
}

}  // namespace ddvar
