#include "ddvar/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ddvar/experiment.hpp"

namespace ddvar {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double rel(double a, double b) {
  const double s = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  Vector normal(long n) {
    Vector v(n);
    for (long i = 0; i < n; ++i) v[i] = nd_(g_);
    return v;
  }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(g_); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(g_); }

 private:
  std::mt19937_64 g_;
  std::normal_distribution<double> nd_{0.0, 1.0};
};

template <class F>
CriterionResult timed(int id, const std::string& name, double budget, F&& body) {
  CriterionResult r;
  r.id = id;
  r.name = name;
  r.budget = budget;
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  if (r.seconds > budget) {
    r.pass = false;
    r.detail += " (runtime " + sci(r.seconds) + " s over budget " + sci(budget) + " s)";
  }
  return r;
}

ObservationSet random_obs(const Grid& g, int n, Rng& rng, double sigma) {
  std::vector<Observation> obs;
  for (int j = 0; j < n; ++j) {
    Observation o;
    o.time = rng.integer(0, g.n_steps);
    o.x = rng.uniform(0.0, (g.nx - 1) * g.dx);
    o.y = rng.uniform(0.0, (g.ny - 1) * g.dy);
    o.platform = static_cast<Platform>(j % kPlatformCount);
    o.value = 0.0;
    o.variance = sigma * sigma;
    obs.push_back(o);
  }
  return ObservationSet(std::move(obs), g);
}

// A random linearized problem with consistent twin innovations.
struct Instance {
  std::unique_ptr<Model> model;
  TimeWindows windows;
  BlockCovariance b;
  Background bg;
  ObservationSet obs;
  std::unique_ptr<LinearizedProblem> lp;
  CovarianceR r;
  Vector d;
};

Instance make_instance(const Grid& g, const ModelConfig& mc, int n_t, int n_obs, double sigma_o, Rng& rng,
                       double length = 1.0) {
  Instance in;
  in.model = std::make_unique<Model>(g, mc);
  const Model& m = *in.model;
  in.windows = build_time_windows(g.n_steps, n_t);
  CovarianceSpec cs;
  cs.length = length;
  in.b = build_control_b(m, n_t, cs);
  in.bg.x0 = smooth_state(g, mc.kind, 1.0) + 0.1 * rng.normal(m.state_size());
  in.bg.forcing.assign(g.n_steps, Vector::Zero(m.state_size()));
  in.bg.boundary.assign(g.n_steps, m.boundary_of(in.bg.x0));
  in.obs = random_obs(g, n_obs, rng, sigma_o);
  const ObservationOperator op(g, m.n_fields(), in.obs);
  in.lp = std::make_unique<LinearizedProblem>(m, m.run_nl(in.bg.x0, in.bg.forcing, in.bg.boundary), in.windows, op);
  in.r = CovarianceR(in.obs.variances());
  in.d = in.lp->apply_h(in.b.apply_sqrt(rng.normal(in.b.size()))) + sigma_o * rng.normal(n_obs);
  return in;
}

ModelConfig linear_config(BoundaryKind bk) {
  ModelConfig mc;
  mc.kind = ModelKind::Linear;
  mc.cx = 0.5;
  mc.cy = 0.3;
  mc.nu = 0.05;
  mc.boundary = bk;
  return mc;
}

ModelConfig burgers_config() {
  ModelConfig mc;
  mc.kind = ModelKind::Burgers;
  mc.cx = 1.0;
  mc.cy = 1.0;
  mc.nu = 0.05;
  mc.boundary = BoundaryKind::Prescribed;
  return mc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig shipped(const AcceptanceContext& ctx, const std::string& name) {
  return load_config((fs::path(ctx.configs_dir) / name).string());
}

}  // namespace

CriterionResult check_adjoint_identity(const AcceptanceContext&) {
  return timed(1, "adjoint identity", 10.0, [](CriterionResult& r) {
    Rng rng(101);
    const Grid g{16, 12, 1.0, 1.0, 0.05, 6};
    struct Setup {
      Instance in;
      std::unique_ptr<TileLayout> layout;
      std::unique_ptr<DDContext> dd;
    };
    std::vector<Setup> setups;
    for (int s = 0; s < 2; ++s) {
      Setup st;
      const ModelConfig mc = s == 0 ? linear_config(BoundaryKind::Periodic) : burgers_config();
      st.in = make_instance(g, mc, 2, 20, 0.5, rng);
      st.layout = std::make_unique<TileLayout>(build_tiles(g, 2, 2, 2, mc.boundary == BoundaryKind::Periodic));
      DDConfig cfg;
      st.dd = std::make_unique<DDContext>(*st.in.model, st.in.bg, st.in.obs, st.in.b, *st.layout, st.in.windows, cfg);
      setups.push_back(std::move(st));
    }
    double worst[4] = {0, 0, 0, 0};
    for (int t = 0; t < 100; ++t) {
      Setup& st = setups[t % 2];
      const Model& m = *st.in.model;
      const Vector x = st.in.bg.x0 + 0.1 * rng.normal(m.state_size());
      const Vector dx = rng.normal(m.state_size()), df = rng.normal(m.state_size());
      const Vector db = rng.normal(m.boundary_size()), p = rng.normal(m.state_size());
      {
        const Vector tl = m.step_tl(x, dx, df, db);
        const AdjointStep ad = m.step_ad(x, p);
        worst[0] = std::max(worst[0], rel(tl.dot(p), dx.dot(ad.x) + df.dot(ad.f) + db.dot(ad.b)));
      }
      {
        const Trajectory traj = m.run_nl(x, ForcingSeries(g.n_steps, Vector::Zero(m.state_size())),
                                         BoundarySeries(g.n_steps, m.boundary_of(x)));
        const WindowOperator w = window_operator(m, traj, st.in.windows, t % st.in.windows.n_t);
        const AdjointStep ad = w.apply_ad(p);
        worst[1] = std::max(worst[1], rel(w.apply_tl(dx, df, db).dot(p), dx.dot(ad.x) + df.dot(ad.f) + db.dot(ad.b)));
      }
      {
        const Vector z = rng.normal(st.in.b.size()), wv = rng.normal(st.in.obs.size());
        worst[2] = std::max(worst[2], rel(st.in.lp->apply_h(z).dot(wv), z.dot(st.in.lp->apply_ht(wv))));
      }
      {
        const LocalProblem& lp = st.dd->problem(t % st.dd->n_ranks());
        const int n = lp.box_state_size();
        const Vector ldx = rng.normal(n), ldf = rng.normal(n), ldb = rng.normal(lp.control_size - lp.b_offset);
        const Vector q = rng.normal(n), zero = Vector::Zero(n);
        const int l = lp.start + 1 + t % lp.n_steps();
        const Vector tl = local_tl_step(lp, l, ldx, ldf, ldb, zero, zero);
        const AdjointStep ad = local_ad_step(lp, l, q);
        worst[3] = std::max(worst[3], rel(tl.dot(q), ldx.dot(ad.x) + ldf.dot(ad.f) + ldb.dot(ad.b)));
      }
    }
    const double tol = 1e-12;
    r.pass = *std::max_element(worst, worst + 4) <= tol;
    r.detail = "max rel: step " + sci(worst[0]) + ", window " + sci(worst[1]) + ", G o M " + sci(worst[2]) +
               ", overlapped local step " + sci(worst[3]) + " (tol 1e-12, 100 triples)";
  });
}

CriterionResult check_gradient(const AcceptanceContext&) {
  return timed(2, "gradient check", 30.0, [](CriterionResult& r) {
    Rng rng(202);
    const Grid g{16, 12, 1.0, 1.0, 0.05, 8};
    const Instance in = make_instance(g, burgers_config(), 2, 30, 0.2, rng);
    const Vector z = in.b.apply_sqrt(rng.normal(in.b.size()));
    const Vector grad = gradient(z, in.d, in.b, in.r, *in.lp);
    double worst = 0.0;
    const double eps = 1e-3;
    for (int k = 0; k < 10; ++k) {
      const Vector v = in.b.apply_sqrt(rng.normal(in.b.size()));
      const double jp = cost(z + eps * v, in.d, in.b, in.r, *in.lp).J;
      const double jm = cost(z - eps * v, in.d, in.b, in.r, *in.lp).J;
      worst = std::max(worst, rel((jp - jm) / (2 * eps), grad.dot(v)));
    }
    const Vector za = primal_analysis(in.d, in.b, in.r, *in.lp);
    const double stat = in.b.apply(gradient(za, in.d, in.b, in.r, *in.lp)).norm() /
                        in.b.apply(gradient(Vector::Zero(in.b.size()), in.d, in.b, in.r, *in.lp)).norm();
    r.pass = worst <= 1e-6 && stat <= 1e-8;
    r.detail = "max rel FD error " + sci(worst) + " (tol 1e-6, 10 directions); stationarity |B grad J(dz_a)| / |B grad J(0)| = " +
               sci(stat) + " (tol 1e-8)";
  });
}

CriterionResult check_primal_dual(const AcceptanceContext&) {
  return timed(3, "primal/dual equivalence", 10.0, [](CriterionResult& r) {
    Rng rng(303);
    double worst = 0.0;
    long max_nz = 0;
    for (int t = 0; t < 25; ++t) {
      Grid g;
      ModelConfig mc;
      int nt = 1;
      switch (t % 3) {
        case 0: g = {4, 4, 1.0, 1.0, 0.1, 3}; mc = linear_config(BoundaryKind::Prescribed); break;
        case 1: g = {5, 4, 1.0, 1.0, 0.1, 4}; mc = linear_config(BoundaryKind::Periodic); nt = 2; break;
        default:
          g = {4, 4, 1.0, 1.0, 0.05, 3};
          mc = burgers_config();
          mc.boundary = BoundaryKind::Periodic;
          break;
      }
      mc.cx = rng.uniform(-1.0, 1.0);
      mc.cy = rng.uniform(-1.0, 1.0);
      const Instance in = make_instance(g, mc, nt, rng.integer(1, 16), rng.uniform(0.1, 1.0), rng, rng.uniform(0.5, 2.0));
      max_nz = std::max(max_nz, in.b.size());
      const Vector p = primal_analysis(in.d, in.b, in.r, *in.lp, SolveMethod::Dense);
      const Vector d = dual_analysis(in.d, in.b, in.r, *in.lp, SolveMethod::Dense);
      worst = std::max(worst, (p - d).norm() / p.norm());
    }
    r.pass = worst <= 1e-8 && max_nz <= 64;
    r.detail = "max |dz_primal - dz_dual| / |dz_primal| = " + sci(worst) + " (tol 1e-8, 25 instances, N_z <= " +
               std::to_string(max_nz) + ")";
  });
}

CriterionResult check_solver_agreement(const AcceptanceContext&) {
  return timed(4, "solver agreement", 30.0, [](CriterionResult& r) {
    Rng rng(404);
    double worst_sol = 0.0, worst_j = 0.0;
    long max_gap = 0;
    for (int t = 0; t < 6; ++t) {
      const Grid g{8, 6, 1.0, 1.0, 0.05, 6};
      const ModelConfig mc = t % 2 == 0 ? linear_config(BoundaryKind::Prescribed) : burgers_config();
      const Instance in = make_instance(g, mc, 2, 12 + t, 0.3, rng, 1.5);
      const VarSystem sys = in.lp->system(in.b, in.r, in.d);
      const Vector ref = KalmanGain(sys).apply(in.d);
      SolverOptions opt;
      opt.tol = 1e-12;
      opt.maxit = 200;
      for (Solver s : {Solver::DualCG, Solver::Minres, Solver::Rpcg}) {
        const SolveReport rep = run_solver(s, sys, opt);
        worst_sol = std::max(worst_sol, (rep.solution - ref).norm() / ref.norm());
      }
      const SolveReport pr = primal_pcg(sys, opt);
      const SolveReport rp = rpcg(sys, opt);
      const std::size_t n = std::min(pr.costs.size(), rp.costs.size());
      for (std::size_t k = 0; k < n; ++k) worst_j = std::max(worst_j, rel(pr.costs[k].J, rp.costs[k].J));
      const long gap = static_cast<long>(pr.costs.size()) - static_cast<long>(rp.costs.size());
      max_gap = std::max(max_gap, std::abs(gap));
    }
    r.pass = worst_sol <= 1e-8 && worst_j <= 1e-8 && max_gap <= 1;
    r.detail = "max solution error vs dense dual " + sci(worst_sol) + " (tol 1e-8); max per-iteration J rel diff RPCG vs primal " +
               sci(worst_j) + " (tol 1e-8); iteration counts differ by at most " + std::to_string(max_gap);
  });
}

CriterionResult check_dd_oracle(const AcceptanceContext& ctx) {
  return timed(5, "DD vs global oracle", 300.0, [&ctx](CriterionResult& r) {
    ExperimentConfig base = shipped(ctx, "dd.cfg");
    std::string detail;
    bool ok = true;
    auto run = [&](int ni, int nj, int nt, double tol) {
      ExperimentConfig c = base;
      c.ntile_i = ni;
      c.ntile_j = nj;
      c.n_t = nt;
      const TwinProblem tw = build_twin(c);
      const Model& m = *tw.model;
      const ObservationOperator op(m.grid(), m.n_fields(), tw.obs);
      const LinearizedProblem lp(m, m.run_nl(tw.background.x0, tw.background.forcing, tw.background.boundary),
                                 tw.windows, op);
      const CovarianceR rr(tw.obs.variances());
      const Vector ref = primal_analysis(innovations(lp.trajectory(), tw.obs, op), tw.b, rr, lp, SolveMethod::Iterative);
      const TileLayout layout = build_tiles(m.grid(), ni, nj, c.halo, c.boundary == BoundaryKind::Periodic);
      DDConfig dc = c.dd_config();
      dc.tol = 1e-10;
      dc.max_iter = 50;
      const DDAnalysis dd = dd_outer_loop(m, tw.background, tw.obs, tw.b, layout, tw.windows, dc, 1);
      const double err = (dd.analysis.dz - ref).norm() / ref.norm();
      const DDResult& s = dd.solves.front();
      const bool pass = s.converged && err <= tol;
      ok = ok && pass;
      detail += std::to_string(ni) + "x" + std::to_string(nj) + "x" + std::to_string(nt) + ": err " + sci(err) + " in " +
                std::to_string(s.iterations) + " it" + (s.converged ? "" : " (not converged)") + "; ";
    };
    for (int nt = 1; nt <= 3; ++nt) run(2, 4, nt, 1e-6);
    run(1, 1, 1, 1e-10);
    r.pass = ok;
    r.detail = detail + "tol 1e-6 (1e-10 degenerate), tau_dd 1e-10, n-bar 50";
  });
}

CriterionResult check_theoretical_minimum(const AcceptanceContext& ctx) {
  return timed(6, "theoretical minimum", 300.0, [&ctx](CriterionResult& r) {
    ExperimentConfig c = shipped(ctx, "case1.cfg");
    c.ninner = 400;
    c.tol = 1e-12;
    double sum_j = 0.0, sum_min = 0.0;
    for (int s = 1; s <= 20; ++s) {
      c.seed = static_cast<std::uint64_t>(s);
      const TwinProblem tw = build_twin(c);
      const AnalysisResult a = incremental_outer_loop(*tw.model, tw.background, tw.obs, tw.b, tw.windows, c.outer_config());
      sum_j += a.history.back().cost.J;
      sum_min += 0.5 * tw.obs.size();
    }
    const double ratio = sum_j / sum_min;
    r.pass = std::abs(ratio - 1.0) <= 0.25;
    r.detail = "mean J_final / mean J_min = " + sci(ratio) + " over 20 twins (tol +-25%)";
  });
}

CriterionResult check_impact_identity(const AcceptanceContext& ctx) {
  return timed(7, "impact identity", 60.0, [&ctx](CriterionResult& r) {
    const ExperimentConfig c = shipped(ctx, "impact.cfg");
    const TwinProblem tw = build_twin(c);
    const Model& m = *tw.model;
    const ObservationOperator op(m.grid(), m.n_fields(), tw.obs);
    const LinearizedProblem lp(m, m.run_nl(tw.background.x0, tw.background.forcing, tw.background.boundary),
                               tw.windows, op);
    const CovarianceR rr(tw.obs.variances());
    const KalmanGain k(tw.b, rr, lp);
    const Vector d = innovations(lp.trajectory(), tw.obs, op);
    const TransportFunctional f = column_transport(m.grid(), m.n_fields(), c.nx / 2, c.n_steps);
    const ImpactReport rep = observation_impact(m, tw.background, tw.obs, lp, k, d, f);
    const Background xa = apply_increment(tw.background, lp.layout(), tw.windows, k.apply(d));
    const double direct =
        evaluate_functional(m.run_nl(xa.x0, xa.forcing, xa.boundary), f) - evaluate_functional(lp.trajectory(), f);
    const double err = rel(rep.delta_i, direct);
    const bool exact = ((rep.gx + rep.gf + rep.gb).array() == rep.g.array()).all();
    r.pass = err <= 1e-8 && exact;
    r.detail = "sum of contributions " + sci(rep.delta_i) + " vs I(x_a)-I(x_b) " + sci(direct) + ": rel " + sci(err) +
               " (tol 1e-8); segment reassembly " + (exact ? "bit-exact" : "NOT exact");
  });
}

CriterionResult check_comm_topology(const AcceptanceContext& ctx) {
  return timed(8, "communicator topology", 60.0, [&ctx](CriterionResult& r) {
    bool partition = true;
    for (int ns = 1; ns <= 8; ++ns) {
      for (int nt = 1; nt <= 4; ++nt) {
        const World w(ns, nt);
        auto net = std::make_shared<Network>();
        const auto intra = split(w, net);
        const auto inter = create_inter_all(w, net);
        std::vector<int> in_intra(w.n_ranks(), 0), in_inter(w.n_ranks(), 0);
        for (const auto& c : intra)
          for (int m : c.members()) ++in_intra[m];
        for (const auto& c : inter)
          for (int m : c.members()) ++in_inter[m];
        for (int k = 0; k < w.n_ranks(); ++k) partition = partition && in_intra[k] == 1 && in_inter[k] == 1;
        partition = partition && static_cast<int>(intra.size()) == ns && static_cast<int>(inter.size()) == nt;
      }
    }
    bool halo_ok = true;
    int layouts = 0;
    Rng rng(808);
    const Grid g{24, 24, 1.0, 1.0, 0.1, 1};
    for (int ni = 1; ni <= 8; ++ni) {
      for (int nj = 1; ni * nj <= 8; ++nj) {
        for (bool periodic : {false, true}) {
          const TileLayout layout = build_tiles(g, ni, nj, 2, periodic);
          const World w(layout.n_sub(), 1);
          auto net = std::make_shared<Network>();
          const Communicator inter = create_inter(w, 0, net);
          for (int nf = 1; nf <= 2; ++nf) {
            const Vector field = rng.normal(static_cast<long>(nf) * g.cells());
            std::vector<LocalField> locals;
            for (int i = 0; i < layout.n_sub(); ++i) {
              LocalField lf = restrict_field(field, layout, i, true, nf);
              const Tile& t = layout.tiles[i];
              Vector owned = Vector::Zero(lf.data.size());
              for (int a = 0; a < nf; ++a)
                for (int q : t.owned_local) owned[a * t.box_size() + q] = lf.data[a * t.box_size() + q];
              lf.data = owned;
              locals.push_back(lf);
            }
            halo_exchange(inter, layout, locals, 0);
            for (int i = 0; i < layout.n_sub(); ++i) {
              const LocalField ref = restrict_field(field, layout, i, true, nf);
              halo_ok = halo_ok && (ref.data.array() == locals[i].data.array()).all();
            }
            ++layouts;
          }
        }
      }
    }
    ExperimentConfig c = shipped(ctx, "dd.cfg");
    c.dd_max_iter = 10;
    std::string differ;
    const fs::path a = fs::path(ctx.work_dir) / "determinism_a", b = fs::path(ctx.work_dir) / "determinism_b";
    c.output = a.string();
    const ExperimentSummary sa = run_experiment(c);
    c.output = b.string();
    run_experiment(c);
    int compared = 0;
    for (const std::string& f : sa.files) {
      if (f == "timing.csv" || fs::path(f).extension() != ".csv") continue;
      ++compared;
      if (slurp(a / f) != slurp(b / f)) differ += f + " ";
    }
    r.pass = partition && halo_ok && differ.empty() && compared > 0;
    r.detail = std::string("partitions ") + (partition ? "ok" : "FAILED") + " (N_sub<=8, N_t<=4); halo exchange " +
               (halo_ok ? "bit-exact" : "MISMATCH") + " on " + std::to_string(layouts) + " layouts; " +
               std::to_string(compared) + " CSVs " + (differ.empty() ? "byte-identical" : "differ: " + differ);
  });
}

CriterionResult check_convergence_by_25(const AcceptanceContext& ctx) {
  return timed(9, "convergence by 25", 120.0, [&ctx](CriterionResult& r) {
    ExperimentConfig c1 = shipped(ctx, "case1.cfg");
    ExperimentConfig c2 = shipped(ctx, "case2.cfg");
    c1.output = (fs::path(ctx.work_dir) / "case1").string();
    c2.output = (fs::path(ctx.work_dir) / "case2").string();
    const ExperimentSummary s1 = run_experiment(c1);
    const ExperimentSummary s2 = run_experiment(c2);
    const double orders = std::log10(s1.j_initial / s1.j_final);
    r.pass = orders >= 2.0 && s2.j_final <= s1.j_final;
    r.detail = "case1 J " + sci(s1.j_initial) + " -> " + sci(s1.j_final) + " (" + sci(orders) +
               " orders, need >= 2); case2 final J " + sci(s2.j_final) + " <= case1 " + sci(s1.j_final) +
               "; J_min " + sci(s1.j_min);
  });
}

std::vector<CriterionResult> run_all_criteria(const AcceptanceContext& ctx) {
  return {check_adjoint_identity(ctx), check_gradient(ctx),        check_primal_dual(ctx),
          check_solver_agreement(ctx), check_dd_oracle(ctx),       check_theoretical_minimum(ctx),
          check_impact_identity(ctx),  check_comm_topology(ctx),   check_convergence_by_25(ctx)};
}

std::vector<CriterionResult> run_suite(const std::string& suite, const AcceptanceContext& ctx) {
  if (suite == "adjoint") return {check_adjoint_identity(ctx)};
  if (suite == "gradient") return {check_gradient(ctx)};
  if (suite == "duality") return {check_primal_dual(ctx), check_solver_agreement(ctx)};
  if (suite == "dd") return {check_dd_oracle(ctx), check_comm_topology(ctx)};
  throw InvalidArgument("unknown suite '" + suite + "' (valid: adjoint, gradient, duality, dd)");
}

std::string format_result(const CriterionResult& r) {
  char head[96];
  std::snprintf(head, sizeof head, "[%s] %d %s", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str());
  return std::string(head) + ": " + r.detail + " [" + sci(r.seconds) + " s]";
}

}  // namespace ddvar
