#include "ddvar/experiment.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace ddvar {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

Vector smooth_state(const Grid& grid, ModelKind kind, double amplitude) {
  const int nf = kind == ModelKind::Linear ? 1 : 2;
  Vector x(static_cast<long>(nf) * grid.cells());
  for (int c = 0; c < grid.cells(); ++c) {
    const double a = 2.0 * M_PI * grid.col(c) / grid.nx, b = 2.0 * M_PI * grid.row(c) / grid.ny;
    if (kind == ModelKind::Linear) {
      x[c] = amplitude * std::sin(a + 0.3) * std::cos(b);
    } else {
      x[c] = amplitude * (0.5 + 0.25 * std::sin(a) * std::cos(b));
      x[grid.cells() + c] = amplitude * 0.25 * std::cos(a) * std::sin(b);
    }
  }
  return x;
}

TwinProblem build_twin(const ExperimentConfig& cfg) {
  cfg.validate();
  TwinProblem t;
  t.model = std::make_unique<Model>(cfg.grid(), cfg.model_config());
  const Model& m = *t.model;
  t.windows = build_time_windows(cfg.n_steps, cfg.n_t);
  t.b = build_control_b(m, cfg.n_t, cfg.covariance_spec());
  const Vector x0 = smooth_state(m.grid(), cfg.model, cfg.bg_amplitude);
  t.background.x0 = x0;
  t.background.forcing.assign(cfg.n_steps, Vector::Zero(m.state_size()));
  t.background.boundary.assign(cfg.n_steps, m.boundary_of(x0));

  const ControlLayout cl{m.state_size(), m.boundary_size(), cfg.n_t};
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector xi(cl.size());
  for (long i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
  t.truth = apply_increment(t.background, cl, t.windows, t.b.apply_sqrt(xi));
  t.truth_trajectory = m.run_nl(t.truth.x0, t.truth.forcing, t.truth.boundary);

  if (!cfg.obs_file.empty()) {
    std::ifstream in(cfg.obs_file);
    if (!in) throw InvalidArgument("cannot open observation file '" + cfg.obs_file + "'");
    t.obs = read_observations(in, m.grid());
  } else {
    t.obs = synthesize(t.truth_trajectory, m.grid(), m.n_fields(), cfg.platform_spec(), cfg.seed + 1);
  }
  return t;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + (dir_ / name).string() + "'");
    out << content;
    files_.push_back({name, content});
  }

  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  TwinProblem twin = build_twin(cfg);
  const Model& model = *twin.model;
  Writer out(cfg.output);
  ExperimentSummary sum;
  sum.n_obs = twin.obs.size();

  std::ostringstream trace;
  std::ostringstream timing;
  timing << "rank,tile,window,seconds,messages,bytes\n";
  AnalysisResult ana;
  if (cfg.is_dd()) {
    const TileLayout layout =
        build_tiles(model.grid(), cfg.ntile_i, cfg.ntile_j, cfg.halo, cfg.boundary == BoundaryKind::Periodic);
    auto net = std::make_shared<Network>();
    DDAnalysis dd = dd_outer_loop(model, twin.background, twin.obs, twin.b, layout, twin.windows, cfg.dd_config(),
                                  cfg.nouter, net);
    trace << "solver,iteration,residual,J\n";
    std::ostringstream ddt;
    ddt << "dd_iter,tile,window,inner_iters,J_local,halo_mismatch\n";
    int offset = 0;
    for (std::size_t o = 0; o < dd.solves.size(); ++o) {
      const DDResult& r = dd.solves[o];
      for (std::size_t n = 0; n < r.mismatch.size(); ++n) {
        const double j = n < r.costs.size() ? r.costs[n].J : r.costs.back().J;
        trace << "dd4dvar," << n << ',' << num(r.mismatch[n]) << ',' << num(j) << '\n';
      }
      for (const DDTraceRow& row : r.trace) {
        ddt << offset + row.iteration << ',' << row.tile << ',' << row.window << ',' << row.inner_iters << ','
            << num(row.J_local) << ',' << num(row.halo_mismatch) << '\n';
      }
      int span = 0;
      for (const DDTraceRow& row : r.trace) span = std::max(span, row.iteration + 1);
      offset += span;
    }
    out.write("dd_trace.csv", ddt.str());
    std::ostringstream log;
    net->write_log(log);
    out.write("comm_log.csv", log.str());
    for (const RankTiming& t : dd.timings) {
      timing << t.rank << ',' << t.tile << ',' << t.window << ',' << num(t.seconds) << ',' << t.messages << ','
             << t.bytes << '\n';
    }
    ana = std::move(dd.analysis);
  } else {
    const auto t0 = Clock::now();
    ana = incremental_outer_loop(model, twin.background, twin.obs, twin.b, twin.windows, cfg.outer_config());
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    trace << "solver,iteration,residual,J\n";
    for (const SolveReport& rep : ana.reports) {
      for (std::size_t k = 0; k < rep.costs.size(); ++k) {
        const double res = k < rep.residuals.size() ? rep.residuals[k] : NAN;
        trace << rep.solver << ',' << k << ',' << num(res) << ',' << num(rep.costs[k].J) << '\n';
      }
    }
    timing << "0,0,0," << num(secs) << ",0,0\n";
  }
  const CostHistoryReport hist = cost_history_report(ana.history, sum.n_obs);
  std::ostringstream ch;
  write_cost_history(ch, hist);
  out.write("cost_history.csv", ch.str());
  out.write("solver_trace.csv", trace.str());
  sum.history = ana.history;
  sum.j_min = hist.j_min;
  sum.j_initial = ana.history.front().cost.J;
  sum.j_final = ana.history.back().cost.J;
  sum.converged = ana.converged;

  if (cfg.impact || cfg.sensitivity || cfg.forecast_horizon > 0) {
    const ObservationOperator op(model.grid(), model.n_fields(), twin.obs);
    const LinearizedProblem lp(
        model, model.run_nl(twin.background.x0, twin.background.forcing, twin.background.boundary), twin.windows, op);
    const CovarianceR r(twin.obs.variances());
    const Vector d = innovations(lp.trajectory(), twin.obs, op);
    const int column = cfg.section_column >= 0 ? cfg.section_column : cfg.nx / 2;
    const TransportFunctional f = column_transport(model.grid(), model.n_fields(), column, cfg.n_steps);
    if (cfg.impact || cfg.sensitivity) {
      const KalmanGain k(twin.b, r, lp);
      if (cfg.impact) {
        std::ostringstream s;
        write_impact(s, observation_impact(model, twin.background, twin.obs, lp, k, d, f));
        out.write("impact.csv", s.str());
      }
      if (cfg.sensitivity) {
        std::ostringstream s;
        write_impact(s, observation_sensitivity(model, twin.background, twin.obs, lp, k, d, d, f));
        out.write("sensitivity.csv", s.str());
      }
    }
    if (cfg.forecast_horizon > 0) {
      Grid vg = model.grid();
      vg.n_steps = cfg.forecast_horizon;
      const Vector& xt = twin.truth_trajectory.back();
      const Trajectory tf = model.run_nl(xt, ForcingSeries(cfg.forecast_horizon, Vector::Zero(model.state_size())),
                                         BoundarySeries(cfg.forecast_horizon, model.boundary_of(xt)));
      const ObservationSet vo = synthesize(tf, vg, model.n_fields(), cfg.platform_spec(), cfg.seed + 2);
      const ForecastImpact fi = forecast_impact(model, ana.analysis.back(), lp.trajectory().back(),
                                                cfg.forecast_horizon, f, &vo.all());
      std::ostringstream s;
      s << "quantity,value\n"
        << "delta_I," << num(fi.delta_i) << '\n'
        << "misfit_background," << num(fi.misfit_b) << '\n'
        << "misfit_analysis," << num(fi.misfit_a) << '\n'
        << "misfit_reduction," << num(fi.misfit_reduction) << '\n';
      out.write("forecast.csv", s.str());
    }
  }
  out.write("timing.csv", timing.str());

  const std::string text = emit_config(cfg);
  out.write("config.cfg", text);
  nlohmann::json man;
  man["config_hash"] = sha256_hex(text);
  man["seed"] = cfg.seed;
  man["formulation"] = cfg.formulation;
  man["n_obs"] = sum.n_obs;
  man["J_min"] = sum.j_min;
  man["J_initial"] = sum.j_initial;
  man["J_final"] = sum.j_final;
  man["converged"] = sum.converged;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [name, content] : out.files()) {
    files.push_back({{"name", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
    sum.files.push_back(name);
  }
  man["files"] = files;
  out.write("manifest.json", man.dump(2) + "\n");
  sum.files.push_back("manifest.json");
  return sum;
}

}  // namespace ddvar
