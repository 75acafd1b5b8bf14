#pragma once

#include <memory>
#include <random>

#include "ddvar/experiment.hpp"

namespace testing {

using namespace ddvar;

inline Vector randn(long n, std::mt19937_64& g) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(n);
  for (long i = 0; i < n; ++i) v[i] = nd(g);
  return v;
}

inline double rel(double a, double b) {
  const double s = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / s;
}

inline ModelConfig linear_cfg(BoundaryKind bk = BoundaryKind::Prescribed, double cx = 0.5, double cy = 0.3,
                              double nu = 0.05) {
  ModelConfig mc;
  mc.kind = ModelKind::Linear;
  mc.cx = cx;
  mc.cy = cy;
  mc.nu = nu;
  mc.boundary = bk;
  return mc;
}

inline ModelConfig burgers_cfg(BoundaryKind bk = BoundaryKind::Prescribed) {
  ModelConfig mc;
  mc.kind = ModelKind::Burgers;
  mc.cx = 1.0;
  mc.cy = 1.0;
  mc.nu = 0.05;
  mc.boundary = bk;
  return mc;
}

inline ObservationSet random_obs(const Grid& g, int n, std::mt19937_64& rng, double sigma = 0.5) {
  std::uniform_int_distribution<int> t(0, g.n_steps);
  std::uniform_real_distribution<double> x(0.0, (g.nx - 1) * g.dx), y(0.0, (g.ny - 1) * g.dy);
  std::vector<Observation> obs;
  for (int j = 0; j < n; ++j) {
    Observation o;
    o.time = t(rng);
    o.x = x(rng);
    o.y = y(rng);
    o.platform = static_cast<Platform>(j % kPlatformCount);
    o.variance = sigma * sigma;
    obs.push_back(o);
  }
  return ObservationSet(std::move(obs), g);
}

// Background, B, observations and the linearization on a small grid.
struct Problem {
  std::unique_ptr<Model> model;
  TimeWindows windows;
  BlockCovariance b;
  Background bg;
  ObservationSet obs;
  std::unique_ptr<LinearizedProblem> lp;
  CovarianceR r;
  Vector d;

  Problem(const Grid& g, const ModelConfig& mc, int n_t, int n_obs, std::uint64_t seed, double sigma_o = 0.5,
          double length = 1.0) {
    std::mt19937_64 rng(seed);
    model = std::make_unique<Model>(g, mc);
    windows = build_time_windows(g.n_steps, n_t);
    CovarianceSpec cs;
    cs.length = length;
    b = build_control_b(*model, n_t, cs);
    bg.x0 = smooth_state(g, mc.kind, 1.0) + 0.1 * randn(model->state_size(), rng);
    bg.forcing.assign(g.n_steps, Vector::Zero(model->state_size()));
    bg.boundary.assign(g.n_steps, model->boundary_of(bg.x0));
    obs = random_obs(g, n_obs, rng, sigma_o);
    const ObservationOperator op(g, model->n_fields(), obs);
    lp = std::make_unique<LinearizedProblem>(*model, model->run_nl(bg.x0, bg.forcing, bg.boundary), windows, op);
    r = CovarianceR(obs.variances());
    d = lp->apply_h(b.apply_sqrt(randn(b.size(), rng))) + sigma_o * randn(n_obs, rng);
  }
};

}  // namespace testing
