#include "ddvar/observations.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace ddvar {

std::string to_string(Platform p) {
  switch (p) {
    case Platform::SurfaceGrid: return "surface-grid";
    case Platform::Track: return "track";
    case Platform::Profile: return "profile";
  }
  return "?";
}

Platform parse_platform(const std::string& s) {
  if (s == "surface-grid") return Platform::SurfaceGrid;
  if (s == "track") return Platform::Track;
  if (s == "profile") return Platform::Profile;
  throw InvalidArgument("unknown platform '" + s + "' (valid: surface-grid, track, profile)");
}

ObservationSet::ObservationSet(std::vector<Observation> obs, const Grid& grid) : obs_(std::move(obs)) {
  const double xmax = (grid.nx - 1) * grid.dx, ymax = (grid.ny - 1) * grid.dy;
  by_time_.assign(grid.n_steps + 1, {});
  for (int j = 0; j < size(); ++j) {
    const Observation& o = obs_[j];
    const std::string tag = "observation " + std::to_string(j);
    require(o.time >= 0 && o.time <= grid.n_steps, tag + ": time index outside [0, N]");
    require(std::isfinite(o.x) && std::isfinite(o.y) && o.x >= 0 && o.x <= xmax && o.y >= 0 && o.y <= ymax,
            tag + ": location outside the domain");
    require(std::isfinite(o.value), tag + ": value is not finite");
    require(o.variance > 0 && std::isfinite(o.variance), tag + ": error variance must be positive");
    by_time_[o.time].push_back(j);
  }
}

Vector ObservationSet::values() const {
  Vector v(size());
  for (int j = 0; j < size(); ++j) v[j] = obs_[j].value;
  return v;
}

Vector ObservationSet::variances() const {
  Vector v(size());
  for (int j = 0; j < size(); ++j) v[j] = obs_[j].variance;
  return v;
}

ObservationSet ObservationSet::subset(const std::vector<int>& idx, const Grid& grid) const {
  std::vector<Observation> s;
  s.reserve(idx.size());
  for (int j : idx) s.push_back(obs_.at(j));
  return ObservationSet(std::move(s), grid);
}

Stencil bilinear_stencil(const Grid& grid, int n_fields, const Observation& o) {
  const double fx = o.x / grid.dx, fy = o.y / grid.dy;
  const int i0 = std::clamp(static_cast<int>(std::floor(fx)), 0, grid.nx - 2);
  const int j0 = std::clamp(static_cast<int>(std::floor(fy)), 0, grid.ny - 2);
  const double tx = fx - i0, ty = fy - j0;
  const int off = observed_field(o.platform, n_fields) * grid.cells();
  Stencil s;
  s.time = o.time;
  s.index = {off + grid.index(i0, j0), off + grid.index(i0 + 1, j0), off + grid.index(i0, j0 + 1),
             off + grid.index(i0 + 1, j0 + 1)};
  s.weight = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  return s;
}

ObservationOperator::ObservationOperator(const Grid& grid, int n_fields, const ObservationSet& obs)
    : state_size_(n_fields * grid.cells()), n_times_(grid.n_steps + 1) {
  by_time_.assign(n_times_, {});
  for (int j = 0; j < obs.size(); ++j) {
    stencils_.push_back(bilinear_stencil(grid, n_fields, obs[j]));
    by_time_[obs[j].time].push_back(j);
  }
}

void ObservationOperator::apply_at(int l, const Vector& state, Vector& out) const {
  for (int j : by_time_[l]) {
    const Stencil& s = stencils_[j];
    double v = 0.0;
    for (int q = 0; q < 4; ++q) v += s.weight[q] * state[s.index[q]];
    out[j] += v;
  }
}

void ObservationOperator::adjoint_at(int l, const Vector& w, Vector& state) const {
  for (int j : by_time_[l]) {
    const Stencil& s = stencils_[j];
    for (int q = 0; q < 4; ++q) state[s.index[q]] += s.weight[q] * w[j];
  }
}

Vector ObservationOperator::apply(const Trajectory& traj) const {
  require(static_cast<int>(traj.size()) >= n_times_ || std::all_of(stencils_.begin(), stencils_.end(),
                                                                  [&](const Stencil& s) {
                                                                    return s.time < static_cast<int>(traj.size());
                                                                  }),
          "apply_g: trajectory does not cover all observation times");
  Vector out = Vector::Zero(size());
  for (int l = 0; l < std::min<int>(n_times_, static_cast<int>(traj.size())); ++l) {
    if (!by_time_[l].empty()) {
      require(traj[l].size() == state_size_, "apply_g: state size mismatch");
      apply_at(l, traj[l], out);
    }
  }
  return out;
}

Trajectory ObservationOperator::adjoint(const Vector& w) const {
  require(w.size() == size(), "apply_g_adjoint: vector length must equal n_obs");
  Trajectory t(n_times_, Vector::Zero(state_size_));
  for (int l = 0; l < n_times_; ++l) adjoint_at(l, w, t[l]);
  return t;
}

Vector innovations(const Trajectory& background, const ObservationSet& obs, const ObservationOperator& op) {
  return obs.values() - op.apply(background);
}

ObservationSet synthesize(const Trajectory& truth, const Grid& grid, int n_fields, const PlatformSpec& spec,
                          std::uint64_t seed) {
  int total = 0;
  for (int p = 0; p < kPlatformCount; ++p) {
    require(spec.counts[p] >= 0, "synthesize: negative observation count");
    require(spec.counts[p] == 0 || spec.sigma[p] > 0, "synthesize: sigma_o must be positive");
    total += spec.counts[p];
  }
  if (total == 0) throw InvalidArgument("synthesize: zero observations requested");
  require(spec.noise_factor >= 0, "synthesize: noise factor must be >= 0");
  require(static_cast<int>(truth.size()) == grid.n_steps + 1, "synthesize: truth trajectory length must be N+1");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> time_d(0, grid.n_steps);
  std::uniform_int_distribution<int> node_i(0, grid.nx - 1), node_j(0, grid.ny - 1);
  std::uniform_real_distribution<double> ux(0.0, (grid.nx - 1) * grid.dx), uy(0.0, (grid.ny - 1) * grid.dy);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double xmax = (grid.nx - 1) * grid.dx, ymax = (grid.ny - 1) * grid.dy;
  constexpr int kTrackLength = 8;

  std::vector<Observation> obs;
  obs.reserve(total);
  for (int p = 0; p < kPlatformCount; ++p) {
    const Platform plat = static_cast<Platform>(p);
    double tx = 0, ty = 0, sx = 0, sy = 0;
    int track_time = 0;
    for (int n = 0; n < spec.counts[p]; ++n) {
      Observation o;
      o.platform = plat;
      o.variance = spec.sigma[p] * spec.sigma[p];
      if (plat == Platform::SurfaceGrid) {
        o.time = time_d(rng);
        o.x = node_i(rng) * grid.dx;
        o.y = node_j(rng) * grid.dy;
      } else if (plat == Platform::Track) {
        if (n % kTrackLength == 0) {
          track_time = time_d(rng);
          tx = ux(rng);
          ty = uy(rng);
          const double ang = 2.0 * M_PI * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
          sx = std::cos(ang) * grid.dx;
          sy = std::sin(ang) * grid.dy;
        }
        const int s = n % kTrackLength;
        o.time = track_time;
        o.x = std::clamp(tx + s * sx, 0.0, xmax);
        o.y = std::clamp(ty + s * sy, 0.0, ymax);
      } else {
        o.time = time_d(rng);
        o.x = ux(rng);
        o.y = uy(rng);
      }
      const Stencil st = bilinear_stencil(grid, n_fields, o);
      double v = 0.0;
      for (int q = 0; q < 4; ++q) v += st.weight[q] * truth[o.time][st.index[q]];
      o.value = v + spec.noise_factor * spec.sigma[p] * normal(rng);
      obs.push_back(o);
    }
  }
  return ObservationSet(std::move(obs), grid);
}

void write_observations(std::ostream& os, const ObservationSet& obs) {
  char buf[256];
  for (const Observation& o : obs.all()) {
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g %s %.17g %.17g\n", o.time, o.x, o.y, to_string(o.platform).c_str(),
                  o.value, o.variance);
    os << buf;
  }
}

ObservationSet read_observations(std::istream& is, const Grid& grid) {
  std::vector<Observation> obs;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Observation o;
    std::string plat, extra;
    if (!(ls >> o.time >> o.x >> o.y >> plat >> o.value >> o.variance) || (ls >> extra)) {
      throw InvalidArgument("observation file line " + std::to_string(lineno) +
                            ": expected 'time_index x y platform value variance'");
    }
    o.platform = parse_platform(plat);
    obs.push_back(o);
  }
  return ObservationSet(std::move(obs), grid);
}

}  // namespace ddvar
