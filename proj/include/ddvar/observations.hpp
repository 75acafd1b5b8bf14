#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddvar/grid.hpp"
#include "ddvar/model.hpp"
#include "ddvar/types.hpp"

namespace ddvar {

enum class Platform { SurfaceGrid = 0, Track = 1, Profile = 2 };
constexpr int kPlatformCount = 3;

std::string to_string(Platform p);
Platform parse_platform(const std::string& s);

struct Observation {
  int time = 0;
  double x = 0.0;
  double y = 0.0;
  Platform platform = Platform::SurfaceGrid;
  double value = 0.0;
  double variance = 1.0;
};

class ObservationSet {
 public:
  ObservationSet() = default;
  // Validates times, locations and variances against the grid.
  ObservationSet(std::vector<Observation> obs, const Grid& grid);

  int size() const { return static_cast<int>(obs_.size()); }
  const Observation& operator[](int j) const { return obs_[j]; }
  const std::vector<Observation>& all() const { return obs_; }
  // Observation indices per time point 0..N.
  const std::vector<std::vector<int>>& by_time() const { return by_time_; }
  Vector values() const;
  Vector variances() const;
  ObservationSet subset(const std::vector<int>& idx, const Grid& grid) const;

 private:
  std::vector<Observation> obs_;
  std::vector<std::vector<int>> by_time_;
};

// Observed field index of a platform.
inline int observed_field(Platform p, int n_fields) { return static_cast<int>(p) % n_fields; }

struct Stencil {
  int time = 0;
  std::array<int, 4> index{};  // state-vector indices
  std::array<double, 4> weight{};
};

// Bilinear point sampling G of a trajectory at the observation times.
class ObservationOperator {
 public:
  ObservationOperator() = default;
  ObservationOperator(const Grid& grid, int n_fields, const ObservationSet& obs);

  int size() const { return static_cast<int>(stencils_.size()); }
  int state_size() const { return state_size_; }
  int n_times() const { return n_times_; }
  const Stencil& stencil(int j) const { return stencils_[j]; }
  const std::vector<int>& at_time(int l) const { return by_time_[l]; }

  Vector apply(const Trajectory& traj) const;
  Trajectory adjoint(const Vector& w) const;
  // Accumulates sampled values of obs at time l into out.
  void apply_at(int l, const Vector& state, Vector& out) const;
  void adjoint_at(int l, const Vector& w, Vector& state) const;

 private:
  int state_size_ = 0;
  int n_times_ = 0;
  std::vector<Stencil> stencils_;
  std::vector<std::vector<int>> by_time_;
};

Stencil bilinear_stencil(const Grid& grid, int n_fields, const Observation& o);

Vector innovations(const Trajectory& background, const ObservationSet& obs, const ObservationOperator& op);

struct PlatformSpec {
  std::array<int, kPlatformCount> counts{};
  std::array<double, kPlatformCount> sigma{1.0, 1.0, 1.0};  // error standard deviations (recorded in R)
  double noise_factor = 1.0;                                // 0 gives perfect observations
};

ObservationSet synthesize(const Trajectory& truth, const Grid& grid, int n_fields, const PlatformSpec& spec,
                          std::uint64_t seed);

void write_observations(std::ostream& os, const ObservationSet& obs);
ObservationSet read_observations(std::istream& is, const Grid& grid);

}  // namespace ddvar
