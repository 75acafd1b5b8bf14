#pragma once

#include <cstdint>
#include <string>

#include "ddvar/assim.hpp"
#include "ddvar/dd4dvar.hpp"

namespace ddvar {

struct ExperimentConfig {
  // grid
  int nx = 0;
  int ny = 0;
  double dx = 1.0;
  double dy = 1.0;
  double dt = 0.1;
  int n_steps = 0;
  // model
  ModelKind model = ModelKind::Linear;
  double cx = 0.5;
  double cy = 0.3;
  double nu = 0.05;
  BoundaryKind boundary = BoundaryKind::Prescribed;
  double bg_amplitude = 1.0;
  // covariances
  double sigma_b = 1.0;
  double length = 1.0;
  double nugget = 1e-8;
  double sigma_f = 0.1;
  double sigma_bnd = 0.5;
  // observations
  int obs_surface = 0;
  int obs_track = 0;
  int obs_profile = 0;
  double sigma_surface = 0.05;
  double sigma_track = 0.05;
  double sigma_profile = 0.05;
  double noise_factor = 1.0;
  std::string obs_file;
  // decomposition
  int ntile_i = 1;
  int ntile_j = 1;
  int halo = 2;
  int n_t = 1;
  // solver
  std::string formulation;
  int nouter = 1;
  int ninner = 25;
  double tol = 1e-12;
  bool reorthogonalize = false;
  // DD
  int dd_max_iter = 50;
  double dd_tol = 1e-8;
  int dd_ninner = 200;
  double dd_inner_tol = 1e-12;
  double alpha = 1.0;
  double beta_i = 1.0;
  double beta_j = 1.0;
  double gamma_i = 1.0;
  double gamma_j = 1.0;
  DDAcceleration dd_acceleration = DDAcceleration::Krylov;
  double dd_relaxation = 0.5;
  // diagnostics
  bool impact = false;
  bool sensitivity = false;
  int section_column = -1;  // -1: middle column
  int forecast_horizon = 0;
  // run
  std::uint64_t seed = 1;
  std::string output = "out";

  bool operator==(const ExperimentConfig&) const = default;

  Grid grid() const;
  ModelConfig model_config() const;
  CovarianceSpec covariance_spec() const;
  PlatformSpec platform_spec() const;
  DDConfig dd_config() const;
  OuterLoopConfig outer_config() const;  // global formulations only
  bool is_dd() const { return formulation == "dd4dvar"; }
  void validate() const;
};

extern const char* const kFormulations;

// Full validation; errors name the offending line and key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Canonical text; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& c);
void check_formulation(const std::string& f);

}  // namespace ddvar
