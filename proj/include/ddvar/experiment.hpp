#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ddvar/config.hpp"
#include "ddvar/diagnostics.hpp"

namespace ddvar {

// Twin setup: truth = background + a draw from B; observations sampled from the truth run.
struct TwinProblem {
  std::unique_ptr<Model> model;
  TimeWindows windows;
  BlockCovariance b;
  Background background;
  Background truth;
  Trajectory truth_trajectory;
  ObservationSet obs;
};

Vector smooth_state(const Grid& grid, ModelKind kind, double amplitude);
TwinProblem build_twin(const ExperimentConfig& cfg);

struct ExperimentSummary {
  int n_obs = 0;
  double j_min = 0.0;
  double j_initial = 0.0;
  double j_final = 0.0;
  bool converged = false;
  std::vector<CostRow> history;
  std::vector<std::string> files;
};

// Runs the configured formulation and writes the artifacts into cfg.output.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

std::string sha256_hex(const std::string& bytes);

}  // namespace ddvar
