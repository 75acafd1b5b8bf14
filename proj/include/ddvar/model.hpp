#pragma once

#include <array>
#include <string>
#include <vector>

#include "ddvar/grid.hpp"
#include "ddvar/types.hpp"

namespace ddvar {

enum class ModelKind { Linear, Burgers };
enum class BoundaryKind { Periodic, Prescribed };

std::string to_string(ModelKind kind);
std::string to_string(BoundaryKind kind);
ModelKind parse_model_kind(const std::string& s);
BoundaryKind parse_boundary_kind(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::Linear;
  double cx = 0.0;  // advection velocity (linear), velocity scale for the CFL guard (Burgers)
  double cy = 0.0;
  double nu = 0.05;
  BoundaryKind boundary = BoundaryKind::Periodic;

  int n_fields() const { return kind == ModelKind::Linear ? 1 : 2; }
  void validate(const Grid& grid) const;
};

enum class CellKind : char { Interior, Prescribed, Hold };

// Cell connectivity for a rectangular patch; -1 marks a missing neighbor.
struct Mesh {
  double dx = 1.0;
  double dy = 1.0;
  std::vector<int> cell_ids;                // global id of each cell
  std::vector<std::array<int, 4>> nbr;      // east, west, north, south
  std::vector<CellKind> kind;
  std::vector<int> prescribed;              // cells taking boundary values, slot order
  std::vector<int> slot;                    // boundary slot per cell, -1 otherwise

  int size() const { return static_cast<int>(cell_ids.size()); }
  int n_prescribed() const { return static_cast<int>(prescribed.size()); }
};

Mesh build_global_mesh(const Grid& grid, BoundaryKind boundary);
// Sub-mesh over an arbitrary set of cells: prescribed cells keep their kind,
// cells with a neighbor outside the set are held fixed.
Mesh build_sub_mesh(const Mesh& global, const std::vector<int>& cells);

using Trajectory = std::vector<Vector>;
using ForcingSeries = std::vector<Vector>;   // entry l-1 drives step l
using BoundarySeries = std::vector<Vector>;

struct AdjointStep {
  Vector x;  // p(t_{l-1})
  Vector f;
  Vector b;
};

// Explicit forward-Euler, centered-difference dynamics on any mesh.
class Dynamics {
 public:
  Dynamics(ModelConfig config, double dt);

  const ModelConfig& config() const { return config_; }
  double dt() const { return dt_; }
  int n_fields() const { return config_.n_fields(); }

  Vector step_nl(const Mesh& m, const Vector& x, const Vector& f, const Vector& b) const;
  Vector step_tl(const Mesh& m, const Vector& x, const Vector& dx, const Vector& df, const Vector& db) const;
  AdjointStep step_ad(const Mesh& m, const Vector& x, const Vector& p) const;

 private:
  ModelConfig config_;
  double dt_;
};

class Model {
 public:
  Model(Grid grid, ModelConfig config);

  const Grid& grid() const { return grid_; }
  const ModelConfig& config() const { return dyn_.config(); }
  const Dynamics& dynamics() const { return dyn_; }
  const Mesh& mesh() const { return mesh_; }
  int n_fields() const { return dyn_.n_fields(); }
  int state_size() const { return n_fields() * grid_.cells(); }
  int boundary_size() const { return n_fields() * mesh_.n_prescribed(); }

  Vector step_nl(const Vector& x, const Vector& f, const Vector& b, int step = -1) const;
  Trajectory run_nl(const Vector& x0, const ForcingSeries& f, const BoundarySeries& b) const;
  Vector step_tl(const Vector& x, const Vector& dx, const Vector& df, const Vector& db) const;
  AdjointStep step_ad(const Vector& x, const Vector& p) const;

  // Boundary values of a state on the prescribed cells.
  Vector boundary_of(const Vector& x) const;

 private:
  Grid grid_;
  Dynamics dyn_;
  Mesh mesh_;
};

// Tangent-linear and adjoint of the composed steps of one time window, with
// window-constant forcing and boundary increments.
class WindowOperator {
 public:
  WindowOperator(const Model& model, const Trajectory& traj, int start, int end);

  int start() const { return start_; }
  int end() const { return end_; }
  Vector apply_tl(const Vector& dx, const Vector& df, const Vector& db) const;
  AdjointStep apply_ad(const Vector& p) const;

 private:
  const Model* model_;
  const Trajectory* traj_;
  int start_, end_;
};

WindowOperator window_operator(const Model& model, const Trajectory& traj, const TimeWindows& windows, int k);

}  // namespace ddvar
