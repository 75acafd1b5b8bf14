#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ddvar/assim.hpp"
#include "ddvar/comm.hpp"
#include "ddvar/covariance.hpp"
#include "ddvar/grid.hpp"
#include "ddvar/krylov.hpp"
#include "ddvar/model.hpp"
#include "ddvar/observations.hpp"

namespace ddvar {

struct DDWeights {
  double alpha = 1.0;
  double beta_i = 1.0;
  double beta_j = 1.0;
  double gamma_i = 1.0;
  double gamma_j = 1.0;
};

enum class DDAcceleration { Krylov, Richardson };
std::string to_string(DDAcceleration a);
DDAcceleration parse_acceleration(const std::string& s);

struct DDConfig {
  int max_iter = 50;        // n-bar
  double tol = 1e-8;        // tau_dd
  int ninner = 200;
  double inner_tol = 1e-12;
  DDWeights weights;
  DDAcceleration acceleration = DDAcceleration::Krylov;
  double relaxation = 0.5;  // Richardson step

  void validate() const;
};

// Quadratic penalty pulling one halo set of one control segment toward the neighbor's values.
struct HaloPenalty {
  Direction direction = Direction::I;
  int neighbor = -1;
  std::vector<int> entries;  // local control entries
  std::shared_ptr<const CovarianceB> cov;
};

// Local problem of tile i on window k. Local states live on the tile box
// (owned + halo, field-major); the local control is [dx0 (k = 0 only) | df_k | db_k].
struct LocalProblem {
  int tile = 0;
  int window = 0;
  int start = 0;  // first time point
  int end = 0;    // last time point
  int n_fields = 1;
  Mesh mesh;
  const Dynamics* dynamics = nullptr;
  DDWeights weights;

  std::vector<double> owned_mask;   // per box state entry: 1 owned, 0 halo
  std::vector<double> gamma_mask;   // per box state entry: 1 owned, gamma_I / gamma_J on halo
  std::vector<int> halo_i;          // box state entries of HI cells
  std::vector<int> halo_j;          // box state entries of HJ cells
  std::vector<int> hold;            // box state entries of held (outer-ring) cells

  bool has_x0 = false;
  long x0_offset = 0, f_offset = 0, b_offset = 0;
  long control_size = 0;
  std::vector<long> global_index;   // local control entry -> global control index
  std::vector<char> owned;          // local control entry owned by this tile
  std::vector<int> bslot_global;    // local boundary slot -> global boundary slot

  BlockCovariance b;                // restriction of the global B
  std::vector<HaloPenalty> penalties;

  std::vector<int> obs;             // global observation indices
  std::vector<Stencil> stencils;    // box-local stencils
  CovarianceR r;
  Vector d;                         // local innovations

  Trajectory lin;                   // box linearization states, time points start..end
  std::vector<Vector> forcing;      // background forcing on the box, steps start+1..end
  std::vector<Vector> boundary;     // background boundary values on the box, same steps

  int box_state_size() const { return n_fields * mesh.size(); }
  int n_steps() const { return end - start; }
};

// Values frozen within one DD iterate: box states at time points start..end
// (halo entries are the neighbors' values, states[0] is the incoming initial
// state) and the current local control (halo entries hold the neighbors' values).
struct NeighborTrace {
  Trajectory states;
  Vector control;
};

NeighborTrace zero_trace(const LocalProblem& p);

struct LocalCost {
  double J = 0.0;
  double Jb = 0.0;
  double Jo = 0.0;
  double O = 0.0;
};

// Nonlinear local model on the box; after each step the halo cells are taken from the trace.
Trajectory local_model_solve(const LocalProblem& p, const Vector& initial, const NeighborTrace& trace);

// gamma * action(P_dir (own - neighbor)) over the halo entries of one direction.
Vector theta_correction(const std::vector<int>& halo_entries, const std::function<Vector(const Vector&)>& action,
                        const Vector& own, const Vector& neighbor, double gamma);

// One corrected tangent-linear step l (start < l <= end).
Vector local_tl_step(const LocalProblem& p, int l, const Vector& dx, const Vector& df, const Vector& db,
                     const Vector& trace_prev, const Vector& trace_next);
// Transpose of the linear part of local_tl_step.
AdjointStep local_ad_step(const LocalProblem& p, int l, const Vector& q);

struct OverlapValue {
  double value = 0.0;
  Vector gradient;
};
OverlapValue overlap_operator(const LocalProblem& p, const Vector& y, const Vector& neighbor_control);

Trajectory local_tl_sweep(const LocalProblem& p, const Vector& y, const NeighborTrace& trace);
LocalCost local_cost(const LocalProblem& p, const Vector& y, const NeighborTrace& trace);
Vector local_gradient(const LocalProblem& p, const Vector& y, const NeighborTrace& trace);
// Hessian of local_cost (trace-independent).
Vector local_hessian(const LocalProblem& p, const Vector& v);

struct LocalSolve {
  Vector y;
  Vector correction;
  int iterations = 0;
  LocalCost cost;
};

// Minimizes local_cost(y) + coupling'y from y0 with preconditioned CG.
LocalSolve local_solve(const LocalProblem& p, const Vector& y0, const NeighborTrace& trace, const Vector& coupling,
                       int ninner, double tol);

struct DDTraceRow {
  int iteration = 0;
  int tile = 0;
  int window = 0;
  int inner_iters = 0;
  double J_local = 0.0;
  double halo_mismatch = 0.0;
};

struct RankTiming {
  int rank = 0;
  int tile = 0;
  int window = 0;
  double seconds = 0.0;
  long messages = 0;
  long bytes = 0;
};

struct DDResult {
  Vector dz;
  std::vector<CostBreakdown> costs;  // global cost per DD iterate
  std::vector<double> mismatch;      // per DD iterate
  std::vector<DDTraceRow> trace;
  int iterations = 0;
  bool converged = false;
};

// Space-time decomposition of one linearized problem onto simulated ranks.
class DDContext {
 public:
  DDContext(const Model& model, const Background& bg, const ObservationSet& obs, const BlockCovariance& b,
            const TileLayout& layout, const TimeWindows& windows, const DDConfig& cfg,
            std::shared_ptr<Network> net = nullptr);

  const World& world() const { return world_; }
  const TileLayout& layout() const { return *layout_; }
  const TimeWindows& windows() const { return windows_; }
  const ControlLayout& control_layout() const { return clayout_; }
  const LocalProblem& problem(int rank) const { return problems_[rank]; }
  int n_ranks() const { return world_.n_ranks(); }
  Network& network() const { return *net_; }
  const Trajectory& background_trajectory() const { return bg_traj_; }
  const Vector& innovations() const { return d_; }
  const CovarianceR& r() const { return r_; }
  const std::vector<RankTiming>& timings() const { return timings_; }

  struct TangentSweep {
    std::vector<Trajectory> states;  // per rank, box states at its window's time points
    Vector hx;                       // observation-space image
  };
  TangentSweep tl_sweep(const Vector& dz);
  Vector ad_sweep(const Vector& w);

  // Local control of a rank gathered from a global control vector (halo entries from neighbors).
  Vector gather(int rank, const Vector& global) const;
  // Additive assembly of local corrections: owned entries plus halo entries summed into owners.
  Vector assemble_corrections(const std::vector<Vector>& locals);

  DDResult solve(const Vector& d, const DDConfig& cfg);

 private:
  void build_problems(const ObservationSet& obs, const BlockCovariance& b);
  void setup_linearization(const Background& bg);
  LocalField box_field(int tile, int window, const Vector& data) const;
  void charge(int rank, double seconds);

  const Model* model_;
  const TileLayout* layout_;
  TimeWindows windows_;
  DDConfig cfg_;
  World world_;
  ControlLayout clayout_;
  std::shared_ptr<Network> net_;
  std::vector<Communicator> intra_;
  std::vector<Communicator> inter_;
  std::vector<LocalProblem> problems_;
  const BlockCovariance* b_;
  CovarianceR r_;
  Vector d_;
  Trajectory bg_traj_;
  double scale_ = 1.0;
  int exchange_ = 0;
  std::vector<RankTiming> timings_;
};

struct DDAnalysis {
  AnalysisResult analysis;
  std::vector<DDResult> solves;
  std::vector<RankTiming> timings;
};

DDAnalysis dd_outer_loop(const Model& model, const Background& bg, const ObservationSet& obs,
                         const BlockCovariance& b, const TileLayout& layout, const TimeWindows& windows,
                         const DDConfig& cfg, int nouter = 1, std::shared_ptr<Network> net = nullptr);

}  // namespace ddvar
