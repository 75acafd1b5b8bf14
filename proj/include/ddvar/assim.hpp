#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ddvar/covariance.hpp"
#include "ddvar/grid.hpp"
#include "ddvar/krylov.hpp"
#include "ddvar/model.hpp"
#include "ddvar/observations.hpp"

namespace ddvar {

// Control vector layout [dx0 | df_0 .. df_{K-1} | db_0 .. db_{K-1}] with
// window-constant forcing and boundary increments.
struct ControlLayout {
  int state_size = 0;
  int boundary_size = 0;
  int n_windows = 1;

  long size() const { return state_size + static_cast<long>(n_windows) * (state_size + boundary_size); }
  long forcing_offset(int k) const { return state_size + static_cast<long>(k) * state_size; }
  long boundary_offset(int k) const {
    return state_size + static_cast<long>(n_windows) * state_size + static_cast<long>(k) * boundary_size;
  }
};

class ControlVector {
 public:
  explicit ControlVector(ControlLayout layout) : layout_(layout), data_(Vector::Zero(layout.size())) {}
  ControlVector(ControlLayout layout, Vector data);

  const ControlLayout& layout() const { return layout_; }
  const Vector& flatten() const { return data_; }
  static ControlVector unflatten(ControlLayout layout, const Vector& v) { return ControlVector(layout, v); }

  auto x0() { return data_.head(layout_.state_size); }
  auto x0() const { return data_.head(layout_.state_size); }
  auto forcing(int k) { return data_.segment(layout_.forcing_offset(k), layout_.state_size); }
  auto forcing(int k) const { return data_.segment(layout_.forcing_offset(k), layout_.state_size); }
  auto boundary(int k) { return data_.segment(layout_.boundary_offset(k), layout_.boundary_size); }
  auto boundary(int k) const { return data_.segment(layout_.boundary_offset(k), layout_.boundary_size); }

 private:
  ControlLayout layout_;
  Vector data_;
};

struct CovarianceSpec {
  double sigma_b = 1.0;
  double length = 1.0;
  double nugget = 1e-8;  // absolute; 1e-8 * sigma_b^2 by default
  double sigma_f = 0.1;
  double sigma_bnd = 0.5;
};

// Block-diagonal control-space B sharing one correlation per segment type.
BlockCovariance build_control_b(const Model& model, int n_windows, const CovarianceSpec& spec);

struct Background {
  Vector x0;
  ForcingSeries forcing;
  BoundarySeries boundary;
};

Background apply_increment(const Background& bg, const ControlLayout& layout, const TimeWindows& windows,
                           const Vector& dz);

// H = G o M linearized about a trajectory.
class LinearizedProblem {
 public:
  LinearizedProblem(const Model& model, Trajectory lin, TimeWindows windows, ObservationOperator op);

  const Model& model() const { return *model_; }
  const Trajectory& trajectory() const { return lin_; }
  const TimeWindows& windows() const { return windows_; }
  const ObservationOperator& obs_operator() const { return op_; }
  const ControlLayout& layout() const { return layout_; }
  int n_obs() const { return op_.size(); }

  Trajectory tl_trajectory(const Vector& dz) const;
  Vector apply_h(const Vector& dz) const;
  Vector apply_ht(const Vector& w) const;
  // Adjoint sweep with an arbitrary forcing per time point 0..N.
  Vector adjoint_sweep(const Trajectory& forcing) const;
  Matrix dense_h() const;

  VarSystem system(const BlockCovariance& b, const CovarianceR& r, const Vector& d) const;

 private:
  const Model* model_;
  Trajectory lin_;
  TimeWindows windows_;
  ObservationOperator op_;
  ControlLayout layout_;
};

CostBreakdown cost(const Vector& dz, const Vector& d, const BlockCovariance& b, const CovarianceR& r,
                   const LinearizedProblem& h);
Vector gradient(const Vector& dz, const Vector& d, const BlockCovariance& b, const CovarianceR& r,
                const LinearizedProblem& h);

enum class SolveMethod { Dense, Iterative };

Vector primal_analysis(const Vector& d, const BlockCovariance& b, const CovarianceR& r, const LinearizedProblem& h,
                       SolveMethod method = SolveMethod::Dense);
Vector dual_analysis(const Vector& d, const BlockCovariance& b, const CovarianceR& r, const LinearizedProblem& h,
                     SolveMethod method = SolveMethod::Dense);

// K = B H' (H B H' + R)^-1 with a factorized observation-space matrix.
class KalmanGain {
 public:
  KalmanGain(const BlockCovariance& b, const CovarianceR& r, const LinearizedProblem& h);
  explicit KalmanGain(const VarSystem& sys);

  Vector apply(const Vector& d) const;
  Vector apply_adjoint(const Vector& v) const;
  const Matrix& bht() const { return bht_; }

 private:
  void factor(const CovarianceR& r);
  Matrix bht_;
  Matrix s_;
  Eigen::LLT<Matrix> llt_;
};

enum class Solver { Primal, DualCG, Minres, Rpcg };
std::string to_string(Solver s);
Solver parse_solver(const std::string& s);
SolveReport run_solver(Solver s, const VarSystem& sys, const SolverOptions& opt);

struct CostRow {
  int outer = 0;
  int inner = 0;
  CostBreakdown cost;
};

struct OuterLoopConfig {
  int nouter = 1;
  int ninner = 25;
  Solver solver = Solver::Primal;
  double tol = 1e-12;
  bool reorthogonalize = false;
};

struct AnalysisResult {
  Vector dz;
  Trajectory analysis;
  std::vector<CostRow> history;
  int outer_loops = 0;
  std::vector<SolveReport> reports;
  bool converged = true;
};

AnalysisResult incremental_outer_loop(const Model& model, const Background& bg, const ObservationSet& obs,
                                      const BlockCovariance& b, const TimeWindows& windows,
                                      const OuterLoopConfig& cfg);

}  // namespace ddvar
