#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "ddvar/assim.hpp"

namespace ddvar {

struct TransportFunctional {
  Vector h;
  int count = 1;  // N, number of time levels averaged

  void validate(long state_size) const;
};

// Field-0 transport through grid column `column`, each cell weighted by dy.
TransportFunctional column_transport(const Grid& grid, int n_fields, int column, int count);

double evaluate_functional(const Trajectory& traj, const TransportFunctional& f);

// (1/N) sum_l M_l' h in control space, one accumulated backward sweep.
Vector adjoint_sensitivity(const LinearizedProblem& lp, const TransportFunctional& f);

struct ImpactRow {
  int count = 0;
  double nl = 0.0;
  double tl = 0.0;
  double ic = 0.0;
  double fc = 0.0;
  double bc = 0.0;
};

struct ImpactReport {
  Vector g;                  // K' (adjoint sensitivity)
  Vector gx, gf, gb;         // segment decomposition, g = gx + gf + gb
  Vector contributions;      // d_j g_j
  std::array<ImpactRow, kPlatformCount> platforms{};
  ImpactRow total;
  double delta_i = 0.0;      // sum of contributions
};

// Observation impact of innovations d on I, with analysis bg + K d.
ImpactReport observation_impact(const Model& model, const Background& bg, const ObservationSet& obs,
                                const LinearizedProblem& lp, const KalmanGain& k, const Vector& d,
                                const TransportFunctional& f);

// Response of I to perturbed observations y + dy about the analysis bg + K d.
ImpactReport observation_sensitivity(const Model& model, const Background& bg, const ObservationSet& obs,
                                     const LinearizedProblem& lp, const KalmanGain& k, const Vector& d,
                                     const Vector& dy, const TransportFunctional& f);

struct ForecastImpact {
  double delta_i = 0.0;
  double misfit_a = 0.0;
  double misfit_b = 0.0;
  double misfit_reduction = 0.0;
  bool has_misfit = false;
};

// Nonlinear forecasts of `horizon` steps from the two states with zero forcing and
// frozen boundary values. Verifying observation times are relative to the forecast start.
ForecastImpact forecast_impact(const Model& model, const Vector& xa, const Vector& xb, int horizon,
                               const TransportFunctional& f, const std::vector<Observation>* verifying = nullptr);

struct CostHistoryReport {
  std::vector<CostRow> rows;
  double j_min = 0.0;
};

CostHistoryReport cost_history_report(const std::vector<CostRow>& history, int n_obs);
void write_cost_history(std::ostream& os, const CostHistoryReport& rep);
void write_impact(std::ostream& os, const ImpactReport& rep);

}  // namespace ddvar
