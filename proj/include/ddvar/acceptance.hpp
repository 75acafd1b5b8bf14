#pragma once

#include <string>
#include <vector>

namespace ddvar {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  double budget = 0.0;  // runtime limit in seconds
};

// Shipped configs are looked up in `configs_dir`; scratch output goes under `work_dir`.
struct AcceptanceContext {
  std::string configs_dir = "configs";
  std::string work_dir = "acceptance_out";
};

CriterionResult check_adjoint_identity(const AcceptanceContext& ctx);
CriterionResult check_gradient(const AcceptanceContext& ctx);
CriterionResult check_primal_dual(const AcceptanceContext& ctx);
CriterionResult check_solver_agreement(const AcceptanceContext& ctx);
CriterionResult check_dd_oracle(const AcceptanceContext& ctx);
CriterionResult check_theoretical_minimum(const AcceptanceContext& ctx);
CriterionResult check_impact_identity(const AcceptanceContext& ctx);
CriterionResult check_comm_topology(const AcceptanceContext& ctx);
CriterionResult check_convergence_by_25(const AcceptanceContext& ctx);

std::vector<CriterionResult> run_all_criteria(const AcceptanceContext& ctx);
// Suites: adjoint, gradient, duality, dd.
std::vector<CriterionResult> run_suite(const std::string& suite, const AcceptanceContext& ctx);
std::string format_result(const CriterionResult& r);

}  // namespace ddvar
