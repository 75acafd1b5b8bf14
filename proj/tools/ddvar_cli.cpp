#include <iostream>

#include "CLI11.hpp"
#include "ddvar/acceptance.hpp"
#include "ddvar/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"space-time domain-decomposed 4D-Var laboratory"};
  app.require_subcommand(1);

  std::string config_path, formulation, out_dir, suite, configs_dir = "configs", work_dir = "verify_out";
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("--config", config_path, "config file")->required();
  auto* f_opt = run->add_option("--formulation", formulation, "is4dvar | rbl4dvar | minres | rpcg | dd4dvar");
  auto* s_opt = run->add_option("--seed", seed, "random seed");
  auto* o_opt = run->add_option("--out", out_dir, "output directory");

  auto* verify = app.add_subcommand("verify", "run an acceptance suite");
  verify->add_option("--suite", suite, "adjoint | gradient | duality | dd")->required();
  verify->add_option("--configs", configs_dir, "directory holding the shipped configs");
  verify->add_option("--work", work_dir, "scratch directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      ddvar::ExperimentConfig cfg = ddvar::load_config(config_path);
      if (*f_opt) {
        ddvar::check_formulation(formulation);
        cfg.formulation = formulation;
      }
      if (*s_opt) cfg.seed = seed;
      if (*o_opt) cfg.output = out_dir;
      cfg.validate();
      const ddvar::ExperimentSummary s = ddvar::run_experiment(cfg);
      std::cout << "formulation " << cfg.formulation << ": n_obs " << s.n_obs << ", J " << s.j_initial << " -> "
                << s.j_final << " (J_min " << s.j_min << ")" << (s.converged ? "" : ", not converged") << "\n"
                << "wrote " << s.files.size() << " files to " << cfg.output << "\n";
      return 0;
    }
    ddvar::AcceptanceContext ctx{configs_dir, work_dir};
    bool ok = true;
    for (const auto& r : ddvar::run_suite(suite, ctx)) {
      std::cout << ddvar::format_result(r) << "\n";
      ok = ok && r.pass;
    }
    return ok ? 0 : 2;
  } catch (const ddvar::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
}
