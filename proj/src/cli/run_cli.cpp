#include <iostream>

#include <CLI11.hpp>

#include "t2fe/cli.hpp"

namespace t2fe::cli {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"T2-informed finite element pipeline", "t2fe"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path, out_dir, method, family, fractions;
  int jobs = 0;
  bool validate = false;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "Pipeline config (JSON)")->required();
  app.add_option("--out", out_dir, "Output directory (overrides the config)");
  app.add_option("--method", method, "Assignment method")->check(CLI::IsMember({"nn", "weighted"}));
  app.add_option("--family", family, "Perturbation family")->check(CLI::IsMember({"shift", "slope"}));
  app.add_option("--fractions", fractions, "Comma-separated perturbation fractions");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--validate", validate, "Check config and inputs without writing outputs");
  app.add_option("--seed", seed, "Seed for Monte-Carlo oracle checks");

  const std::pair<const char*, const char*> stages[] = {
      {"fit-t2", "Fit mono-exponential T2 from the echo series"},
      {"smooth", "Edge-preserving anisotropic diffusion of the T2 map"},
      {"assign", "Element T2 by nearest neighbour or volume weighting"},
      {"relate", "Map element T2 to E_D through the clamped linear relation"},
      {"perturb", "Write perturbed relations and E_D fields"},
      {"solve", "Solve the static FE model"},
      {"study", "Full pipeline plus sensitivity study"},
      {"report", "Agreement, texture and study summary tables"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }
  const std::string stage = app.get_subcommands().front()->get_name();

  try {
    std::optional<std::filesystem::path> out_override;
    if (!out_dir.empty()) out_override = std::filesystem::path(out_dir);
    PipelineConfig config = load_config(config_path, out_override);
    if (!method.empty()) config.method = method;
    if (!family.empty()) config.family = family;
    if (!fractions.empty()) config.fractions = parse_fraction_list(fractions);
    if (jobs > 0) config.jobs = jobs;
    if (app.count("--seed")) config.seed = seed;
    out << run_stage(stage, config, validate, err) << '\n';
    return static_cast<int>(ExitCode::ok);
  } catch (const InputError& e) {
    err << "t2fe " << stage << ": error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::usage);
  } catch (const std::exception& e) {
    err << "t2fe " << stage << ": error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::runtime_failure);
  }
}

}  // namespace t2fe::cli
