#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2fe/raster.hpp"
#include "t2fe/sensitivity.hpp"
#include "t2fe/transfer.hpp"

namespace t2fe::cli {

enum class ExitCode : int { ok = 0, runtime_failure = 1, usage = 2 };

/// Everything the subcommands read, from one JSON file. Relative paths are
/// resolved against the config file's directory; a leading "$OUT" refers to
/// the output directory.
struct PipelineConfig {
  std::filesystem::path config_dir;
  std::filesystem::path out_dir;

  std::vector<std::filesystem::path> echoes;        // multi-echo headers (fit-t2)
  std::optional<std::filesystem::path> t2_volume;   // T2 map when no echoes are given
  std::optional<std::filesystem::path> mesh;
  std::optional<std::filesystem::path> transform;   // rigid pose applied to the grid
  std::optional<std::filesystem::path> model;

  T2FitOptions fit;
  bool smoothing = true;
  DiffusionParams diffusion;
  std::string method = "weighted";  // nn | weighted
  TransferOptions transfer;

  LinearRelation relation = LinearRelation::baseline();
  std::string family = "shift";  // shift | slope
  std::vector<double> fractions = {-0.10, 0.0, 0.10, 0.20, 0.30, 0.40, 0.50};
  std::vector<std::string> markers;  // empty: every schedule marker
  std::vector<Metric> metrics = all_metrics();
  std::vector<Part> study_parts = {Part::femoral_cartilage, Part::tibial_cartilage};
  int histogram_bins = 20;
  SolverOptions solver;

  int jobs = 1;
  std::optional<std::uint64_t> seed;

  /// Input paths derived from the stage layout.
  std::filesystem::path fitted_t2() const { return out_dir / "t2.json"; }
  std::filesystem::path smoothed_t2() const { return out_dir / "t2_smooth.json"; }
  std::filesystem::path raw_t2() const { return t2_volume ? *t2_volume : fitted_t2(); }
  std::filesystem::path assign_input() const { return smoothing ? smoothed_t2() : raw_t2(); }
  std::filesystem::path element_t2(const std::string& m) const {
    return out_dir / ("t2e_" + m + ".csv");
  }
};

/// Parses a config document; `out_override` (the --out flag) wins over the
/// file's "out_dir".
PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& config_dir,
                            const std::optional<std::filesystem::path>& out_override);
PipelineConfig load_config(const std::filesystem::path& path,
                           const std::optional<std::filesystem::path>& out_override);

std::vector<double> parse_fraction_list(const std::string& csv);

/// Runs one subcommand; `validate_only` checks inputs and parameters without
/// writing anything. Returns the one-line summary.
std::string run_stage(const std::string& stage, const PipelineConfig& config, bool validate_only,
                      std::ostream& warn);

/// Full command-line entry point (argv[0] is the program name).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace t2fe::cli
