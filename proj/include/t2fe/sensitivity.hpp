#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2fe/fem.hpp"
#include "t2fe/fem_io.hpp"
#include "t2fe/material.hpp"
#include "t2fe/transfer.hpp"

namespace t2fe {

/// Tensile and shear metrics rank the largest values; compressive metrics
/// are negated first so the most negative values rank highest.
enum class Orientation { tensile, compressive };

struct TopStats {
  double threshold = 0.0;  // 99th percentile, original sign
  double mean = 0.0;       // mean of the top set, original sign
  std::size_t count = 0;   // size of the top set
};

/// Threshold = linearly interpolated order statistic at `percentile` of the
/// oriented values (position h = (n - 1) p / 100); the top set holds every
/// element whose oriented value is >= the oriented threshold.
TopStats top1_threshold_and_mean(const std::vector<double>& values, Orientation o,
                                 double percentile = 99.0);

/// Elements whose oriented value is >= the oriented baseline threshold
/// (threshold given in original sign).
std::size_t exceedance_count(const std::vector<double>& values, double baseline_threshold,
                             Orientation o);

/// 100 (perturbed - baseline) / |baseline|; empty when the baseline is 0.
std::optional<double> percent_change(double perturbed, double baseline);

enum class Metric { p1_stress, p3_stress, tau_max_stress, p1_strain, p3_strain, tau_max_strain };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& text);
Orientation orientation_of(Metric m);
const std::vector<Metric>& all_metrics();

/// Metric value of every element in `elements` (stress in Pa).
std::vector<double> metric_values(const StepResult& step, Metric m,
                                  const std::vector<std::size_t>& elements);

struct StudyConfig {
  ModelFile model;
  HexMesh mesh;
  ElementField t2;  // ms, one value per element
  LinearRelation relation = LinearRelation::baseline();
  PerturbationFamily family = PerturbationFamily::modulus_shift;
  std::vector<double> fractions = {-0.10, 0.0, 0.10, 0.20, 0.30, 0.40, 0.50};
  std::vector<std::string> markers = {"ramp-end"};
  std::vector<Metric> metrics = all_metrics();
  /// Elements whose parts enter the statistics (cartilage by default).
  std::vector<Part> parts = {Part::femoral_cartilage, Part::tibial_cartilage};
  int histogram_bins = 20;
  SolverOptions solver;
  int jobs = 1;

  void validate() const;
};

struct MetricRow {
  double fraction = 0.0;
  std::string marker;
  Metric metric = Metric::p1_stress;
  TopStats baseline;
  TopStats perturbed;
  std::optional<double> percent_change;
  std::size_t exceedance = 0;
};

/// Counts of oriented values >= the baseline threshold, binned on
/// [threshold, max over all fractions] for one (marker, metric).
struct Histogram {
  double fraction = 0.0;
  std::string marker;
  Metric metric = Metric::p1_stress;
  std::vector<double> lower_edges;  // oriented values
  std::vector<std::size_t> counts;
};

struct FractionStatus {
  double fraction = 0.0;
  bool ok = true;
  std::string error;
};

struct StudyReport {
  PerturbationFamily family = PerturbationFamily::modulus_shift;
  std::vector<double> fractions;
  std::vector<std::string> markers;
  std::vector<Metric> metrics;
  std::vector<FractionStatus> status;  // one per fraction
  std::vector<MetricRow> rows;         // fraction-major, then marker, then metric
  std::vector<Histogram> histograms;
  std::size_t element_count = 0;
  std::size_t selected_elements = 0;
  bool complete() const;
  /// Row lookup; null for failed fractions.
  const MetricRow* find(double fraction, const std::string& marker, Metric metric) const;
};

StudyReport run_study(const StudyConfig& config);

/// percent_change_<metric>.csv and exceedance_<metric>.csv (rows = fractions,
/// columns = markers), study.json and histograms/<metric>_<marker>_f<+0.00>.csv.
void write_study_report(const std::filesystem::path& dir, const StudyReport& report);
nlohmann::json to_json(const StudyReport& report);

std::string fraction_label(double f);

}  // namespace t2fe
