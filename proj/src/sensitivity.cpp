#include "t2fe/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "t2fe/format.hpp"
#include "t2fe/parallel.hpp"

namespace t2fe {

namespace {

double orient(double v, Orientation o) { return o == Orientation::compressive ? -v : v; }

}  // namespace

TopStats top1_threshold_and_mean(const std::vector<double>& values, Orientation o, double percentile) {
  if (values.empty()) throw InputError("top-1% statistics of an empty field");
  if (!(percentile >= 0.0 && percentile <= 100.0)) throw InputError("percentile must lie in [0, 100]");
  std::vector<double> x(values.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(values[i])) throw InputError("top-1% statistics of a nonfinite value");
    x[i] = orient(values[i], o);
  }
  std::sort(x.begin(), x.end());
  const double h = static_cast<double>(x.size() - 1) * percentile / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  const double threshold = x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
  const auto first = std::lower_bound(x.begin(), x.end(), threshold);
  double sum = 0.0;
  for (auto it = first; it != x.end(); ++it) sum += *it;
  TopStats s;
  s.count = static_cast<std::size_t>(x.end() - first);
  s.threshold = orient(threshold, o);
  s.mean = orient(sum / static_cast<double>(s.count), o);
  return s;
}

std::size_t exceedance_count(const std::vector<double>& values, double baseline_threshold,
                             Orientation o) {
  const double t = orient(baseline_threshold, o);
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [&](double v) { return orient(v, o) >= t; }));
}

std::optional<double> percent_change(double perturbed, double baseline) {
  if (baseline == 0.0 || !std::isfinite(baseline) || !std::isfinite(perturbed)) return std::nullopt;
  return 100.0 * (perturbed - baseline) / std::abs(baseline);
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::p1_stress: return "p1_stress";
    case Metric::p3_stress: return "p3_stress";
    case Metric::tau_max_stress: return "tau_max_stress";
    case Metric::p1_strain: return "p1_strain";
    case Metric::p3_strain: return "p3_strain";
    case Metric::tau_max_strain: return "tau_max_strain";
  }
  return "p1_stress";
}

Metric metric_from_string(const std::string& text) {
  for (Metric m : all_metrics())
    if (to_string(m) == text) return m;
  throw InputError("unknown metric '" + text + "'");
}

Orientation orientation_of(Metric m) {
  return (m == Metric::p3_stress || m == Metric::p3_strain) ? Orientation::compressive
                                                            : Orientation::tensile;
}

const std::vector<Metric>& all_metrics() {
  static const std::vector<Metric> all = {Metric::p1_stress, Metric::p3_stress,
                                          Metric::tau_max_stress, Metric::p1_strain,
                                          Metric::p3_strain, Metric::tau_max_strain};
  return all;
}

std::vector<double> metric_values(const StepResult& step, Metric m,
                                  const std::vector<std::size_t>& elements) {
  const bool stress = m == Metric::p1_stress || m == Metric::p3_stress || m == Metric::tau_max_stress;
  std::vector<double> out;
  out.reserve(elements.size());
  for (std::size_t e : elements) {
    const Principal p = principal_and_shear(stress ? step.stress[e] : step.strain[e]);
    switch (m) {
      case Metric::p1_stress:
      case Metric::p1_strain: out.push_back(p.p1); break;
      case Metric::p3_stress:
      case Metric::p3_strain: out.push_back(p.p3); break;
      default: out.push_back(p.tau_max);
    }
  }
  return out;
}

void StudyConfig::validate() const {
  if (family != PerturbationFamily::modulus_shift && family != PerturbationFamily::altered_slope)
    throw InputError("study family must be modulus-shift or altered-slope");
  if (relation.provenance.family != PerturbationFamily::baseline)
    throw InputError("study relation must be unperturbed; perturbation families are not composed");
  relation.validate();
  if (fractions.empty()) throw InputError("study needs at least one fraction");
  std::set<double> seen;
  for (double f : fractions) {
    if (!std::isfinite(f)) throw InputError("study fractions must be finite");
    if (!seen.insert(f).second) throw InputError("study fractions must be unique");
  }
  if (markers.empty()) throw InputError("study needs at least one marker");
  for (const std::string& m : markers) model.schedule.step_of(m);
  if (metrics.empty()) throw InputError("study needs at least one metric");
  if (histogram_bins < 1) throw InputError("histogram bins must be positive");
  t2.validate(mesh.element_count());
}

bool StudyReport::complete() const {
  return std::all_of(status.begin(), status.end(), [](const FractionStatus& s) { return s.ok; });
}

const MetricRow* StudyReport::find(double fraction, const std::string& marker, Metric metric) const {
  for (const MetricRow& r : rows)
    if (r.fraction == fraction && r.marker == marker && r.metric == metric) return &r;
  return nullptr;
}

namespace {

/// values[marker][metric] for one solved model.
using MetricTable = std::vector<std::vector<std::vector<double>>>;

MetricTable extract(const StudyConfig& c, const SolutionState& state,
                    const std::vector<std::size_t>& elements) {
  MetricTable t(c.markers.size());
  for (std::size_t k = 0; k < c.markers.size(); ++k) {
    const StepResult& step = state.at_marker(c.model.schedule, c.markers[k]);
    for (Metric m : c.metrics) t[k].push_back(metric_values(step, m, elements));
  }
  return t;
}

MetricTable solve_fraction(const StudyConfig& c, double f, const std::vector<std::size_t>& elements,
                           int jobs) {
  const LinearRelation r = c.family == PerturbationFamily::modulus_shift ? shift_modulus(c.relation, f)
                                                                         : alter_slope(c.relation, f);
  const FEModel model = build_model(c.model, c.mesh, e_d_field(r, c.t2));
  SolverOptions opt = c.solver;
  opt.jobs = jobs;
  return extract(c, solve_static(model, opt), elements);
}

}  // namespace

StudyReport run_study(const StudyConfig& config) {
  config.validate();
  std::vector<std::size_t> elements;
  for (std::size_t e = 0; e < config.mesh.element_count(); ++e)
    if (config.parts.empty() ||
        std::find(config.parts.begin(), config.parts.end(), config.mesh.parts[e]) != config.parts.end())
      elements.push_back(e);
  if (elements.empty()) throw InputError("study selection contains no elements");

  StudyReport report;
  report.family = config.family;
  report.fractions = config.fractions;
  report.markers = config.markers;
  report.metrics = config.metrics;
  report.element_count = config.mesh.element_count();
  report.selected_elements = elements.size();

  const MetricTable base = solve_fraction(config, 0.0, elements, config.jobs);

  const std::size_t nf = config.fractions.size();
  std::vector<MetricTable> tables(nf);
  report.status.resize(nf);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < nf; ++i) {
    report.status[i].fraction = config.fractions[i];
    if (config.fractions[i] == 0.0)
      tables[i] = base;
    else
      pending.push_back(i);
  }
  // Independent solves; parallel over fractions when jobs > 1.
  const int outer = std::max(1, std::min<int>(config.jobs, static_cast<int>(pending.size())));
  const int inner = outer > 1 ? 1 : config.jobs;
  parallel_for(pending.size(), outer, [&](std::size_t b, std::size_t end) {
    for (std::size_t p = b; p < end; ++p) {
      const std::size_t i = pending[p];
      try {
        tables[i] = solve_fraction(config, config.fractions[i], elements, inner);
      } catch (const Error& e) {
        report.status[i].ok = false;
        report.status[i].error = e.what();
      }
    }
  });

  const int bins = config.histogram_bins;
  for (std::size_t k = 0; k < config.markers.size(); ++k) {
    for (std::size_t q = 0; q < config.metrics.size(); ++q) {
      const Metric metric = config.metrics[q];
      const Orientation o = orientation_of(metric);
      const TopStats b = top1_threshold_and_mean(base[k][q], o);
      double top = orient(b.threshold, o);
      for (std::size_t i = 0; i < nf; ++i)
        if (report.status[i].ok)
          for (double v : tables[i][k][q]) top = std::max(top, orient(v, o));
      const double lo = orient(b.threshold, o);
      const double width = top > lo ? (top - lo) / bins : 1.0;
      for (std::size_t i = 0; i < nf; ++i) {
        if (!report.status[i].ok) continue;
        const std::vector<double>& vals = tables[i][k][q];
        MetricRow row;
        row.fraction = config.fractions[i];
        row.marker = config.markers[k];
        row.metric = metric;
        row.baseline = b;
        row.perturbed = top1_threshold_and_mean(vals, o);
        row.percent_change = config.fractions[i] == 0.0 ? std::optional<double>(0.0)
                                                        : percent_change(row.perturbed.mean, b.mean);
        row.exceedance = exceedance_count(vals, b.threshold, o);
        report.rows.push_back(row);

        Histogram h;
        h.fraction = row.fraction;
        h.marker = row.marker;
        h.metric = metric;
        h.counts.assign(static_cast<std::size_t>(bins), 0);
        for (int j = 0; j < bins; ++j) h.lower_edges.push_back(lo + j * width);
        for (double v : vals) {
          const double x = orient(v, o);
          if (!(x >= lo)) continue;
          const auto bin = std::min<std::size_t>(static_cast<std::size_t>((x - lo) / width),
                                                 static_cast<std::size_t>(bins - 1));
          ++h.counts[bin];
        }
        report.histograms.push_back(std::move(h));
      }
    }
  }
  // Fraction-major row order.
  std::stable_sort(report.rows.begin(), report.rows.end(), [&](const MetricRow& a, const MetricRow& b) {
    const auto ia = std::find(config.fractions.begin(), config.fractions.end(), a.fraction);
    const auto ib = std::find(config.fractions.begin(), config.fractions.end(), b.fraction);
    return ia < ib;
  });
  return report;
}

std::string fraction_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", f == 0.0 ? 0.0 : f);
  return buf;
}

namespace {

constexpr int kReportDigits = 12;

std::string optional_number(const std::optional<double>& v) {
  return v ? format_number(*v, kReportDigits) : std::string("undefined");
}

}  // namespace

nlohmann::json to_json(const StudyReport& report) {
  using nlohmann::json;
  json rows = json::array();
  for (const MetricRow& r : report.rows) {
    json row = {{"fraction", r.fraction},
                {"marker", r.marker},
                {"metric", to_string(r.metric)},
                {"baseline_threshold", r.baseline.threshold},
                {"baseline_top_mean", r.baseline.mean},
                {"baseline_top_count", r.baseline.count},
                {"perturbed_threshold", r.perturbed.threshold},
                {"perturbed_top_mean", r.perturbed.mean},
                {"perturbed_top_count", r.perturbed.count},
                {"exceedance_count", r.exceedance}};
    row["percent_change"] = r.percent_change ? json(*r.percent_change) : json(nullptr);
    rows.push_back(row);
  }
  json status = json::array();
  for (const FractionStatus& s : report.status) {
    json j = {{"fraction", s.fraction}, {"ok", s.ok}};
    if (!s.ok) j["error"] = s.error;
    status.push_back(j);
  }
  json metrics = json::array();
  for (Metric m : report.metrics) metrics.push_back(to_string(m));
  return {{"family", to_string(report.family)},
          {"fractions", report.fractions},
          {"markers", report.markers},
          {"metrics", metrics},
          {"element_count", report.element_count},
          {"selected_elements", report.selected_elements},
          {"complete", report.complete()},
          {"percent_change_definition", "100 * (perturbed - baseline) / |baseline| of the top-1% mean"},
          {"status", status},
          {"rows", rows}};
}

void write_study_report(const std::filesystem::path& dir, const StudyReport& report) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "histograms");
  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    return out;
  };
  for (Metric m : report.metrics) {
    std::ofstream pc = open(dir / ("percent_change_" + to_string(m) + ".csv"));
    std::ofstream ex = open(dir / ("exceedance_" + to_string(m) + ".csv"));
    pc << "# percent change of the top-1% mean: 100*(perturbed-baseline)/|baseline|\n";
    pc << "fraction";
    ex << "fraction";
    for (const std::string& k : report.markers) {
      pc << ',' << k;
      ex << ',' << k;
    }
    pc << '\n';
    ex << '\n';
    for (std::size_t i = 0; i < report.fractions.size(); ++i) {
      const double f = report.fractions[i];
      pc << fraction_label(f);
      ex << fraction_label(f);
      for (const std::string& k : report.markers) {
        const MetricRow* r = report.status[i].ok ? report.find(f, k, m) : nullptr;
        pc << ',' << (r ? optional_number(r->percent_change) : std::string("failed"));
        ex << ',' << (r ? std::to_string(r->exceedance) : std::string("failed"));
      }
      pc << '\n';
      ex << '\n';
    }
  }
  for (const Histogram& h : report.histograms) {
    std::ofstream out = open(dir / "histograms" /
                             (to_string(h.metric) + "_" + h.marker + "_f" + fraction_label(h.fraction) + ".csv"));
    out << "bin,count\n";
    for (std::size_t j = 0; j < h.counts.size(); ++j)
      out << format_number(h.lower_edges[j], kReportDigits) << ',' << h.counts[j] << '\n';
  }
  std::ofstream js = open(dir / "study.json");
  js << to_json(report).dump(2) << '\n';
}

}  // namespace t2fe
