#pragma once

// Cell morphometry on traced annotations and the two-sample comparisons
// run on the resulting distributions.
//
// Units: traces are in pixels; every measurement is converted with
// px_per_micron (micrometres = pixels / px_per_micron, areas by its square).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellflow/annotation.hpp"
#include "cellflow/grid.hpp"

namespace cellflow::stats {

using annotation::AnnotationSet;
using annotation::NeuriteTrace;
using annotation::Point;

inline constexpr double kSignificanceLevel = 0.05;

// Shoelace area of the implicitly closed polygon, in square micrometres.
double polygon_area(std::span<const Point> polygon, double px_per_micron = 1.0);

// Sum of segment lengths including the closing segment, in micrometres.
double polygon_perimeter(std::span<const Point> polygon, double px_per_micron = 1.0);

// Arc length of the trace's own polyline (branches excluded).
double neurite_length(const NeuriteTrace& trace, double px_per_micron = 1.0);

// The trace followed by its branches, depth first, one entry per polyline.
std::vector<double> neurite_lengths(const NeuriteTrace& trace, double px_per_micron = 1.0);

// Angle in degrees, [0, 360), of end - start measured counter-clockwise from
// +x with image y pointing down (so (0,-1) is 90 degrees). With a long axis
// given, the frame is rotated so the axis, taken from its first to its
// second endpoint, points up (90 degrees).
double neurite_direction(std::span<const Point> polyline,
                         const std::optional<std::array<Point, 2>>& long_axis = std::nullopt);

struct DiameterOptions {
  double contrast_cutoff = 0.04;
  int max_radius = 20;  // pixels
  double epsilon = 1e-6;
  double px_per_micron = annotation::kDefaultPxPerMicron;
};

struct Pixel {
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const Pixel&) const = default;
};

struct RayHit {
  int dx = 0;
  int dy = 0;
  std::optional<Pixel> trigger;  // first pixel past the contrast cutoff
  double distance_px = 0.0;      // valid when trigger is set
};

struct DiameterResult {
  bool found = false;
  double diameter_px = 0.0;
  double diameter_um = 0.0;
  std::vector<RayHit> rays;  // the eight compass directions, E first, counter-clockwise
};

// Scans the eight compass rays from `point` for the first pixel whose
// relative contrast |I(q) - I(p)| / max(I(p), eps) reaches the cutoff.
// Diameter is twice the shortest triggering distance. found == false when
// no ray triggers within max_radius.
DiameterResult neurite_diameter(const GrayFrame& image, Pixel point,
                                const DiameterOptions& options = {});

// Named arrays:
//   neuron.area, neuron.perimeter, dead_cell.area, dead_cell.perimeter,
//   neurite.length, neurite.direction, neurite.direction_weight
// Branches are separate entries. Connected traces contribute twice.
// direction_weight holds the trace length for length-weighted histograms.
using Distributions = std::map<std::string, std::vector<double>>;

Distributions aggregate_distributions(std::span<const AnnotationSet> annotations);

enum class TTestVariant { pooled, welch };

TTestVariant parse_ttest_variant(std::string_view name);
std::string_view to_string(TTestVariant variant);

struct TTestResult {
  TTestVariant variant = TTestVariant::welch;
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

// Two-sided test. Both samples constant: equal means give t = 0, p = 1;
// unequal means give t = +-inf, p = 0.
TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b,
                             TTestVariant variant = TTestVariant::welch);

// Two-sided p-value of a Student t statistic.
double student_t_two_sided_p(double t, double degrees_of_freedom);

struct NamedSample {
  std::string name;
  std::vector<double> values;
};

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges; last bin is closed
  std::vector<std::size_t> counts_a;
  std::vector<std::size_t> counts_b;
};

std::vector<std::size_t> histogram_counts(std::span<const double> values,
                                          std::span<const double> edges);

// Equal-width edges spanning the union of both samples.
std::vector<double> shared_edges(std::span<const double> a, std::span<const double> b,
                                 std::size_t bins);

struct DistributionReport {
  std::string metric;
  std::string unit;
  NamedSample group_a;
  NamedSample group_b;
  TTestResult test;
  Histogram histogram;
};

DistributionReport compare(std::string metric, std::string unit, NamedSample a, NamedSample b,
                           TTestVariant variant = TTestVariant::welch, std::size_t bins = 20);

struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double ci_low = 0.0;   // bootstrap 95% CI of the median
  double ci_high = 0.0;
};

// Linear-interpolation quantile (the "type 7" rule).
double quantile(std::vector<double> values, double q);

SummaryStats summarize(std::span<const double> values, std::uint64_t seed,
                       std::size_t resamples = 10000);

struct ExportedReport {
  DistributionReport report;
  SummaryStats summary_a;
  SummaryStats summary_b;
};

enum class ReportFormat { csv, json };

ExportedReport build_export(const DistributionReport& report, std::uint64_t seed,
                            std::size_t resamples = 10000);

// Long-form CSV "section,group,key,value"; values use round-trip precision.
std::string to_csv(const ExportedReport& exported);
ExportedReport parse_csv(std::string_view text);
nlohmann::json to_json(const ExportedReport& exported);

void export_report(const DistributionReport& report, const std::filesystem::path& path,
                   ReportFormat format, std::uint64_t seed, std::size_t resamples = 10000);

}  // namespace cellflow::stats
