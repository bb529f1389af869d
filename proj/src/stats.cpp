#include "cellflow/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

#include "cellflow/error.hpp"
#include "cellflow/formats.hpp"
#include "cellflow/rng.hpp"

namespace cellflow::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_polygon(std::span<const Point> polygon, double px_per_micron) {
  if (polygon.size() < 3) {
    throw ArityError("polygon needs at least 3 points, got " + std::to_string(polygon.size()));
  }
  if (!(px_per_micron > 0.0)) throw RangeError("px_per_micron must be positive");
  for (const Point& p : polygon) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw NumericError("non-finite vertex");
  }
}

double polyline_px(std::span<const Point> pts) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    total += std::hypot(pts[i + 1].x - pts[i].x, pts[i + 1].y - pts[i].y);
  }
  return total;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

void visit_neurite(const NeuriteTrace& trace, const annotation::CellBodyTrace& cell, double ppm,
                   Distributions& out) {
  const double length = neurite_length(trace, ppm);
  const double direction = neurite_direction(trace.points, cell.long_axis);
  const int copies = trace.termination == annotation::Termination::connected ? 2 : 1;
  for (int i = 0; i < copies; ++i) {
    out["neurite.length"].push_back(length);
    out["neurite.direction"].push_back(direction);
    out["neurite.direction_weight"].push_back(length);
  }
  for (const auto& b : trace.branches) visit_neurite(b, cell, ppm, out);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw FormatError("report CSV: bad number '" + s + "'");
  return v;
}

void summary_rows(std::string& out, const char* group, const SummaryStats& s) {
  const std::pair<const char*, double> rows[] = {
      {"n", static_cast<double>(s.n)}, {"mean", s.mean},     {"median", s.median},
      {"q1", s.q1},                    {"q3", s.q3},         {"iqr", s.iqr},
      {"ci_low", s.ci_low},            {"ci_high", s.ci_high}};
  for (const auto& [key, value] : rows) {
    out += std::string("summary,") + group + "," + key + "," + fmt_double(value) + "\n";
  }
}

void assign_summary(SummaryStats& s, const std::string& key, double v) {
  if (key == "n") s.n = static_cast<std::size_t>(v);
  else if (key == "mean") s.mean = v;
  else if (key == "median") s.median = v;
  else if (key == "q1") s.q1 = v;
  else if (key == "q3") s.q3 = v;
  else if (key == "iqr") s.iqr = v;
  else if (key == "ci_low") s.ci_low = v;
  else if (key == "ci_high") s.ci_high = v;
  else throw FormatError("report CSV: unknown summary key '" + key + "'");
}

template <typename T>
void put_indexed(std::vector<T>& vec, const std::string& index, T value) {
  const auto i = static_cast<std::size_t>(parse_double(index));
  if (vec.size() <= i) vec.resize(i + 1);
  vec[i] = value;
}

nlohmann::json summary_json(const SummaryStats& s) {
  return {{"n", s.n},       {"mean", s.mean}, {"median", s.median},   {"q1", s.q1},
          {"q3", s.q3},     {"iqr", s.iqr},   {"ci_low", s.ci_low}, {"ci_high", s.ci_high}};
}

}  // namespace

double polygon_area(std::span<const Point> polygon, double px_per_micron) {
  require_polygon(polygon, px_per_micron);
  double twice = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Point& p = polygon[i];
    const Point& q = polygon[(i + 1) % polygon.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return std::abs(twice) / 2.0 / (px_per_micron * px_per_micron);
}

double polygon_perimeter(std::span<const Point> polygon, double px_per_micron) {
  require_polygon(polygon, px_per_micron);
  const Point& first = polygon.front();
  const Point& last = polygon.back();
  return (polyline_px(polygon) + std::hypot(first.x - last.x, first.y - last.y)) / px_per_micron;
}

double neurite_length(const NeuriteTrace& trace, double px_per_micron) {
  if (trace.points.size() < 2) {
    throw ArityError("neurite polyline needs at least 2 points, got " +
                     std::to_string(trace.points.size()));
  }
  if (!(px_per_micron > 0.0)) throw RangeError("px_per_micron must be positive");
  return polyline_px(trace.points) / px_per_micron;
}

std::vector<double> neurite_lengths(const NeuriteTrace& trace, double px_per_micron) {
  std::vector<double> out{neurite_length(trace, px_per_micron)};
  for (const auto& b : trace.branches) {
    const auto sub = neurite_lengths(b, px_per_micron);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

double neurite_direction(std::span<const Point> polyline,
                         const std::optional<std::array<Point, 2>>& long_axis) {
  if (polyline.size() < 2) throw ArityError("neurite polyline needs at least 2 points");
  const double dx = polyline.back().x - polyline.front().x;
  const double dy = polyline.back().y - polyline.front().y;
  if (dx == 0.0 && dy == 0.0) {
    throw NumericError("neurite direction undefined: start and end coincide");
  }
  constexpr double kDeg = 180.0 / std::numbers::pi;
  double angle = std::atan2(-dy, dx) * kDeg;
  if (long_axis) {
    const double ax = (*long_axis)[1].x - (*long_axis)[0].x;
    const double ay = (*long_axis)[1].y - (*long_axis)[0].y;
    if (ax == 0.0 && ay == 0.0) throw NumericError("long axis has zero length");
    angle += 90.0 - std::atan2(-ay, ax) * kDeg;
  }
  angle = std::fmod(angle, 360.0);
  if (angle < 0.0) angle += 360.0;
  return angle >= 360.0 ? 0.0 : angle;
}

DiameterResult neurite_diameter(const GrayFrame& image, Pixel point,
                                const DiameterOptions& options) {
  if (point.x >= image.width() || point.y >= image.height()) {
    throw RangeError("diameter probe lies outside the image");
  }
  if (options.max_radius < 1) throw RangeError("max radius must be >= 1");
  if (!(options.px_per_micron > 0.0)) throw RangeError("px_per_micron must be positive");

  static constexpr std::array<std::array<int, 2>, 8> kRays = {
      {{1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}}};
  const double centre = image(point.y, point.x);
  const double denom = std::max(centre, options.epsilon);

  DiameterResult result;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [dx, dy] : kRays) {
    RayHit hit{dx, dy, std::nullopt, 0.0};
    for (int r = 1; r <= options.max_radius; ++r) {
      const auto qx = static_cast<long long>(point.x) + static_cast<long long>(r) * dx;
      const auto qy = static_cast<long long>(point.y) + static_cast<long long>(r) * dy;
      if (qx < 0 || qy < 0 || qx >= static_cast<long long>(image.width()) ||
          qy >= static_cast<long long>(image.height())) {
        break;
      }
      const double value = image(static_cast<std::size_t>(qy), static_cast<std::size_t>(qx));
      if (std::abs(value - centre) / denom >= options.contrast_cutoff) {
        hit.trigger = Pixel{static_cast<std::size_t>(qx), static_cast<std::size_t>(qy)};
        hit.distance_px = r * std::hypot(double(dx), double(dy));
        best = std::min(best, hit.distance_px);
        break;
      }
    }
    result.rays.push_back(hit);
  }
  if (std::isfinite(best)) {
    result.found = true;
    result.diameter_px = 2.0 * best;
    result.diameter_um = result.diameter_px / options.px_per_micron;
  }
  return result;
}

Distributions aggregate_distributions(std::span<const AnnotationSet> annotations) {
  Distributions out;
  for (const char* key : {"neuron.area", "neuron.perimeter", "dead_cell.area",
                          "dead_cell.perimeter", "neurite.length", "neurite.direction",
                          "neurite.direction_weight"}) {
    out[key];
  }
  for (const AnnotationSet& set : annotations) {
    const double ppm = set.px_per_micron;
    for (const auto& cell : set.cells) {
      const std::string prefix(annotation::to_string(cell.label));
      out[prefix + ".area"].push_back(polygon_area(cell.polygon, ppm));
      out[prefix + ".perimeter"].push_back(polygon_perimeter(cell.polygon, ppm));
    }
    for (const auto& n : set.neurites) {
      const auto* cell = set.find_cell(n.cell_id);
      if (!cell) throw IntegrityError("neurite '" + n.id + "' references unknown cell '" + n.cell_id + "'");
      if (n.connected_cell_id && !set.find_cell(*n.connected_cell_id)) {
        throw IntegrityError("neurite '" + n.id + "' connects to unknown cell '" +
                             *n.connected_cell_id + "'");
      }
      visit_neurite(n, *cell, ppm, out);
    }
  }
  return out;
}

TTestVariant parse_ttest_variant(std::string_view name) {
  if (name == "welch") return TTestVariant::welch;
  if (name == "pooled") return TTestVariant::pooled;
  throw InputError("unknown t-test variant '" + std::string(name) + "'");
}

std::string_view to_string(TTestVariant variant) {
  return variant == TTestVariant::welch ? "welch" : "pooled";
}

double student_t_two_sided_p(double t, double degrees_of_freedom) {
  if (!(degrees_of_freedom > 0.0)) throw RangeError("degrees of freedom must be positive");
  if (std::isnan(t)) throw NumericError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double x = degrees_of_freedom / (degrees_of_freedom + t * t);
  return std::clamp(boost::math::ibeta(degrees_of_freedom / 2.0, 0.5, x), 0.0, 1.0);
}

TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b,
                             TTestVariant variant) {
  if (a.size() < 2 || b.size() < 2) {
    throw ArityError("t-test needs at least 2 values per sample");
  }
  for (auto s : {a, b}) {
    for (double v : s) {
      if (!std::isfinite(v)) throw NumericError("t-test samples must be finite");
    }
  }
  const auto n1 = static_cast<double>(a.size());
  const auto n2 = static_cast<double>(b.size());
  const double m1 = mean_of(a);
  const double m2 = mean_of(b);
  const double v1 = variance_of(a, m1);
  const double v2 = variance_of(b, m2);

  TTestResult r;
  r.variant = variant;
  double se2 = 0.0;
  if (variant == TTestVariant::pooled) {
    r.degrees_of_freedom = n1 + n2 - 2.0;
    const double sp2 = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / r.degrees_of_freedom;
    se2 = sp2 * (1.0 / n1 + 1.0 / n2);
  } else {
    const double w1 = v1 / n1;
    const double w2 = v2 / n2;
    se2 = w1 + w2;
    r.degrees_of_freedom =
        se2 > 0.0 ? se2 * se2 / (w1 * w1 / (n1 - 1.0) + w2 * w2 / (n2 - 1.0)) : n1 + n2 - 2.0;
  }

  if (se2 == 0.0) {
    r.t_statistic = m1 == m2 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m1 - m2);
    r.p_value = m1 == m2 ? 1.0 : 0.0;
  } else {
    r.t_statistic = (m1 - m2) / std::sqrt(se2);
    r.p_value = student_t_two_sided_p(r.t_statistic, r.degrees_of_freedom);
  }
  r.significant = r.p_value < kSignificanceLevel;
  return r;
}

std::vector<std::size_t> histogram_counts(std::span<const double> values,
                                          std::span<const double> edges) {
  if (edges.size() < 2) throw ArityError("histogram needs at least 2 edges");
  std::vector<std::size_t> counts(edges.size() - 1, 0);
  for (double v : values) {
    if (v < edges.front() || v > edges.back()) continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    auto bin = static_cast<std::size_t>(std::distance(edges.begin(), it)) - 1;
    bin = std::min(bin, counts.size() - 1);
    ++counts[bin];
  }
  return counts;
}

std::vector<double> shared_edges(std::span<const double> a, std::span<const double> b,
                                 std::size_t bins) {
  if (bins == 0) throw RangeError("histogram needs at least one bin");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto s : {a, b}) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi == lo) return {lo, hi};
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  edges.back() = hi;
  return edges;
}

DistributionReport compare(std::string metric, std::string unit, NamedSample a, NamedSample b,
                           TTestVariant variant, std::size_t bins) {
  DistributionReport r;
  r.test = two_sample_ttest(a.values, b.values, variant);
  r.histogram.edges = shared_edges(a.values, b.values, bins);
  r.histogram.counts_a = histogram_counts(a.values, r.histogram.edges);
  r.histogram.counts_b = histogram_counts(b.values, r.histogram.edges);
  r.metric = std::move(metric);
  r.unit = std::move(unit);
  r.group_a = std::move(a);
  r.group_b = std::move(b);
  return r;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

SummaryStats summarize(std::span<const double> values, std::uint64_t seed,
                       std::size_t resamples) {
  SummaryStats s;
  s.n = values.size();
  if (values.empty()) {
    s.mean = s.median = s.q1 = s.q3 = s.iqr = s.ci_low = s.ci_high = kNaN;
    return s;
  }
  const std::vector<double> v(values.begin(), values.end());
  s.mean = mean_of(v);
  s.median = quantile(v, 0.5);
  s.q1 = quantile(v, 0.25);
  s.q3 = quantile(v, 0.75);
  s.iqr = s.q3 - s.q1;

  Rng rng(seed);
  std::vector<double> medians;
  medians.reserve(resamples);
  std::vector<double> draw(v.size());
  for (std::size_t k = 0; k < resamples; ++k) {
    for (double& d : draw) d = v[rng.index(v.size())];
    medians.push_back(quantile(draw, 0.5));
  }
  s.ci_low = resamples ? quantile(medians, 0.025) : s.median;
  s.ci_high = resamples ? quantile(medians, 0.975) : s.median;
  return s;
}

ExportedReport build_export(const DistributionReport& report, std::uint64_t seed,
                            std::size_t resamples) {
  Rng streams(seed);
  const std::uint64_t seed_a = streams.bits();
  const std::uint64_t seed_b = streams.bits();
  return {report, summarize(report.group_a.values, seed_a, resamples),
          summarize(report.group_b.values, seed_b, resamples)};
}

std::string to_csv(const ExportedReport& e) {
  const DistributionReport& r = e.report;
  std::string out = "section,group,key,value\n";
  out += "meta,,metric," + csv_field(r.metric) + "\n";
  out += "meta,,unit," + csv_field(r.unit) + "\n";
  out += "meta,a,name," + csv_field(r.group_a.name) + "\n";
  out += "meta,b,name," + csv_field(r.group_b.name) + "\n";
  out += "test,,variant," + std::string(to_string(r.test.variant)) + "\n";
  out += "test,,t_statistic," + fmt_double(r.test.t_statistic) + "\n";
  out += "test,,degrees_of_freedom," + fmt_double(r.test.degrees_of_freedom) + "\n";
  out += "test,,p_value," + fmt_double(r.test.p_value) + "\n";
  out += "test,,significant," + std::string(r.test.significant ? "true" : "false") + "\n";
  summary_rows(out, "a", e.summary_a);
  summary_rows(out, "b", e.summary_b);
  for (std::size_t i = 0; i < r.histogram.edges.size(); ++i) {
    out += "edge,," + std::to_string(i) + "," + fmt_double(r.histogram.edges[i]) + "\n";
  }
  for (std::size_t i = 0; i < r.histogram.counts_a.size(); ++i) {
    out += "count,a," + std::to_string(i) + "," + std::to_string(r.histogram.counts_a[i]) + "\n";
  }
  for (std::size_t i = 0; i < r.histogram.counts_b.size(); ++i) {
    out += "count,b," + std::to_string(i) + "," + std::to_string(r.histogram.counts_b[i]) + "\n";
  }
  for (std::size_t i = 0; i < r.group_a.values.size(); ++i) {
    out += "value,a," + std::to_string(i) + "," + fmt_double(r.group_a.values[i]) + "\n";
  }
  for (std::size_t i = 0; i < r.group_b.values.size(); ++i) {
    out += "value,b," + std::to_string(i) + "," + fmt_double(r.group_b.values[i]) + "\n";
  }
  return out;
}

ExportedReport parse_csv(std::string_view text) {
  ExportedReport e;
  DistributionReport& r = e.report;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line != "section,group,key,value") throw FormatError("report CSV: bad header");
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw FormatError("report CSV: expected 4 fields");
    const std::string& section = f[0];
    const std::string& group = f[1];
    const std::string& key = f[2];
    const std::string& value = f[3];
    if (section == "meta") {
      if (key == "metric") r.metric = value;
      else if (key == "unit") r.unit = value;
      else if (key == "name") (group == "a" ? r.group_a : r.group_b).name = value;
    } else if (section == "test") {
      if (key == "variant") r.test.variant = parse_ttest_variant(value);
      else if (key == "t_statistic") r.test.t_statistic = parse_double(value);
      else if (key == "degrees_of_freedom") r.test.degrees_of_freedom = parse_double(value);
      else if (key == "p_value") r.test.p_value = parse_double(value);
      else if (key == "significant") r.test.significant = value == "true";
    } else if (section == "summary") {
      assign_summary(group == "a" ? e.summary_a : e.summary_b, key, parse_double(value));
    } else if (section == "edge") {
      put_indexed(r.histogram.edges, key, parse_double(value));
    } else if (section == "count") {
      put_indexed(group == "a" ? r.histogram.counts_a : r.histogram.counts_b, key,
                  static_cast<std::size_t>(parse_double(value)));
    } else if (section == "value") {
      put_indexed(group == "a" ? r.group_a.values : r.group_b.values, key, parse_double(value));
    } else {
      throw FormatError("report CSV: unknown section '" + section + "'");
    }
  }
  return e;
}

nlohmann::json to_json(const ExportedReport& e) {
  const DistributionReport& r = e.report;
  return {{"metric", r.metric},
          {"unit", r.unit},
          {"groups",
           {{{"name", r.group_a.name}, {"values", r.group_a.values}, {"summary", summary_json(e.summary_a)}},
            {{"name", r.group_b.name}, {"values", r.group_b.values}, {"summary", summary_json(e.summary_b)}}}},
          {"test",
           {{"variant", to_string(r.test.variant)},
            {"t_statistic", r.test.t_statistic},
            {"degrees_of_freedom", r.test.degrees_of_freedom},
            {"p_value", r.test.p_value},
            {"significant", r.test.significant},
            {"alpha", kSignificanceLevel}}},
          {"histogram",
           {{"edges", r.histogram.edges},
            {"counts_a", r.histogram.counts_a},
            {"counts_b", r.histogram.counts_b}}}};
}

void export_report(const DistributionReport& report, const std::filesystem::path& path,
                   ReportFormat format, std::uint64_t seed, std::size_t resamples) {
  const ExportedReport e = build_export(report, seed, resamples);
  formats::write_file_atomic(path, format == ReportFormat::csv ? to_csv(e) : to_json(e).dump(2) + "\n");
}

}  // namespace cellflow::stats
