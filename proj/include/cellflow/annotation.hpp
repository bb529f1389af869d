#pragma once

// Human-traced annotations: cell bodies, long axes, neurites and their
// branches. The JSON form is the contract shared with the browser tool:
//
// {source, px_per_micron,
//  cells:    [{id, label, polygon:[[x,y]...], long_axis:[[x,y],[x,y]], center:[x,y]}],
//  neurites: [{id, cell_id, points:[[x,y]...], termination,
//              connected_cell_id?, branches:[...]}]}
//
// Coordinates are image pixels (x right, y down). Branch entries have the
// same shape as neurites but omit cell_id; a branch must start on its
// parent's polyline.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cellflow::annotation {

inline constexpr double kDefaultPxPerMicron = 1.1939;
// Largest gap, in pixels, between a branch's first point and its parent polyline.
inline constexpr double kBranchAnchorTolerance = 1.0;

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

enum class CellLabel { neuron, dead_cell };
enum class Termination { self_terminated, connected };

std::string_view to_string(CellLabel label);
std::string_view to_string(Termination termination);

struct CellBodyTrace {
  std::string id;
  CellLabel label = CellLabel::neuron;
  std::vector<Point> polygon;
  std::array<Point, 2> long_axis{};
  Point center;
};

struct NeuriteTrace {
  std::string id;
  std::string cell_id;  // empty for branches; they inherit the parent's cell
  std::vector<Point> points;
  Termination termination = Termination::self_terminated;
  std::optional<std::string> connected_cell_id;
  std::vector<NeuriteTrace> branches;
};

struct AnnotationSet {
  nlohmann::json source;
  double px_per_micron = kDefaultPxPerMicron;
  std::vector<CellBodyTrace> cells;
  std::vector<NeuriteTrace> neurites;

  const CellBodyTrace* find_cell(std::string_view id) const;
};

// Parses and validates. Throws ValidationError carrying the JSON path of
// the first offending field; dangling cell references raise IntegrityError.
AnnotationSet parse(const nlohmann::json& doc);
AnnotationSet parse_text(std::string_view text);

nlohmann::json to_json(const AnnotationSet& set);

// Shortest distance from p to the polyline.
double distance_to_polyline(Point p, const std::vector<Point>& polyline);

}  // namespace cellflow::annotation
