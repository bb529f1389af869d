#include "cellflow/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cellflow/error.hpp"

namespace cellflow::annotation {

namespace {

using nlohmann::json;

std::string at_index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

void reject_unknown_keys(const json& obj, const std::string& path,
                         std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError(path + "." + key, "unknown field");
    }
  }
}

const json& require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ValidationError(path + "." + key, "missing required field");
  return obj.at(key);
}

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  return j;
}

const json& require_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path, "expected an array");
  return j;
}

std::string read_id(const json& j, const std::string& path) {
  if (j.is_string() && !j.get<std::string>().empty()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw ValidationError(path, "expected a non-empty string or integer id");
}

Point read_point(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError(path, "expected a point [x, y]");
  }
  const Point p{j[0].get<double>(), j[1].get<double>()};
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw ValidationError(path, "point coordinates must be finite");
  }
  return p;
}

std::vector<Point> read_points(const json& j, const std::string& path, std::size_t min_count,
                               const char* invariant) {
  require_array(j, path);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < j.size(); ++i) pts.push_back(read_point(j[i], at_index(path, i)));
  if (pts.size() < min_count) throw ValidationError(path, invariant);
  return pts;
}

CellBodyTrace read_cell(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown_keys(j, path, {"id", "label", "polygon", "long_axis", "center"});
  CellBodyTrace cell;
  cell.id = read_id(require(j, path, "id"), path + ".id");

  const json& label = require(j, path, "label");
  if (label == "neuron") {
    cell.label = CellLabel::neuron;
  } else if (label == "dead_cell") {
    cell.label = CellLabel::dead_cell;
  } else {
    throw ValidationError(path + ".label", "expected \"neuron\" or \"dead_cell\"");
  }

  cell.polygon = read_points(require(j, path, "polygon"), path + ".polygon", 3,
                             "polygon needs at least 3 points");

  const std::string axis_path = path + ".long_axis";
  const json& axis = require(j, path, "long_axis");
  if (!axis.is_array() || axis.size() != 2) {
    throw ValidationError(axis_path, "expected exactly two endpoints");
  }
  cell.long_axis = {read_point(axis[0], at_index(axis_path, 0)),
                    read_point(axis[1], at_index(axis_path, 1))};
  if (cell.long_axis[0] == cell.long_axis[1]) {
    throw ValidationError(axis_path, "long axis endpoints must be distinct");
  }
  cell.center = read_point(require(j, path, "center"), path + ".center");
  return cell;
}

NeuriteTrace read_neurite(const json& j, const std::string& path, bool is_branch) {
  require_object(j, path);
  if (is_branch) {
    reject_unknown_keys(j, path, {"id", "points", "termination", "connected_cell_id", "branches"});
  } else {
    reject_unknown_keys(j, path,
                        {"id", "cell_id", "points", "termination", "connected_cell_id", "branches"});
  }
  NeuriteTrace n;
  n.id = read_id(require(j, path, "id"), path + ".id");
  if (!is_branch) n.cell_id = read_id(require(j, path, "cell_id"), path + ".cell_id");
  n.points = read_points(require(j, path, "points"), path + ".points", 2,
                         "neurite polyline needs at least 2 points");

  const json& term = require(j, path, "termination");
  if (term == "self_terminated") {
    n.termination = Termination::self_terminated;
  } else if (term == "connected") {
    n.termination = Termination::connected;
  } else {
    throw ValidationError(path + ".termination", "expected \"self_terminated\" or \"connected\"");
  }

  if (j.contains("connected_cell_id") && !j["connected_cell_id"].is_null()) {
    n.connected_cell_id = read_id(j["connected_cell_id"], path + ".connected_cell_id");
  }
  if (n.termination == Termination::connected && !n.connected_cell_id) {
    throw ValidationError(path + ".connected_cell_id",
                          "connected neurite must name the cell it connects to");
  }

  if (j.contains("branches")) {
    const std::string bpath = path + ".branches";
    const json& branches = require_array(j["branches"], bpath);
    for (std::size_t i = 0; i < branches.size(); ++i) {
      const std::string p = at_index(bpath, i);
      NeuriteTrace b = read_neurite(branches[i], p, true);
      if (distance_to_polyline(b.points.front(), n.points) > kBranchAnchorTolerance) {
        throw ValidationError(p + ".points[0]", "branch must start on its parent neurite");
      }
      n.branches.push_back(std::move(b));
    }
  }
  return n;
}

void check_references(const NeuriteTrace& n, const AnnotationSet& set, const std::string& path) {
  if (!n.cell_id.empty() && !set.find_cell(n.cell_id)) {
    throw IntegrityError(path + ".cell_id: unknown cell '" + n.cell_id + "'");
  }
  if (n.connected_cell_id && !set.find_cell(*n.connected_cell_id)) {
    throw IntegrityError(path + ".connected_cell_id: unknown cell '" + *n.connected_cell_id + "'");
  }
  for (std::size_t i = 0; i < n.branches.size(); ++i) {
    check_references(n.branches[i], set, at_index(path + ".branches", i));
  }
}

json points_json(const std::vector<Point>& pts) {
  json arr = json::array();
  for (const Point& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

json neurite_json(const NeuriteTrace& n, bool is_branch) {
  json j = {{"id", n.id}, {"points", points_json(n.points)},
            {"termination", to_string(n.termination)}};
  if (!is_branch) j["cell_id"] = n.cell_id;
  if (n.connected_cell_id) j["connected_cell_id"] = *n.connected_cell_id;
  json branches = json::array();
  for (const auto& b : n.branches) branches.push_back(neurite_json(b, true));
  j["branches"] = std::move(branches);
  return j;
}

}  // namespace

std::string_view to_string(CellLabel label) {
  return label == CellLabel::neuron ? "neuron" : "dead_cell";
}

std::string_view to_string(Termination termination) {
  return termination == Termination::connected ? "connected" : "self_terminated";
}

const CellBodyTrace* AnnotationSet::find_cell(std::string_view id) const {
  for (const auto& c : cells) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

double distance_to_polyline(Point p, const std::vector<Point>& polyline) {
  double best = std::numeric_limits<double>::infinity();
  if (polyline.size() == 1) return std::hypot(p.x - polyline[0].x, p.y - polyline[0].y);
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    const Point a = polyline[i];
    const Point b = polyline[i + 1];
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double s = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - (a.x + s * dx), p.y - (a.y + s * dy)));
  }
  return best;
}

AnnotationSet parse(const json& doc) {
  const std::string root = "$";
  require_object(doc, root);
  reject_unknown_keys(doc, root, {"source", "px_per_micron", "cells", "neurites"});

  AnnotationSet set;
  set.source = require(doc, root, "source");
  if (!set.source.is_string() && !set.source.is_object()) {
    throw ValidationError("$.source", "expected a string or object");
  }
  if (doc.contains("px_per_micron")) {
    const json& ppm = doc["px_per_micron"];
    if (!ppm.is_number() || !(ppm.get<double>() > 0.0) || !std::isfinite(ppm.get<double>())) {
      throw ValidationError("$.px_per_micron", "must be a positive number");
    }
    set.px_per_micron = ppm.get<double>();
  }

  const json& cells = require_array(require(doc, root, "cells"), "$.cells");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string path = at_index("$.cells", i);
    CellBodyTrace c = read_cell(cells[i], path);
    if (!ids.insert(c.id).second) throw ValidationError(path + ".id", "duplicate cell id");
    set.cells.push_back(std::move(c));
  }

  const json& neurites = require_array(require(doc, root, "neurites"), "$.neurites");
  for (std::size_t i = 0; i < neurites.size(); ++i) {
    set.neurites.push_back(read_neurite(neurites[i], at_index("$.neurites", i), false));
  }
  for (std::size_t i = 0; i < set.neurites.size(); ++i) {
    check_references(set.neurites[i], set, at_index("$.neurites", i));
  }
  return set;
}

AnnotationSet parse_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("$", std::string("malformed JSON: ") + e.what());
  }
  return parse(doc);
}

json to_json(const AnnotationSet& set) {
  json cells = json::array();
  for (const auto& c : set.cells) {
    cells.push_back({{"id", c.id},
                     {"label", to_string(c.label)},
                     {"polygon", points_json(c.polygon)},
                     {"long_axis", points_json({c.long_axis[0], c.long_axis[1]})},
                     {"center", {c.center.x, c.center.y}}});
  }
  json neurites = json::array();
  for (const auto& n : set.neurites) neurites.push_back(neurite_json(n, false));
  return {{"source", set.source},
          {"px_per_micron", set.px_per_micron},
          {"cells", std::move(cells)},
          {"neurites", std::move(neurites)}};
}

}  // namespace cellflow::annotation
