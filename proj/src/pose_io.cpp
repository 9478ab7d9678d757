#include "flexpose/pose_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace flexpose {

using nlohmann::json;

namespace {

// %.17g round-trips every finite double and keeps the files diffable.
std::string fmt_coord(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void fail(const std::string& path, size_t line,
                       const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void save_poses(const PoseSet& set, const std::string& path) {
  set.topology.validate();
  if (!set.labels.empty() && set.labels.size() != set.poses.size())
    throw std::invalid_argument("labels must be empty or one per pose");

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);

  json header;
  header["m"] = set.topology.joint_count;
  header["joints"] = set.topology.joints;
  header["bones"] = json::array();
  for (const auto& [p, c] : set.topology.bones)
    header["bones"].push_back({p, c});
  header["root"] = set.topology.root_index;
  header["colors"] = json::array();
  for (const auto& col : set.topology.bone_colors)
    header["colors"].push_back({col[0], col[1], col[2]});
  out << header.dump() << "\n";

  for (size_t i = 0; i < set.poses.size(); ++i) {
    // Coordinates are emitted as raw decimal literals so the printed digits
    // are under our control, not the JSON library's.
    out << "{\"coords\":[";
    const auto& coords = set.poses[i].coords;
    for (size_t j = 0; j < coords.size(); ++j) {
      if (j) out << ",";
      out << "[" << fmt_coord(coords[j].x) << "," << fmt_coord(coords[j].y)
          << "]";
    }
    out << "]";
    if (!set.labels.empty() && !set.labels[i].empty())
      out << ",\"label\":" << json(set.labels[i]).dump();
    out << "}\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

PoseSet load_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);

  PoseSet set;
  std::string line;
  size_t lineno = 0;

  if (!std::getline(in, line)) fail(path, 1, "missing topology header");
  ++lineno;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    fail(path, lineno, std::string("malformed header: ") + e.what());
  }
  try {
    SkeletonTopology& t = set.topology;
    t.joint_count = header.at("m").get<int>();
    t.joints = header.at("joints").get<std::vector<std::string>>();
    for (const auto& b : header.at("bones"))
      t.bones.emplace_back(b.at(0).get<int>(), b.at(1).get<int>());
    t.root_index = header.at("root").get<int>();
    for (const auto& c : header.at("colors"))
      t.bone_colors.push_back(
          Rgb{c.at(0).get<uint8_t>(), c.at(1).get<uint8_t>(),
              c.at(2).get<uint8_t>()});
    t.validate();
  } catch (const json::exception& e) {
    fail(path, lineno, std::string("bad topology: ") + e.what());
  }

  bool any_label = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(path, lineno, std::string("malformed record: ") + e.what());
    }
    Pose pose;
    try {
      for (const auto& c : rec.at("coords"))
        pose.coords.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    } catch (const json::exception& e) {
      fail(path, lineno, std::string("bad coords: ") + e.what());
    }
    if (static_cast<int>(pose.coords.size()) != set.topology.joint_count)
      fail(path, lineno, "record has " + std::to_string(pose.coords.size()) +
                             " joints, header says " +
                             std::to_string(set.topology.joint_count));
    set.poses.push_back(std::move(pose));
    std::string label = rec.value("label", std::string());
    if (!label.empty()) any_label = true;
    set.labels.push_back(std::move(label));
  }
  if (!any_label) set.labels.clear();
  return set;
}

}  // namespace flexpose
