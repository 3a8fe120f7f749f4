// SPDX-License-Identifier: Apache-2.0
//
// ips: outdoor-to-indoor positioning simulation and estimation toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ---------------------------------------------------------------------------

#include "ips/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ips {

using nlohmann::json;

// ---- frequency bands -------------------------------------------------------

FrequencyBandName classify_band(double carrier_hz) {
  if (!(carrier_hz > 0.0)) {
    throw OutOfRange("carrier frequency must be positive");
  }
  if (carrier_hz < 7e9) {
    return FrequencyBandName::FR1;
  }
  if (carrier_hz < 24e9) {
    return FrequencyBandName::FR3;
  }
  if (carrier_hz <= 48e9) {
    return FrequencyBandName::FR2;
  }
  throw OutOfRange("carrier frequency above 48 GHz is not supported");
}

double default_carrier_hz(FrequencyBandName name) {
  switch (name) {
    case FrequencyBandName::FR1:
      return 700e6;
    case FrequencyBandName::FR3:
      return 10e9;
    case FrequencyBandName::FR2:
      return 28e9;
  }
  return 700e6;
}

const char *band_name(FrequencyBandName name) {
  switch (name) {
    case FrequencyBandName::FR1:
      return "FR1";
    case FrequencyBandName::FR3:
      return "FR3";
    case FrequencyBandName::FR2:
      return "FR2";
  }
  return "FR1";
}

FrequencyBandName band_from_name(const std::string &name) {
  if (name == "FR1") {
    return FrequencyBandName::FR1;
  }
  if (name == "FR2") {
    return FrequencyBandName::FR2;
  }
  if (name == "FR3") {
    return FrequencyBandName::FR3;
  }
  throw ParseError("unknown band name '" + name + "' (expected FR1, FR2 or FR3)");
}

// ---- geometry types ---------------------------------------------------------

bool EdgeSegment::is_vertical() const {
  const Vec3 d = end - start;
  const double len = d.norm();
  return len > 0.0 && std::hypot(d.x, d.y) <= 1e-9 * len;
}

WallPanel WallPanel::from_corners(const std::string &id, const Vec3 &c0, const Vec3 &c1,
                                  const Vec3 &c2, const Vec3 &c3, bool is_facade,
                                  const std::string &material) {
  const Vec3 u = c1 - c0;
  const Vec3 v = c3 - c0;
  const double lu = u.norm();
  const double lv = v.norm();
  if (lu <= 0.0 || lv <= 0.0) {
    throw GeometryError("panel '" + id + "': degenerate edge");
  }
  if (std::abs(u.dot(v)) > 1e-9 * lu * lv) {
    throw GeometryError("panel '" + id + "': adjacent edges are not orthogonal");
  }
  const Vec3 expected_c2 = c0 + u + v;
  if (distance(c2, expected_c2) > 1e-9 * std::max(lu, lv)) {
    throw GeometryError("panel '" + id + "': corners do not close a planar rectangle");
  }
  WallPanel p;
  p.id = id;
  p.origin = c0;
  p.span_u = u;
  p.span_v = v;
  p.normal = u.cross(v).normalized();
  p.is_facade = is_facade;
  p.material = material;
  return p;
}

bool BuildingModel::inside_box(const Vec3 &p, double tol) const {
  return p.x >= -tol && p.x <= width_m + tol && p.y >= -tol && p.y <= depth_m + tol &&
         p.z >= -tol && p.z <= height_m() + tol;
}

int BuildingModel::floor_of(double z) const {
  const int raw = static_cast<int>(std::floor(z / floor_height_m));
  return std::clamp(raw, 0, num_floors - 1);
}

// ---- scene lookups ----------------------------------------------------------

const WallPanel *SceneModel::find_panel(const std::string &id) const {
  for (const auto &w : building.walls) {
    if (w.id == id) {
      return &w;
    }
  }
  return nullptr;
}

const AnchorSpec *SceneModel::find_anchor(const std::string &id) const {
  for (const auto &a : anchors) {
    if (a.id == id) {
      return &a;
    }
  }
  return nullptr;
}

const WindowAperture *SceneModel::find_window_of_edge(const std::string &edge_id) const {
  for (const auto &w : building.windows) {
    for (const auto &e : w.edges) {
      if (e.id == edge_id) {
        return &w;
      }
    }
  }
  return nullptr;
}

std::optional<EdgeSegment> SceneModel::find_edge(const std::string &edge_id) const {
  for (const auto &w : building.windows) {
    for (const auto &e : w.edges) {
      if (e.id == edge_id) {
        return e;
      }
    }
  }
  return std::nullopt;
}

std::vector<EdgeSegment> SceneModel::diffracting_edges_for_floor(int floor_index) const {
  if (floor_index < 0 || floor_index >= building.num_floors) {
    throw IndexError("floor index " + std::to_string(floor_index) + " outside [0, " +
                     std::to_string(building.num_floors) + ")");
  }
  std::vector<EdgeSegment> edges;
  for (const auto &w : building.windows) {
    if (w.floor_index == floor_index) {
      edges.insert(edges.end(), w.edges.begin(), w.edges.end());
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const EdgeSegment &a, const EdgeSegment &b) { return a.id < b.id; });
  return edges;
}

// ---- config parsing ---------------------------------------------------------

namespace {

const json &require_key(const json &j, const char *key, const std::string &ctx) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ParseError(std::string(ctx) + ": missing required key '" + key + "'");
  }
  return *it;
}

double require_number(const json &j, const char *key, const std::string &ctx) {
  const json &v = require_key(j, key, ctx);
  if (!v.is_number()) {
    throw ParseError(std::string(ctx) + ": key '" + key + "' must be a number");
  }
  return v.get<double>();
}

double number_or(const json &j, const char *key, double fallback) {
  auto it = j.find(key);
  if (it == j.end()) {
    return fallback;
  }
  if (!it->is_number()) {
    throw ParseError(std::string("key '") + key + "' must be a number");
  }
  return it->get<double>();
}

std::string require_string(const json &j, const char *key, const std::string &ctx) {
  const json &v = require_key(j, key, ctx);
  if (!v.is_string()) {
    throw ParseError(std::string(ctx) + ": key '" + key + "' must be a string");
  }
  return v.get<std::string>();
}

Vec3 parse_vec3(const json &v, const std::string &ctx) {
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number()) {
    throw ParseError(std::string(ctx) + ": expected an array of three numbers");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

struct FacadeFrameInfo {
  Vec3 base;        ///< Point on the facade at along = 0, z = 0.
  Vec3 along;       ///< Unit horizontal direction of increasing along-coordinate.
  double length;    ///< Facade length along the along direction.
};

FacadeFrameInfo facade_frame(const std::string &facade, double width, double depth,
                             const std::string &ctx) {
  if (facade == "west") {
    return {{0, 0, 0}, {0, 1, 0}, depth};
  }
  if (facade == "east") {
    return {{width, 0, 0}, {0, 1, 0}, depth};
  }
  if (facade == "south") {
    return {{0, 0, 0}, {1, 0, 0}, width};
  }
  if (facade == "north") {
    return {{0, depth, 0}, {1, 0, 0}, width};
  }
  throw ParseError(std::string(ctx) + ": unknown facade '" + facade +
                   "' (expected west, east, south or north)");
}

LossParams parse_loss_params(const json &j) {
  LossParams p;
  if (j.is_null()) {
    return p;
  }
  if (!j.is_object()) {
    throw ParseError("loss_params must be an object");
  }
  if (auto it = j.find("wall_loss_db"); it != j.end()) {
    if (!it->is_object()) {
      throw ParseError("loss_params.wall_loss_db must map band names to dB values");
    }
    p.wall_loss_fr1_db = number_or(*it, "FR1", p.wall_loss_fr1_db);
    p.wall_loss_fr2_db = number_or(*it, "FR2", p.wall_loss_fr2_db);
    p.wall_loss_fr3_db = number_or(*it, "FR3", p.wall_loss_fr3_db);
  }
  p.reflection_loss_db = number_or(j, "reflection_loss_db", p.reflection_loss_db);
  p.diffraction_loss_db = number_or(j, "diffraction_loss_db", p.diffraction_loss_db);
  p.noise_floor_db = number_or(j, "noise_floor_db", p.noise_floor_db);
  p.fap_threshold_db = number_or(j, "fap_threshold_db", p.fap_threshold_db);
  p.toa_sigma_m = number_or(j, "toa_sigma_m", p.toa_sigma_m);
  if (auto it = j.find("diffuse"); it != j.end()) {
    if (!it->is_object()) {
      throw ParseError("loss_params.diffuse must be an object");
    }
    p.diffuse.mean_count = number_or(*it, "mean_count", p.diffuse.mean_count);
    p.diffuse.mean_excess_delay_s =
        number_or(*it, "mean_excess_delay_s", p.diffuse.mean_excess_delay_s);
    p.diffuse.loss_spread_db = number_or(*it, "loss_spread_db", p.diffuse.loss_spread_db);
  }
  if (p.toa_sigma_m < 0.0) {
    throw ParseError("loss_params.toa_sigma_m must be non-negative");
  }
  return p;
}

}  // namespace

SceneModel build_scene(const json &config) {
  if (!config.is_object()) {
    throw ParseError("scene config: expected a JSON object");
  }
  const json &ver = require_key(config, "schema_version", "scene config");
  if (!ver.is_number_integer() || ver.get<int>() != 1) {
    throw ParseError("scene config: unsupported schema_version (expected 1)");
  }

  SceneModel scene;

  // Building box.
  const json &jb = require_key(config, "building", "scene config");
  BuildingModel &b = scene.building;
  b.width_m = require_number(jb, "width_m", "building");
  b.depth_m = require_number(jb, "depth_m", "building");
  const double floors = require_number(jb, "num_floors", "building");
  b.num_floors = static_cast<int>(floors);
  b.floor_height_m = require_number(jb, "floor_height_m", "building");
  if (b.width_m <= 0.0 || b.depth_m <= 0.0) {
    throw GeometryError("building: footprint extents must be positive");
  }
  if (b.num_floors < 1 || floors != b.num_floors) {
    throw GeometryError("building: num_floors must be a positive integer");
  }
  if (b.floor_height_m <= 0.0) {
    throw GeometryError("building: floor_height_m must be positive");
  }
  const double H = b.height_m();

  // Envelope panels. Normals follow span_u x span_v; orientation carries no
  // meaning for crossing tests or mirroring.
  const Vec3 up{0, 0, H};
  b.walls.push_back(WallPanel::from_corners("facade:west", {0, 0, 0}, {0, b.depth_m, 0},
                                            {0, b.depth_m, H}, {0, 0, H}, true));
  b.walls.push_back(WallPanel::from_corners("facade:east", {b.width_m, 0, 0},
                                            {b.width_m, b.depth_m, 0},
                                            {b.width_m, b.depth_m, H}, {b.width_m, 0, H}, true));
  b.walls.push_back(WallPanel::from_corners("facade:south", {0, 0, 0}, {b.width_m, 0, 0},
                                            {b.width_m, 0, H}, {0, 0, H}, true));
  b.walls.push_back(WallPanel::from_corners("facade:north", {0, b.depth_m, 0},
                                            {b.width_m, b.depth_m, 0},
                                            {b.width_m, b.depth_m, H}, {0, b.depth_m, H}, true));

  bool include_ground = true;
  bool include_roof = true;
  if (auto it = jb.find("include_ground"); it != jb.end()) {
    include_ground = it->get<bool>();
  }
  if (auto it = jb.find("include_roof"); it != jb.end()) {
    include_roof = it->get<bool>();
  }
  for (int k = 0; k <= b.num_floors; ++k) {
    if (k == 0 && !include_ground) {
      continue;
    }
    if (k == b.num_floors && !include_roof) {
      continue;
    }
    const double z = k * b.floor_height_m;
    b.walls.push_back(WallPanel::from_corners("slab:" + std::to_string(k), {0, 0, z},
                                              {b.width_m, 0, z}, {b.width_m, b.depth_m, z},
                                              {0, b.depth_m, z}, false, "slab"));
  }

  if (auto it = jb.find("extra_walls"); it != jb.end()) {
    if (!it->is_array()) {
      throw ParseError("building.extra_walls must be an array");
    }
    for (const auto &jw : *it) {
      const std::string id = require_string(jw, "id", "extra wall");
      const json &corners = require_key(jw, "corners", "extra wall");
      if (!corners.is_array() || corners.size() != 4) {
        throw ParseError("extra wall '" + id + "': corners must list four points");
      }
      bool is_facade = false;
      if (auto f = jw.find("is_facade"); f != jw.end()) {
        is_facade = f->get<bool>();
      }
      std::string material = "concrete";
      if (auto m = jw.find("material"); m != jw.end()) {
        material = m->get<std::string>();
      }
      b.walls.push_back(WallPanel::from_corners(
          id, parse_vec3(corners[0], "extra wall corner"), parse_vec3(corners[1], "extra wall corner"),
          parse_vec3(corners[2], "extra wall corner"), parse_vec3(corners[3], "extra wall corner"),
          is_facade, material));
    }
  }

  {
    std::set<std::string> panel_ids;
    for (const auto &w : b.walls) {
      if (!panel_ids.insert(w.id).second) {
        throw ParseError("duplicate panel id '" + w.id + "'");
      }
    }
  }

  // Windows.
  if (auto it = jb.find("windows"); it != jb.end()) {
    if (!it->is_array()) {
      throw ParseError("building.windows must be an array");
    }
    std::set<std::string> window_ids;
    for (const auto &jw : *it) {
      WindowAperture w;
      w.id = require_string(jw, "id", "window");
      if (!window_ids.insert(w.id).second) {
        throw ParseError("duplicate window id '" + w.id + "'");
      }
      const std::string facade = require_string(jw, "facade", "window '" + w.id + "'");
      const FacadeFrameInfo frame =
          facade_frame(facade, b.width_m, b.depth_m, "window '" + w.id + "'");
      w.facade_id = "facade:" + facade;
      const double floor_raw = require_number(jw, "floor", "window '" + w.id + "'");
      w.floor_index = static_cast<int>(floor_raw);
      if (w.floor_index < 0 || w.floor_index >= b.num_floors || floor_raw != w.floor_index) {
        throw GeometryError("window '" + w.id + "': floor index outside the building");
      }
      const double center = require_number(jw, "center_along_m", "window '" + w.id + "'");
      const double sill = require_number(jw, "sill_m", "window '" + w.id + "'");
      const double ww = require_number(jw, "width_m", "window '" + w.id + "'");
      const double wh = require_number(jw, "height_m", "window '" + w.id + "'");
      if (ww <= 0.0 || wh <= 0.0) {
        throw GeometryError("window '" + w.id + "': extents must be positive");
      }
      const double a0 = center - 0.5 * ww;
      const double a1 = center + 0.5 * ww;
      const double z0 = w.floor_index * b.floor_height_m + sill;
      const double z1 = z0 + wh;
      if (!(a0 > 0.0 && a1 < frame.length && z0 > 0.0 && z1 < H)) {
        throw GeometryError("window '" + w.id + "': rectangle is not strictly inside facade '" +
                            facade + "'");
      }
      const double floor_lo = w.floor_index * b.floor_height_m;
      const double floor_hi = floor_lo + b.floor_height_m;
      if (z0 < floor_lo - 1e-9 || z1 > floor_hi + 1e-9) {
        throw GeometryError("window '" + w.id + "': z-extent spans more than its floor");
      }
      w.origin = frame.base + frame.along * a0 + Vec3{0, 0, z0};
      w.span_u = frame.along * ww;
      w.span_v = Vec3{0, 0, wh};
      const Vec3 o = w.origin;
      const Vec3 u = w.span_u;
      const Vec3 v = w.span_v;
      w.edges = {EdgeSegment{w.id + ":left", o, o + v},
                 EdgeSegment{w.id + ":right", o + u, o + u + v},
                 EdgeSegment{w.id + ":bottom", o, o + u},
                 EdgeSegment{w.id + ":top", o + v, o + u + v}};
      b.windows.push_back(std::move(w));
    }
  }

  // Anchors.
  const json &ja = require_key(config, "anchors", "scene config");
  if (!ja.is_array() || ja.empty()) {
    throw ParseError("scene config: anchors must be a non-empty array");
  }
  std::set<std::string> anchor_ids;
  for (const auto &j : ja) {
    AnchorSpec a;
    a.id = require_string(j, "id", "anchor");
    if (!anchor_ids.insert(a.id).second) {
      throw ParseError("duplicate anchor id '" + a.id + "'");
    }
    a.position = parse_vec3(require_key(j, "position", "anchor '" + a.id + "'"),
                            "anchor '" + a.id + "'");
    a.position_noise_sigma_m = number_or(j, "position_noise_sigma_m", 0.0);
    a.clock_offset_s = number_or(j, "clock_offset_s", 0.0);
    if (a.position_noise_sigma_m < 0.0) {
      throw ParseError("anchor '" + a.id + "': position_noise_sigma_m must be non-negative");
    }
    if (b.inside_box(a.position, 1e-9)) {
      throw GeometryError("anchor '" + a.id + "': position lies inside the building box");
    }
    scene.anchors.push_back(std::move(a));
  }

  // Band.
  const json &jband = require_key(config, "band", "scene config");
  if (!jband.is_object()) {
    throw ParseError("scene config: band must be an object");
  }
  std::optional<FrequencyBandName> name;
  if (auto it = jband.find("name"); it != jband.end()) {
    name = band_from_name(it->get<std::string>());
  }
  std::optional<double> carrier;
  if (auto it = jband.find("carrier_hz"); it != jband.end()) {
    carrier = it->get<double>();
  }
  if (!name && !carrier) {
    throw ParseError("scene config: band needs a name, a carrier_hz, or both");
  }
  if (!carrier) {
    carrier = default_carrier_hz(*name);
  }
  const FrequencyBandName classified = classify_band(*carrier);
  if (name && classified != *name) {
    throw ParseError(std::string("scene config: carrier_hz lies in ") + band_name(classified) +
                     " but band name says " + band_name(*name));
  }
  scene.band = {classified, *carrier};

  // Loss parameters.
  scene.loss = parse_loss_params(config.contains("loss_params") ? config.at("loss_params")
                                                                : json(nullptr));
  return scene;
}

SceneModel build_scene_from_string(const std::string &text) {
  json config;
  try {
    config = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ParseError(std::string("scene config: invalid JSON: ") + e.what());
  }
  return build_scene(config);
}

SceneModel load_scene(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open scene file '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return build_scene_from_string(ss.str());
}

}  // namespace ips
