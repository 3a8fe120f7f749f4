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

#include "ips/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "ips/detail/format.hpp"
#include "ips/raypath.hpp"
#include "ips/rng.hpp"

namespace ips {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---- scene generation -------------------------------------------------------

struct FacadeLine {
  const char *name;
  Vec3 corner_a;   ///< Facade start corner at ground level.
  Vec3 corner_b;   ///< Facade end corner at ground level.
  double length;
};

json window_json(const std::string &id, const char *facade, int floor, double center,
                 const SceneGenParams &p) {
  json w;
  w["id"] = id;
  w["facade"] = facade;
  w["floor"] = floor;
  w["center_along_m"] = center;
  w["sill_m"] = p.sill_height_m;
  w["width_m"] = p.window_width_m;
  w["height_m"] = p.window_height_m;
  return w;
}

}  // namespace

json generate_scene(const SceneGenParams &p, std::uint64_t seed) {
  if (p.num_anchors < 4 || p.num_anchors > 6) {
    throw ParseError("generate_scene: num_anchors must be between 4 and 6");
  }
  if (p.windows_per_facade < 1) {
    throw ParseError("generate_scene: windows_per_facade must be at least 1");
  }

  json config;
  config["schema_version"] = 1;
  json &jb = config["building"];
  jb["width_m"] = p.width_m;
  jb["depth_m"] = p.depth_m;
  jb["num_floors"] = p.num_floors;
  jb["floor_height_m"] = p.floor_height_m;

  // Windows at even fractions of each facade, every floor, same layout per
  // facade. Ids sort naturally, which keeps edge enumeration stable.
  const struct {
    const char *facade;
    double length;
  } facades[] = {{"west", p.depth_m}, {"east", p.depth_m}, {"south", p.width_m},
                 {"north", p.width_m}};
  json windows = json::array();
  for (const auto &f : facades) {
    for (int floor = 0; floor < p.num_floors; ++floor) {
      for (int k = 0; k < p.windows_per_facade; ++k) {
        const double center =
            f.length * static_cast<double>(k + 1) / static_cast<double>(p.windows_per_facade + 1);
        const std::string id = std::string("w:") + f.facade + ":" + std::to_string(floor) + ":" +
                               std::to_string(k);
        windows.push_back(window_json(id, f.facade, floor, center, p));
      }
    }
  }
  jb["windows"] = std::move(windows);

  // Anchors sit diagonally off the footprint corners, at staggered heights so
  // the constellation is never coplanar. A small tangential jitter breaks the
  // perfect symmetry of the box.
  Rng rng = Rng::derive(seed, "scene-gen");
  const Vec3 center_xy{0.5 * p.width_m, 0.5 * p.depth_m, 0.0};
  const Vec3 corners[] = {{0.0, 0.0, 0.0},
                          {p.width_m, 0.0, 0.0},
                          {p.width_m, p.depth_m, 0.0},
                          {0.0, p.depth_m, 0.0}};
  std::vector<Vec3> positions;
  for (const auto &c : corners) {
    const Vec3 dir = (c - center_xy).normalized();
    positions.push_back(c + dir * p.anchor_standoff_m);
  }
  if (p.num_anchors >= 5) {
    positions.push_back(Vec3{0.5 * p.width_m, -p.anchor_standoff_m, 0.0});
  }
  if (p.num_anchors >= 6) {
    positions.push_back(Vec3{0.5 * p.width_m, p.depth_m + p.anchor_standoff_m, 0.0});
  }

  json anchors = json::array();
  for (int i = 0; i < p.num_anchors; ++i) {
    Vec3 pos = positions[static_cast<std::size_t>(i)];
    pos.x += rng.uniform(-0.5, 0.5);
    pos.y += rng.uniform(-0.5, 0.5);
    const int level = i % p.num_floors;
    pos.z = (level + 0.5) * p.floor_height_m;
    json a;
    a["id"] = "anchor:" + std::to_string(i);
    a["position"] = {pos.x, pos.y, pos.z};
    anchors.push_back(std::move(a));
  }
  config["anchors"] = std::move(anchors);
  config["band"] = {{"name", "FR3"}};

  // Constructing the scene validates footprint, windows and anchor placement;
  // the config is only returned once it builds cleanly.
  (void)build_scene(config);
  return config;
}

// ---- variants ---------------------------------------------------------------

PipelineVariant parse_variant(const std::string &tag) {
  if (tag == "unaware_lls") {
    return PipelineVariant::UnawareLls;
  }
  if (tag == "unaware_ippa") {
    return PipelineVariant::UnawareIppa;
  }
  if (tag == "aware_mech") {
    return PipelineVariant::AwareMech;
  }
  if (tag == "aware_dnls_map") {
    return PipelineVariant::AwareDnlsMap;
  }
  if (tag == "aware_dnls_facade") {
    return PipelineVariant::AwareDnlsFacade;
  }
  throw ParseError("unknown pipeline variant '" + tag + "'");
}

const char *variant_tag(PipelineVariant variant) {
  switch (variant) {
    case PipelineVariant::UnawareLls:
      return "unaware_lls";
    case PipelineVariant::UnawareIppa:
      return "unaware_ippa";
    case PipelineVariant::AwareMech:
      return "aware_mech";
    case PipelineVariant::AwareDnlsMap:
      return "aware_dnls_map";
    case PipelineVariant::AwareDnlsFacade:
      return "aware_dnls_facade";
  }
  return "unaware_lls";
}

// ---- node grid ---------------------------------------------------------------

std::vector<Vec3> grid_nodes(const BuildingModel &building, const GridSpec &grid) {
  if (!(grid.spacing_m > 0.0)) {
    throw ParseError("grid: spacing_m must be positive");
  }
  if (!(grid.margin_m > 0.0)) {
    throw ParseError("grid: margin_m must be positive");
  }
  std::vector<Vec3> nodes;
  const double eps = 1e-9;
  for (int f = 0; f < building.num_floors; ++f) {
    const double z = (f + 0.5) * building.floor_height_m;
    for (double y = grid.margin_m; y <= building.depth_m - grid.margin_m + eps;
         y += grid.spacing_m) {
      for (double x = grid.margin_m; x <= building.width_m - grid.margin_m + eps;
           x += grid.spacing_m) {
        nodes.push_back({x, y, z});
      }
    }
  }
  return nodes;
}

// ---- link simulation ---------------------------------------------------------

namespace {

/// Independent noise stream per (seed, node, anchor, trial). Deriving from the
/// tuple instead of sequencing a master stream is what makes the experiment
/// reproducible under any thread count.
Rng link_stream(std::uint64_t seed, int node_index, std::size_t anchor_index, int trial) {
  const std::uint64_t lane = (static_cast<std::uint64_t>(anchor_index) << 32) |
                             static_cast<std::uint32_t>(trial);
  return Rng::derive(seed, "link", static_cast<std::uint64_t>(node_index), lane);
}

bool detectable(const Mpc &mpc, const SceneModel &scene) {
  return path_gain_db(mpc, scene.band, scene.loss) >= scene.loss.detection_threshold_db();
}

/// Ranges taken along a straight line carry no excess length, so links whose
/// FAP is line of sight or pure transmission behave like LoS ranges for the
/// classifier; reflected and diffracted FAPs carry a positive detour bias.
LosLabel oracle_label(MechanismKind kind) {
  return (kind == MechanismKind::LineOfSight || kind == MechanismKind::Transmission)
             ? LosLabel::LoS
             : LosLabel::NLoS;
}

/// Geometry of every link of one node, computed once and reused across trials
/// and pipeline variants.
struct NodeLinks {
  std::vector<std::vector<Mpc>> per_anchor;
};

NodeLinks build_links(const SceneModel &scene, const Vec3 &node) {
  NodeLinks links;
  links.per_anchor.reserve(scene.anchors.size());
  for (const auto &anchor : scene.anchors) {
    links.per_anchor.push_back(enumerate_mpcs(anchor, node, scene));
  }
  return links;
}

/// First detectable component in arrival order, or nullptr.
const Mpc *first_detectable(const std::vector<Mpc> &mpcs, const SceneModel &scene) {
  for (const auto &mpc : mpcs) {
    if (detectable(mpc, scene)) {
      return &mpc;
    }
  }
  return nullptr;
}

std::vector<ToaMeasurement> unaware_measurements(const SceneModel &scene, const NodeLinks &links,
                                                 std::uint64_t seed, int node_index, int trial,
                                                 std::optional<double> los_threshold_db) {
  std::vector<ToaMeasurement> faps;
  for (std::size_t ai = 0; ai < scene.anchors.size(); ++ai) {
    Rng rng = link_stream(seed, node_index, ai, trial);
    const auto cir = synthesize_cir(links.per_anchor[ai], scene.band, scene.loss, rng);
    try {
      ToaMeasurement m = extract_fap(cir, scene.loss, rng);
      // Without a calibrated threshold every link is treated as biased, which
      // degrades the projection method to closed balls but stays safe.
      m.los_label = los_threshold_db ? classify_los_nlos(m.fap_power_db, *los_threshold_db)
                                     : LosLabel::NLoS;
      faps.push_back(std::move(m));
    } catch (const NoDetectablePath &) {
      continue;
    }
  }
  return faps;
}

ToaMeasurement range_from_mpc(const Mpc &mpc, const SceneModel &scene, Rng &rng) {
  ToaMeasurement m;
  m.anchor_id = mpc.anchor_id;
  m.range_m = mpc.path_length_m + rng.normal(0.0, scene.loss.toa_sigma_m);
  m.sigma_m = scene.loss.toa_sigma_m;
  m.fap_power_db = path_gain_db(mpc, scene.band, scene.loss);
  m.true_mechanism = mpc.mechanism;
  if (mpc.mechanism.kind == MechanismKind::Diffraction) {
    m.edge_id = mpc.mechanism.edge_id;
  }
  return m;
}

PositionEstimate pipeline_aware_mech(const SceneModel &scene, const NodeLinks &links,
                                     std::uint64_t seed, int node_index, int trial) {
  std::vector<ToaMeasurement> meas;
  for (std::size_t ai = 0; ai < scene.anchors.size(); ++ai) {
    Rng rng = link_stream(seed, node_index, ai, trial);
    for (const auto &mpc : links.per_anchor[ai]) {
      const auto kind = mpc.mechanism.kind;
      const bool usable = kind == MechanismKind::LineOfSight ||
                          kind == MechanismKind::Transmission ||
                          kind == MechanismKind::Reflection;
      if (usable && detectable(mpc, scene)) {
        meas.push_back(range_from_mpc(mpc, scene, rng));
        break;
      }
    }
  }
  if (meas.size() < 4) {
    throw NoDetectablePath("aware_mech: usable components from only " +
                           std::to_string(meas.size()) + " of " +
                           std::to_string(scene.anchors.size()) + " anchors");
  }
  return mechanism_ls(meas, scene.anchors, scene);
}

SolverParams centroid_init(const SceneModel &scene) {
  SolverParams params;
  params.init = InitStrategy::Provided;
  params.initial_guess = {0.5 * scene.building.width_m, 0.5 * scene.building.depth_m,
                          0.5 * scene.building.height_m()};
  return params;
}

PositionEstimate pipeline_dnls_map(const SceneModel &scene, const NodeLinks &links,
                                   std::uint64_t seed, int node_index, int trial) {
  std::vector<ToaMeasurement> meas;
  std::vector<EdgeSegment> edges;
  for (std::size_t ai = 0; ai < scene.anchors.size(); ++ai) {
    const Mpc *fap = first_detectable(links.per_anchor[ai], scene);
    if (fap == nullptr || fap->mechanism.kind != MechanismKind::Diffraction) {
      continue;
    }
    Rng rng = link_stream(seed, node_index, ai, trial);
    meas.push_back(range_from_mpc(*fap, scene, rng));
    const auto edge = scene.find_edge(fap->mechanism.edge_id);
    if (!edge) {
      throw IndexError("aware_dnls_map: edge '" + fap->mechanism.edge_id +
                       "' missing from scene");
    }
    if (std::none_of(edges.begin(), edges.end(),
                     [&](const EdgeSegment &e) { return e.id == edge->id; })) {
      edges.push_back(*edge);
    }
  }
  if (meas.size() < 3) {
    throw NoDetectablePath("aware_dnls_map: only " + std::to_string(meas.size()) +
                           " links lead with a diffraction component");
  }
  return dnls_known_edges(meas, scene.anchors, edges, centroid_init(scene));
}

PositionEstimate pipeline_dnls_facade(const SceneModel &scene, const NodeLinks &links,
                                      std::uint64_t seed, int node_index, int trial) {
  // Candidate pool: every detectable diffraction component over a vertical
  // window edge, tagged with the facade that hosts the edge.
  struct Candidate {
    std::size_t anchor_index;
    const Mpc *mpc;
    std::string facade_id;
  };
  std::vector<Candidate> pool;
  for (std::size_t ai = 0; ai < scene.anchors.size(); ++ai) {
    for (const auto &mpc : links.per_anchor[ai]) {
      if (mpc.mechanism.kind != MechanismKind::Diffraction || !detectable(mpc, scene)) {
        continue;
      }
      const auto edge = scene.find_edge(mpc.mechanism.edge_id);
      if (!edge || !edge->is_vertical()) {
        continue;
      }
      const WindowAperture *window = scene.find_window_of_edge(edge->id);
      if (window == nullptr) {
        continue;
      }
      pool.push_back({ai, &mpc, window->facade_id});
    }
  }
  if (pool.empty()) {
    throw NoDetectablePath("aware_dnls_facade: no detectable vertical-edge diffraction");
  }

  // Work the facade with the most observations; ties go to the smaller id.
  std::map<std::string, int> facade_counts;
  for (const auto &c : pool) {
    ++facade_counts[c.facade_id];
  }
  std::string best_facade;
  int best_count = -1;
  for (const auto &[id, count] : facade_counts) {
    if (count > best_count) {
      best_facade = id;
      best_count = count;
    }
  }

  std::vector<ToaMeasurement> meas;
  std::vector<std::string> meas_edges;
  std::optional<std::size_t> current_anchor;
  std::optional<Rng> rng;
  for (const auto &c : pool) {
    if (c.facade_id != best_facade) {
      continue;
    }
    // One stream per anchor; candidates of one anchor arrive in mpc order so
    // the draw sequence is reproducible.
    if (!current_anchor || *current_anchor != c.anchor_index) {
      current_anchor = c.anchor_index;
      rng = link_stream(seed, node_index, c.anchor_index, trial);
    }
    meas.push_back(range_from_mpc(*c.mpc, scene, *rng));
    meas_edges.push_back(c.mpc->mechanism.edge_id);
  }

  std::vector<std::string> group_ids = meas_edges;
  std::sort(group_ids.begin(), group_ids.end());
  group_ids.erase(std::unique(group_ids.begin(), group_ids.end()), group_ids.end());
  std::vector<int> groups;
  groups.reserve(meas_edges.size());
  for (const auto &edge_id : meas_edges) {
    const auto it = std::lower_bound(group_ids.begin(), group_ids.end(), edge_id);
    groups.push_back(static_cast<int>(it - group_ids.begin()));
  }

  const WallPanel *facade = scene.find_panel(best_facade);
  if (facade == nullptr) {
    throw UnknownPanel("aware_dnls_facade: facade '" + best_facade + "' missing from scene");
  }

  // The relaxed objective is multimodal in height, so solve once per floor
  // level plus the plain centroid and keep the lowest-residual fit.
  SolverParams params = centroid_init(scene);
  std::optional<PositionEstimate> best;
  const int floors = scene.building.num_floors;
  for (int level = -1; level < floors; ++level) {
    if (level >= 0) {
      params.initial_guess.z = (level + 0.5) * scene.building.floor_height_m;
    }
    PositionEstimate attempt = dnls_facade(meas, scene.anchors, *facade, groups, params).estimate;
    const bool better = !best || (attempt.converged && !best->converged) ||
                        (attempt.converged == best->converged &&
                         attempt.final_residual < best->final_residual);
    if (better) {
      best = std::move(attempt);
    }
  }
  return *best;
}

PositionEstimate run_pipeline_cached(const SceneModel &scene, const NodeLinks &links,
                                     PipelineVariant variant, std::uint64_t seed, int node_index,
                                     int trial, std::optional<double> los_threshold_db) {
  switch (variant) {
    case PipelineVariant::UnawareLls:
    case PipelineVariant::UnawareIppa: {
      const auto faps =
          unaware_measurements(scene, links, seed, node_index, trial, los_threshold_db);
      if (faps.size() < 4) {
        throw NoDetectablePath("unaware pipeline: detectable links from only " +
                               std::to_string(faps.size()) + " of " +
                               std::to_string(scene.anchors.size()) + " anchors");
      }
      if (variant == PipelineVariant::UnawareLls) {
        return lls(faps, scene.anchors);
      }
      return ippa(faps, scene.anchors);
    }
    case PipelineVariant::AwareMech:
      return pipeline_aware_mech(scene, links, seed, node_index, trial);
    case PipelineVariant::AwareDnlsMap:
      return pipeline_dnls_map(scene, links, seed, node_index, trial);
    case PipelineVariant::AwareDnlsFacade:
      return pipeline_dnls_facade(scene, links, seed, node_index, trial);
  }
  throw ParseError("run_pipeline: unhandled variant");
}

/// Noise-free power census of link FAPs with oracle bias labels, used to fit
/// the LoS/NLoS decision threshold for a scene.
std::optional<double> calibrate_scene_threshold(const SceneModel &scene) {
  const GridSpec coarse{5.0, 1.0};
  std::vector<std::pair<double, LosLabel>> labeled;
  for (const auto &node : grid_nodes(scene.building, coarse)) {
    for (const auto &anchor : scene.anchors) {
      const auto mpcs = enumerate_mpcs(anchor, node, scene);
      const Mpc *fap = first_detectable(mpcs, scene);
      if (fap == nullptr) {
        continue;
      }
      labeled.emplace_back(path_gain_db(*fap, scene.band, scene.loss),
                           oracle_label(fap->mechanism.kind));
    }
  }
  try {
    return calibrate_threshold(labeled);
  } catch (const InsufficientData &) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<LinkObservation> observe_links(const SceneModel &scene, const Vec3 &node,
                                           std::uint64_t seed, int node_index, int trial) {
  std::vector<LinkObservation> out;
  out.reserve(scene.anchors.size());
  for (std::size_t ai = 0; ai < scene.anchors.size(); ++ai) {
    LinkObservation obs;
    obs.anchor_id = scene.anchors[ai].id;
    obs.mpcs = enumerate_mpcs(scene.anchors[ai], node, scene);
    Rng rng = link_stream(seed, node_index, ai, trial);
    obs.cir = synthesize_cir(obs.mpcs, scene.band, scene.loss, rng);
    try {
      obs.fap = extract_fap(obs.cir, scene.loss, rng);
    } catch (const NoDetectablePath &) {
      obs.fap = std::nullopt;
    }
    out.push_back(std::move(obs));
  }
  return out;
}

PositionEstimate run_pipeline(const SceneModel &scene, const Vec3 &node, PipelineVariant variant,
                              std::uint64_t seed, int node_index, int trial,
                              std::optional<double> los_threshold_db) {
  const NodeLinks links = build_links(scene, node);
  if (variant == PipelineVariant::UnawareIppa && !los_threshold_db) {
    los_threshold_db = calibrate_scene_threshold(scene);
  }
  return run_pipeline_cached(scene, links, variant, seed, node_index, trial, los_threshold_db);
}

BandFapStats band_fap_stats(const SceneModel &scene, const GridSpec &grid) {
  BandFapStats stats;
  for (const auto &node : grid_nodes(scene.building, grid)) {
    for (const auto &anchor : scene.anchors) {
      ++stats.links_total;
      const auto mpcs = enumerate_mpcs(anchor, node, scene);
      const Mpc *fap = first_detectable(mpcs, scene);
      if (fap == nullptr) {
        continue;
      }
      ++stats.links_detectable;
      switch (fap->mechanism.kind) {
        case MechanismKind::LineOfSight:
          ++stats.fap_line_of_sight;
          break;
        case MechanismKind::Transmission:
          ++stats.fap_transmission;
          break;
        case MechanismKind::Reflection:
          ++stats.fap_reflection;
          break;
        case MechanismKind::Diffraction:
          ++stats.fap_diffraction;
          break;
        case MechanismKind::Diffuse:
          break;
      }
    }
  }
  return stats;
}

// ---- experiment config -------------------------------------------------------

namespace {

double json_number_or(const json &j, const char *key, double fallback) {
  const auto it = j.find(key);
  if (it == j.end()) {
    return fallback;
  }
  if (!it->is_number()) {
    throw ParseError(std::string("experiment config: '") + key + "' must be a number");
  }
  return it->get<double>();
}

int json_int_or(const json &j, const char *key, int fallback) {
  const auto it = j.find(key);
  if (it == j.end()) {
    return fallback;
  }
  if (!it->is_number_integer()) {
    throw ParseError(std::string("experiment config: '") + key + "' must be an integer");
  }
  return it->get<int>();
}

SceneGenParams parse_scene_gen(const json &j) {
  SceneGenParams p;
  p.width_m = json_number_or(j, "width_m", p.width_m);
  p.depth_m = json_number_or(j, "depth_m", p.depth_m);
  p.num_floors = json_int_or(j, "num_floors", p.num_floors);
  p.floor_height_m = json_number_or(j, "floor_height_m", p.floor_height_m);
  p.windows_per_facade = json_int_or(j, "windows_per_facade", p.windows_per_facade);
  p.window_width_m = json_number_or(j, "window_width_m", p.window_width_m);
  p.window_height_m = json_number_or(j, "window_height_m", p.window_height_m);
  p.sill_height_m = json_number_or(j, "sill_m", p.sill_height_m);
  p.num_anchors = json_int_or(j, "num_anchors", p.num_anchors);
  p.anchor_standoff_m = json_number_or(j, "anchor_standoff_m", p.anchor_standoff_m);
  return p;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json &config) {
  if (!config.is_object()) {
    throw ParseError("experiment config: expected a JSON object");
  }
  ExperimentConfig out;

  if (auto it = config.find("seed"); it != config.end()) {
    if (!it->is_number_integer()) {
      throw ParseError("experiment config: 'seed' must be an integer");
    }
    out.seed = it->get<std::uint64_t>();
  }

  if (auto it = config.find("scene"); it != config.end()) {
    if (!it->is_object()) {
      throw ParseError("experiment config: 'scene' must be an object");
    }
    out.scene_config = *it;
  } else if (auto itf = config.find("scene_file"); itf != config.end()) {
    if (!itf->is_string()) {
      throw ParseError("experiment config: 'scene_file' must be a string path");
    }
    const std::string path = itf->get<std::string>();
    std::ifstream in(path);
    if (!in) {
      throw IoError("experiment config: cannot open scene file '" + path + "'");
    }
    try {
      out.scene_config = json::parse(in);
    } catch (const json::parse_error &e) {
      throw ParseError("experiment config: scene file '" + path + "' is not valid JSON: " +
                       e.what());
    }
  } else if (auto itg = config.find("scene_gen"); itg != config.end()) {
    if (!itg->is_object()) {
      throw ParseError("experiment config: 'scene_gen' must be an object");
    }
    out.scene_config = generate_scene(parse_scene_gen(*itg), out.seed);
  } else {
    out.scene_config = generate_scene(SceneGenParams{}, out.seed);
  }

  if (auto it = config.find("band"); it != config.end()) {
    if (!it->is_string()) {
      throw ParseError("experiment config: 'band' must be a string");
    }
    (void)band_from_name(it->get<std::string>());
    out.band_override = it->get<std::string>();
  }

  if (auto it = config.find("loss_overrides"); it != config.end()) {
    if (!it->is_object()) {
      throw ParseError("experiment config: 'loss_overrides' must be an object");
    }
    out.loss_overrides = *it;
  }

  if (auto it = config.find("grid"); it != config.end()) {
    if (!it->is_object()) {
      throw ParseError("experiment config: 'grid' must be an object");
    }
    out.grid.spacing_m = json_number_or(*it, "spacing_m", out.grid.spacing_m);
    out.grid.margin_m = json_number_or(*it, "margin_m", out.grid.margin_m);
  }
  if (!(out.grid.spacing_m > 0.0)) {
    throw ParseError("experiment config: grid.spacing_m must be positive");
  }
  if (!(out.grid.margin_m > 0.0)) {
    throw ParseError("experiment config: grid.margin_m must be positive");
  }

  const auto itm = config.find("methods");
  if (itm == config.end() || !itm->is_array() || itm->empty()) {
    throw ParseError("experiment config: 'methods' must be a non-empty array");
  }
  for (const auto &m : *itm) {
    if (!m.is_string()) {
      throw ParseError("experiment config: method entries must be strings");
    }
    out.methods.push_back(parse_variant(m.get<std::string>()));
  }

  out.trials = json_int_or(config, "trials", out.trials);
  if (out.trials < 1) {
    throw ParseError("experiment config: trials must be at least 1");
  }
  return out;
}

// ---- experiment runner ---------------------------------------------------------

namespace {

enum class TrialStatus { Ok, CoverageFailure, EstimatorFailure };

struct TrialOutcome {
  TrialStatus status = TrialStatus::CoverageFailure;
  ErrorSample sample;
};

struct NodeOutcome {
  std::vector<std::vector<TrialOutcome>> per_method;  ///< [method][trial]
  BoundsRow bounds;
};

int env_thread_count() {
  if (const char *env = std::getenv("IPS_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed >= 1) {
      return static_cast<int>(std::min<long>(parsed, 256));
    }
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 16u));
}

/// True when a diffraction component's stationary point sits within a
/// millimeter of an edge end, where the bound gradient direction kinks. A
/// solidly clamped point is fine: the endpoint acts as a fixed vertex and the
/// gradient stays smooth until the interior optimum re-enters the segment.
bool near_clamp(const Mpc &mpc, const Vec3 &node, const SceneModel &scene) {
  const auto edge = scene.find_edge(mpc.mechanism.edge_id);
  if (!edge || mpc.vertices.empty()) {
    return false;
  }
  const Vec3 anchor = mpc.vertices.front();
  const Vec3 dir = edge->end - edge->start;
  const double len = dir.norm();
  const Vec3 u = dir / len;
  const Vec3 pa = anchor - edge->start;
  const Vec3 pn = node - edge->start;
  const double sa = pa.dot(u);
  const double sn = pn.dot(u);
  const double ra = (pa - u * sa).norm();
  const double rn = (pn - u * sn).norm();
  if (!(ra + rn > 0.0)) {
    return true;
  }
  // Unconstrained stationary point in meters along the edge; the clamp
  // transition happens where it crosses either segment end.
  const double s_free = (sa * rn + sn * ra) / (ra + rn);
  return std::abs(s_free) < 1e-3 || std::abs(s_free - len) < 1e-3;
}

BoundsRow node_bounds(const SceneModel &scene, const NodeLinks &links, const Vec3 &node,
                      int node_index) {
  BoundsRow row;
  row.node_index = node_index;
  row.peb_1diff_m = kInf;
  row.peb_multi_m = kInf;
  row.fim_condition = kInf;

  const double sigma = scene.loss.toa_sigma_m;
  if (!(sigma > 0.0)) {
    return row;
  }

  std::vector<BoundMeasurement> one_diff;
  std::vector<BoundMeasurement> multi;
  for (const auto &mpcs : links.per_anchor) {
    const Mpc *lead_diff = nullptr;
    for (const auto &mpc : mpcs) {
      if (!detectable(mpc, scene)) {
        continue;
      }
      multi.push_back({mpc, sigma});
      if (lead_diff == nullptr && mpc.mechanism.kind == MechanismKind::Diffraction) {
        lead_diff = &mpc;
      }
    }
    if (lead_diff != nullptr) {
      one_diff.push_back({*lead_diff, sigma});
      row.clamp_flag = row.clamp_flag || near_clamp(*lead_diff, node, scene);
    }
  }

  try {
    const Fim3 information = fim(one_diff, node);
    row.fim_condition = fim_condition_number(information);
    row.peb_1diff_m = peb(information);
  } catch (const Error &) {
    // Leaves +inf: the single-diffraction geometry does not pin the node down.
  }
  try {
    row.peb_multi_m = peb(fim(multi, node));
  } catch (const Error &) {
  }
  return row;
}

}  // namespace

BoundsRow compute_bounds(const SceneModel &scene, const Vec3 &node, int node_index) {
  return node_bounds(scene, build_links(scene, node), node, node_index);
}

ExperimentResults run_experiment(const ExperimentConfig &config) {
  const auto t0 = std::chrono::steady_clock::now();

  // Apply band and loss overrides on the JSON config so the full validation
  // path runs on the effective scene.
  json scene_config = config.scene_config;
  if (config.band_override) {
    scene_config["band"] = {{"name", *config.band_override}};
  }
  if (config.loss_overrides.is_object()) {
    json &loss = scene_config["loss_params"];
    if (!loss.is_object()) {
      loss = json::object();
    }
    for (const auto &[key, value] : config.loss_overrides.items()) {
      if (key == "wall_loss_db" && value.is_object() && loss.contains(key) &&
          loss[key].is_object()) {
        for (const auto &[band, db] : value.items()) {
          loss[key][band] = db;
        }
      } else {
        loss[key] = value;
      }
    }
  }
  const SceneModel scene = build_scene(scene_config);

  ExperimentResults results;
  results.nodes = grid_nodes(scene.building, config.grid);
  results.floors = scene.building.num_floors;

  const bool needs_threshold = std::any_of(
      config.methods.begin(), config.methods.end(),
      [](PipelineVariant v) { return v == PipelineVariant::UnawareIppa; });
  const std::optional<double> los_threshold =
      needs_threshold ? calibrate_scene_threshold(scene) : std::nullopt;

  const std::size_t node_count = results.nodes.size();
  std::vector<NodeOutcome> outcomes(node_count);

  std::atomic<std::size_t> cursor{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= node_count) {
        return;
      }
      try {
        const Vec3 node = results.nodes[i];
        const NodeLinks links = build_links(scene, node);
        NodeOutcome &out = outcomes[i];
        out.bounds = node_bounds(scene, links, node, static_cast<int>(i));
        out.per_method.resize(config.methods.size());
        for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
          auto &per_trial = out.per_method[mi];
          per_trial.resize(static_cast<std::size_t>(config.trials));
          for (int trial = 0; trial < config.trials; ++trial) {
            TrialOutcome &res = per_trial[static_cast<std::size_t>(trial)];
            try {
              const PositionEstimate est =
                  run_pipeline_cached(scene, links, config.methods[mi], config.seed,
                                      static_cast<int>(i), trial, los_threshold);
              res.status = TrialStatus::Ok;
              res.sample.node_index = static_cast<int>(i);
              res.sample.trial = trial;
              res.sample.estimate = est.position;
              res.sample.err_3d_m = distance(est.position, node);
              res.sample.err_z_m = std::abs(est.position.z - node.z);
              res.sample.floor_true = scene.building.floor_of(node.z);
              res.sample.floor_est = estimate_floor(est, scene.building);
              res.sample.iterations = est.iterations;
              res.sample.converged = est.converged;
            } catch (const NoDetectablePath &) {
              res.status = TrialStatus::CoverageFailure;
            } catch (const Error &) {
              res.status = TrialStatus::EstimatorFailure;
            }
          }
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
        }
        return;
      }
    }
  };

  const int thread_count = std::min<int>(env_thread_count(), std::max<std::size_t>(node_count, 1));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(thread_count));
  for (int t = 0; t < thread_count; ++t) {
    threads.emplace_back(worker);
  }
  for (auto &t : threads) {
    t.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }

  // Deterministic aggregation in (method, node, trial) order.
  results.methods.resize(config.methods.size());
  for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
    MethodResults &mr = results.methods[mi];
    mr.variant = config.methods[mi];
    for (std::size_t i = 0; i < node_count; ++i) {
      for (const auto &res : outcomes[i].per_method[mi]) {
        switch (res.status) {
          case TrialStatus::Ok:
            mr.samples.push_back(res.sample);
            break;
          case TrialStatus::CoverageFailure:
            ++mr.coverage_failures;
            break;
          case TrialStatus::EstimatorFailure:
            ++mr.estimator_failures;
            break;
        }
      }
    }
  }
  results.bounds.reserve(node_count);
  for (std::size_t i = 0; i < node_count; ++i) {
    results.bounds.push_back(outcomes[i].bounds);
  }

  results.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return results;
}

// ---- exports -------------------------------------------------------------------

double sample_quantile(std::vector<double> values, double q) {
  if (values.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double clamped_q = std::clamp(q, 0.0, 1.0);
  // Hazen plotting position: sample i sits at percentile (i + 0.5) / n.
  const double h = std::clamp(clamped_q * n - 0.5, 0.0, n - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

using detail::fmt_g;

std::ofstream open_out(const std::filesystem::path &path) {
  std::ofstream os(path);
  if (!os) {
    throw IoError("cannot create output file '" + path.string() + "'");
  }
  return os;
}

std::vector<double> sorted_errors(const MethodResults &mr) {
  std::vector<double> errs;
  errs.reserve(mr.samples.size());
  for (const auto &s : mr.samples) {
    errs.push_back(s.err_3d_m);
  }
  std::sort(errs.begin(), errs.end());
  return errs;
}

std::vector<double> finite_sorted(const std::vector<BoundsRow> &rows, bool one_diff) {
  std::vector<double> vals;
  for (const auto &r : rows) {
    const double v = one_diff ? r.peb_1diff_m : r.peb_multi_m;
    if (std::isfinite(v)) {
      vals.push_back(v);
    }
  }
  std::sort(vals.begin(), vals.end());
  return vals;
}

void write_cdf_rows(std::ostream &os, const std::string &label, const std::vector<double> &vals) {
  const double n = static_cast<double>(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    os << label << ',' << fmt_g(vals[i]) << ','
       << fmt_g((static_cast<double>(i) + 0.5) / n) << '\n';
  }
}

std::string fmt_px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct SvgCurve {
  std::string label;
  std::string color;
  bool dashed = false;
  std::vector<double> values;  ///< Sorted.
};

void write_cdf_svg(std::ostream &os, const std::vector<SvgCurve> &curves) {
  const double x0 = 70, x1 = 770, y0 = 20, y1 = 460;
  double xmax = 0.0;
  for (const auto &c : curves) {
    if (!c.values.empty()) {
      xmax = std::max(xmax, c.values.back());
    }
  }
  if (!(xmax > 0.0)) {
    xmax = 1.0;
  }

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" "
        "viewBox=\"0 0 800 500\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
  os << "<g stroke=\"#cccccc\" stroke-width=\"1\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double gx = x0 + (x1 - x0) * i / 5.0;
    const double gy = y1 - (y1 - y0) * i / 5.0;
    os << "<line x1=\"" << fmt_px(gx) << "\" y1=\"" << fmt_px(y0) << "\" x2=\"" << fmt_px(gx)
       << "\" y2=\"" << fmt_px(y1) << "\"/>\n";
    os << "<line x1=\"" << fmt_px(x0) << "\" y1=\"" << fmt_px(gy) << "\" x2=\"" << fmt_px(x1)
       << "\" y2=\"" << fmt_px(gy) << "\"/>\n";
  }
  os << "</g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"13\" fill=\"#222222\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double gx = x0 + (x1 - x0) * i / 5.0;
    const double gy = y1 - (y1 - y0) * i / 5.0;
    char label[32];
    std::snprintf(label, sizeof(label), "%.3g", xmax * i / 5.0);
    os << "<text x=\"" << fmt_px(gx - 8) << "\" y=\"" << fmt_px(y1 + 18) << "\">" << label
       << "</text>\n";
    std::snprintf(label, sizeof(label), "%.1f", static_cast<double>(i) / 5.0);
    os << "<text x=\"" << fmt_px(x0 - 38) << "\" y=\"" << fmt_px(gy + 4) << "\">" << label
       << "</text>\n";
  }
  os << "<text x=\"360\" y=\"495\">error (m)</text>\n";
  os << "<text x=\"12\" y=\"240\" transform=\"rotate(-90 12 240)\">CDF</text>\n";
  os << "</g>\n";

  for (const auto &c : curves) {
    if (c.values.empty()) {
      continue;
    }
    // Large runs are decimated evenly; the curve shape is unaffected.
    const std::size_t stride = std::max<std::size_t>(1, c.values.size() / 2000);
    os << "<polyline fill=\"none\" stroke=\"" << c.color << "\" stroke-width=\"2\"";
    if (c.dashed) {
      os << " stroke-dasharray=\"6 4\"";
    }
    os << " points=\"";
    const double n = static_cast<double>(c.values.size());
    for (std::size_t i = 0; i < c.values.size(); i += stride) {
      const double p = (static_cast<double>(i) + 0.5) / n;
      const double px = x0 + (std::min(c.values[i], xmax) / xmax) * (x1 - x0);
      const double py = y1 - p * (y1 - y0);
      os << fmt_px(px) << ',' << fmt_px(py) << ' ';
    }
    os << "\"/>\n";
  }

  double ly = y0 + 16;
  for (const auto &c : curves) {
    if (c.values.empty()) {
      continue;
    }
    os << "<line x1=\"" << fmt_px(x0 + 16) << "\" y1=\"" << fmt_px(ly - 4) << "\" x2=\""
       << fmt_px(x0 + 52) << "\" y2=\"" << fmt_px(ly - 4) << "\" stroke=\"" << c.color
       << "\" stroke-width=\"2\"";
    if (c.dashed) {
      os << " stroke-dasharray=\"6 4\"";
    }
    os << "/>\n";
    os << "<text x=\"" << fmt_px(x0 + 58) << "\" y=\"" << fmt_px(ly)
       << "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222222\">" << c.label
       << "</text>\n";
    ly += 18;
  }
  os << "</svg>\n";
}

const char *method_color(std::size_t index) {
  static const char *palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};
  return palette[index % 5];
}

}  // namespace

void export_results(const ExperimentResults &results, const std::string &outdir) {
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + outdir + "': " + ec.message());
  }
  const std::filesystem::path dir(outdir);

  {
    auto os = open_out(dir / "errors.csv");
    os << "# schema_version=1\n";
    os << "method,node_index,trial,true_x_m,true_y_m,true_z_m,est_x_m,est_y_m,est_z_m,"
          "err_3d_m,err_z_m,floor_true,floor_est,iterations,converged\n";
    for (const auto &mr : results.methods) {
      const char *tag = variant_tag(mr.variant);
      for (const auto &s : mr.samples) {
        const Vec3 &node = results.nodes[static_cast<std::size_t>(s.node_index)];
        os << tag << ',' << s.node_index << ',' << s.trial << ',' << fmt_g(node.x) << ','
           << fmt_g(node.y) << ',' << fmt_g(node.z) << ',' << fmt_g(s.estimate.x) << ','
           << fmt_g(s.estimate.y) << ',' << fmt_g(s.estimate.z) << ',' << fmt_g(s.err_3d_m)
           << ',' << fmt_g(s.err_z_m) << ',' << s.floor_true << ',' << s.floor_est << ','
           << s.iterations << ',' << (s.converged ? 1 : 0) << '\n';
      }
    }
  }

  {
    auto os = open_out(dir / "cdf.csv");
    os << "# schema_version=1\n";
    os << "method,err_3d_m,percentile\n";
    for (const auto &mr : results.methods) {
      write_cdf_rows(os, variant_tag(mr.variant), sorted_errors(mr));
    }
    write_cdf_rows(os, "peb_1diff", finite_sorted(results.bounds, true));
    write_cdf_rows(os, "peb_multi", finite_sorted(results.bounds, false));
  }

  {
    auto os = open_out(dir / "bounds.csv");
    os << "# schema_version=1\n";
    os << "node_index,x_m,y_m,z_m,peb_1diff_m,peb_multi_m,fim_condition_number,clamp_flag\n";
    for (const auto &r : results.bounds) {
      const Vec3 &node = results.nodes[static_cast<std::size_t>(r.node_index)];
      os << r.node_index << ',' << fmt_g(node.x) << ',' << fmt_g(node.y) << ',' << fmt_g(node.z)
         << ',' << fmt_g(r.peb_1diff_m) << ',' << fmt_g(r.peb_multi_m) << ','
         << fmt_g(r.fim_condition) << ',' << (r.clamp_flag ? 1 : 0) << '\n';
    }
  }

  {
    auto os = open_out(dir / "summary.csv");
    os << "# schema_version=1\n";
    os << "method,samples,coverage_failures,estimator_failures,median_err_3d_m,p90_err_3d_m,"
          "median_err_z_m,floor_accuracy\n";
    for (const auto &mr : results.methods) {
      std::vector<double> errs;
      std::vector<double> errz;
      std::size_t floor_hits = 0;
      for (const auto &s : mr.samples) {
        errs.push_back(s.err_3d_m);
        errz.push_back(s.err_z_m);
        floor_hits += (s.floor_est == s.floor_true) ? 1u : 0u;
      }
      const double floor_acc =
          mr.samples.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : static_cast<double>(floor_hits) /
                                   static_cast<double>(mr.samples.size());
      os << variant_tag(mr.variant) << ',' << mr.samples.size() << ',' << mr.coverage_failures
         << ',' << mr.estimator_failures << ',' << fmt_g(sample_quantile(errs, 0.5)) << ','
         << fmt_g(sample_quantile(errs, 0.9)) << ',' << fmt_g(sample_quantile(errz, 0.5)) << ','
         << fmt_g(floor_acc) << '\n';
    }
  }

  {
    std::vector<SvgCurve> curves;
    for (std::size_t mi = 0; mi < results.methods.size(); ++mi) {
      curves.push_back({variant_tag(results.methods[mi].variant), method_color(mi), false,
                        sorted_errors(results.methods[mi])});
    }
    curves.push_back({"peb_1diff", "#555555", true, finite_sorted(results.bounds, true)});
    curves.push_back({"peb_multi", "#999999", true, finite_sorted(results.bounds, false)});
    auto os = open_out(dir / "cdf.svg");
    write_cdf_svg(os, curves);
  }
}

}  // namespace ips
