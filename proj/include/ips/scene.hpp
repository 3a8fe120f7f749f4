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

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ips/band.hpp"
#include "ips/errors.hpp"
#include "ips/loss_params.hpp"
#include "ips/vec3.hpp"

namespace ips {

/// @brief Straight edge segment that can act as a diffraction locus.
struct EdgeSegment {
  std::string id;
  Vec3 start;
  Vec3 end;

  double length() const { return distance(start, end); }
  Vec3 direction() const { return (end - start).normalized(); }
  /// @brief True when the edge runs along the z axis (a window side edge).
  bool is_vertical() const;
};

/// @brief Planar rectangular wall element.
///
/// The rectangle is origin + s*span_u + t*span_v for s, t in [0, 1], with
/// span_u and span_v orthogonal and the normal given by their cross product.
struct WallPanel {
  std::string id;
  Vec3 origin;
  Vec3 span_u;
  Vec3 span_v;
  Vec3 normal;  ///< Unit normal.
  bool is_facade = false;
  std::string material = "concrete";

  std::array<Vec3, 4> corners() const {
    return {origin, origin + span_u, origin + span_u + span_v, origin + span_v};
  }

  /// @brief Build a panel from four corners listed around the rectangle.
  /// @throws GeometryError if the corners are not a rectangle (coplanarity
  /// within 1e-9, orthogonal adjacent edges, matching fourth corner).
  static WallPanel from_corners(const std::string &id, const Vec3 &c0, const Vec3 &c1,
                                const Vec3 &c2, const Vec3 &c3, bool is_facade,
                                const std::string &material = "concrete");
};

/// @brief Rectangular opening embedded in a facade panel.
struct WindowAperture {
  std::string id;
  std::string facade_id;
  int floor_index = 0;
  Vec3 origin;   ///< Lower corner on the facade plane.
  Vec3 span_u;   ///< Horizontal extent along the facade.
  Vec3 span_v;   ///< Vertical extent (along +z).
  std::array<EdgeSegment, 4> edges;  ///< left, right, bottom, top.
};

/// @brief Outdoor ranging node (fixed terminal or hovering platform).
struct AnchorSpec {
  std::string id;
  Vec3 position;
  double position_noise_sigma_m = 0.0;
  double clock_offset_s = 0.0;
};

/// @brief Axis-aligned multi-floor building with wall panels and windows.
struct BuildingModel {
  double width_m = 0.0;   ///< Footprint extent along x, starting at x = 0.
  double depth_m = 0.0;   ///< Footprint extent along y, starting at y = 0.
  int num_floors = 1;
  double floor_height_m = 3.0;
  std::vector<WallPanel> walls;  ///< Facades, floor slabs, interior walls.
  std::vector<WindowAperture> windows;

  double height_m() const { return num_floors * floor_height_m; }

  /// @brief True when the point lies in the closed building box.
  bool inside_box(const Vec3 &p, double tol = 0.0) const;

  /// @brief Floor index for a height, clamped to the valid range.
  int floor_of(double z) const;
};

/// @brief Immutable scenario: building, anchors, band and channel parameters.
struct SceneModel {
  BuildingModel building;
  std::vector<AnchorSpec> anchors;
  FrequencyBand band;
  LossParams loss;

  const WallPanel *find_panel(const std::string &id) const;
  const AnchorSpec *find_anchor(const std::string &id) const;
  const WindowAperture *find_window_of_edge(const std::string &edge_id) const;
  std::optional<EdgeSegment> find_edge(const std::string &edge_id) const;

  /// @brief Window edges able to diffract toward nodes on the given floor,
  /// ordered deterministically by edge id.
  /// @throws IndexError for floor indexes outside [0, num_floors).
  std::vector<EdgeSegment> diffracting_edges_for_floor(int floor_index) const;
};

/// @brief Build and validate a scene from its JSON description.
/// @throws ParseError on malformed or incomplete configs.
/// @throws GeometryError on invalid panels, windows or anchor placement.
SceneModel build_scene(const nlohmann::json &config);

/// @brief Convenience wrapper parsing JSON text first.
SceneModel build_scene_from_string(const std::string &text);

/// @brief Load a scene config file and build the scene.
/// @throws IoError when the file cannot be read.
SceneModel load_scene(const std::string &path);

}  // namespace ips
