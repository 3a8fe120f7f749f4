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

#include <iosfwd>
#include <string>
#include <vector>

#include "ips/scene.hpp"
#include "ips/vec3.hpp"

namespace ips {

/// @brief Propagation mechanism of a multipath component.
enum class MechanismKind { LineOfSight, Transmission, Reflection, Diffraction, Diffuse };

/// @brief Lower-case tag used in CSV output and sort tie-breaking.
const char *mechanism_tag(MechanismKind kind);

/// @brief Mechanism plus its interaction identifiers.
struct Mechanism {
  MechanismKind kind = MechanismKind::LineOfSight;
  int walls_crossed = 0;                ///< Transmission only, >= 1.
  std::vector<std::string> panel_ids;   ///< Reflection only, in bounce order.
  std::string edge_id;                  ///< Diffraction only.

  /// @brief Interaction ids joined with '|' (empty for line of sight).
  std::string id_key() const;
};

/// @brief Geometric multipath component from one anchor to one node.
struct Mpc {
  std::string anchor_id;
  Mechanism mechanism;
  std::vector<Vec3> vertices;  ///< Anchor first, node last, interactions between.
  double path_length_m = 0.0;
  /// Wall crossings along reflection and diffraction legs. These do not change
  /// the geometry but add penetration loss in the channel model.
  int extra_wall_crossings = 0;

  /// @brief Sum of the distances between consecutive vertices.
  double vertex_sum_length() const;
};

/// @brief Fermat stationary point of a single-edge diffraction path.
struct DiffractionSolution {
  double t_star = 0.0;  ///< Position along the edge in [0, 1].
  Vec3 point;
  bool clamped = false;  ///< True when the interior optimum fell outside the edge.
  double path_length_m = 0.0;
};

/// @brief Which mechanisms enumerate_mpcs generates.
struct PathOptions {
  bool transmission = true;
  bool reflections = true;
  int max_reflection_order = 1;  ///< 1 or 2.
  bool diffraction = true;
  /// Diffuse clutter is synthesized by the channel model, never geometrically;
  /// the flag is carried here so pipelines can switch it alongside the rest.
  bool diffuse = true;
};

/// @brief Mirror a point across the plane through origin with unit normal.
Vec3 mirror_across(const Vec3 &p, const Vec3 &plane_origin, const Vec3 &unit_normal);

/// @brief Straight path from anchor to node counting wall crossings.
///
/// Zero crossings yield a LineOfSight component, otherwise Transmission(k).
/// The path length equals the Euclidean distance (refraction neglected).
/// @throws DegenerateGeometry when anchor and node coincide.
Mpc transmission_path(const AnchorSpec &anchor, const Vec3 &node, const SceneModel &scene);

/// @brief Specular reflection components via the image method.
///
/// A candidate bounce sequence is valid when every unfolded leg crosses its
/// panel plane strictly inside the rectangle; invalid candidates are silently
/// discarded. Legs crossing other walls are kept, with the crossings recorded.
std::vector<Mpc> reflection_paths(const AnchorSpec &anchor, const Vec3 &node,
                                  const SceneModel &scene, int max_order = 1);

/// @brief Closed-form Fermat point on a single diffracting edge.
///
/// In edge coordinates (s along the edge, r the perpendicular distance) the
/// unclamped optimum is s* = (s_a r_n + s_n r_a) / (r_a + r_n); it is clamped
/// to the segment when it falls outside.
/// @throws DegenerateGeometry when anchor and node both lie on the edge line.
DiffractionSolution diffraction_point(const Vec3 &anchor, const Vec3 &node,
                                      const EdgeSegment &edge);

/// @brief Single-edge diffraction components via window edges on the node's floor.
///
/// Edges whose anchor-to-edge leg passes through the building interior are
/// skipped; the remaining legs may cross interior walls, which is recorded.
std::vector<Mpc> diffraction_paths(const AnchorSpec &anchor, const Vec3 &node,
                                   const SceneModel &scene);

/// @brief All geometric components for one link, sorted by ascending path
/// length with ties broken by mechanism tag and then interaction ids.
std::vector<Mpc> enumerate_mpcs(const AnchorSpec &anchor, const Vec3 &node,
                                const SceneModel &scene, const PathOptions &options = {});

/// @brief Debug CSV: anchor_id, mechanism, order, edge_or_panel_ids,
/// path_length_m, vertices (semicolon-separated "x y z" triples).
void write_mpc_csv(std::ostream &os, const std::vector<Mpc> &mpcs);

}  // namespace ips
