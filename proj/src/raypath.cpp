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

#include "ips/raypath.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <tuple>

#include "ips/detail/format.hpp"
#include "ips/geometry.hpp"

namespace ips {

const char *mechanism_tag(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::LineOfSight:
      return "los";
    case MechanismKind::Transmission:
      return "transmission";
    case MechanismKind::Reflection:
      return "reflection";
    case MechanismKind::Diffraction:
      return "diffraction";
    case MechanismKind::Diffuse:
      return "diffuse";
  }
  return "los";
}

std::string Mechanism::id_key() const {
  switch (kind) {
    case MechanismKind::Diffraction:
      return edge_id;
    case MechanismKind::Reflection: {
      std::string key;
      for (const auto &id : panel_ids) {
        if (!key.empty()) {
          key += '|';
        }
        key += id;
      }
      return key;
    }
    default:
      return {};
  }
}

double Mpc::vertex_sum_length() const {
  double sum = 0.0;
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    sum += distance(vertices[i - 1], vertices[i]);
  }
  return sum;
}

Vec3 mirror_across(const Vec3 &p, const Vec3 &plane_origin, const Vec3 &unit_normal) {
  const double d = (p - plane_origin).dot(unit_normal);
  return p - unit_normal * (2.0 * d);
}

Mpc transmission_path(const AnchorSpec &anchor, const Vec3 &node, const SceneModel &scene) {
  const double dist = distance(anchor.position, node);
  if (dist < 1e-12) {
    throw DegenerateGeometry("transmission path: anchor and node coincide");
  }
  const int k = count_panel_crossings(anchor.position, node, scene.building.walls);
  Mpc mpc;
  mpc.anchor_id = anchor.id;
  mpc.mechanism.kind = k == 0 ? MechanismKind::LineOfSight : MechanismKind::Transmission;
  mpc.mechanism.walls_crossed = k;
  mpc.vertices = {anchor.position, node};
  mpc.path_length_m = dist;
  return mpc;
}

namespace {

/// @brief Count crossings along every leg of a path whose interaction points
/// already sit on their own panels (those contacts are excluded by the
/// endpoint margin of the crossing test).
int legs_wall_crossings(const std::vector<Vec3> &vertices, const SceneModel &scene) {
  int count = 0;
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    count += count_panel_crossings(vertices[i - 1], vertices[i], scene.building.walls);
  }
  return count;
}

/// @brief Plane crossing restricted to the panel rectangle, for unfolding.
std::optional<Vec3> unfold_hit(const Vec3 &from, const Vec3 &to, const WallPanel &panel) {
  const auto hit = segment_panel_intersection(from, to, panel);
  if (!hit) {
    return std::nullopt;
  }
  return hit->point;
}

}  // namespace

std::vector<Mpc> reflection_paths(const AnchorSpec &anchor, const Vec3 &node,
                                  const SceneModel &scene, int max_order) {
  if (max_order < 1 || max_order > 2) {
    throw ParseError("reflection order must be 1 or 2");
  }
  std::vector<Mpc> result;
  const auto &walls = scene.building.walls;

  for (const auto &p1 : walls) {
    const Vec3 va1 = mirror_across(anchor.position, p1.origin, p1.normal);
    if (const auto s1 = unfold_hit(va1, node, p1)) {
      Mpc mpc;
      mpc.anchor_id = anchor.id;
      mpc.mechanism.kind = MechanismKind::Reflection;
      mpc.mechanism.panel_ids = {p1.id};
      mpc.vertices = {anchor.position, *s1, node};
      mpc.path_length_m = distance(va1, node);
      mpc.extra_wall_crossings = legs_wall_crossings(mpc.vertices, scene);
      result.push_back(std::move(mpc));
    }
    if (max_order < 2) {
      continue;
    }
    for (const auto &p2 : walls) {
      if (&p2 == &p1) {
        continue;
      }
      const Vec3 va2 = mirror_across(va1, p2.origin, p2.normal);
      const auto s2 = unfold_hit(va2, node, p2);
      if (!s2) {
        continue;
      }
      const auto s1 = unfold_hit(va1, *s2, p1);
      if (!s1) {
        continue;
      }
      Mpc mpc;
      mpc.anchor_id = anchor.id;
      mpc.mechanism.kind = MechanismKind::Reflection;
      mpc.mechanism.panel_ids = {p1.id, p2.id};
      mpc.vertices = {anchor.position, *s1, *s2, node};
      mpc.path_length_m = distance(va2, node);
      mpc.extra_wall_crossings = legs_wall_crossings(mpc.vertices, scene);
      result.push_back(std::move(mpc));
    }
  }
  return result;
}

DiffractionSolution diffraction_point(const Vec3 &anchor, const Vec3 &node,
                                      const EdgeSegment &edge) {
  const Vec3 dir = edge.end - edge.start;
  const double len = dir.norm();
  if (len < 1e-12) {
    throw DegenerateGeometry("diffraction edge has zero length");
  }
  const Vec3 u = dir / len;

  const Vec3 rel_a = anchor - edge.start;
  const Vec3 rel_n = node - edge.start;
  const double s_a = rel_a.dot(u);
  const double s_n = rel_n.dot(u);
  const double r_a = (rel_a - u * s_a).norm();
  const double r_n = (rel_n - u * s_n).norm();
  if (r_a + r_n < 1e-12) {
    throw DegenerateGeometry("diffraction point undefined: both endpoints on the edge line");
  }

  const double s_star = (s_a * r_n + s_n * r_a) / (r_a + r_n);
  const double t_raw = s_star / len;
  DiffractionSolution sol;
  sol.clamped = t_raw < 0.0 || t_raw > 1.0;
  sol.t_star = std::clamp(t_raw, 0.0, 1.0);
  sol.point = edge.start + dir * sol.t_star;
  sol.path_length_m = distance(anchor, sol.point) + distance(sol.point, node);
  return sol;
}

std::vector<Mpc> diffraction_paths(const AnchorSpec &anchor, const Vec3 &node,
                                   const SceneModel &scene) {
  std::vector<Mpc> result;
  const int floor = scene.building.floor_of(node.z);
  for (const auto &edge : scene.diffracting_edges_for_floor(floor)) {
    const DiffractionSolution sol = diffraction_point(anchor.position, node, edge);
    if (segment_enters_box(anchor.position, sol.point, scene.building)) {
      continue;  // Edge shadowed by the building itself.
    }
    Mpc mpc;
    mpc.anchor_id = anchor.id;
    mpc.mechanism.kind = MechanismKind::Diffraction;
    mpc.mechanism.edge_id = edge.id;
    mpc.vertices = {anchor.position, sol.point, node};
    mpc.path_length_m = sol.path_length_m;
    mpc.extra_wall_crossings = legs_wall_crossings(mpc.vertices, scene);
    result.push_back(std::move(mpc));
  }
  return result;
}

std::vector<Mpc> enumerate_mpcs(const AnchorSpec &anchor, const Vec3 &node,
                                const SceneModel &scene, const PathOptions &options) {
  std::vector<Mpc> mpcs;
  if (options.transmission) {
    mpcs.push_back(transmission_path(anchor, node, scene));
  }
  if (options.reflections) {
    auto refl = reflection_paths(anchor, node, scene, options.max_reflection_order);
    std::move(refl.begin(), refl.end(), std::back_inserter(mpcs));
  }
  if (options.diffraction) {
    auto diff = diffraction_paths(anchor, node, scene);
    std::move(diff.begin(), diff.end(), std::back_inserter(mpcs));
  }
  std::sort(mpcs.begin(), mpcs.end(), [](const Mpc &a, const Mpc &b) {
    return std::make_tuple(a.path_length_m, std::string_view(mechanism_tag(a.mechanism.kind)),
                           a.mechanism.id_key()) <
           std::make_tuple(b.path_length_m, std::string_view(mechanism_tag(b.mechanism.kind)),
                           b.mechanism.id_key());
  });
  return mpcs;
}

void write_mpc_csv(std::ostream &os, const std::vector<Mpc> &mpcs) {
  os << "# schema_version=1\n";
  os << "anchor_id,mechanism,order,edge_or_panel_ids,path_length_m,vertices\n";
  for (const auto &m : mpcs) {
    int order = 0;
    switch (m.mechanism.kind) {
      case MechanismKind::Transmission:
        order = m.mechanism.walls_crossed;
        break;
      case MechanismKind::Reflection:
        order = static_cast<int>(m.mechanism.panel_ids.size());
        break;
      case MechanismKind::Diffraction:
        order = 1;
        break;
      default:
        order = 0;
        break;
    }
    std::string vertices;
    for (const auto &v : m.vertices) {
      if (!vertices.empty()) {
        vertices += ';';
      }
      vertices += detail::fmt_g(v.x) + ' ' + detail::fmt_g(v.y) + ' ' + detail::fmt_g(v.z);
    }
    os << m.anchor_id << ',' << mechanism_tag(m.mechanism.kind) << ',' << order << ','
       << m.mechanism.id_key() << ',' << detail::fmt_g(m.path_length_m) << ',' << vertices
       << '\n';
  }
}

}  // namespace ips
