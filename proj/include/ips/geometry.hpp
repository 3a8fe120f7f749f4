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

#include <optional>
#include <vector>

#include "ips/scene.hpp"
#include "ips/vec3.hpp"

namespace ips {

/// @brief Parametric hit of a segment against a panel rectangle.
struct SegmentPanelHit {
  double t = 0.0;  ///< Parameter along the segment, in (0, 1).
  Vec3 point;
};

/// @brief Intersection of the open segment (a, b) with a panel rectangle.
///
/// Endpoints are excluded with a small parametric margin so that path legs
/// terminating on a panel (specular points, window edges) do not count as
/// crossings of that panel.
std::optional<SegmentPanelHit> segment_panel_intersection(const Vec3 &a, const Vec3 &b,
                                                          const WallPanel &panel,
                                                          double endpoint_margin = 1e-9);

/// @brief True when the point lies on the panel plane inside the rectangle.
bool point_in_panel(const WallPanel &panel, const Vec3 &p, double tol = 1e-9);

/// @brief Number of panels crossed by the open segment (a, b).
int count_panel_crossings(const Vec3 &a, const Vec3 &b, const std::vector<WallPanel> &panels,
                          double endpoint_margin = 1e-9);

/// @brief True when the open segment (a, b) passes through the interior of the
/// building box. Touching the surface only (for example ending on a facade)
/// does not count.
bool segment_enters_box(const Vec3 &a, const Vec3 &b, const BuildingModel &building,
                        double tol = 1e-9);

}  // namespace ips
