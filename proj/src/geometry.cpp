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

#include "ips/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace ips {

std::optional<SegmentPanelHit> segment_panel_intersection(const Vec3 &a, const Vec3 &b,
                                                          const WallPanel &panel,
                                                          double endpoint_margin) {
  const Vec3 d = b - a;
  const double denom = d.dot(panel.normal);
  if (std::abs(denom) < 1e-15) {
    // Segment parallel to the plane; grazing contact is not a crossing.
    return std::nullopt;
  }
  const double t = (panel.origin - a).dot(panel.normal) / denom;
  if (t <= endpoint_margin || t >= 1.0 - endpoint_margin) {
    return std::nullopt;
  }
  const Vec3 p = a + d * t;
  if (!point_in_panel(panel, p)) {
    return std::nullopt;
  }
  return SegmentPanelHit{t, p};
}

bool point_in_panel(const WallPanel &panel, const Vec3 &p, double tol) {
  const Vec3 rel = p - panel.origin;
  const double uu = panel.span_u.squared_norm();
  const double vv = panel.span_v.squared_norm();
  const double s = rel.dot(panel.span_u) / uu;
  const double t = rel.dot(panel.span_v) / vv;
  const double su = tol / std::sqrt(uu);
  const double sv = tol / std::sqrt(vv);
  if (s < -su || s > 1.0 + su || t < -sv || t > 1.0 + sv) {
    return false;
  }
  const double off = std::abs(rel.dot(panel.normal));
  return off <= tol * std::max(1.0, std::max(std::sqrt(uu), std::sqrt(vv)));
}

int count_panel_crossings(const Vec3 &a, const Vec3 &b, const std::vector<WallPanel> &panels,
                          double endpoint_margin) {
  int count = 0;
  for (const auto &panel : panels) {
    if (segment_panel_intersection(a, b, panel, endpoint_margin)) {
      ++count;
    }
  }
  return count;
}

bool segment_enters_box(const Vec3 &a, const Vec3 &b, const BuildingModel &building,
                        double tol) {
  // Clip the segment's parameter interval against the three slabs of the box.
  double lo = 0.0;
  double hi = 1.0;
  const double mins[3] = {0.0, 0.0, 0.0};
  const double maxs[3] = {building.width_m, building.depth_m, building.height_m()};
  const double av[3] = {a.x, a.y, a.z};
  const double bv[3] = {b.x, b.y, b.z};
  for (int i = 0; i < 3; ++i) {
    const double d = bv[i] - av[i];
    if (std::abs(d) < 1e-15) {
      if (av[i] < mins[i] || av[i] > maxs[i]) {
        return false;
      }
      continue;
    }
    double t0 = (mins[i] - av[i]) / d;
    double t1 = (maxs[i] - av[i]) / d;
    if (t0 > t1) {
      std::swap(t0, t1);
    }
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
    if (lo > hi) {
      return false;
    }
  }
  // A touch at one endpoint or a graze along the surface leaves the overlap
  // interval with (near) zero measure.
  return hi - lo > tol;
}

}  // namespace ips
