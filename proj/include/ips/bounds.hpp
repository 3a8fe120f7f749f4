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

#include <vector>

#include <Eigen/Core>

#include "ips/raypath.hpp"
#include "ips/vec3.hpp"

namespace ips {

/// 3x3 Fisher information matrix for position, units 1/m^2.
using Fim3 = Eigen::Matrix3d;

/// @brief One range measurement feeding the information matrix.
struct BoundMeasurement {
  Mpc mpc;
  double sigma_m = 0.0;
};

/// @brief Unit gradient of the path length with respect to the node position.
///
/// For every mechanism this is the unit vector from the last interaction
/// vertex (the anchor itself for direct paths) to the node; for reflections
/// that vector coincides with the direction from the virtual anchor.
/// @throws DegenerateGeometry when the node sits on that vertex or the path
/// has no geometric gradient (diffuse).
Vec3 path_gradient(const Mpc &mpc, const Vec3 &node);

/// @brief Fisher information for a set of range measurements at a node:
/// sum of g g^T / sigma^2 over measurements.
/// @throws OutOfRange when a sigma is not positive, InsufficientData when the
/// measurement list is empty.
Fim3 fim(const std::vector<BoundMeasurement> &measurements, const Vec3 &node);

/// @brief Spectral condition number of the information matrix; +inf when the
/// smallest eigenvalue is not positive.
double fim_condition_number(const Fim3 &information);

/// @brief Position error bound sqrt(trace(FIM^-1)), meters.
/// @throws SingularFim when the matrix is singular or condition >= 1e12.
double peb(const Fim3 &information);

}  // namespace ips
