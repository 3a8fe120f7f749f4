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

#include <string>
#include <vector>

#include "ips/channel.hpp"
#include "ips/scene.hpp"
#include "ips/vec3.hpp"

namespace ips {

/// @brief Result of one position solve.
struct PositionEstimate {
  Vec3 position;
  std::string method_tag;
  int iterations = 0;
  /// Sum of squared range residuals at the returned position, m^2.
  double final_residual = 0.0;
  bool converged = false;
};

enum class InitStrategy { Centroid, Provided, Multistart };

/// @brief Iteration controls shared by the iterative estimators.
struct SolverParams {
  int max_iterations = 200;
  double step_tolerance_m = 1e-10;
  double residual_tolerance_m2 = 1e-24;
  /// Relaxation factor for the parallel projection update, in (0, 1].
  double ippa_relaxation = 1.0;
  InitStrategy init = InitStrategy::Centroid;
  Vec3 initial_guess;  ///< Used when init == Provided.
  /// Number of perturbed restarts tried when the first descent stalls.
  int multistart_count = 8;
  /// Optional trace of accepted objective values, appended per iteration.
  std::vector<double> *residual_history = nullptr;
};

/// @brief Closed-form lateration: squared-range differences against the first
/// anchor give a linear system solved in the least-squares sense.
///
/// Throws TooFewAnchors (< 4 measurements) or RankDeficient (anchor geometry
/// does not span 3-D).
PositionEstimate lls(const std::vector<ToaMeasurement> &measurements,
                     const std::vector<AnchorSpec> &anchors);

/// @brief Iterative parallel projection onto spheres (LoS) and closed balls
/// (NLoS); the relaxed mean-projection update is Fejer monotone with respect
/// to the feasible intersection.
///
/// Every measurement must carry a LoS/NLoS label.
PositionEstimate ippa(const std::vector<ToaMeasurement> &measurements,
                      const std::vector<AnchorSpec> &anchors, const SolverParams &params = {});

/// @brief One relaxed parallel-projection update, exposed so property tests
/// can track the iterate trajectory directly.
Vec3 ippa_iterate(const Vec3 &x, const std::vector<ToaMeasurement> &measurements,
                  const std::vector<AnchorSpec> &anchors, double relaxation);

/// @brief Mechanism-aware linear least squares: reflection measurements are
/// re-anchored at their mirror-image virtual anchors, then solved as lls.
///
/// Throws UnknownPanel when a reflection references a panel id missing from
/// the scene; propagates lls errors.
PositionEstimate mechanism_ls(const std::vector<ToaMeasurement> &measurements,
                              const std::vector<AnchorSpec> &anchors, const SceneModel &scene,
                              const SolverParams &params = {});

/// @brief Diffraction non-linear least squares with known edge geometry.
///
/// Minimizes the squared mismatch between measured ranges and stationary-path
/// lengths through each measurement's edge, using a Levenberg-damped
/// Gauss-Newton iteration with the envelope gradient.
PositionEstimate dnls_known_edges(const std::vector<ToaMeasurement> &measurements,
                                  const std::vector<AnchorSpec> &anchors,
                                  const std::vector<EdgeSegment> &edges,
                                  const SolverParams &params = {});

/// @brief dnls_facade output: position estimate plus the recovered
/// along-facade coordinate of each edge group, meters from the facade origin.
struct DnlsFacadeResult {
  PositionEstimate estimate;
  std::vector<double> edge_coordinates;
};

/// @brief Facade-relaxed diffraction solver: edge positions are unknown; each
/// group j contributes an along-facade coordinate t_j, and the interaction
/// point's height is tied to the (unknown) node height.
///
/// edge_groups[i] gives the group index of measurement i; groups must be
/// numbered 0..G-1. Throws Underdetermined when measurements < 3 + G.
DnlsFacadeResult dnls_facade(const std::vector<ToaMeasurement> &measurements,
                             const std::vector<AnchorSpec> &anchors, const WallPanel &facade,
                             const std::vector<int> &edge_groups,
                             const SolverParams &params = {});

/// @brief Floor index implied by an estimate's height.
int estimate_floor(const PositionEstimate &estimate, const BuildingModel &building);

}  // namespace ips
