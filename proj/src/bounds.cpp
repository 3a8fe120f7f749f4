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

#include "ips/bounds.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "ips/errors.hpp"

namespace ips {

Vec3 path_gradient(const Mpc &mpc, const Vec3 &node) {
  if (mpc.mechanism.kind == MechanismKind::Diffuse) {
    throw DegenerateGeometry("path_gradient: diffuse taps carry no geometry");
  }
  if (mpc.vertices.size() < 2) {
    throw DegenerateGeometry("path_gradient: path needs at least two vertices");
  }
  const Vec3 &pivot = mpc.vertices[mpc.vertices.size() - 2];
  const Vec3 d = node - pivot;
  const double n = d.norm();
  if (n < 1e-12) {
    throw DegenerateGeometry("path_gradient: node coincides with the last interaction vertex");
  }
  return d / n;
}

Fim3 fim(const std::vector<BoundMeasurement> &measurements, const Vec3 &node) {
  if (measurements.empty()) {
    throw InsufficientData("fim: at least one measurement required");
  }
  Fim3 information = Fim3::Zero();
  for (const auto &m : measurements) {
    if (m.sigma_m <= 0.0) {
      throw OutOfRange("fim: measurement sigma must be positive");
    }
    const Vec3 g = path_gradient(m.mpc, node);
    Eigen::Vector3d gv(g.x, g.y, g.z);
    information += (gv * gv.transpose()) / (m.sigma_m * m.sigma_m);
  }
  // Symmetrize to wipe out accumulation round-off.
  information = 0.5 * (information + information.transpose()).eval();
  return information;
}

double fim_condition_number(const Fim3 &information) {
  Eigen::SelfAdjointEigenSolver<Fim3> solver(information);
  const Eigen::Vector3d ev = solver.eigenvalues();
  const double min_ev = ev.minCoeff();
  const double max_ev = ev.maxCoeff();
  if (min_ev <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return max_ev / min_ev;
}

double peb(const Fim3 &information) {
  Eigen::SelfAdjointEigenSolver<Fim3> solver(information);
  const Eigen::Vector3d ev = solver.eigenvalues();
  const double min_ev = ev.minCoeff();
  const double max_ev = ev.maxCoeff();
  if (min_ev <= 0.0 || max_ev / min_ev >= 1e12) {
    throw SingularFim("peb: information matrix is singular or near-singular");
  }
  double trace_inv = 0.0;
  for (int i = 0; i < 3; ++i) {
    trace_inv += 1.0 / ev(i);
  }
  return std::sqrt(trace_inv);
}

}  // namespace ips
