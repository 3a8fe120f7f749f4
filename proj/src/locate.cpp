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

#include "ips/locate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "ips/errors.hpp"
#include "ips/raypath.hpp"

namespace ips {

namespace {

Vec3 anchor_position(const std::vector<AnchorSpec> &anchors, const std::string &id) {
  for (const auto &a : anchors) {
    if (a.id == id) {
      return a.position;
    }
  }
  throw IndexError("unknown anchor id '" + id + "'");
}

struct LaterationRow {
  Vec3 point;
  double range = 0.0;
};

double range_residual_sq(const std::vector<LaterationRow> &rows, const Vec3 &p) {
  double sum = 0.0;
  for (const auto &row : rows) {
    const double d = distance(p, row.point) - row.range;
    sum += d * d;
  }
  return sum;
}

/// @brief Squared-range difference system relative to the first row.
Vec3 solve_lateration(const std::vector<LaterationRow> &rows) {
  if (rows.size() < 4) {
    throw TooFewAnchors("linear lateration needs at least 4 measurements, got " +
                        std::to_string(rows.size()));
  }
  const std::size_t n = rows.size() - 1;
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  const Vec3 &p0 = rows[0].point;
  const double r0_sq = rows[0].range * rows[0].range;
  const double p0_sq = p0.squared_norm();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const Vec3 &pi = rows[i].point;
    a(i - 1, 0) = 2.0 * (pi.x - p0.x);
    a(i - 1, 1) = 2.0 * (pi.y - p0.y);
    a(i - 1, 2) = 2.0 * (pi.z - p0.z);
    b(i - 1) = (pi.squared_norm() - p0_sq) - (rows[i].range * rows[i].range - r0_sq);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-9);
  if (qr.rank() < 3) {
    throw RankDeficient("lateration anchors do not span 3-D space");
  }
  const Eigen::Vector3d x = qr.solve(b);
  return {x(0), x(1), x(2)};
}

PositionEstimate linear_lateration(const std::vector<LaterationRow> &rows,
                                   const std::string &tag) {
  PositionEstimate est;
  est.position = solve_lateration(rows);
  est.method_tag = tag;
  est.iterations = 1;
  est.final_residual = range_residual_sq(rows, est.position);
  est.converged = true;
  return est;
}

Vec3 rows_centroid(const std::vector<LaterationRow> &rows) {
  Vec3 c;
  for (const auto &row : rows) {
    c += row.point;
  }
  return c / static_cast<double>(rows.size());
}

double rows_spread(const std::vector<LaterationRow> &rows, const Vec3 &centroid) {
  double spread = 0.0;
  for (const auto &row : rows) {
    spread = std::max(spread, distance(row.point, centroid));
  }
  return spread;
}

/// @brief One Levenberg-damped Gauss-Newton descent from a fixed start.
///
/// The model functor fills residuals and the Jacobian at x; any geometry
/// exception during evaluation aborts the attempt (reported as not converged
/// with infinite cost so multistart can move on).
struct LmAttempt {
  Eigen::VectorXd x;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

using LmModel = std::function<void(const Eigen::VectorXd &, Eigen::VectorXd &, Eigen::MatrixXd &)>;

LmAttempt levenberg_descent(const LmModel &model, Eigen::VectorXd x0, int rows,
                            const SolverParams &params) {
  const auto dims = x0.size();
  LmAttempt attempt;
  attempt.x = std::move(x0);
  Eigen::VectorXd residual(rows);
  Eigen::MatrixXd jacobian(rows, dims);
  try {
    model(attempt.x, residual, jacobian);
  } catch (const Error &) {
    return attempt;
  }
  attempt.cost = residual.squaredNorm();
  attempt.history.push_back(attempt.cost);
  double damping = 1e-3;
  while (attempt.iterations < params.max_iterations) {
    ++attempt.iterations;
    const Eigen::MatrixXd normal = jacobian.transpose() * jacobian;
    const Eigen::VectorXd gradient = jacobian.transpose() * residual;
    const Eigen::VectorXd step =
        (normal + damping * Eigen::MatrixXd::Identity(dims, dims)).ldlt().solve(-gradient);
    const Eigen::VectorXd trial = attempt.x + step;
    Eigen::VectorXd trial_residual(rows);
    Eigen::MatrixXd trial_jacobian(rows, dims);
    double trial_cost = std::numeric_limits<double>::infinity();
    try {
      model(trial, trial_residual, trial_jacobian);
      trial_cost = trial_residual.squaredNorm();
    } catch (const Error &) {
      trial_cost = std::numeric_limits<double>::infinity();
    }
    if (trial_cost < attempt.cost) {
      attempt.x = trial;
      attempt.cost = trial_cost;
      residual = trial_residual;
      jacobian = trial_jacobian;
      attempt.history.push_back(attempt.cost);
      damping = std::max(damping * 0.25, 1e-12);
      if (step.norm() < params.step_tolerance_m || attempt.cost < params.residual_tolerance_m2) {
        attempt.converged = true;
        break;
      }
    } else {
      damping *= 4.0;
      if (damping > 1e14) {
        break;
      }
    }
  }
  return attempt;
}

/// @brief Deterministic multistart: try the preferred start first, then cube
/// corner perturbations scaled to the anchor spread.
LmAttempt solve_with_multistart(const LmModel &model, const Eigen::VectorXd &x0, int rows,
                                const SolverParams &params, const Vec3 &init_center,
                                double spread) {
  LmAttempt best;
  best.x = x0;
  if (params.init != InitStrategy::Multistart) {
    best = levenberg_descent(model, x0, rows, params);
    if (best.converged) {
      return best;
    }
  }
  for (int i = 0; i < params.multistart_count; ++i) {
    const double scale = 0.25 * spread * (1.0 + static_cast<double>(i / 8));
    Vec3 corner{(i & 1) != 0 ? 1.0 : -1.0, (i & 2) != 0 ? 1.0 : -1.0,
                (i & 4) != 0 ? 1.0 : -1.0};
    Eigen::VectorXd start = x0;
    start(0) = init_center.x + scale * corner.x;
    start(1) = init_center.y + scale * corner.y;
    start(2) = init_center.z + scale * corner.z;
    LmAttempt attempt = levenberg_descent(model, start, rows, params);
    if (attempt.converged) {
      return attempt;
    }
    if (attempt.cost < best.cost) {
      best = attempt;
    }
  }
  return best;
}

void publish_history(const SolverParams &params, const LmAttempt &attempt) {
  if (params.residual_history != nullptr) {
    *params.residual_history = attempt.history;
  }
}

}  // namespace

PositionEstimate lls(const std::vector<ToaMeasurement> &measurements,
                     const std::vector<AnchorSpec> &anchors) {
  std::vector<LaterationRow> rows;
  rows.reserve(measurements.size());
  for (const auto &m : measurements) {
    rows.push_back({anchor_position(anchors, m.anchor_id), m.range_m});
  }
  return linear_lateration(rows, "lls");
}

namespace {

struct ProjectionSet {
  Vec3 center;
  double radius = 0.0;
  bool sphere = true;  ///< Sphere for LoS, closed ball for NLoS.
};

Vec3 project_onto(const ProjectionSet &set, const Vec3 &x) {
  const Vec3 d = x - set.center;
  const double n = d.norm();
  if (!set.sphere && n <= set.radius) {
    return x;
  }
  if (n < 1e-15) {
    return set.center + Vec3{set.radius, 0.0, 0.0};
  }
  return set.center + d * (set.radius / n);
}

Vec3 relaxed_parallel_step(const std::vector<ProjectionSet> &sets, const Vec3 &x,
                           double relaxation) {
  Vec3 mean;
  for (const auto &set : sets) {
    mean += project_onto(set, x) - x;
  }
  mean = mean / static_cast<double>(sets.size());
  return x + mean * relaxation;
}

std::vector<ProjectionSet> build_projection_sets(const std::vector<ToaMeasurement> &measurements,
                                                 const std::vector<AnchorSpec> &anchors) {
  std::vector<ProjectionSet> sets;
  sets.reserve(measurements.size());
  for (const auto &m : measurements) {
    if (!m.los_label) {
      throw InsufficientData("ippa: measurement for anchor '" + m.anchor_id +
                             "' has no LoS/NLoS label");
    }
    sets.push_back(
        {anchor_position(anchors, m.anchor_id), m.range_m, *m.los_label == LosLabel::LoS});
  }
  return sets;
}

double set_distance_sq(const std::vector<ProjectionSet> &sets, const Vec3 &x) {
  double sum = 0.0;
  for (const auto &set : sets) {
    const double d = distance(x, project_onto(set, x));
    sum += d * d;
  }
  return sum;
}

}  // namespace

Vec3 ippa_iterate(const Vec3 &x, const std::vector<ToaMeasurement> &measurements,
                  const std::vector<AnchorSpec> &anchors, double relaxation) {
  return relaxed_parallel_step(build_projection_sets(measurements, anchors), x, relaxation);
}

PositionEstimate ippa(const std::vector<ToaMeasurement> &measurements,
                      const std::vector<AnchorSpec> &anchors, const SolverParams &params) {
  if (measurements.size() < 4) {
    throw TooFewAnchors("ippa needs at least 4 measurements, got " +
                        std::to_string(measurements.size()));
  }
  if (params.ippa_relaxation <= 0.0 || params.ippa_relaxation > 1.0) {
    throw OutOfRange("ippa relaxation must lie in (0, 1]");
  }
  const auto sets = build_projection_sets(measurements, anchors);
  Vec3 x;
  if (params.init == InitStrategy::Provided) {
    x = params.initial_guess;
  } else {
    for (const auto &set : sets) {
      x += set.center;
    }
    x = x / static_cast<double>(sets.size());
  }
  PositionEstimate est;
  est.method_tag = "ippa";
  if (params.residual_history != nullptr) {
    params.residual_history->clear();
    params.residual_history->push_back(set_distance_sq(sets, x));
  }
  for (int iter = 0; iter < params.max_iterations; ++iter) {
    const Vec3 next = relaxed_parallel_step(sets, x, params.ippa_relaxation);
    const double step = distance(next, x);
    x = next;
    est.iterations = iter + 1;
    if (params.residual_history != nullptr) {
      params.residual_history->push_back(set_distance_sq(sets, x));
    }
    if (step < params.step_tolerance_m) {
      est.converged = true;
      break;
    }
  }
  est.position = x;
  est.final_residual = set_distance_sq(sets, x);
  return est;
}

PositionEstimate mechanism_ls(const std::vector<ToaMeasurement> &measurements,
                              const std::vector<AnchorSpec> &anchors, const SceneModel &scene,
                              const SolverParams &) {
  std::vector<LaterationRow> rows;
  rows.reserve(measurements.size());
  for (const auto &m : measurements) {
    if (!m.true_mechanism) {
      throw InsufficientData("mechanism_ls: measurement for anchor '" + m.anchor_id +
                             "' has no mechanism label");
    }
    const Mechanism &mech = *m.true_mechanism;
    Vec3 point = anchor_position(anchors, m.anchor_id);
    switch (mech.kind) {
      case MechanismKind::LineOfSight:
      case MechanismKind::Transmission:
        break;
      case MechanismKind::Reflection:
        for (const auto &panel_id : mech.panel_ids) {
          const WallPanel *panel = scene.find_panel(panel_id);
          if (panel == nullptr) {
            throw UnknownPanel("mechanism_ls: reflection references unknown panel '" +
                               panel_id + "'");
          }
          point = mirror_across(point, panel->origin, panel->normal);
        }
        break;
      default:
        throw InsufficientData(
            "mechanism_ls handles los, transmission and reflection labels only");
    }
    rows.push_back({point, m.range_m});
  }
  PositionEstimate est = linear_lateration(rows, "mech-ls");
  return est;
}

PositionEstimate dnls_known_edges(const std::vector<ToaMeasurement> &measurements,
                                  const std::vector<AnchorSpec> &anchors,
                                  const std::vector<EdgeSegment> &edges,
                                  const SolverParams &params) {
  if (measurements.size() < 3) {
    throw TooFewMeasurements("dnls needs at least 3 diffraction measurements, got " +
                             std::to_string(measurements.size()));
  }
  struct Row {
    Vec3 anchor;
    EdgeSegment edge;
    double range = 0.0;
  };
  std::vector<Row> data;
  std::vector<LaterationRow> anchor_rows;
  data.reserve(measurements.size());
  for (const auto &m : measurements) {
    if (!m.edge_id) {
      throw InsufficientData("dnls: measurement for anchor '" + m.anchor_id +
                             "' has no edge association");
    }
    const auto edge = std::find_if(edges.begin(), edges.end(),
                                   [&](const EdgeSegment &e) { return e.id == *m.edge_id; });
    if (edge == edges.end()) {
      throw IndexError("dnls: unknown edge id '" + *m.edge_id + "'");
    }
    const Vec3 a = anchor_position(anchors, m.anchor_id);
    data.push_back({a, *edge, m.range_m});
    anchor_rows.push_back({a, m.range_m});
  }

  const LmModel model = [&data](const Eigen::VectorXd &x, Eigen::VectorXd &residual,
                                Eigen::MatrixXd &jacobian) {
    const Vec3 p{x(0), x(1), x(2)};
    for (std::size_t i = 0; i < data.size(); ++i) {
      const DiffractionSolution sol = diffraction_point(data[i].anchor, p, data[i].edge);
      const Vec3 d = p - sol.point;
      const double n = d.norm();
      if (n < 1e-12) {
        throw DegenerateGeometry("dnls: iterate landed on a diffraction point");
      }
      residual(static_cast<Eigen::Index>(i)) = sol.path_length_m - data[i].range;
      jacobian(static_cast<Eigen::Index>(i), 0) = d.x / n;
      jacobian(static_cast<Eigen::Index>(i), 1) = d.y / n;
      jacobian(static_cast<Eigen::Index>(i), 2) = d.z / n;
    }
  };

  const Vec3 centroid = rows_centroid(anchor_rows);
  const double spread = rows_spread(anchor_rows, centroid);
  const Vec3 start = params.init == InitStrategy::Provided ? params.initial_guess : centroid;
  Eigen::VectorXd x0(3);
  x0 << start.x, start.y, start.z;
  const LmAttempt attempt = solve_with_multistart(model, x0, static_cast<int>(data.size()),
                                                  params, start, spread);
  publish_history(params, attempt);
  PositionEstimate est;
  est.position = {attempt.x(0), attempt.x(1), attempt.x(2)};
  est.method_tag = "dnls-map";
  est.iterations = attempt.iterations;
  est.final_residual = attempt.cost;
  est.converged = attempt.converged;
  return est;
}

DnlsFacadeResult dnls_facade(const std::vector<ToaMeasurement> &measurements,
                             const std::vector<AnchorSpec> &anchors, const WallPanel &facade,
                             const std::vector<int> &edge_groups, const SolverParams &params) {
  const std::size_t m_count = measurements.size();
  if (edge_groups.size() != m_count) {
    throw ParseError("dnls_facade: edge_groups must match measurement count");
  }
  int group_count = 0;
  for (int g : edge_groups) {
    if (g < 0) {
      throw ParseError("dnls_facade: negative group index");
    }
    group_count = std::max(group_count, g + 1);
  }
  std::vector<bool> seen(group_count, false);
  for (int g : edge_groups) {
    seen[static_cast<std::size_t>(g)] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ParseError("dnls_facade: group indexes must be contiguous from 0");
  }
  if (m_count < static_cast<std::size_t>(3 + group_count)) {
    throw Underdetermined("dnls_facade needs at least 3 + " + std::to_string(group_count) +
                          " measurements, got " + std::to_string(m_count));
  }

  const double facade_len = facade.span_u.norm();
  const Vec3 along = facade.span_u / facade_len;
  const Vec3 up = facade.span_v.normalized();
  if (std::abs(along.z) > 1e-9 || std::abs(up.z - 1.0) > 1e-9) {
    throw GeometryError("dnls_facade: facade needs a horizontal u-span and a vertical v-span");
  }

  std::vector<LaterationRow> anchor_rows;
  std::vector<Vec3> anchor_points(m_count);
  std::vector<double> ranges(m_count);
  for (std::size_t i = 0; i < m_count; ++i) {
    anchor_points[i] = anchor_position(anchors, measurements[i].anchor_id);
    ranges[i] = measurements[i].range_m;
    anchor_rows.push_back({anchor_points[i], ranges[i]});
  }

  const Vec3 origin = facade.origin;
  const LmModel model = [&](const Eigen::VectorXd &x, Eigen::VectorXd &residual,
                            Eigen::MatrixXd &jacobian) {
    jacobian.setZero();
    const Vec3 p{x(0), x(1), x(2)};
    for (std::size_t i = 0; i < m_count; ++i) {
      const int g = edge_groups[i];
      const double t = x(3 + g);
      const Vec3 q = origin + along * t + Vec3{0.0, 0.0, p.z - origin.z};
      const Vec3 d1 = q - anchor_points[i];
      const Vec3 d2 = p - q;
      const double n1 = d1.norm();
      const double n2 = d2.norm();
      if (n1 < 1e-12 || n2 < 1e-12) {
        throw DegenerateGeometry("dnls_facade: degenerate leg during iteration");
      }
      const Vec3 u1 = d1 / n1;
      const Vec3 u2 = d2 / n2;
      const auto row = static_cast<Eigen::Index>(i);
      residual(row) = (n1 + n2) - ranges[i];
      jacobian(row, 0) = u2.x;
      jacobian(row, 1) = u2.y;
      jacobian(row, 2) = u1.z;
      jacobian(row, 3 + g) = (u1 - u2).dot(along);
    }
  };

  const Vec3 centroid = rows_centroid(anchor_rows);
  const double spread = rows_spread(anchor_rows, centroid);
  const Vec3 start = params.init == InitStrategy::Provided ? params.initial_guess : centroid;
  Eigen::VectorXd x0(3 + group_count);
  x0(0) = start.x;
  x0(1) = start.y;
  x0(2) = start.z;
  for (int g = 0; g < group_count; ++g) {
    x0(3 + g) = facade_len * static_cast<double>(g + 1) / static_cast<double>(group_count + 1);
  }
  const LmAttempt attempt =
      solve_with_multistart(model, x0, static_cast<int>(m_count), params, start, spread);
  publish_history(params, attempt);
  DnlsFacadeResult result;
  result.estimate.position = {attempt.x(0), attempt.x(1), attempt.x(2)};
  result.estimate.method_tag = "dnls-facade";
  result.estimate.iterations = attempt.iterations;
  result.estimate.final_residual = attempt.cost;
  result.estimate.converged = attempt.converged;
  result.edge_coordinates.resize(group_count);
  for (int g = 0; g < group_count; ++g) {
    result.edge_coordinates[static_cast<std::size_t>(g)] = attempt.x(3 + g);
  }
  return result;
}

int estimate_floor(const PositionEstimate &estimate, const BuildingModel &building) {
  return building.floor_of(estimate.position.z);
}

}  // namespace ips
