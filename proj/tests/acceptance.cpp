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
//
// Acceptance suite: nine end-to-end criteria, one [PASS]/[FAIL] line each.
// Tolerances and sample counts are pinned here; the exit code is the number
// of failed criteria. Known measured shortfalls are reported, never masked.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ips/bounds.hpp"
#include "ips/channel.hpp"
#include "ips/harness.hpp"
#include "ips/locate.hpp"
#include "ips/raypath.hpp"
#include "ips/rng.hpp"
#include "ips/scene.hpp"
#include "ips/slp.hpp"

using namespace ips;

namespace {

// ---- pinned tolerances and budgets ------------------------------------------------

constexpr int kC1Configs = 10000;
constexpr double kC1RelTol = 1e-9;
constexpr double kC1BudgetS = 10.0;

constexpr int kC2ChecksPerMechanism = 1000;
constexpr double kC2RelTol = 1e-5;
constexpr double kC2Step = 1e-5;

constexpr double kC3Tol = 1e-5;

constexpr double kC4PebIdentityTol = 1e-12;
constexpr double kC4MonotoneSlack = 1e-12;
constexpr double kC4PointwiseSlack = 1e-12;

constexpr double kC5BudgetS = 120.0;

constexpr int kC6Trials = 50;
constexpr double kC6Sigma = 0.1;
constexpr double kC6RequiredFraction = 0.95;
constexpr double kC6BudgetS = 300.0;

constexpr double kC7Tol = 1e-4;
constexpr double kC7FejerSlack = 1e-12;

constexpr int kC8Sessions = 100;
constexpr int kC8OffsetPairs = 10000;

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

SceneModel default_scene(std::uint64_t seed = 1) {
  return build_scene(generate_scene(SceneGenParams{}, seed));
}

ToaMeasurement make_meas(const std::string &anchor_id, double range) {
  ToaMeasurement m;
  m.anchor_id = anchor_id;
  m.range_m = range;
  m.sigma_m = 0.0;
  return m;
}

// ---- C1: closed-form diffraction vs numeric minimization ---------------------------

double golden_section_path(const Vec3 &anchor, const Vec3 &node, const EdgeSegment &edge) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const auto length_at = [&](double t) {
    const Vec3 q = edge.start + (edge.end - edge.start) * t;
    return distance(anchor, q) + distance(q, node);
  };
  double lo = 0.0;
  double hi = 1.0;
  double t1 = hi - phi * (hi - lo);
  double t2 = lo + phi * (hi - lo);
  double f1 = length_at(t1);
  double f2 = length_at(t2);
  for (int i = 0; i < 150; ++i) {
    if (f1 < f2) {
      hi = t2;
      t2 = t1;
      f2 = f1;
      t1 = hi - phi * (hi - lo);
      f1 = length_at(t1);
    } else {
      lo = t1;
      t1 = t2;
      f1 = f2;
      t2 = lo + phi * (hi - lo);
      f2 = length_at(t2);
    }
  }
  return length_at(0.5 * (lo + hi));
}

double point_line_distance(const Vec3 &p, const EdgeSegment &edge) {
  const Vec3 u = edge.direction();
  const Vec3 d = p - edge.start;
  return (d - u * d.dot(u)).norm();
}

bool criterion_1(std::string &detail) {
  Timer timer;
  Rng rng = Rng::derive(2024, "acc-c1");
  double worst_rel = 0.0;
  double worst_unfold = 0.0;
  int unclamped = 0;
  for (int i = 0; i < kC1Configs; ++i) {
    EdgeSegment edge;
    edge.id = "edge";
    Vec3 anchor;
    Vec3 node;
    for (;;) {
      edge.start = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
      const Vec3 dir{rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
      if (dir.norm() < 1e-6) {
        continue;
      }
      edge.end = edge.start + dir.normalized() * rng.uniform(0.5, 10.0);
      anchor = {rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-15, 15)};
      node = {rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-15, 15)};
      if (point_line_distance(anchor, edge) > 1e-3 && point_line_distance(node, edge) > 1e-3) {
        break;
      }
    }

    const DiffractionSolution sol = diffraction_point(anchor, node, edge);
    const double oracle = golden_section_path(anchor, node, edge);
    worst_rel = std::max(worst_rel, std::abs(sol.path_length_m - oracle) / oracle);

    if (!sol.clamped) {
      ++unclamped;
      const Vec3 u = edge.direction();
      const double s_a = (anchor - edge.start).dot(u);
      const double s_n = (node - edge.start).dot(u);
      const double r_a = point_line_distance(anchor, edge);
      const double r_n = point_line_distance(node, edge);
      const double unfolded = std::hypot(r_a + r_n, s_a - s_n);
      worst_unfold =
          std::max(worst_unfold, std::abs(sol.path_length_m - unfolded) / unfolded);
    }
  }
  const double elapsed = timer.seconds();
  detail = "max_rel=" + fmt(worst_rel) + " over " + std::to_string(kC1Configs) +
           " configs, unfolding max_rel=" + fmt(worst_unfold) + " over " +
           std::to_string(unclamped) + " unclamped, runtime=" + fmt(elapsed) + "s (budget " +
           fmt(kC1BudgetS) + "s)";
  return worst_rel <= kC1RelTol && worst_unfold <= kC1RelTol && unclamped > kC1Configs / 10 &&
         elapsed < kC1BudgetS;
}

// ---- C2: envelope gradients vs central finite differences --------------------------

Vec3 image_anchor(const Mpc &mpc, const SceneModel &scene) {
  Vec3 image = mpc.vertices.front();
  for (const auto &panel_id : mpc.mechanism.panel_ids) {
    const WallPanel *panel = scene.find_panel(panel_id);
    image = mirror_across(image, panel->origin, panel->normal);
  }
  return image;
}

bool criterion_2(std::string &detail) {
  const SceneModel scene = default_scene();
  Rng rng = Rng::derive(2024, "acc-c2");

  std::map<MechanismKind, int> checks;
  std::map<MechanismKind, double> worst;
  int attempts = 0;
  while (attempts < 100000) {
    ++attempts;
    const bool done = checks[MechanismKind::Transmission] >= kC2ChecksPerMechanism &&
                      checks[MechanismKind::Reflection] >= kC2ChecksPerMechanism &&
                      checks[MechanismKind::Diffraction] >= kC2ChecksPerMechanism;
    if (done) {
      break;
    }
    const Vec3 node{rng.uniform(0.4, 19.6), rng.uniform(0.4, 29.6), rng.uniform(0.4, 11.6)};
    const auto &anchor = scene.anchors[static_cast<std::size_t>(
        rng.uniform(0.0, static_cast<double>(scene.anchors.size())))];

    bool seen_transmission = false;
    bool seen_reflection = false;
    bool seen_diffraction = false;
    for (const auto &mpc : enumerate_mpcs(anchor, node, scene)) {
      const MechanismKind kind = mpc.mechanism.kind;
      if (kind == MechanismKind::Transmission && (seen_transmission || checks[kind] >= kC2ChecksPerMechanism)) {
        continue;
      }
      if (kind == MechanismKind::Reflection && (seen_reflection || checks[kind] >= kC2ChecksPerMechanism)) {
        continue;
      }
      if (kind == MechanismKind::Diffraction && (seen_diffraction || checks[kind] >= kC2ChecksPerMechanism)) {
        continue;
      }

      // Path length as a function of the node position alone, recomputed from
      // the geometry at the probe points.
      std::function<double(const Vec3 &)> length_at;
      if (kind == MechanismKind::Transmission) {
        const Vec3 a = anchor.position;
        length_at = [a](const Vec3 &p) { return distance(a, p); };
        seen_transmission = true;
      } else if (kind == MechanismKind::Reflection) {
        const Vec3 image = image_anchor(mpc, scene);
        length_at = [image](const Vec3 &p) { return distance(image, p); };
        seen_reflection = true;
      } else if (kind == MechanismKind::Diffraction) {
        const auto edge = scene.find_edge(mpc.mechanism.edge_id);
        if (!edge) {
          continue;
        }
        const Vec3 a = anchor.position;
        const EdgeSegment e = *edge;
        const bool clamped = diffraction_point(a, node, e).clamped;
        const Vec3 center_point = diffraction_point(a, node, e).point;
        // Exclude probes whose stencil straddles a clamp transition, where
        // the envelope gradient is non-smooth by construction.
        bool transition = false;
        for (int axis = 0; axis < 3 && !transition; ++axis) {
          for (double sign : {-1.0, 1.0}) {
            Vec3 p = node;
            (axis == 0 ? p.x : axis == 1 ? p.y : p.z) += sign * kC2Step;
            const auto probe = diffraction_point(a, p, e);
            if (probe.clamped != clamped || distance(probe.point, center_point) > 1e-3) {
              transition = true;
              break;
            }
          }
        }
        if (transition) {
          continue;
        }
        length_at = [a, e](const Vec3 &p) { return diffraction_point(a, p, e).path_length_m; };
        seen_diffraction = true;
      } else {
        continue;
      }

      const Vec3 analytic = path_gradient(mpc, node);
      Vec3 fd;
      for (int axis = 0; axis < 3; ++axis) {
        Vec3 hi = node;
        Vec3 lo = node;
        (axis == 0 ? hi.x : axis == 1 ? hi.y : hi.z) += kC2Step;
        (axis == 0 ? lo.x : axis == 1 ? lo.y : lo.z) -= kC2Step;
        const double d = (length_at(hi) - length_at(lo)) / (2.0 * kC2Step);
        (axis == 0 ? fd.x : axis == 1 ? fd.y : fd.z) = d;
      }
      const double rel = distance(analytic, fd) / std::max(fd.norm(), 1e-12);
      worst[kind] = std::max(worst[kind], rel);
      checks[kind] += 1;
    }
  }

  detail = "rel error transmission=" + fmt(worst[MechanismKind::Transmission]) + " (" +
           std::to_string(checks[MechanismKind::Transmission]) + "), reflection=" +
           fmt(worst[MechanismKind::Reflection]) + " (" +
           std::to_string(checks[MechanismKind::Reflection]) + "), diffraction=" +
           fmt(worst[MechanismKind::Diffraction]) + " (" +
           std::to_string(checks[MechanismKind::Diffraction]) + ")";
  bool pass = true;
  for (const auto kind :
       {MechanismKind::Transmission, MechanismKind::Reflection, MechanismKind::Diffraction}) {
    pass = pass && checks[kind] >= kC2ChecksPerMechanism && worst[kind] <= kC2RelTol;
  }
  return pass;
}

// ---- C3: zero-noise exact recovery --------------------------------------------------

bool criterion_3(std::string &detail) {
  const SceneModel scene = default_scene();
  double err_lls = -1.0;
  double err_mech = -1.0;
  double err_dnls = -1.0;
  double err_facade = -1.0;

  {
    const std::vector<AnchorSpec> anchors = {
        {"a0", {0, 0, 0}}, {"a1", {10, 0, 0}}, {"a2", {0, 10, 0}}, {"a3", {0, 0, 10}}};
    const Vec3 node{3, 4, 5};
    std::vector<ToaMeasurement> meas;
    for (const auto &a : anchors) {
      meas.push_back(make_meas(a.id, distance(a.position, node)));
    }
    err_lls = distance(lls(meas, anchors).position, node);
  }

  {
    const Vec3 node{6, 10, 4.5};
    std::vector<ToaMeasurement> meas;
    for (std::size_t i = 0; i < 2; ++i) {
      ToaMeasurement m = make_meas(scene.anchors[i].id, distance(scene.anchors[i].position, node));
      Mechanism mech;
      mech.kind = MechanismKind::LineOfSight;
      m.true_mechanism = mech;
      meas.push_back(std::move(m));
    }
    for (std::size_t i = 2; i < 4; ++i) {
      const auto paths = reflection_paths(scene.anchors[i], node, scene, 1);
      if (paths.empty()) {
        detail = "no reflection path for anchor " + scene.anchors[i].id;
        return false;
      }
      ToaMeasurement m = make_meas(scene.anchors[i].id, paths.front().path_length_m);
      m.true_mechanism = paths.front().mechanism;
      meas.push_back(std::move(m));
    }
    err_mech = distance(mechanism_ls(meas, scene.anchors, scene).position, node);
  }

  {
    const Vec3 node{10, 15, 7.5};
    const auto floor_edges = scene.diffracting_edges_for_floor(2);
    std::vector<EdgeSegment> edges;
    for (const auto &e : floor_edges) {
      if (edges.empty() && e.is_vertical()) {
        edges.push_back(e);
      } else if (edges.size() == 1 && !e.is_vertical() &&
                 scene.find_window_of_edge(e.id)->facade_id !=
                     scene.find_window_of_edge(edges[0].id)->facade_id) {
        edges.push_back(e);
      }
    }
    std::vector<ToaMeasurement> meas;
    for (const auto &anchor : scene.anchors) {
      for (const auto &edge : edges) {
        ToaMeasurement m =
            make_meas(anchor.id, diffraction_point(anchor.position, node, edge).path_length_m);
        Mechanism mech;
        mech.kind = MechanismKind::Diffraction;
        mech.edge_id = edge.id;
        m.true_mechanism = mech;
        m.edge_id = edge.id;
        meas.push_back(std::move(m));
      }
    }
    SolverParams params;
    params.init = InitStrategy::Provided;
    params.initial_guess = {10, 15, 6};
    err_dnls = distance(dnls_known_edges(meas, scene.anchors, edges, params).position, node);
  }

  {
    const WallPanel *facade = scene.find_panel("facade:west");
    const Vec3 node{4, 12, 7.5};
    const std::vector<double> t_true = {10.0, 20.0};
    std::vector<ToaMeasurement> meas;
    std::vector<int> groups;
    for (std::size_t g = 0; g < t_true.size(); ++g) {
      for (const auto &anchor : scene.anchors) {
        const Vec3 u = facade->span_u.normalized();
        Vec3 q = facade->origin + u * t_true[g];
        q.z = node.z;
        meas.push_back(
            make_meas(anchor.id, distance(anchor.position, q) + distance(q, node)));
        groups.push_back(static_cast<int>(g));
      }
    }
    err_facade =
        distance(dnls_facade(meas, scene.anchors, *facade, groups).estimate.position, node);
  }

  detail = "errors: lls=" + fmt(err_lls) + " mech_ls=" + fmt(err_mech) + " dnls_edges=" +
           fmt(err_dnls) + " dnls_facade=" + fmt(err_facade) + " (tol " + fmt(kC3Tol) + ")";
  return err_lls <= kC3Tol && err_mech <= kC3Tol && err_dnls <= kC3Tol && err_facade <= kC3Tol;
}

// ---- C4: bound suite ---------------------------------------------------------------

BoundMeasurement los_bound_meas(const Vec3 &anchor, const Vec3 &node, double sigma) {
  Mpc mpc;
  mpc.anchor_id = "a";
  mpc.mechanism.kind = MechanismKind::LineOfSight;
  mpc.vertices = {anchor, node};
  mpc.path_length_m = distance(anchor, node);
  return {mpc, sigma};
}

bool criterion_4(std::string &detail) {
  Rng rng = Rng::derive(2024, "acc-c4");

  double worst_asym = 0.0;
  double worst_neg_eig = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Vec3 node{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    std::vector<BoundMeasurement> meas;
    const int count = 4 + (i % 4);
    for (int k = 0; k < count; ++k) {
      Vec3 a{rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30)};
      if (distance(a, node) < 1.0) {
        a.x += 5.0;
      }
      meas.push_back(los_bound_meas(a, node, rng.uniform(0.05, 2.0)));
    }
    const Fim3 information = fim(meas, node);
    worst_asym = std::max(worst_asym, (information - information.transpose()).norm());
    Eigen::SelfAdjointEigenSolver<Fim3> eig(information);
    worst_neg_eig = std::min(worst_neg_eig, eig.eigenvalues().minCoeff());
  }

  const Vec3 origin{0, 0, 0};
  const std::vector<BoundMeasurement> axes = {los_bound_meas({-9, 0, 0}, origin, 1.0),
                                              los_bound_meas({0, -5, 0}, origin, 1.0),
                                              los_bound_meas({0, 0, -7}, origin, 1.0)};
  const double identity_err = std::abs(peb(fim(axes, origin)) - std::sqrt(3.0));

  int monotone_violations = 0;
  for (int i = 0; i < 200; ++i) {
    const Vec3 node{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    std::vector<BoundMeasurement> meas;
    for (int k = 0; k < 4; ++k) {
      meas.push_back(los_bound_meas({rng.uniform(-30, 30), rng.uniform(-30, 30),
                                     rng.uniform(-30, 30)},
                                    node, rng.uniform(0.05, 2.0)));
    }
    double before = 0.0;
    try {
      before = peb(fim(meas, node));
    } catch (const Error &) {
      continue;
    }
    meas.push_back(los_bound_meas({rng.uniform(-30, 30), rng.uniform(-30, 30),
                                   rng.uniform(-30, 30)},
                                  node, rng.uniform(0.05, 2.0)));
    const double after = peb(fim(meas, node));
    if (after > before + kC4MonotoneSlack) {
      ++monotone_violations;
    }
  }

  const SceneModel scene = default_scene();
  const auto nodes = grid_nodes(scene.building, GridSpec{2.0, 1.0});
  int pointwise_violations = 0;
  int finite_pairs = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const BoundsRow row = compute_bounds(scene, nodes[i], static_cast<int>(i));
    if (std::isfinite(row.peb_1diff_m) && std::isfinite(row.peb_multi_m)) {
      ++finite_pairs;
      if (row.peb_multi_m > row.peb_1diff_m + kC4PointwiseSlack) {
        ++pointwise_violations;
      }
    }
  }

  detail = "max_asym=" + fmt(worst_asym) + " min_eig=" + fmt(worst_neg_eig) +
           " |peb-sqrt3|=" + fmt(identity_err) + " monotone_violations=" +
           std::to_string(monotone_violations) + " pointwise_violations=" +
           std::to_string(pointwise_violations) + "/" + std::to_string(finite_pairs);
  return worst_asym <= 1e-12 && worst_neg_eig >= -1e-10 &&
         identity_err <= kC4PebIdentityTol && monotone_violations == 0 &&
         pointwise_violations == 0;
}

// ---- C5: band-dependent first-arrival census ----------------------------------------

bool criterion_5(std::string &detail) {
  Timer timer;
  std::map<std::string, double> fraction;
  for (const char *band : {"FR1", "FR2", "FR3"}) {
    auto config = generate_scene(SceneGenParams{}, 1);
    config["band"] = {{"name", band}};
    const SceneModel scene = build_scene(config);
    fraction[band] = band_fap_stats(scene, GridSpec{1.0, 1.0}).diffraction_fraction();
  }
  const double elapsed = timer.seconds();
  detail = "diffraction FAP fraction FR1=" + fmt(fraction["FR1"]) + " FR2=" +
           fmt(fraction["FR2"]) + " FR3=" + fmt(fraction["FR3"]) + ", 1 m grid, runtime=" +
           fmt(elapsed) + "s (budget " + fmt(kC5BudgetS) + "s)";
  return fraction["FR1"] < 0.5 && fraction["FR2"] > 0.5 && fraction["FR3"] > 0.5 &&
         elapsed < kC5BudgetS;
}

// ---- C6: ordering reproduction -------------------------------------------------------

double median_err(const MethodResults &mr) {
  std::vector<double> errs;
  for (const auto &s : mr.samples) {
    errs.push_back(s.err_3d_m);
  }
  return sample_quantile(errs, 0.5);
}

double floor_accuracy(const MethodResults &mr) {
  if (mr.samples.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::size_t hits = 0;
  for (const auto &s : mr.samples) {
    hits += (s.floor_est == s.floor_true) ? 1u : 0u;
  }
  return static_cast<double>(hits) / static_cast<double>(mr.samples.size());
}

bool criterion_6(std::string &detail) {
  Timer timer;
  nlohmann::json config_json = {
      {"methods", {"unaware_lls", "unaware_ippa", "aware_dnls_map", "aware_dnls_facade"}},
      {"trials", kC6Trials},
      {"seed", 1},
      {"grid", {{"spacing_m", 2.0}, {"margin_m", 1.0}}},
      {"loss_overrides", {{"toa_sigma_m", kC6Sigma}}},
  };
  const auto config = parse_experiment_config(config_json);
  const auto results = run_experiment(config);

  const MethodResults &lls_r = results.methods[0];
  const MethodResults &ippa_r = results.methods[1];
  const MethodResults &map_r = results.methods[2];
  const MethodResults &facade_r = results.methods[3];

  const double med_lls = median_err(lls_r);
  const double med_ippa = median_err(ippa_r);
  const double med_map = median_err(map_r);
  const bool ordering_ok = med_map < med_ippa && med_ippa < med_lls;

  // Per-node paired RMSE against the single-diffraction bound. A finite-trial
  // RMSE estimate carries ~1/sqrt(2 trials) relative noise, so the comparison
  // allows two of those standard errors. Nodes are eligible when the bound is
  // finite, the bound geometry is not near a clamp transition, and at least
  // half the trial budget produced a fix.
  std::map<int, std::pair<double, int>> sq_err_by_node;
  for (const auto &s : map_r.samples) {
    auto &acc = sq_err_by_node[s.node_index];
    acc.first += s.err_3d_m * s.err_3d_m;
    acc.second += 1;
  }
  const double slack = 1.0 - 2.0 / std::sqrt(2.0 * kC6Trials);
  int eligible = 0;
  int satisfied = 0;
  for (const auto &[node_index, acc] : sq_err_by_node) {
    if (acc.second < kC6Trials / 2) {
      continue;
    }
    const BoundsRow &row = results.bounds[static_cast<std::size_t>(node_index)];
    if (!std::isfinite(row.peb_1diff_m) || row.clamp_flag) {
      continue;
    }
    ++eligible;
    const double rmse = std::sqrt(acc.first / acc.second);
    if (rmse >= slack * row.peb_1diff_m) {
      ++satisfied;
    }
  }
  const double bound_fraction =
      eligible == 0 ? 0.0 : static_cast<double>(satisfied) / static_cast<double>(eligible);
  const bool bound_ok = bound_fraction >= kC6RequiredFraction;

  const double floor_lls = floor_accuracy(lls_r);
  const double floor_map = floor_accuracy(map_r);
  const double floor_facade = floor_accuracy(facade_r);
  const bool floor_ok = floor_map > floor_lls && floor_facade > floor_lls;

  // Companion ordering on the bound medians, reported for context.
  std::vector<double> peb1;
  std::vector<double> pebm;
  for (const auto &row : results.bounds) {
    if (std::isfinite(row.peb_1diff_m)) {
      peb1.push_back(row.peb_1diff_m);
    }
    if (std::isfinite(row.peb_multi_m)) {
      pebm.push_back(row.peb_multi_m);
    }
  }
  const double med_peb1 = sample_quantile(peb1, 0.5);
  const double med_pebm = sample_quantile(pebm, 0.5);

  const double elapsed = timer.seconds();
  std::ostringstream os;
  os << "medians map=" << fmt(med_map) << " < ippa=" << fmt(med_ippa) << " < lls="
     << fmt(med_lls) << (ordering_ok ? " (ok)" : " (VIOLATED)") << "; peb medians multi="
     << fmt(med_pebm) << " <= 1diff=" << fmt(med_peb1) << " <= map median; rmse>=" << fmt(slack)
     << "*peb_1diff at " << fmt(100.0 * bound_fraction) << "% of " << eligible
     << " eligible nodes (need >= 95%" << (bound_ok ? ", ok" : ", VIOLATED") << ")"
     << "; floor accuracy map=" << fmt(floor_map) << " facade=" << fmt(floor_facade)
     << " vs lls=" << fmt(floor_lls) << (floor_ok ? " (ok)" : " (facade VIOLATED)")
     << "; nodes=" << results.nodes.size() << " trials=" << kC6Trials << " runtime="
     << fmt(elapsed) << "s";
  detail = os.str();
  return ordering_ok && bound_ok && floor_ok && elapsed < kC6BudgetS;
}

// ---- C7: projection estimator properties ---------------------------------------------

bool criterion_7(std::string &detail) {
  const std::vector<AnchorSpec> anchors = {
      {"a0", {0, 0, 0}}, {"a1", {10, 0, 0}}, {"a2", {0, 10, 0}}, {"a3", {0, 0, 10}}};
  const Vec3 node{3, 4, 5};
  std::vector<ToaMeasurement> meas;
  for (const auto &a : anchors) {
    ToaMeasurement m = make_meas(a.id, distance(a.position, node));
    m.los_label = LosLabel::LoS;
    meas.push_back(std::move(m));
  }
  const double exact_err = distance(ippa(meas, anchors).position, node);

  // On consistent NLoS-ball instances the truth lies in every ball, so the
  // relaxed parallel projection is Fejer monotone with respect to it: the
  // distance from the iterate to the feasible point never grows.
  Rng rng = Rng::derive(2024, "acc-c7");
  int violations = 0;
  double worst_growth = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 truth{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(2, 8)};
    std::vector<AnchorSpec> set;
    std::vector<ToaMeasurement> balls;
    const int count = 5 + (i % 3);
    for (int k = 0; k < count; ++k) {
      AnchorSpec a{"b" + std::to_string(k),
                   {rng.uniform(-25, 25), rng.uniform(-25, 25), rng.uniform(0, 20)},
                   0.0,
                   0.0};
      ToaMeasurement m = make_meas(a.id, distance(a.position, truth) + rng.uniform(0.0, 5.0));
      m.los_label = LosLabel::NLoS;
      set.push_back(std::move(a));
      balls.push_back(std::move(m));
    }
    Vec3 x{rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-10, 30)};
    double dist_prev = distance(x, truth);
    for (int it = 0; it < 200; ++it) {
      x = ippa_iterate(x, balls, set, 1.0);
      const double dist_now = distance(x, truth);
      if (dist_now > dist_prev + kC7FejerSlack) {
        ++violations;
        worst_growth = std::max(worst_growth, dist_now - dist_prev);
      }
      dist_prev = dist_now;
    }
  }

  detail = "all-LoS error=" + fmt(exact_err) + " (tol " + fmt(kC7Tol) + "), Fejer violations=" +
           std::to_string(violations) + " over 100 instances x 200 iterations" +
           (violations > 0 ? " worst_growth=" + fmt(worst_growth) : "");
  return exact_err <= kC7Tol && violations == 0;
}

// ---- C8: session conformance ---------------------------------------------------------

bool criterion_8(std::string &detail) {
  Rng rng = Rng::derive(2024, "acc-c8");
  int canonical = 0;
  int accurate = 0;
  int zero_noise_sessions = 0;
  for (int i = 0; i < kC8Sessions; ++i) {
    const Vec3 target{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(1, 6)};
    std::vector<SlpParticipant> participants = {
        {"client", SlpRole::ClientUe, {0, -10, 0}, rng.uniform(-1e-3, 1e-3)},
        {"target", SlpRole::TargetUe, target, rng.uniform(-1e-3, 1e-3)},
        {"lmf", SlpRole::ReferenceAnchorLmf,
         {rng.uniform(-20, -10), rng.uniform(-20, -10), rng.uniform(0, 2)},
         rng.uniform(-1e-3, 1e-3)},
    };
    const int extra = 3 + (i % 3);
    for (int k = 0; k < extra; ++k) {
      participants.push_back({"anchor:" + std::to_string(k), SlpRole::AnchorUe,
                              {rng.uniform(10, 25), rng.uniform(-20, 25),
                               rng.uniform(0.5, 14.0) + 4.0 * k},
                              rng.uniform(-1e-3, 1e-3)});
    }
    SessionConfig config;
    config.seed = static_cast<std::uint64_t>(1000 + i);
    config.noise_sigma_m = (i % 2 == 0) ? 0.0 : 0.01;
    config.initial_selection = i % 3;
    const auto result = run_session(participants, config);
    canonical += trace_is_canonical(result.trace) ? 1 : 0;
    if (config.noise_sigma_m == 0.0) {
      ++zero_noise_sessions;
      accurate += distance(result.report.position, target) <= 1e-6 ? 1 : 0;
    }
  }

  Rng offsets = Rng::derive(2024, "acc-c8-rtt");
  Rng noise(1);
  double worst = 0.0;
  for (int i = 0; i < kC8OffsetPairs; ++i) {
    const double a = offsets.uniform(-10e-3, 10e-3);
    const double b = offsets.uniform(-10e-3, 10e-3);
    const double d = offsets.uniform(0.0, 500.0);
    worst = std::max(worst, std::abs(rtt_range(a, b, d, 80e-6, 0.0, noise) - d));
  }

  bool denied_ok = false;
  std::vector<SlpParticipant> participants = {
      {"client", SlpRole::ClientUe, {0, -10, 0}, 0.0},
      {"target", SlpRole::TargetUe, {3, 4, 5}, 0.0},
      {"lmf", SlpRole::ReferenceAnchorLmf, {0, 0, 0}, 0.0},
      {"anchor:1", SlpRole::AnchorUe, {10, 0, 0}, 0.0},
      {"anchor:2", SlpRole::AnchorUe, {0, 10, 0}, 0.0},
      {"anchor:3", SlpRole::AnchorUe, {0, 0, 10}, 0.0},
  };
  SessionConfig denied;
  denied.authorize = false;
  try {
    (void)run_session(participants, denied);
  } catch (const SessionFailed &failure) {
    denied_ok = std::string(failure.what()).find("denied") != std::string::npos;
  }

  detail = "canonical traces " + std::to_string(canonical) + "/" + std::to_string(kC8Sessions) +
           ", exact zero-noise fixes " + std::to_string(accurate) + "/" +
           std::to_string(zero_noise_sessions) + ", rtt worst offset leak=" + fmt(worst) +
           " over " + std::to_string(kC8OffsetPairs) + " pairs, denial -> SessionFailed=" +
           (denied_ok ? "yes" : "no");
  return canonical == kC8Sessions && accurate == zero_noise_sessions && worst == 0.0 &&
         denied_ok;
}

// ---- C9: experiment determinism ------------------------------------------------------

std::string slurp(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool criterion_9(std::string &detail) {
  nlohmann::json config_json = {
      {"methods", {"unaware_lls", "aware_dnls_map"}},
      {"trials", 2},
      {"seed", 5},
      {"grid", {{"spacing_m", 4.0}, {"margin_m", 1.0}}},
  };
  const auto config = parse_experiment_config(config_json);

  const auto base = std::filesystem::temp_directory_path() / "ips-acceptance-c9";
  std::filesystem::remove_all(base);
  const char *names[] = {"errors.csv", "cdf.csv", "bounds.csv", "summary.csv", "cdf.svg"};

  export_results(run_experiment(config), (base / "a").string());
  export_results(run_experiment(config), (base / "b").string());
  setenv("IPS_THREADS", "1", 1);
  export_results(run_experiment(config), (base / "serial").string());
  setenv("IPS_THREADS", "7", 1);
  export_results(run_experiment(config), (base / "parallel").string());
  unsetenv("IPS_THREADS");

  int mismatches = 0;
  for (const char *name : names) {
    const std::string reference = slurp(base / "a" / name);
    for (const char *run : {"b", "serial", "parallel"}) {
      if (slurp(base / run / name) != reference) {
        ++mismatches;
      }
    }
  }
  detail = "15 file comparisons across rerun/serial/parallel, mismatches=" +
           std::to_string(mismatches);
  return mismatches == 0;
}

}  // namespace

int main() {
  struct Entry {
    const char *name;
    bool (*fn)(std::string &);
  };
  const Entry entries[] = {
      {"C1 diffraction closed form matches 1-D numeric minimization", criterion_1},
      {"C2 envelope path gradients match central finite differences", criterion_2},
      {"C3 zero-noise estimators recover the generating node", criterion_3},
      {"C4 Fisher information and position error bound suite", criterion_4},
      {"C5 diffraction-led first arrivals dominate FR2/FR3 but not FR1", criterion_5},
      {"C6 error orderings, bound tightness and floor accuracy at sigma 0.1", criterion_6},
      {"C7 parallel projection estimator accuracy and Fejer monotonicity", criterion_7},
      {"C8 session protocol conformance and exact RTT offset cancellation", criterion_8},
      {"C9 byte-identical experiment reruns under any worker count", criterion_9},
  };

  int failed = 0;
  for (const auto &entry : entries) {
    std::string detail;
    bool ok = false;
    try {
      ok = entry.fn(detail);
    } catch (const std::exception &e) {
      detail = std::string("exception: ") + e.what();
      ok = false;
    }
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << entry.name << ": " << detail << "\n";
    failed += ok ? 0 : 1;
  }
  std::cout << "acceptance: " << (9 - failed) << "/9 criteria passed\n";
  return failed;
}
