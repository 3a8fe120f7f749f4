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
// Command-line front end: scene simulation, localization from measurement
// files, error bounds, Monte Carlo experiments and a sidelink session demo.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ips/bounds.hpp"
#include "ips/channel.hpp"
#include "ips/detail/format.hpp"
#include "ips/harness.hpp"
#include "ips/locate.hpp"
#include "ips/raypath.hpp"
#include "ips/scene.hpp"
#include "ips/slp.hpp"

namespace {

using ips::detail::fmt_g;
using nlohmann::json;

ips::Vec3 parse_node_arg(const std::string &text) {
  ips::Vec3 v;
  char tail = '\0';
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &v.x, &v.y, &v.z, &tail) != 3) {
    throw ips::ParseError("expected --node as 'x,y,z', got '" + text + "'");
  }
  return v;
}

json load_json_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw ips::IoError("cannot open file '" + path + "'");
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw ips::ParseError("file '" + path + "' is not valid JSON: " + std::string(e.what()));
  }
}

ips::SceneModel load_scene_with_band(const std::string &path, const std::string &band) {
  json config = load_json_file(path);
  if (!band.empty()) {
    (void)ips::band_from_name(band);
    config["band"] = {{"name", band}};
  }
  return ips::build_scene(config);
}

std::ofstream open_output(const std::string &path) {
  std::ofstream os(path);
  if (!os) {
    throw ips::IoError("cannot create output file '" + path + "'");
  }
  return os;
}

ips::SolverParams centroid_start(const ips::SceneModel &scene) {
  ips::SolverParams params;
  params.init = ips::InitStrategy::Provided;
  params.initial_guess = {0.5 * scene.building.width_m, 0.5 * scene.building.depth_m,
                          0.5 * scene.building.height_m()};
  return params;
}

// ---- simulate ----------------------------------------------------------------

struct SimulateArgs {
  std::string scene_path;
  std::string band;
  std::uint64_t seed = 1;
  std::string out = "measurements.csv";
  std::string mpc_out;
  std::string node_text;
  double grid_spacing = 4.0;
  double grid_margin = 1.0;
  int trials = 1;
};

int cmd_simulate(const SimulateArgs &args) {
  const ips::SceneModel scene = load_scene_with_band(args.scene_path, args.band);

  std::vector<ips::Vec3> nodes;
  if (!args.node_text.empty()) {
    nodes.push_back(parse_node_arg(args.node_text));
  } else {
    nodes = ips::grid_nodes(scene.building, {args.grid_spacing, args.grid_margin});
  }

  // Labels come from the power classifier so a measurement file round-trips
  // through `localize --method ippa` without extra tooling.
  std::optional<double> threshold;
  {
    std::vector<std::pair<double, ips::LosLabel>> labeled;
    for (const auto &node : nodes) {
      for (const auto &obs : ips::observe_links(scene, node, args.seed)) {
        if (obs.fap && obs.fap->true_mechanism) {
          const auto kind = obs.fap->true_mechanism->kind;
          const bool straight = kind == ips::MechanismKind::LineOfSight ||
                                kind == ips::MechanismKind::Transmission;
          labeled.emplace_back(obs.fap->fap_power_db,
                               straight ? ips::LosLabel::LoS : ips::LosLabel::NLoS);
        }
      }
    }
    try {
      threshold = ips::calibrate_threshold(labeled);
    } catch (const ips::InsufficientData &) {
      threshold = std::nullopt;
    }
  }

  std::vector<ips::MeasurementRecord> records;
  std::vector<ips::Mpc> all_mpcs;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (int trial = 0; trial < args.trials; ++trial) {
      const auto links =
          ips::observe_links(scene, nodes[i], args.seed, static_cast<int>(i), trial);
      for (const auto &obs : links) {
        if (trial == 0 && !args.mpc_out.empty()) {
          all_mpcs.insert(all_mpcs.end(), obs.mpcs.begin(), obs.mpcs.end());
        }
        if (!obs.fap) {
          continue;
        }
        ips::MeasurementRecord rec;
        rec.node_index = static_cast<int>(i);
        rec.measurement = *obs.fap;
        rec.measurement.los_label =
            threshold ? ips::classify_los_nlos(obs.fap->fap_power_db, *threshold)
                      : ips::LosLabel::NLoS;
        records.push_back(std::move(rec));
      }
    }
  }

  auto os = open_output(args.out);
  ips::write_measurement_csv(os, records);
  if (!args.mpc_out.empty()) {
    auto ms = open_output(args.mpc_out);
    ips::write_mpc_csv(ms, all_mpcs);
  }
  std::cout << "wrote " << records.size() << " measurements for " << nodes.size()
            << " nodes to " << args.out << "\n";
  return 0;
}

// ---- localize ----------------------------------------------------------------

struct LocalizeArgs {
  std::string meas_path;
  std::string method;
  std::string scene_path;
  std::string out;
};

ips::PositionEstimate localize_one(const std::string &method,
                                   const std::vector<ips::ToaMeasurement> &meas,
                                   const ips::SceneModel &scene) {
  if (method == "lls") {
    return ips::lls(meas, scene.anchors);
  }
  if (method == "ippa") {
    return ips::ippa(meas, scene.anchors);
  }
  if (method == "mech-ls") {
    return ips::mechanism_ls(meas, scene.anchors, scene);
  }
  if (method == "dnls-map") {
    std::vector<ips::ToaMeasurement> diff;
    std::vector<ips::EdgeSegment> edges;
    for (const auto &m : meas) {
      if (!m.edge_id) {
        continue;
      }
      const auto edge = scene.find_edge(*m.edge_id);
      if (!edge) {
        throw ips::IndexError("edge '" + *m.edge_id + "' missing from scene");
      }
      diff.push_back(m);
      if (std::none_of(edges.begin(), edges.end(),
                       [&](const ips::EdgeSegment &e) { return e.id == edge->id; })) {
        edges.push_back(*edge);
      }
    }
    return ips::dnls_known_edges(diff, scene.anchors, edges, centroid_start(scene));
  }
  if (method == "dnls-facade") {
    // Keep the vertical-edge measurements of the best-covered facade and
    // solve with per-edge unknown positions.
    std::map<std::string, int> facade_counts;
    for (const auto &m : meas) {
      if (!m.edge_id) {
        continue;
      }
      const auto edge = scene.find_edge(*m.edge_id);
      const auto *window = scene.find_window_of_edge(*m.edge_id);
      if (edge && edge->is_vertical() && window != nullptr) {
        ++facade_counts[window->facade_id];
      }
    }
    if (facade_counts.empty()) {
      throw ips::InsufficientData("no vertical-edge diffraction measurements present");
    }
    std::string best;
    int best_count = -1;
    for (const auto &[id, count] : facade_counts) {
      if (count > best_count) {
        best = id;
        best_count = count;
      }
    }
    std::vector<ips::ToaMeasurement> kept;
    std::vector<std::string> edge_ids;
    for (const auto &m : meas) {
      if (!m.edge_id) {
        continue;
      }
      const auto edge = scene.find_edge(*m.edge_id);
      const auto *window = scene.find_window_of_edge(*m.edge_id);
      if (edge && edge->is_vertical() && window != nullptr && window->facade_id == best) {
        kept.push_back(m);
        edge_ids.push_back(*m.edge_id);
      }
    }
    std::vector<std::string> unique_ids = edge_ids;
    std::sort(unique_ids.begin(), unique_ids.end());
    unique_ids.erase(std::unique(unique_ids.begin(), unique_ids.end()), unique_ids.end());
    std::vector<int> groups;
    for (const auto &id : edge_ids) {
      groups.push_back(static_cast<int>(
          std::lower_bound(unique_ids.begin(), unique_ids.end(), id) - unique_ids.begin()));
    }
    const ips::WallPanel *facade = scene.find_panel(best);
    if (facade == nullptr) {
      throw ips::UnknownPanel("facade '" + best + "' missing from scene");
    }
    return ips::dnls_facade(kept, scene.anchors, *facade, groups, centroid_start(scene))
        .estimate;
  }
  throw ips::ParseError("unknown method '" + method +
                        "' (expected lls, ippa, mech-ls, dnls-map or dnls-facade)");
}

int cmd_localize(const LocalizeArgs &args) {
  if (args.scene_path.empty()) {
    std::cerr << "localize: --scene is required (anchor and edge geometry come from the "
                 "scene file)\n";
    return 1;
  }
  const ips::SceneModel scene = ips::load_scene(args.scene_path);

  std::ifstream in(args.meas_path);
  if (!in) {
    throw ips::IoError("cannot open measurement file '" + args.meas_path + "'");
  }
  const auto records = ips::read_measurement_csv(in);

  std::map<int, std::vector<ips::ToaMeasurement>> by_node;
  for (const auto &rec : records) {
    by_node[rec.node_index].push_back(rec.measurement);
  }

  std::ostringstream body;
  std::size_t solved = 0;
  for (const auto &[node_index, meas] : by_node) {
    try {
      const ips::PositionEstimate est = localize_one(args.method, meas, scene);
      body << node_index << ',' << est.method_tag << ',' << fmt_g(est.position.x) << ','
           << fmt_g(est.position.y) << ',' << fmt_g(est.position.z) << ','
           << ips::estimate_floor(est, scene.building) << ',' << est.iterations << ','
           << fmt_g(est.final_residual) << ',' << (est.converged ? 1 : 0) << '\n';
      ++solved;
    } catch (const ips::ParseError &) {
      throw;  // A bad --method is a usage problem, not a per-node failure.
    } catch (const ips::Error &e) {
      std::cerr << "node " << node_index << ": " << e.what() << "\n";
    }
  }

  const std::string header =
      "# schema_version=1\n"
      "node_index,method,est_x_m,est_y_m,est_z_m,floor_est,iterations,final_residual,"
      "converged\n";
  if (args.out.empty()) {
    std::cout << header << body.str();
  } else {
    auto os = open_output(args.out);
    os << header << body.str();
    std::cout << "solved " << solved << " of " << by_node.size() << " nodes to " << args.out
              << "\n";
  }
  if (solved == 0 && !by_node.empty()) {
    std::cerr << "localize: no node could be solved\n";
    return 2;
  }
  return 0;
}

// ---- crlb ----------------------------------------------------------------------

struct CrlbArgs {
  std::string scene_path;
  std::string band;
  double grid_spacing = 2.0;
  double grid_margin = 1.0;
  double sigma = -1.0;  ///< Negative means "use the scene's toa_sigma_m".
  std::string out = "bounds.csv";
};

int cmd_crlb(const CrlbArgs &args) {
  ips::SceneModel scene = load_scene_with_band(args.scene_path, args.band);
  if (args.sigma >= 0.0) {
    scene.loss.toa_sigma_m = args.sigma;
  }
  const auto nodes = ips::grid_nodes(scene.building, {args.grid_spacing, args.grid_margin});

  auto os = open_output(args.out);
  os << "# schema_version=1\n";
  os << "node_index,x_m,y_m,z_m,peb_1diff_m,peb_multi_m,fim_condition_number,clamp_flag\n";
  std::vector<double> finite_1diff;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const ips::BoundsRow row = ips::compute_bounds(scene, nodes[i], static_cast<int>(i));
    os << row.node_index << ',' << fmt_g(nodes[i].x) << ',' << fmt_g(nodes[i].y) << ','
       << fmt_g(nodes[i].z) << ',' << fmt_g(row.peb_1diff_m) << ',' << fmt_g(row.peb_multi_m)
       << ',' << fmt_g(row.fim_condition) << ',' << (row.clamp_flag ? 1 : 0) << '\n';
    if (std::isfinite(row.peb_1diff_m)) {
      finite_1diff.push_back(row.peb_1diff_m);
    }
  }
  std::cout << "wrote bounds for " << nodes.size() << " nodes to " << args.out << "\n";
  if (!finite_1diff.empty()) {
    std::cout << "median peb_1diff_m=" << fmt_g(ips::sample_quantile(finite_1diff, 0.5))
              << " (" << finite_1diff.size() << " observable nodes)\n";
  }
  return 0;
}

// ---- experiment -----------------------------------------------------------------

struct ExperimentArgs {
  std::string config_path;
  std::string out;
};

int cmd_experiment(const ExperimentArgs &args) {
  const ips::ExperimentConfig config = ips::parse_experiment_config(load_json_file(args.config_path));
  const ips::ExperimentResults results = ips::run_experiment(config);
  ips::export_results(results, args.out);

  std::cout << "nodes=" << results.nodes.size() << " trials=" << config.trials
            << " wall_time_s=" << fmt_g(results.wall_time_s) << "\n";
  for (const auto &mr : results.methods) {
    std::vector<double> errs;
    for (const auto &s : mr.samples) {
      errs.push_back(s.err_3d_m);
    }
    std::cout << ips::variant_tag(mr.variant) << ": samples=" << mr.samples.size()
              << " coverage_failures=" << mr.coverage_failures
              << " estimator_failures=" << mr.estimator_failures;
    if (!errs.empty()) {
      std::cout << " median_err_3d_m=" << fmt_g(ips::sample_quantile(errs, 0.5))
                << " p90_err_3d_m=" << fmt_g(ips::sample_quantile(errs, 0.9));
    }
    std::cout << "\n";
  }
  std::cout << "results written to " << args.out << "\n";
  return 0;
}

// ---- slp-demo ---------------------------------------------------------------------

struct SlpDemoArgs {
  int anchors = 4;
  std::uint64_t seed = 1;
  double noise_sigma_m = 0.0;
  bool deny = false;
  bool degraded = false;
};

int cmd_slp_demo(const SlpDemoArgs &args) {
  if (args.anchors < 2 || args.anchors > 8) {
    std::cerr << "slp-demo: --anchors must be between 2 and 8\n";
    return 1;
  }

  // Fixed demo constellation around a 20 x 30 footprint; staggered heights
  // keep the ranging geometry non-coplanar.
  const ips::Vec3 target_pos{8.0, 12.0, 4.2};
  std::vector<ips::SlpParticipant> participants;
  participants.push_back({"ue:target", ips::SlpRole::TargetUe, target_pos, 2.5e-6});
  participants.push_back({"ue:lmf", ips::SlpRole::ReferenceAnchorLmf, {-5.0, -4.0, 2.0}, -1.1e-6});
  const ips::Vec3 anchor_positions[] = {{25.0, -4.0, 5.0},  {25.0, 34.0, 8.0},
                                        {-5.0, 34.0, 11.0}, {-5.0, 15.0, 3.0},
                                        {25.0, 15.0, 6.0},  {10.0, -4.0, 9.0},
                                        {10.0, 34.0, 12.0}};
  for (int i = 0; i + 1 < args.anchors; ++i) {
    participants.push_back({"ue:anchor:" + std::to_string(i), ips::SlpRole::AnchorUe,
                            anchor_positions[i], 0.4e-6 * (i + 1)});
  }

  ips::SessionConfig config;
  config.seed = args.seed;
  config.noise_sigma_m = args.noise_sigma_m;
  config.authorize = !args.deny;
  config.allow_degraded = args.degraded;

  try {
    const ips::SessionResult result = ips::run_session(participants, config);
    ips::write_trace(std::cout, result.trace);
    const ips::Vec3 fix = result.report.position;
    std::cout << "fix: " << fmt_g(fix.x) << ' ' << fmt_g(fix.y) << ' ' << fmt_g(fix.z)
              << " (method=" << result.report.method_tag
              << ", degraded=" << (result.state.degraded ? 1 : 0) << ")\n";
    std::cout << "true: " << fmt_g(target_pos.x) << ' ' << fmt_g(target_pos.y) << ' '
              << fmt_g(target_pos.z) << "\n";
    std::cout << "error_m: " << fmt_g(ips::distance(fix, target_pos)) << "\n";
    return 0;
  } catch (const ips::SessionFailed &e) {
    ips::write_trace(std::cout, e.trace());
    std::cerr << "session failed: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"outdoor-to-indoor positioning toolkit"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto *c_sim = app.add_subcommand("simulate", "Simulate links and write a measurement CSV");
  c_sim->add_option("--scene", sim.scene_path, "Scene config JSON file")->required();
  c_sim->add_option("--band", sim.band, "Band override: FR1, FR2 or FR3");
  c_sim->add_option("--seed", sim.seed, "Random seed");
  c_sim->add_option("--out", sim.out, "Output measurement CSV path");
  c_sim->add_option("--mpcs", sim.mpc_out, "Also dump multipath geometry CSV here");
  c_sim->add_option("--node", sim.node_text, "Single node as 'x,y,z' instead of a grid");
  c_sim->add_option("--grid", sim.grid_spacing, "Grid spacing in meters");
  c_sim->add_option("--margin", sim.grid_margin, "Grid margin from facades in meters");
  c_sim->add_option("--trials", sim.trials, "Noise realizations per node");

  LocalizeArgs loc;
  auto *c_loc = app.add_subcommand("localize", "Estimate positions from a measurement CSV");
  c_loc->add_option("--meas", loc.meas_path, "Measurement CSV path")->required();
  c_loc->add_option("--method", loc.method,
                    "Estimator: lls, ippa, mech-ls, dnls-map or dnls-facade")
      ->required();
  c_loc->add_option("--scene", loc.scene_path, "Scene config JSON file (geometry source)");
  c_loc->add_option("--out", loc.out, "Output estimates CSV path (default: stdout)");

  CrlbArgs crlb;
  auto *c_crlb = app.add_subcommand("crlb", "Write position error bounds over a node grid");
  c_crlb->add_option("--scene", crlb.scene_path, "Scene config JSON file")->required();
  c_crlb->add_option("--band", crlb.band, "Band override: FR1, FR2 or FR3");
  c_crlb->add_option("--grid", crlb.grid_spacing, "Grid spacing in meters");
  c_crlb->add_option("--margin", crlb.grid_margin, "Grid margin from facades in meters");
  c_crlb->add_option("--sigma", crlb.sigma, "Ranging sigma override in meters");
  c_crlb->add_option("--out", crlb.out, "Output bounds CSV path");

  ExperimentArgs exp;
  auto *c_exp = app.add_subcommand("experiment", "Run a Monte Carlo experiment config");
  c_exp->add_option("--config", exp.config_path, "Experiment config JSON file")->required();
  c_exp->add_option("--out", exp.out, "Output directory")->required();

  SlpDemoArgs slp;
  auto *c_slp = app.add_subcommand("slp-demo", "Run one sidelink positioning session");
  c_slp->add_option("--anchors", slp.anchors, "Ranging anchor count (2-8, incl. the LMF)");
  c_slp->add_option("--seed", slp.seed, "Random seed");
  c_slp->add_option("--noise", slp.noise_sigma_m, "Ranging noise sigma in meters");
  c_slp->add_flag("--deny", slp.deny, "Make the LMF deny authorization");
  c_slp->add_flag("--degraded", slp.degraded, "Allow a degraded 2D fix under 4 anchors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_sim->parsed()) {
      return cmd_simulate(sim);
    }
    if (c_loc->parsed()) {
      return cmd_localize(loc);
    }
    if (c_crlb->parsed()) {
      return cmd_crlb(crlb);
    }
    if (c_exp->parsed()) {
      return cmd_experiment(exp);
    }
    if (c_slp->parsed()) {
      return cmd_slp_demo(slp);
    }
  } catch (const ips::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
