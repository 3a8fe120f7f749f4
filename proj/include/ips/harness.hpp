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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ips/bounds.hpp"
#include "ips/channel.hpp"
#include "ips/locate.hpp"
#include "ips/scene.hpp"

namespace ips {

/// @brief Knobs for the parametric default scene: a rectangular multi-floor
/// building with windowed facades and outdoor anchors near the corners.
struct SceneGenParams {
  double width_m = 20.0;
  double depth_m = 30.0;
  int num_floors = 4;
  double floor_height_m = 3.0;
  int windows_per_facade = 2;  ///< Per facade per floor.
  double window_width_m = 1.2;
  double window_height_m = 1.5;
  double sill_height_m = 0.8;
  int num_anchors = 4;  ///< 4 corner anchors, 5-6 add facade midpoints.
  double anchor_standoff_m = 5.0;
};

/// @brief Produce a scene config. Anchor heights cycle through the floor
/// mid-heights so that every facade is watched from two different levels.
/// @throws GeometryError / ParseError when the parameters produce an invalid
/// scene (validated by constructing it).
nlohmann::json generate_scene(const SceneGenParams &params, std::uint64_t seed);

enum class PipelineVariant {
  UnawareLls,
  UnawareIppa,
  AwareMech,
  AwareDnlsMap,
  AwareDnlsFacade,
};

/// @throws ParseError for tags outside the five known variants.
PipelineVariant parse_variant(const std::string &tag);
const char *variant_tag(PipelineVariant variant);

struct GridSpec {
  double spacing_m = 2.0;
  double margin_m = 1.0;  ///< Distance kept from every facade.
};

/// @brief Indoor evaluation nodes: an x/y grid per floor at mid-floor height.
std::vector<Vec3> grid_nodes(const BuildingModel &building, const GridSpec &grid);

/// @brief One anchor-node link: geometry, synthetic channel and extracted FAP
/// (absent when no tap clears the detection threshold).
struct LinkObservation {
  std::string anchor_id;
  std::vector<Mpc> mpcs;
  std::vector<CirTap> cir;
  std::optional<ToaMeasurement> fap;
};

/// @brief Simulate every link of one node with per-link random streams keyed
/// by (seed, node_index, anchor index, trial).
std::vector<LinkObservation> observe_links(const SceneModel &scene, const Vec3 &node,
                                           std::uint64_t seed, int node_index = 0,
                                           int trial = 0);

/// @brief Run one positioning pipeline end to end for a single node.
///
/// Unaware variants range on the FAP and solve lls/ippa; aware variants
/// consume oracle mechanism labels. Throws NoDetectablePath when coverage is
/// too thin and propagates estimator errors.
PositionEstimate run_pipeline(const SceneModel &scene, const Vec3 &node,
                              PipelineVariant variant, std::uint64_t seed, int node_index = 0,
                              int trial = 0,
                              std::optional<double> los_threshold_db = std::nullopt);

/// @brief FAP mechanism census over all detectable links of a node grid.
struct BandFapStats {
  int links_total = 0;
  int links_detectable = 0;
  int fap_line_of_sight = 0;
  int fap_transmission = 0;
  int fap_reflection = 0;
  int fap_diffraction = 0;

  double diffraction_fraction() const {
    return links_detectable == 0
               ? 0.0
               : static_cast<double>(fap_diffraction) / static_cast<double>(links_detectable);
  }
};

BandFapStats band_fap_stats(const SceneModel &scene, const GridSpec &grid);

/// @brief Full experiment description, parsed from JSON.
struct ExperimentConfig {
  nlohmann::json scene_config;
  std::optional<std::string> band_override;
  nlohmann::json loss_overrides;  ///< Object; empty when absent.
  GridSpec grid;
  std::vector<PipelineVariant> methods;
  int trials = 1;
  std::uint64_t seed = 1;
};

/// @brief Parse and validate an experiment config.
/// @throws ParseError on violations; IoError when a scene_file cannot be read.
ExperimentConfig parse_experiment_config(const nlohmann::json &config);

struct ErrorSample {
  int node_index = 0;
  int trial = 0;
  Vec3 estimate;
  double err_3d_m = 0.0;
  double err_z_m = 0.0;
  int floor_true = 0;
  int floor_est = 0;
  int iterations = 0;
  bool converged = false;
};

struct MethodResults {
  PipelineVariant variant = PipelineVariant::UnawareLls;
  std::vector<ErrorSample> samples;
  int coverage_failures = 0;   ///< Links too thin to attempt a fix.
  int estimator_failures = 0;  ///< Solver preconditions or numerics failed.
};

struct BoundsRow {
  int node_index = 0;
  double peb_1diff_m = 0.0;  ///< +inf when the geometry is unobservable.
  double peb_multi_m = 0.0;
  double fim_condition = 0.0;  ///< Condition number of the 1-diffraction FIM.
  bool clamp_flag = false;
};

struct ExperimentResults {
  std::vector<Vec3> nodes;
  std::vector<MethodResults> methods;
  std::vector<BoundsRow> bounds;
  int floors = 0;
  double wall_time_s = 0.0;  ///< Informational; never written to files.
};

/// @brief Position error bounds for one node: single-diffraction and all-MPC
/// PEBs plus the single-diffraction FIM condition number and clamp proximity.
BoundsRow compute_bounds(const SceneModel &scene, const Vec3 &node, int node_index = 0);

/// @brief Monte Carlo sweep over the node grid: every method plus both
/// position error bounds per node. Honors IPS_THREADS for the worker count;
/// results are identical for any worker count.
ExperimentResults run_experiment(const ExperimentConfig &config);

/// @brief Write errors.csv, cdf.csv, bounds.csv, summary.csv and cdf.svg.
/// @throws IoError when the directory or a file cannot be created.
void export_results(const ExperimentResults &results, const std::string &outdir);

/// @brief Hazen-style quantile (linear interpolation on sorted samples).
double sample_quantile(std::vector<double> values, double q);

}  // namespace ips
