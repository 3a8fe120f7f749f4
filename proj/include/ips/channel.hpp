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

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ips/band.hpp"
#include "ips/loss_params.hpp"
#include "ips/raypath.hpp"
#include "ips/rng.hpp"

namespace ips {

/// @brief One resolved tap of a synthetic channel impulse response.
struct CirTap {
  double delay_s = 0.0;
  double power_db = 0.0;
  std::string anchor_id;
  /// Generating mechanism; kind Diffuse marks clutter taps with no geometry.
  Mechanism mechanism;
};

enum class LosLabel { LoS, NLoS };

const char *los_label_name(LosLabel label);

/// @brief A ranging measurement extracted from one anchor-node link.
struct ToaMeasurement {
  std::string anchor_id;
  double range_m = 0.0;
  double sigma_m = 0.0;
  /// Power of the tap the range was read from; feeds the LoS/NLoS classifier.
  double fap_power_db = 0.0;
  std::optional<Mechanism> true_mechanism;
  std::optional<LosLabel> los_label;
  /// Convenience copy of the mechanism's edge id for diffraction association.
  std::optional<std::string> edge_id;
};

/// @brief Received power of one multipath component in dB relative to 0 dB
/// transmit power: free-space path loss plus per-interaction losses.
double path_gain_db(const Mpc &mpc, const FrequencyBand &band, const LossParams &loss);

/// @brief Expand geometric paths into a delay-sorted tap list, appending a
/// Poisson number of diffuse clutter taps after the earliest specular tap.
std::vector<CirTap> synthesize_cir(const std::vector<Mpc> &mpcs, const FrequencyBand &band,
                                   const LossParams &loss, Rng &rng);

/// @brief Pick the first-arriving tap above the detection threshold and turn
/// its delay into a noisy range.
///
/// Throws NoDetectablePath when every tap sits below the threshold.
ToaMeasurement extract_fap(const std::vector<CirTap> &cir, const LossParams &loss, Rng &rng);

/// @brief Power-threshold LoS/NLoS hypothesis test.
LosLabel classify_los_nlos(double measurement_power_db, double decision_threshold_db);

/// @brief Fit the decision threshold as the midpoint of per-class mean powers.
///
/// Throws InsufficientData when either class is empty.
double calibrate_threshold(const std::vector<std::pair<double, LosLabel>> &labeled_powers);

/// @brief Measurement CSV row as consumed by the localize front end.
struct MeasurementRecord {
  int node_index = 0;
  ToaMeasurement measurement;
};

void write_measurement_csv(std::ostream &os, const std::vector<MeasurementRecord> &records);
std::vector<MeasurementRecord> read_measurement_csv(std::istream &is);

/// @brief Serialize a mechanism as "tag", "tag:count" or "tag:id|id" for the
/// measurement CSV; parse_mechanism inverts it.
std::string format_mechanism(const Mechanism &mechanism);
Mechanism parse_mechanism(const std::string &text);

}  // namespace ips
