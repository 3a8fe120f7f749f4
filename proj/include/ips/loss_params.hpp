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

#include "ips/band.hpp"

namespace ips {

/// @brief Diffuse clutter model: a Poisson number of late, weak taps.
struct DiffuseParams {
  double mean_count = 5.0;
  double mean_excess_delay_s = 40e-9;
  /// Diffuse tap power sits between 5 dB and this many dB below the earliest
  /// specular tap.
  double loss_spread_db = 20.0;
};

/// @brief Channel loss model parameters (all losses in dB).
struct LossParams {
  /// Per-crossing wall penetration loss by band. Walls attenuate much harder
  /// as the carrier rises, which is what starves transmission paths at FR2/FR3.
  double wall_loss_fr1_db = 5.0;
  double wall_loss_fr2_db = 25.0;
  double wall_loss_fr3_db = 15.0;
  double reflection_loss_db = 7.0;
  double diffraction_loss_db = 15.0;
  double noise_floor_db = -125.0;
  /// A tap is detectable when its power is at least this far above the floor.
  double fap_threshold_db = 20.0;
  double toa_sigma_m = 0.1;
  DiffuseParams diffuse;

  double wall_loss_db(FrequencyBandName band) const {
    switch (band) {
      case FrequencyBandName::FR1:
        return wall_loss_fr1_db;
      case FrequencyBandName::FR2:
        return wall_loss_fr2_db;
      case FrequencyBandName::FR3:
        return wall_loss_fr3_db;
    }
    return wall_loss_fr1_db;
  }

  double detection_threshold_db() const { return noise_floor_db + fap_threshold_db; }
};

}  // namespace ips
