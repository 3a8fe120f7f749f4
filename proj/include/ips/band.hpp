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

#include "ips/errors.hpp"

namespace ips {

/// @brief Cellular frequency ranges. FR1 sits below 7 GHz, FR3 covers
/// 7-24 GHz, FR2 covers 24-48 GHz.
enum class FrequencyBandName { FR1, FR3, FR2 };

/// @brief Band name plus the concrete carrier used for path loss.
struct FrequencyBand {
  FrequencyBandName name = FrequencyBandName::FR1;
  double carrier_hz = 0.0;
};

/// @brief Map a carrier frequency onto its band.
/// @throws OutOfRange for non-positive carriers or carriers above 48 GHz.
FrequencyBandName classify_band(double carrier_hz);

/// @brief Representative carrier used when a config names a band without one.
double default_carrier_hz(FrequencyBandName name);

const char *band_name(FrequencyBandName name);

/// @throws ParseError for names other than FR1, FR2, FR3.
FrequencyBandName band_from_name(const std::string &name);

}  // namespace ips
