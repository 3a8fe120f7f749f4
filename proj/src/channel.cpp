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

#include "ips/channel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "ips/constants.hpp"
#include "ips/detail/format.hpp"
#include "ips/errors.hpp"

namespace ips {

const char *los_label_name(LosLabel label) {
  return label == LosLabel::LoS ? "los" : "nlos";
}

double path_gain_db(const Mpc &mpc, const FrequencyBand &band, const LossParams &loss) {
  if (mpc.path_length_m <= 0.0) {
    throw OutOfRange("path_gain_db: path length must be positive");
  }
  if (band.carrier_hz <= 0.0) {
    throw OutOfRange("path_gain_db: carrier must be positive");
  }
  const double fspl_db = 20.0 * std::log10(4.0 * std::numbers::pi * mpc.path_length_m *
                                           band.carrier_hz / kSpeedOfLightMps);
  double gain = -fspl_db;
  const int crossings = mpc.mechanism.walls_crossed + mpc.extra_wall_crossings;
  gain -= static_cast<double>(crossings) * loss.wall_loss_db(band.name);
  if (mpc.mechanism.kind == MechanismKind::Reflection) {
    gain -= static_cast<double>(mpc.mechanism.panel_ids.size()) * loss.reflection_loss_db;
  }
  if (mpc.mechanism.kind == MechanismKind::Diffraction) {
    gain -= loss.diffraction_loss_db;
  }
  return gain;
}

std::vector<CirTap> synthesize_cir(const std::vector<Mpc> &mpcs, const FrequencyBand &band,
                                   const LossParams &loss, Rng &rng) {
  std::vector<CirTap> taps;
  taps.reserve(mpcs.size());
  for (const auto &mpc : mpcs) {
    CirTap tap;
    tap.delay_s = mpc.path_length_m / kSpeedOfLightMps;
    tap.power_db = path_gain_db(mpc, band, loss);
    tap.anchor_id = mpc.anchor_id;
    tap.mechanism = mpc.mechanism;
    taps.push_back(std::move(tap));
  }
  if (!taps.empty() && loss.diffuse.mean_count > 0.0) {
    const auto earliest = std::min_element(
        taps.begin(), taps.end(),
        [](const CirTap &a, const CirTap &b) { return a.delay_s < b.delay_s; });
    const double base_delay = earliest->delay_s;
    const double base_power = earliest->power_db;
    const std::string anchor = earliest->anchor_id;
    const int count = rng.poisson(loss.diffuse.mean_count);
    for (int i = 0; i < count; ++i) {
      CirTap tap;
      tap.delay_s = base_delay + rng.exponential(loss.diffuse.mean_excess_delay_s);
      tap.power_db = base_power - rng.uniform(5.0, loss.diffuse.loss_spread_db);
      tap.anchor_id = anchor;
      tap.mechanism.kind = MechanismKind::Diffuse;
      taps.push_back(std::move(tap));
    }
  }
  std::sort(taps.begin(), taps.end(),
            [](const CirTap &a, const CirTap &b) { return a.delay_s < b.delay_s; });
  return taps;
}

ToaMeasurement extract_fap(const std::vector<CirTap> &cir, const LossParams &loss, Rng &rng) {
  const double threshold = loss.detection_threshold_db();
  const CirTap *fap = nullptr;
  for (const auto &tap : cir) {
    if (tap.power_db < threshold) {
      continue;
    }
    if (fap == nullptr || tap.delay_s < fap->delay_s) {
      fap = &tap;
    }
  }
  if (fap == nullptr) {
    throw NoDetectablePath("extract_fap: no tap above detection threshold");
  }
  ToaMeasurement meas;
  meas.anchor_id = fap->anchor_id;
  meas.range_m = kSpeedOfLightMps * fap->delay_s + rng.normal(0.0, loss.toa_sigma_m);
  meas.sigma_m = loss.toa_sigma_m;
  meas.fap_power_db = fap->power_db;
  meas.true_mechanism = fap->mechanism;
  if (fap->mechanism.kind == MechanismKind::Diffraction) {
    meas.edge_id = fap->mechanism.edge_id;
  }
  return meas;
}

LosLabel classify_los_nlos(double measurement_power_db, double decision_threshold_db) {
  return measurement_power_db >= decision_threshold_db ? LosLabel::LoS : LosLabel::NLoS;
}

double calibrate_threshold(const std::vector<std::pair<double, LosLabel>> &labeled_powers) {
  double sum_los = 0.0;
  double sum_nlos = 0.0;
  std::size_t n_los = 0;
  std::size_t n_nlos = 0;
  for (const auto &[power, label] : labeled_powers) {
    if (label == LosLabel::LoS) {
      sum_los += power;
      ++n_los;
    } else {
      sum_nlos += power;
      ++n_nlos;
    }
  }
  if (n_los == 0 || n_nlos == 0) {
    throw InsufficientData("calibrate_threshold: both classes must be present");
  }
  return 0.5 * (sum_los / static_cast<double>(n_los) + sum_nlos / static_cast<double>(n_nlos));
}

std::string format_mechanism(const Mechanism &mechanism) {
  switch (mechanism.kind) {
    case MechanismKind::LineOfSight:
      return "los";
    case MechanismKind::Transmission:
      return "transmission:" + std::to_string(mechanism.walls_crossed);
    case MechanismKind::Reflection:
      return "reflection:" + mechanism.id_key();
    case MechanismKind::Diffraction:
      return "diffraction:" + mechanism.edge_id;
    case MechanismKind::Diffuse:
      return "diffuse";
  }
  return "los";
}

Mechanism parse_mechanism(const std::string &text) {
  Mechanism mech;
  const auto colon = text.find(':');
  const std::string tag = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? std::string() : text.substr(colon + 1);
  if (tag == "los") {
    mech.kind = MechanismKind::LineOfSight;
  } else if (tag == "transmission") {
    mech.kind = MechanismKind::Transmission;
    try {
      mech.walls_crossed = rest.empty() ? 1 : std::stoi(rest);
    } catch (const std::exception &) {
      throw ParseError("parse_mechanism: bad wall count in '" + text + "'");
    }
  } else if (tag == "reflection") {
    mech.kind = MechanismKind::Reflection;
    if (rest.empty()) {
      throw ParseError("parse_mechanism: reflection needs panel ids in '" + text + "'");
    }
    std::size_t start = 0;
    while (start <= rest.size()) {
      const auto bar = rest.find('|', start);
      mech.panel_ids.push_back(rest.substr(start, bar - start));
      if (bar == std::string::npos) {
        break;
      }
      start = bar + 1;
    }
  } else if (tag == "diffraction") {
    mech.kind = MechanismKind::Diffraction;
    if (rest.empty()) {
      throw ParseError("parse_mechanism: diffraction needs an edge id in '" + text + "'");
    }
    mech.edge_id = rest;
  } else if (tag == "diffuse") {
    mech.kind = MechanismKind::Diffuse;
  } else {
    throw ParseError("parse_mechanism: unknown mechanism '" + text + "'");
  }
  return mech;
}

void write_measurement_csv(std::ostream &os, const std::vector<MeasurementRecord> &records) {
  os << "# schema_version=1\n";
  os << "node_index,anchor_id,range_m,sigma_m,true_mechanism,los_label,edge_id\n";
  for (const auto &rec : records) {
    const auto &m = rec.measurement;
    os << rec.node_index << ',' << m.anchor_id << ',' << detail::fmt_g(m.range_m) << ','
       << detail::fmt_g(m.sigma_m) << ','
       << (m.true_mechanism ? format_mechanism(*m.true_mechanism) : std::string()) << ','
       << (m.los_label ? los_label_name(*m.los_label) : "") << ','
       << (m.edge_id ? *m.edge_id : std::string()) << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

}  // namespace

std::vector<MeasurementRecord> read_measurement_csv(std::istream &is) {
  std::vector<MeasurementRecord> records;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty() || line.front() == '#') {
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      if (line.rfind("node_index,", 0) != 0) {
        throw ParseError("measurement CSV: unexpected header '" + line + "'");
      }
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() < 7) {
      throw ParseError("measurement CSV: expected 7 columns, got " +
                       std::to_string(fields.size()));
    }
    MeasurementRecord rec;
    try {
      rec.node_index = std::stoi(fields[0]);
      rec.measurement.anchor_id = fields[1];
      rec.measurement.range_m = std::stod(fields[2]);
      rec.measurement.sigma_m = std::stod(fields[3]);
    } catch (const std::exception &) {
      throw ParseError("measurement CSV: bad numeric field in '" + line + "'");
    }
    if (!fields[4].empty()) {
      rec.measurement.true_mechanism = parse_mechanism(fields[4]);
    }
    if (!fields[5].empty()) {
      if (fields[5] == "los") {
        rec.measurement.los_label = LosLabel::LoS;
      } else if (fields[5] == "nlos") {
        rec.measurement.los_label = LosLabel::NLoS;
      } else {
        throw ParseError("measurement CSV: bad los label '" + fields[5] + "'");
      }
    }
    if (!fields[6].empty()) {
      rec.measurement.edge_id = fields[6];
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace ips
