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

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ips/channel.hpp"
#include "ips/constants.hpp"
#include "ips/harness.hpp"
#include "ips/rng.hpp"
#include "ips/scene.hpp"

using namespace ips;

namespace {

Mpc make_mpc(MechanismKind kind, double length) {
  Mpc mpc;
  mpc.anchor_id = "a";
  mpc.mechanism.kind = kind;
  if (kind == MechanismKind::Transmission) {
    mpc.mechanism.walls_crossed = 1;
  }
  if (kind == MechanismKind::Reflection) {
    mpc.mechanism.panel_ids = {"p"};
  }
  if (kind == MechanismKind::Diffraction) {
    mpc.mechanism.edge_id = "e";
  }
  mpc.path_length_m = length;
  mpc.vertices = {{0, 0, 0}, {length, 0, 0}};
  return mpc;
}

CirTap make_tap(double delay_s, double power_db) {
  CirTap tap;
  tap.delay_s = delay_s;
  tap.power_db = power_db;
  tap.anchor_id = "a";
  return tap;
}

/// Loss setup used by the worked FAP examples: detection at -80 dB.
LossParams example_loss() {
  LossParams loss;
  loss.noise_floor_db = -100.0;
  loss.fap_threshold_db = 20.0;
  loss.toa_sigma_m = 0.0;
  return loss;
}

}  // namespace

// ---- per-path gain -------------------------------------------------------------

TEST_CASE("free-space gain over 1 m at 1 GHz") {
  const FrequencyBand band{FrequencyBandName::FR1, 1e9};
  const double gain = path_gain_db(make_mpc(MechanismKind::LineOfSight, 1.0), band, LossParams{});
  CHECK(std::abs(gain - (-32.45)) < 0.01);
}

TEST_CASE("wall loss difference between bands is exact parameter arithmetic") {
  const Mpc mpc = make_mpc(MechanismKind::Transmission, 12.0);
  const LossParams loss;
  const double fr1 = path_gain_db(mpc, {FrequencyBandName::FR1, 10e9}, loss);
  const double fr2 = path_gain_db(mpc, {FrequencyBandName::FR2, 10e9}, loss);
  CHECK(fr1 - fr2 == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("mechanism losses stack on top of the free-space term") {
  const FrequencyBand band{FrequencyBandName::FR3, 10e9};
  const LossParams loss;
  const double base = path_gain_db(make_mpc(MechanismKind::LineOfSight, 7.0), band, loss);
  CHECK(path_gain_db(make_mpc(MechanismKind::Reflection, 7.0), band, loss) ==
        doctest::Approx(base - loss.reflection_loss_db));
  CHECK(path_gain_db(make_mpc(MechanismKind::Diffraction, 7.0), band, loss) ==
        doctest::Approx(base - loss.diffraction_loss_db));
  CHECK(path_gain_db(make_mpc(MechanismKind::Transmission, 7.0), band, loss) ==
        doctest::Approx(base - loss.wall_loss_fr3_db));

  // Wall crossings recorded on a diffraction leg add penetration loss.
  Mpc shadowed = make_mpc(MechanismKind::Diffraction, 7.0);
  shadowed.extra_wall_crossings = 2;
  CHECK(path_gain_db(shadowed, band, loss) ==
        doctest::Approx(base - loss.diffraction_loss_db - 2.0 * loss.wall_loss_fr3_db));
}

TEST_CASE("longer paths are strictly weaker") {
  const FrequencyBand band{FrequencyBandName::FR3, 10e9};
  double previous = path_gain_db(make_mpc(MechanismKind::LineOfSight, 1.0), band, LossParams{});
  for (double d = 2.0; d < 60.0; d *= 1.7) {
    const double gain = path_gain_db(make_mpc(MechanismKind::LineOfSight, d), band, LossParams{});
    CHECK(gain < previous);
    previous = gain;
  }
}

// ---- CIR synthesis --------------------------------------------------------------

TEST_CASE("without diffuse clutter the CIR mirrors the geometric paths") {
  const std::vector<Mpc> mpcs = {make_mpc(MechanismKind::LineOfSight, 10.0),
                                 make_mpc(MechanismKind::Reflection, 14.0),
                                 make_mpc(MechanismKind::Diffraction, 12.0)};
  LossParams loss;
  loss.diffuse.mean_count = 0.0;
  Rng rng(1);
  const auto cir = synthesize_cir(mpcs, {FrequencyBandName::FR3, 10e9}, loss, rng);
  REQUIRE(cir.size() == 3);
  CHECK(cir[0].delay_s == doctest::Approx(10.0 / kSpeedOfLightMps).epsilon(1e-12));
  CHECK(cir[1].delay_s == doctest::Approx(12.0 / kSpeedOfLightMps).epsilon(1e-12));
  CHECK(cir[2].delay_s == doctest::Approx(14.0 / kSpeedOfLightMps).epsilon(1e-12));
  CHECK(std::is_sorted(cir.begin(), cir.end(),
                       [](const CirTap &a, const CirTap &b) { return a.delay_s < b.delay_s; }));
}

TEST_CASE("diffuse taps trail the earliest specular tap at reduced power") {
  const std::vector<Mpc> mpcs = {make_mpc(MechanismKind::LineOfSight, 10.0),
                                 make_mpc(MechanismKind::Reflection, 14.0)};
  const FrequencyBand band{FrequencyBandName::FR3, 10e9};
  const LossParams loss;
  const double base_delay = 10.0 / kSpeedOfLightMps;
  const double base_power = path_gain_db(mpcs[0], band, loss);

  int diffuse_total = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng = Rng::derive(seed, "cir-test");
    const auto cir = synthesize_cir(mpcs, band, loss, rng);
    REQUIRE(cir.size() >= 2);
    CHECK(std::is_sorted(cir.begin(), cir.end(),
                         [](const CirTap &a, const CirTap &b) { return a.delay_s < b.delay_s; }));
    for (const auto &tap : cir) {
      if (tap.mechanism.kind != MechanismKind::Diffuse) {
        continue;
      }
      diffuse_total += 1;
      CHECK(tap.delay_s > base_delay);
      CHECK(tap.power_db <= base_power - 5.0 + 1e-12);
      CHECK(tap.power_db >= base_power - loss.diffuse.loss_spread_db - 1e-12);
    }
  }
  // Poisson(5) over 50 seeds leaves a vanishing chance of an empty census.
  CHECK(diffuse_total > 100);
}

TEST_CASE("CIR synthesis is deterministic in the random stream") {
  const std::vector<Mpc> mpcs = {make_mpc(MechanismKind::LineOfSight, 10.0),
                                 make_mpc(MechanismKind::Diffraction, 13.0)};
  const FrequencyBand band{FrequencyBandName::FR3, 10e9};
  Rng rng_a = Rng::derive(9, "cir");
  Rng rng_b = Rng::derive(9, "cir");
  const auto a = synthesize_cir(mpcs, band, LossParams{}, rng_a);
  const auto b = synthesize_cir(mpcs, band, LossParams{}, rng_b);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].delay_s == b[i].delay_s);
    CHECK(a[i].power_db == b[i].power_db);
  }
}

// ---- FAP extraction -------------------------------------------------------------

TEST_CASE("the first tap above threshold becomes the FAP") {
  Rng rng(1);
  const auto meas =
      extract_fap({make_tap(10e-9, -60.0), make_tap(15e-9, -50.0)}, example_loss(), rng);
  CHECK(meas.range_m == doctest::Approx(2.998).epsilon(1e-3));
  CHECK(meas.range_m == kSpeedOfLightMps * 10e-9);
}

TEST_CASE("a sub-threshold first tap is skipped") {
  Rng rng(1);
  const auto meas =
      extract_fap({make_tap(10e-9, -95.0), make_tap(15e-9, -60.0)}, example_loss(), rng);
  CHECK(meas.range_m == kSpeedOfLightMps * 15e-9);
}

TEST_CASE("all taps below threshold is a coverage hole") {
  Rng rng(1);
  CHECK_THROWS_AS(extract_fap({make_tap(10e-9, -85.0), make_tap(15e-9, -99.0)},
                              example_loss(), rng),
                  NoDetectablePath);
}

TEST_CASE("FAP delay is minimal among qualifying taps") {
  LossParams loss = example_loss();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng gen = Rng::derive(seed, "fap-prop");
    std::vector<CirTap> cir;
    const int n = 1 + static_cast<int>(gen.next_u64() % 8);
    for (int i = 0; i < n; ++i) {
      cir.push_back(make_tap(gen.uniform(1e-9, 100e-9), gen.uniform(-110.0, -40.0)));
    }
    Rng noise(1);
    try {
      const auto meas = extract_fap(cir, loss, noise);
      for (const auto &tap : cir) {
        if (tap.power_db >= loss.detection_threshold_db()) {
          CHECK(meas.range_m <= kSpeedOfLightMps * tap.delay_s + 1e-12);
        }
      }
    } catch (const NoDetectablePath &) {
      for (const auto &tap : cir) {
        CHECK(tap.power_db < loss.detection_threshold_db());
      }
    }
  }
}

TEST_CASE("range noise follows toa_sigma_m") {
  LossParams loss = example_loss();
  loss.toa_sigma_m = 0.1;
  double sum = 0.0;
  double sum_sq = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::derive(static_cast<std::uint64_t>(i), "fap-noise");
    const auto meas = extract_fap({make_tap(10e-9, -60.0)}, loss, rng);
    const double err = meas.range_m - kSpeedOfLightMps * 10e-9;
    sum += err;
    sum_sq += err * err;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.01);
  CHECK(stddev == doctest::Approx(0.1).epsilon(0.1));
  Rng rng(3);
  CHECK(extract_fap({make_tap(10e-9, -60.0)}, loss, rng).sigma_m == 0.1);
}

// ---- LoS/NLoS classification -------------------------------------------------------

TEST_CASE("power threshold test on the worked examples") {
  CHECK(classify_los_nlos(-60.0, -70.0) == LosLabel::LoS);
  CHECK(classify_los_nlos(-80.0, -70.0) == LosLabel::NLoS);
  CHECK(classify_los_nlos(-70.0, -70.0) == LosLabel::LoS);
}

TEST_CASE("calibrated threshold splits well-separated classes accurately") {
  Rng gen = Rng::derive(3, "los-mc");
  std::vector<std::pair<double, LosLabel>> train;
  std::vector<std::pair<double, LosLabel>> test;
  for (int i = 0; i < 2000; ++i) {
    const bool los = (i % 2) == 0;
    const double power = gen.normal(los ? -60.0 : -75.0, 3.0);
    (i < 1000 ? train : test).push_back({power, los ? LosLabel::LoS : LosLabel::NLoS});
  }
  const double threshold = calibrate_threshold(train);
  CHECK(threshold == doctest::Approx(-67.5).epsilon(0.01));
  int correct = 0;
  for (const auto &[power, label] : test) {
    correct += classify_los_nlos(power, threshold) == label ? 1 : 0;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(test.size()) >= 0.95);
}

TEST_CASE("threshold calibration on the worked examples") {
  CHECK(calibrate_threshold({{-58.0, LosLabel::LoS},
                             {-62.0, LosLabel::LoS},
                             {-78.0, LosLabel::NLoS},
                             {-82.0, LosLabel::NLoS}}) == doctest::Approx(-70.0));
  CHECK(calibrate_threshold({{-55.0, LosLabel::LoS}, {-85.0, LosLabel::NLoS}}) ==
        doctest::Approx(-70.0));
  CHECK_THROWS_AS(calibrate_threshold({{-55.0, LosLabel::LoS}}), InsufficientData);
  CHECK_THROWS_AS(calibrate_threshold({}), InsufficientData);
}

// ---- measurement CSV -----------------------------------------------------------

TEST_CASE("mechanism text form round-trips every kind") {
  Mechanism reflection;
  reflection.kind = MechanismKind::Reflection;
  reflection.panel_ids = {"facade:west", "slab:0"};
  Mechanism transmission;
  transmission.kind = MechanismKind::Transmission;
  transmission.walls_crossed = 3;
  Mechanism diffraction;
  diffraction.kind = MechanismKind::Diffraction;
  diffraction.edge_id = "w:east:1:0:left";
  for (const auto &m : {Mechanism{}, reflection, transmission, diffraction}) {
    const Mechanism back = parse_mechanism(format_mechanism(m));
    CHECK(back.kind == m.kind);
    CHECK(back.walls_crossed == m.walls_crossed);
    CHECK(back.panel_ids == m.panel_ids);
    CHECK(back.edge_id == m.edge_id);
  }
  CHECK_THROWS_AS(parse_mechanism("teleportation"), ParseError);
}

TEST_CASE("measurement CSV round-trips records with optional fields") {
  std::vector<MeasurementRecord> records;
  MeasurementRecord r0;
  r0.node_index = 0;
  r0.measurement.anchor_id = "anchor:0";
  r0.measurement.range_m = 12.5;
  r0.measurement.sigma_m = 0.1;
  r0.measurement.fap_power_db = -72.0;
  Mechanism diff;
  diff.kind = MechanismKind::Diffraction;
  diff.edge_id = "w:west:0:1:right";
  r0.measurement.true_mechanism = diff;
  r0.measurement.los_label = LosLabel::NLoS;
  r0.measurement.edge_id = diff.edge_id;
  records.push_back(r0);

  MeasurementRecord r1;
  r1.node_index = 3;
  r1.measurement.anchor_id = "anchor:2";
  r1.measurement.range_m = 30.25;
  r1.measurement.sigma_m = 0.0;
  records.push_back(r1);

  std::ostringstream os;
  write_measurement_csv(os, records);
  const std::string text = os.str();
  CHECK(text.find("node_index,anchor_id,range_m,sigma_m") != std::string::npos);

  std::istringstream is(text);
  const auto back = read_measurement_csv(is);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].node_index == records[i].node_index);
    CHECK(back[i].measurement.anchor_id == records[i].measurement.anchor_id);
    CHECK(back[i].measurement.range_m ==
          doctest::Approx(records[i].measurement.range_m).epsilon(1e-12));
    CHECK(back[i].measurement.sigma_m ==
          doctest::Approx(records[i].measurement.sigma_m).epsilon(1e-12));
    CHECK(back[i].measurement.edge_id == records[i].measurement.edge_id);
    CHECK(back[i].measurement.los_label == records[i].measurement.los_label);
    const bool had_mech = records[i].measurement.true_mechanism.has_value();
    CHECK(back[i].measurement.true_mechanism.has_value() == had_mech);
    if (had_mech) {
      CHECK(back[i].measurement.true_mechanism->kind ==
            records[i].measurement.true_mechanism->kind);
    }
  }
}
