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
// Python bindings for the main toolkit operations: scene construction, path
// enumeration, positioning pipelines, error bounds, experiments and the
// sidelink session demo.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <limits>

#include <nlohmann/json.hpp>

#include "ips/bounds.hpp"
#include "ips/channel.hpp"
#include "ips/harness.hpp"
#include "ips/locate.hpp"
#include "ips/raypath.hpp"
#include "ips/scene.hpp"
#include "ips/slp.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

ips::Vec3 to_vec3(const std::vector<double> &v) {
  if (v.size() != 3) {
    throw ips::ParseError("expected a 3-element position");
  }
  return {v[0], v[1], v[2]};
}

py::tuple from_vec3(const ips::Vec3 &v) { return py::make_tuple(v.x, v.y, v.z); }

py::dict mpc_dict(const ips::Mpc &mpc) {
  py::dict d;
  d["anchor_id"] = mpc.anchor_id;
  d["mechanism"] = ips::mechanism_tag(mpc.mechanism.kind);
  d["ids"] = mpc.mechanism.id_key();
  d["path_length_m"] = mpc.path_length_m;
  py::list verts;
  for (const auto &v : mpc.vertices) {
    verts.append(from_vec3(v));
  }
  d["vertices"] = verts;
  return d;
}

py::dict estimate_dict(const ips::PositionEstimate &est) {
  py::dict d;
  d["position"] = from_vec3(est.position);
  d["method"] = est.method_tag;
  d["iterations"] = est.iterations;
  d["final_residual"] = est.final_residual;
  d["converged"] = est.converged;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Outdoor-to-indoor positioning toolkit";

  py::class_<ips::SceneModel>(m, "Scene")
      .def_static(
          "from_json",
          [](const std::string &text) { return ips::build_scene_from_string(text); },
          py::arg("text"), "Build and validate a scene from JSON text")
      .def_property_readonly("anchor_ids",
                             [](const ips::SceneModel &scene) {
                               std::vector<std::string> ids;
                               for (const auto &a : scene.anchors) {
                                 ids.push_back(a.id);
                               }
                               return ids;
                             })
      .def_property_readonly(
          "band", [](const ips::SceneModel &scene) { return ips::band_name(scene.band.name); })
      .def_property_readonly("num_floors", [](const ips::SceneModel &scene) {
        return scene.building.num_floors;
      });

  m.def(
      "generate_scene",
      [](std::uint64_t seed, int num_anchors, double anchor_standoff_m) {
        ips::SceneGenParams params;
        params.num_anchors = num_anchors;
        params.anchor_standoff_m = anchor_standoff_m;
        return ips::generate_scene(params, seed).dump(2);
      },
      py::arg("seed") = 1, py::arg("num_anchors") = 4, py::arg("anchor_standoff_m") = 5.0,
      "Produce the parametric default scene config as JSON text");

  m.def(
      "enumerate_paths",
      [](const ips::SceneModel &scene, const std::string &anchor_id,
         const std::vector<double> &node) {
        const ips::AnchorSpec *anchor = scene.find_anchor(anchor_id);
        if (anchor == nullptr) {
          throw ips::IndexError("unknown anchor id '" + anchor_id + "'");
        }
        py::list out;
        for (const auto &mpc : ips::enumerate_mpcs(*anchor, to_vec3(node), scene)) {
          out.append(mpc_dict(mpc));
        }
        return out;
      },
      py::arg("scene"), py::arg("anchor_id"), py::arg("node"),
      "Geometric multipath components for one link, sorted by path length");

  m.def(
      "run_pipeline",
      [](const ips::SceneModel &scene, const std::vector<double> &node,
         const std::string &variant, std::uint64_t seed) {
        return estimate_dict(
            ips::run_pipeline(scene, to_vec3(node), ips::parse_variant(variant), seed));
      },
      py::arg("scene"), py::arg("node"), py::arg("variant"), py::arg("seed") = 1,
      "Run one positioning pipeline variant for a node");

  m.def(
      "compute_bounds",
      [](const ips::SceneModel &scene, const std::vector<double> &node) {
        const ips::BoundsRow row = ips::compute_bounds(scene, to_vec3(node));
        py::dict d;
        d["peb_1diff_m"] = row.peb_1diff_m;
        d["peb_multi_m"] = row.peb_multi_m;
        d["fim_condition_number"] = row.fim_condition;
        d["clamp_flag"] = row.clamp_flag;
        return d;
      },
      py::arg("scene"), py::arg("node"), "Position error bounds for one node");

  m.def(
      "run_experiment",
      [](const std::string &config_text, const std::string &outdir) {
        json config;
        try {
          config = json::parse(config_text);
        } catch (const json::parse_error &e) {
          throw ips::ParseError(std::string("experiment config is not valid JSON: ") + e.what());
        }
        const auto results = ips::run_experiment(ips::parse_experiment_config(config));
        ips::export_results(results, outdir);
        py::dict d;
        d["nodes"] = results.nodes.size();
        py::dict methods;
        for (const auto &mr : results.methods) {
          std::vector<double> errs;
          for (const auto &s : mr.samples) {
            errs.push_back(s.err_3d_m);
          }
          py::dict entry;
          entry["samples"] = mr.samples.size();
          entry["coverage_failures"] = mr.coverage_failures;
          entry["estimator_failures"] = mr.estimator_failures;
          entry["median_err_3d_m"] = errs.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                  : ips::sample_quantile(errs, 0.5);
          methods[ips::variant_tag(mr.variant)] = entry;
        }
        d["methods"] = methods;
        return d;
      },
      py::arg("config"), py::arg("outdir"),
      "Run a Monte Carlo experiment config (JSON text) and export result files");

  m.def(
      "slp_demo",
      [](int anchors, std::uint64_t seed, double noise_sigma_m, bool authorize,
         bool allow_degraded) {
        const ips::Vec3 target_pos{8.0, 12.0, 4.2};
        std::vector<ips::SlpParticipant> participants;
        participants.push_back({"ue:target", ips::SlpRole::TargetUe, target_pos, 2.5e-6});
        participants.push_back(
            {"ue:lmf", ips::SlpRole::ReferenceAnchorLmf, {-5.0, -4.0, 2.0}, -1.1e-6});
        const ips::Vec3 anchor_positions[] = {{25.0, -4.0, 5.0},  {25.0, 34.0, 8.0},
                                              {-5.0, 34.0, 11.0}, {-5.0, 15.0, 3.0},
                                              {25.0, 15.0, 6.0},  {10.0, -4.0, 9.0}};
        const int extra = std::min(std::max(anchors - 1, 1), 6);
        for (int i = 0; i < extra; ++i) {
          participants.push_back({"ue:anchor:" + std::to_string(i), ips::SlpRole::AnchorUe,
                                  anchor_positions[i], 0.4e-6 * (i + 1)});
        }
        ips::SessionConfig config;
        config.seed = seed;
        config.noise_sigma_m = noise_sigma_m;
        config.authorize = authorize;
        config.allow_degraded = allow_degraded;
        const ips::SessionResult result = ips::run_session(participants, config);
        py::dict d;
        py::list kinds;
        for (const auto &kind : ips::first_occurrence_kinds(result.trace)) {
          kinds.append(ips::slp_message_kind_name(kind));
        }
        d["message_kinds"] = kinds;
        d["canonical"] = ips::trace_is_canonical(result.trace);
        d["fix"] = from_vec3(result.report.position);
        d["error_m"] = ips::distance(result.report.position, target_pos);
        return d;
      },
      py::arg("anchors") = 4, py::arg("seed") = 1, py::arg("noise_sigma_m") = 0.0,
      py::arg("authorize") = true, py::arg("allow_degraded") = false,
      "Run one sidelink positioning session on the demo constellation");
}
