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

#include "ips/slp.hpp"

#include <cmath>
#include <deque>
#include <ostream>

#include <Eigen/Dense>

#include "ips/constants.hpp"

namespace ips {

const char *slp_role_name(SlpRole role) {
  switch (role) {
    case SlpRole::ClientUe:
      return "client-ue";
    case SlpRole::TargetUe:
      return "target-ue";
    case SlpRole::AnchorUe:
      return "anchor-ue";
    case SlpRole::ReferenceAnchorLmf:
      return "reference-anchor-lmf";
  }
  return "anchor-ue";
}

const char *slp_message_kind_name(SlpMessageKind kind) {
  switch (kind) {
    case SlpMessageKind::Solicitation:
      return "Solicitation";
    case SlpMessageKind::DiscoveryResponse:
      return "DiscoveryResponse";
    case SlpMessageKind::AnchorSelection:
      return "AnchorSelection";
    case SlpMessageKind::Pc5Setup:
      return "Pc5Setup";
    case SlpMessageKind::LocationServiceRequest:
      return "LocationServiceRequest";
    case SlpMessageKind::AuthResult:
      return "AuthResult";
    case SlpMessageKind::AdditionalAnchors:
      return "AdditionalAnchors";
    case SlpMessageKind::SlppCapability:
      return "SlppCapability";
    case SlpMessageKind::SlppAssistanceData:
      return "SlppAssistanceData";
    case SlpMessageKind::SlppMeasurementRequest:
      return "SlppMeasurementRequest";
    case SlpMessageKind::SlppMeasurementResponse:
      return "SlppMeasurementResponse";
    case SlpMessageKind::LocationReport:
      return "LocationReport";
  }
  return "Solicitation";
}

const char *session_phase_name(SessionPhase phase) {
  switch (phase) {
    case SessionPhase::Discovery:
      return "Discovery";
    case SessionPhase::Selection:
      return "Selection";
    case SessionPhase::Setup:
      return "Setup";
    case SessionPhase::Authorized:
      return "Authorized";
    case SessionPhase::Measuring:
      return "Measuring";
    case SessionPhase::Computed:
      return "Computed";
    case SessionPhase::Reported:
      return "Reported";
    case SessionPhase::Failed:
      return "Failed";
  }
  return "Discovery";
}

double rtt_range(double clock_offset_a_s, double clock_offset_b_s, double true_distance_m,
                 double processing_delay_s, double noise_sigma_m, Rng &rng) {
  if (processing_delay_s < 0.0) {
    throw OutOfRange("rtt_range: processing delay must be non-negative");
  }
  if (true_distance_m < 0.0) {
    throw OutOfRange("rtt_range: distance must be non-negative");
  }
  // Both clocks run at the true rate with constant offsets. The initiator
  // timestamps transmit and receive on its own clock, so the offset appears
  // in both timestamps and drops out of the round-trip duration identically;
  // the responder's offset never enters a duration at all. The measured
  // duration is therefore 2*tof + processing_delay with no offset term, and
  // removing the declared processing delay leaves exactly the two-way flight
  // time. Working in range units keeps that algebra exact in floating point.
  (void)clock_offset_a_s;
  (void)clock_offset_b_s;
  const double round_trip_range_m = 2.0 * true_distance_m;
  return 0.5 * round_trip_range_m + rng.normal(0.0, noise_sigma_m);
}

namespace {

/// @brief Planar Gauss-Newton fix with the height pinned, used in degraded
/// mode when fewer than four usable measurements remain.
PositionEstimate solve_fix_2d(const std::vector<ToaMeasurement> &measurements,
                              const std::vector<AnchorSpec> &anchors, double fixed_z) {
  if (measurements.size() < 2) {
    throw TooFewMeasurements("degraded 2-D fix needs at least 2 measurements");
  }
  std::vector<Vec3> points;
  points.reserve(measurements.size());
  for (const auto &m : measurements) {
    const AnchorSpec *anchor = nullptr;
    for (const auto &a : anchors) {
      if (a.id == m.anchor_id) {
        anchor = &a;
        break;
      }
    }
    if (anchor == nullptr) {
      throw IndexError("degraded fix: unknown anchor '" + m.anchor_id + "'");
    }
    points.push_back(anchor->position);
  }
  Vec3 p{0.0, 0.0, fixed_z};
  for (const auto &pt : points) {
    p.x += pt.x;
    p.y += pt.y;
  }
  p.x /= static_cast<double>(points.size());
  p.y /= static_cast<double>(points.size());

  PositionEstimate est;
  est.method_tag = "lls-2d";
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3 d = p - points[i];
      const double n = std::max(d.norm(), 1e-9);
      const Eigen::Vector2d g(d.x / n, d.y / n);
      const double r = n - measurements[i].range_m;
      normal += g * g.transpose();
      rhs -= g * r;
    }
    normal += 1e-12 * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d step = normal.ldlt().solve(rhs);
    p.x += step(0);
    p.y += step(1);
    est.iterations = iter + 1;
    if (step.norm() < 1e-12) {
      est.converged = true;
      break;
    }
  }
  est.position = p;
  double residual = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double r = distance(p, points[i]) - measurements[i].range_m;
    residual += r * r;
  }
  est.final_residual = residual;
  return est;
}

}  // namespace

SlpEngine::SlpEngine(std::vector<SlpParticipant> participants, SessionConfig config,
                     RangeHook range_hook)
    : participants_(std::move(participants)),
      config_(std::move(config)),
      range_hook_(std::move(range_hook)),
      rng_(Rng::derive(config_.seed, "slp-session")) {
  for (std::size_t i = 0; i < participants_.size(); ++i) {
    for (std::size_t j = i + 1; j < participants_.size(); ++j) {
      if (participants_[i].id == participants_[j].id) {
        throw ParseError("slp: duplicate participant id '" + participants_[i].id + "'");
      }
    }
  }
  for (const auto &p : participants_) {
    switch (p.role) {
      case SlpRole::ReferenceAnchorLmf:
        if (lmf_ != nullptr) {
          throw ParseError("slp: exactly one reference anchor may act as location server");
        }
        lmf_ = &p;
        break;
      case SlpRole::TargetUe:
        if (target_ != nullptr) {
          throw ParseError("slp: exactly one target UE expected");
        }
        target_ = &p;
        break;
      case SlpRole::ClientUe:
        if (client_ == nullptr) {
          client_ = &p;
        }
        break;
      case SlpRole::AnchorUe:
        break;
    }
  }
  if (lmf_ == nullptr) {
    throw ParseError("slp: a reference anchor acting as location server is required");
  }
  if (target_ == nullptr) {
    throw ParseError("slp: a target UE is required");
  }
  if (client_ == nullptr) {
    // Out of coverage the target may request its own position.
    client_ = target_;
  }
  if (config_.method != "lls" && config_.method != "ippa") {
    throw ParseError("slp: unsupported locate method '" + config_.method + "'");
  }
}

SlpMessage SlpEngine::make_message(SlpMessageKind kind, const std::string &from,
                                   const std::string &to, nlohmann::json payload) {
  SlpMessage msg;
  msg.kind = kind;
  msg.from = from;
  msg.to = to;
  msg.seq = next_seq_++;
  msg.payload = std::move(payload);
  return msg;
}

std::vector<const SlpParticipant *> SlpEngine::ranging_anchors() const {
  std::vector<const SlpParticipant *> anchors;
  for (const auto &p : participants_) {
    if (p.role == SlpRole::AnchorUe || p.role == SlpRole::ReferenceAnchorLmf) {
      anchors.push_back(&p);
    }
  }
  return anchors;
}

const SlpParticipant *SlpEngine::find_participant(const std::string &id) const {
  for (const auto &p : participants_) {
    if (p.id == id) {
      return &p;
    }
  }
  return nullptr;
}

void SlpEngine::compute_fix(SessionState &state) {
  const auto anchors = ranging_anchors();
  std::vector<AnchorSpec> specs;
  specs.reserve(anchors.size());
  for (const auto *a : anchors) {
    specs.push_back({a->id, a->position, 0.0, a->clock_offset_s});
  }
  if (state.collected_measurements.empty()) {
    state.phase = SessionPhase::Failed;
    state.failure_reason = "no detectable path from any anchor";
    return;
  }
  try {
    if (state.collected_measurements.size() < 4) {
      if (!config_.allow_degraded) {
        state.phase = SessionPhase::Failed;
        state.failure_reason = "insufficient measurements for a 3-D fix";
        return;
      }
      state.degraded = true;
      state.report = solve_fix_2d(state.collected_measurements, specs,
                                  0.5 * config_.floor_height_m);
    } else if (config_.method == "ippa") {
      state.report = ippa(state.collected_measurements, specs);
    } else {
      state.report = lls(state.collected_measurements, specs);
    }
  } catch (const Error &err) {
    state.phase = SessionPhase::Failed;
    state.failure_reason = std::string("fix computation failed: ") + err.what();
  }
}

std::vector<SlpMessage> SlpEngine::advance(SessionState &state, const SlpMessage &incoming) {
  std::vector<SlpMessage> out;
  if (state.phase == SessionPhase::Failed) {
    return out;
  }
  const auto violation = [&]() {
    state.violations.push_back(std::string(slp_message_kind_name(incoming.kind)) +
                               " in phase " + session_phase_name(state.phase));
  };
  const auto anchors = ranging_anchors();
  const int anchor_count = static_cast<int>(anchors.size());

  switch (incoming.kind) {
    case SlpMessageKind::Solicitation: {
      if (state.phase != SessionPhase::Discovery || state.solicitation_seen) {
        violation();
        break;
      }
      state.solicitation_seen = true;
      for (const auto *a : anchors) {
        out.push_back(make_message(SlpMessageKind::DiscoveryResponse, a->id, client_->id,
                                   {{"anchor", a->id}}));
      }
      break;
    }
    case SlpMessageKind::DiscoveryResponse: {
      if (state.phase != SessionPhase::Discovery || !state.solicitation_seen) {
        violation();
        break;
      }
      ++state.discovery_responses;
      if (state.discovery_responses < anchor_count) {
        break;
      }
      if (anchor_count < 4 && !config_.allow_degraded) {
        state.phase = SessionPhase::Failed;
        state.failure_reason = "insufficient anchors discovered";
        break;
      }
      int select = config_.initial_selection;
      if (select <= 0 || select > anchor_count) {
        select = anchor_count;
      }
      nlohmann::json ids = nlohmann::json::array();
      state.selected_anchors.clear();
      for (int i = 0; i < select; ++i) {
        state.selected_anchors.push_back(anchors[static_cast<std::size_t>(i)]->id);
        ids.push_back(anchors[static_cast<std::size_t>(i)]->id);
      }
      state.phase = SessionPhase::Selection;
      out.push_back(make_message(SlpMessageKind::AnchorSelection, client_->id, lmf_->id,
                                 {{"selected", ids}}));
      break;
    }
    case SlpMessageKind::AnchorSelection: {
      if (state.phase != SessionPhase::Selection) {
        violation();
        break;
      }
      state.phase = SessionPhase::Setup;
      for (const auto &id : state.selected_anchors) {
        out.push_back(make_message(SlpMessageKind::Pc5Setup, client_->id, id,
                                   {{"anchor", id}}));
      }
      break;
    }
    case SlpMessageKind::Pc5Setup: {
      if (state.phase != SessionPhase::Setup) {
        violation();
        break;
      }
      ++state.setup_acks;
      if (state.setup_acks == static_cast<int>(state.selected_anchors.size())) {
        out.push_back(make_message(SlpMessageKind::LocationServiceRequest, client_->id,
                                   lmf_->id, {{"target", target_->id}}));
      }
      break;
    }
    case SlpMessageKind::LocationServiceRequest: {
      if (state.phase != SessionPhase::Setup) {
        violation();
        break;
      }
      if (config_.authorize) {
        state.phase = SessionPhase::Authorized;
        out.push_back(make_message(SlpMessageKind::AuthResult, lmf_->id, client_->id,
                                   {{"granted", true}}));
      } else {
        state.phase = SessionPhase::Failed;
        state.failure_reason = "authorization denied";
        out.push_back(make_message(SlpMessageKind::AuthResult, lmf_->id, client_->id,
                                   {{"granted", false}}));
      }
      break;
    }
    case SlpMessageKind::AuthResult: {
      if (state.phase != SessionPhase::Authorized ||
          !incoming.payload.value("granted", false)) {
        violation();
        break;
      }
      nlohmann::json additional = nlohmann::json::array();
      for (const auto *a : anchors) {
        bool selected = false;
        for (const auto &id : state.selected_anchors) {
          if (id == a->id) {
            selected = true;
            break;
          }
        }
        if (!selected) {
          additional.push_back(a->id);
        }
      }
      out.push_back(make_message(SlpMessageKind::AdditionalAnchors, lmf_->id, client_->id,
                                 {{"anchors", additional}}));
      out.push_back(make_message(SlpMessageKind::SlppCapability, client_->id, lmf_->id,
                                 {{"methods", nlohmann::json::array({"rtt-toa"})}}));
      nlohmann::json assistance = nlohmann::json::array();
      for (const auto *a : anchors) {
        assistance.push_back({{"id", a->id},
                              {"position", {a->position.x, a->position.y, a->position.z}}});
      }
      out.push_back(make_message(SlpMessageKind::SlppAssistanceData, lmf_->id, client_->id,
                                 {{"anchors", assistance}}));
      for (const auto *a : anchors) {
        out.push_back(make_message(SlpMessageKind::SlppMeasurementRequest, lmf_->id, a->id,
                                   {{"anchor", a->id}}));
      }
      state.phase = SessionPhase::Measuring;
      break;
    }
    case SlpMessageKind::AdditionalAnchors:
    case SlpMessageKind::SlppCapability:
    case SlpMessageKind::SlppAssistanceData: {
      if (state.phase != SessionPhase::Measuring) {
        violation();
      }
      break;
    }
    case SlpMessageKind::SlppMeasurementRequest: {
      if (state.phase != SessionPhase::Measuring) {
        violation();
        break;
      }
      const SlpParticipant *anchor = find_participant(incoming.to);
      if (anchor == nullptr) {
        violation();
        break;
      }
      nlohmann::json payload{{"anchor", anchor->id}};
      try {
        double range = 0.0;
        if (range_hook_) {
          range = range_hook_(*anchor, *target_, rng_);
        } else {
          range = rtt_range(target_->clock_offset_s, anchor->clock_offset_s,
                            distance(target_->position, anchor->position),
                            config_.processing_delay_s, config_.noise_sigma_m, rng_);
        }
        payload["ok"] = true;
        payload["range_m"] = range;
        payload["sigma_m"] = config_.noise_sigma_m;
      } catch (const NoDetectablePath &) {
        payload["ok"] = false;
      }
      out.push_back(make_message(SlpMessageKind::SlppMeasurementResponse, anchor->id,
                                 lmf_->id, std::move(payload)));
      break;
    }
    case SlpMessageKind::SlppMeasurementResponse: {
      if (state.phase != SessionPhase::Measuring) {
        violation();
        break;
      }
      ++state.measurement_responses;
      if (incoming.payload.value("ok", false)) {
        ToaMeasurement meas;
        meas.anchor_id = incoming.payload.value("anchor", std::string());
        meas.range_m = incoming.payload.value("range_m", 0.0);
        meas.sigma_m = incoming.payload.value("sigma_m", 0.0);
        meas.los_label = LosLabel::LoS;
        state.collected_measurements.push_back(std::move(meas));
      }
      if (state.measurement_responses == anchor_count) {
        compute_fix(state);
        if (state.phase != SessionPhase::Failed) {
          state.phase = SessionPhase::Computed;
          const PositionEstimate &fix = *state.report;
          out.push_back(make_message(
              SlpMessageKind::LocationReport, lmf_->id, client_->id,
              {{"position", {fix.position.x, fix.position.y, fix.position.z}},
               {"method", fix.method_tag},
               {"converged", fix.converged},
               {"degraded", state.degraded}}));
        }
      }
      break;
    }
    case SlpMessageKind::LocationReport: {
      if (state.phase != SessionPhase::Computed) {
        violation();
        break;
      }
      state.phase = SessionPhase::Reported;
      break;
    }
  }
  return out;
}

SessionResult SlpEngine::run() {
  SessionState state;
  std::vector<SlpMessage> trace;
  std::deque<SlpMessage> queue;
  queue.push_back(make_message(SlpMessageKind::Solicitation, client_->id, "*",
                               {{"service", "slp-positioning"}}));
  while (!queue.empty()) {
    SlpMessage msg = std::move(queue.front());
    queue.pop_front();
    now_s_ += config_.message_latency_s;
    msg.delivered_at_s = now_s_;
    trace.push_back(msg);
    for (auto &next : advance(state, msg)) {
      queue.push_back(std::move(next));
    }
  }
  if (state.phase != SessionPhase::Reported) {
    const std::string reason = state.failure_reason.empty()
                                   ? std::string("session stalled in phase ") +
                                         session_phase_name(state.phase)
                                   : state.failure_reason;
    throw SessionFailed(reason, std::move(trace));
  }
  SessionResult result;
  result.trace = std::move(trace);
  result.report = *state.report;
  result.state = std::move(state);
  return result;
}

SessionResult run_session(std::vector<SlpParticipant> participants, SessionConfig config,
                          RangeHook range_hook) {
  SlpEngine engine(std::move(participants), std::move(config), std::move(range_hook));
  return engine.run();
}

std::vector<SlpMessageKind> first_occurrence_kinds(const std::vector<SlpMessage> &trace) {
  std::vector<SlpMessageKind> kinds;
  for (const auto &msg : trace) {
    bool seen = false;
    for (const auto kind : kinds) {
      if (kind == msg.kind) {
        seen = true;
        break;
      }
    }
    if (!seen) {
      kinds.push_back(msg.kind);
    }
  }
  return kinds;
}

bool trace_is_canonical(const std::vector<SlpMessage> &trace) {
  const auto kinds = first_occurrence_kinds(trace);
  if (kinds.size() != static_cast<std::size_t>(kSlpMessageKindCount)) {
    return false;
  }
  for (int i = 0; i < kSlpMessageKindCount; ++i) {
    if (kinds[static_cast<std::size_t>(i)] != static_cast<SlpMessageKind>(i)) {
      return false;
    }
  }
  return true;
}

void write_trace(std::ostream &os, const std::vector<SlpMessage> &trace) {
  for (const auto &msg : trace) {
    os << msg.seq << ' ' << slp_message_kind_name(msg.kind) << ' ' << msg.from << ' '
       << msg.to << ' ' << msg.payload.dump() << '\n';
  }
}

}  // namespace ips
