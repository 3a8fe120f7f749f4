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
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ips/channel.hpp"
#include "ips/errors.hpp"
#include "ips/locate.hpp"
#include "ips/rng.hpp"
#include "ips/vec3.hpp"

namespace ips {

enum class SlpRole { ClientUe, TargetUe, AnchorUe, ReferenceAnchorLmf };

const char *slp_role_name(SlpRole role);

/// Message kinds in the canonical order of the ten-step out-of-coverage
/// session; a successful trace's first-occurrence projection equals this
/// enum order.
enum class SlpMessageKind {
  Solicitation,
  DiscoveryResponse,
  AnchorSelection,
  Pc5Setup,
  LocationServiceRequest,
  AuthResult,
  AdditionalAnchors,
  SlppCapability,
  SlppAssistanceData,
  SlppMeasurementRequest,
  SlppMeasurementResponse,
  LocationReport,
};

inline constexpr int kSlpMessageKindCount = 12;

const char *slp_message_kind_name(SlpMessageKind kind);

struct SlpMessage {
  SlpMessageKind kind = SlpMessageKind::Solicitation;
  std::string from;
  std::string to;  ///< Participant id, or "*" for broadcast.
  int seq = 0;
  nlohmann::json payload;
  /// Virtual delivery time; informational, not part of the trace format.
  double delivered_at_s = 0.0;
};

enum class SessionPhase {
  Discovery,
  Selection,
  Setup,
  Authorized,
  Measuring,
  Computed,
  Reported,
  Failed,
};

const char *session_phase_name(SessionPhase phase);

struct SlpParticipant {
  std::string id;
  SlpRole role = SlpRole::AnchorUe;
  Vec3 position;
  double clock_offset_s = 0.0;
};

/// @brief Session-wide knobs; defaults give a clean zero-noise run.
struct SessionConfig {
  double processing_delay_s = 100e-6;
  double message_latency_s = 1e-3;
  bool authorize = true;
  bool allow_degraded = false;
  double floor_height_m = 3.0;
  double noise_sigma_m = 0.0;
  std::uint64_t seed = 1;
  std::string method = "lls";  ///< "lls" or "ippa".
  /// Number of anchors the client selects up front; 0 selects all. The LMF
  /// hands back the remainder in the AdditionalAnchors step.
  int initial_selection = 0;
};

struct SessionState {
  SessionPhase phase = SessionPhase::Discovery;
  std::vector<ToaMeasurement> collected_measurements;
  std::vector<std::string> violations;
  std::vector<std::string> selected_anchors;
  bool solicitation_seen = false;
  int discovery_responses = 0;
  int setup_acks = 0;
  int measurement_responses = 0;
  std::string failure_reason;
  std::optional<PositionEstimate> report;
  bool degraded = false;
};

/// @brief Session abort carrying the partial message trace for diagnosis.
class SessionFailed : public Error {
 public:
  SessionFailed(const std::string &what, std::vector<SlpMessage> trace)
      : Error(what), trace_(std::move(trace)) {}

  const std::vector<SlpMessage> &trace() const { return trace_; }

 private:
  std::vector<SlpMessage> trace_;
};

/// @brief Two-way RTT ranging with known responder processing delay.
///
/// A constant clock offset shifts every timestamp a clock reports but cancels
/// in any duration that clock measures, so the round trip observed by the
/// initiator is offset-free by algebra, not by luck; the offsets are accepted
/// here to document that invariant. The measured range is
/// c * (t_round - processing_delay) / 2 plus Gaussian noise.
double rtt_range(double clock_offset_a_s, double clock_offset_b_s, double true_distance_m,
                 double processing_delay_s, double noise_sigma_m, Rng &rng);

/// @brief Measurement supplier: returns the measured range between an anchor
/// and the target, or throws NoDetectablePath.
using RangeHook =
    std::function<double(const SlpParticipant &anchor, const SlpParticipant &target, Rng &rng)>;

struct SessionResult {
  std::vector<SlpMessage> trace;
  PositionEstimate report;
  SessionState state;
};

/// @brief Deterministic event-queue engine for one positioning session.
///
/// The reference anchor doubles as the location server; it owns the
/// transition table, and advance() applies one inbound message, returning the
/// messages it triggers. Out-of-order messages are recorded as protocol
/// violations and leave the state untouched.
class SlpEngine {
 public:
  SlpEngine(std::vector<SlpParticipant> participants, SessionConfig config,
            RangeHook range_hook = {});

  SlpEngine(const SlpEngine &) = delete;
  SlpEngine &operator=(const SlpEngine &) = delete;

  std::vector<SlpMessage> advance(SessionState &state, const SlpMessage &incoming);

  /// @brief Pump the full ten-step flow; throws SessionFailed on denial,
  /// missing coverage or an unsolvable fix.
  SessionResult run();

  const std::vector<SlpParticipant> &participants() const { return participants_; }

 private:
  SlpMessage make_message(SlpMessageKind kind, const std::string &from, const std::string &to,
                          nlohmann::json payload);
  std::vector<const SlpParticipant *> ranging_anchors() const;
  const SlpParticipant *find_participant(const std::string &id) const;
  void compute_fix(SessionState &state);

  std::vector<SlpParticipant> participants_;
  SessionConfig config_;
  RangeHook range_hook_;
  Rng rng_;
  int next_seq_ = 0;
  double now_s_ = 0.0;
  const SlpParticipant *client_ = nullptr;
  const SlpParticipant *target_ = nullptr;
  const SlpParticipant *lmf_ = nullptr;
};

/// @brief Convenience wrapper constructing the engine and running the flow.
SessionResult run_session(std::vector<SlpParticipant> participants, SessionConfig config,
                          RangeHook range_hook = {});

/// @brief First-occurrence projection of message kinds along a trace.
std::vector<SlpMessageKind> first_occurrence_kinds(const std::vector<SlpMessage> &trace);

/// @brief True when the projection matches the canonical twelve-kind order.
bool trace_is_canonical(const std::vector<SlpMessage> &trace);

/// @brief Line format: seq kind from to payload-json.
void write_trace(std::ostream &os, const std::vector<SlpMessage> &trace);

}  // namespace ips
