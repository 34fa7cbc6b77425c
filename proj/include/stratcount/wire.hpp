// Copyright 2026 The stratcount Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "stratcount/query.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace stratcount {

/// Nodes are addressed by "host:port" (or any unique name in simulation).
using NodeId = std::string;

enum class ReportStatus { running, done, cancelled };
std::string_view to_string(ReportStatus s);
ReportStatus parse_report_status(std::string_view s);

/// Counter-side collector states.
enum class CollectorStatus { running, done_full_scan, done_threshold, done_idle, cancelled };
std::string_view to_string(CollectorStatus s);
CollectorStatus parse_collector_status(std::string_view s);
inline bool is_finished(CollectorStatus s) {
	return s != CollectorStatus::running;
}

// Report traffic ------------------------------------------------------------

struct InitiateReport {
	std::string report_id;
	Query query;
	double error_threshold = 0.0;
	uint32_t sub_cluster_size = 0; //!< 0 = aggregator default
	uint32_t fetch_interval_ms = 0; //!< client polling hint
	bool operator==(const InitiateReport &) const = default;
};

struct DistributeRequest {
	std::string report_id;
	Query query;
	NodeId aggregator;
	uint32_t push_interval_ms = 0;
	double error_threshold = 0.0; //!< node-local early termination, 0 disables
	bool operator==(const DistributeRequest &) const = default;
};

/// Counter reply to a DistributeRequest; `accepted = false` is a busy rejection.
struct DistributeAck {
	std::string report_id;
	NodeId node_id;
	bool accepted = true;
	std::string reason;
	bool operator==(const DistributeAck &) const = default;
};

/// Cumulative totals since the report started on this node, never deltas.
struct PartialResult {
	std::string report_id;
	NodeId node_id;
	double matched_weight = 0.0;
	double matched_weight_sq = 0.0;
	uint64_t rows_matched = 0;
	uint64_t rows_scanned = 0;
	uint64_t rows_total = 0;
	uint64_t sample_version = 0;
	CollectorStatus status = CollectorStatus::running;
	bool operator==(const PartialResult &) const = default;
};

struct FetchResult {
	std::string report_id;
	bool operator==(const FetchResult &) const = default;
};

struct ResultEnvelope {
	std::string report_id;
	CountEstimate estimate;
	ReportStatus status = ReportStatus::running;
	bool operator==(const ResultEnvelope &) const = default;
};

struct SampleInformation {
	NodeId node_id;
	std::string sample_id;
	std::vector<uint64_t> stratum_counts;
	double total_weight = 0.0;
	uint64_t rows = 0;
	uint64_t version = 0;
	bool operator==(const SampleInformation &) const = default;
};

struct Cancel {
	std::string report_id;
	std::string reason;
	bool operator==(const Cancel &) const = default;
};

// Coordination traffic ------------------------------------------------------

/// First frame on every TCP connection; names the sending node.
struct Hello {
	NodeId node_id;
	bool operator==(const Hello &) const = default;
};

struct Register {
	NodeId node_id;
	std::string role; //!< "counter" | "aggregator"
	bool operator==(const Register &) const = default;
};

struct Member {
	NodeId node_id;
	std::string role;
	bool operator==(const Member &) const = default;
};

/// Coordinator reply to Register.
struct Membership {
	std::vector<Member> members;
	bool operator==(const Membership &) const = default;
};

struct AcquireLease {
	NodeId node_id;
	bool operator==(const AcquireLease &) const = default;
};

/// Reply to AcquireLease and RenewLease.
struct LeaseGrant {
	NodeId node_id;
	bool granted = false;
	std::string sample_id;
	std::string subsample_id;
	std::string path;
	std::string checksum;
	uint64_t epoch = 0;
	uint64_t expires_ms = 0;
	bool operator==(const LeaseGrant &) const = default;
};

struct RenewLease {
	NodeId node_id;
	std::string subsample_id;
	uint64_t epoch = 0;
	bool operator==(const RenewLease &) const = default;
};

struct ReleaseLease {
	NodeId node_id;
	std::string subsample_id;
	uint64_t epoch = 0;
	bool operator==(const ReleaseLease &) const = default;
};

struct PermitRequest {
	NodeId node_id;
	bool operator==(const PermitRequest &) const = default;
};

/// `granted = false` means queued; a later grant arrives when a permit frees.
struct PermitGrant {
	NodeId node_id;
	bool granted = false;
	bool operator==(const PermitGrant &) const = default;
};

struct PermitRelease {
	NodeId node_id;
	bool operator==(const PermitRelease &) const = default;
};

/// Request (release = false) or give back (release = true) an aggregator slot.
struct AggregatorSlot {
	NodeId node_id;
	bool release = false;
	bool operator==(const AggregatorSlot &) const = default;
};

struct SlotGrant {
	NodeId node_id;
	bool granted = false;
	bool operator==(const SlotGrant &) const = default;
};

struct SubsampleEntry {
	std::string subsample_id;
	std::string path;
	std::string checksum;
	bool operator==(const SubsampleEntry &) const = default;
};

struct PublishSample {
	std::string sample_id;
	std::vector<SubsampleEntry> manifest;
	bool operator==(const PublishSample &) const = default;
};

/// Coordinator notification: "new-sample", "member-joined", "member-left".
struct Event {
	std::string kind;
	std::string sample_id;
	NodeId node_id;
	std::string role;
	bool operator==(const Event &) const = default;
};

struct ErrorReply {
	std::string code;
	std::string message;
	bool operator==(const ErrorReply &) const = default;
};

using Message =
    std::variant<InitiateReport, DistributeRequest, DistributeAck, PartialResult, FetchResult, ResultEnvelope,
                 SampleInformation, Cancel, Hello, Register, Membership, AcquireLease, LeaseGrant, RenewLease,
                 ReleaseLease, PermitRequest, PermitGrant, PermitRelease, AggregatorSlot, SlotGrant, PublishSample,
                 Event, ErrorReply>;

/// The "type" discriminator of a message ("PartialResult", ...).
std::string_view message_type(const Message &m);

nlohmann::json message_to_json(const Message &m);
//! Throws ProtocolError for unknown types or malformed payloads.
Message message_from_json(const nlohmann::json &j);

/// 4-byte big-endian payload length, then the JSON payload with sorted keys.
std::string encode(const Message &m);

/// Decodes one frame from the front of `bytes`. Returns nullopt when more
/// bytes are needed; on success sets `consumed` to the frame size.
std::optional<Message> try_decode(std::string_view bytes, size_t &consumed);
//! Decodes exactly one complete frame; throws ProtocolError otherwise.
Message decode(std::string_view frame);

inline constexpr uint32_t kMaxFrameBytes = 64u << 20;

/// Incremental decoder for a byte stream.
class FrameReader {
public:
	void feed(std::string_view bytes) {
		buffer_.append(bytes);
	}
	//! Next complete message, or nullopt when more bytes are needed.
	std::optional<Message> next();
	size_t buffered() const {
		return buffer_.size() - offset_;
	}

private:
	std::string buffer_;
	size_t offset_ = 0;
};

} // namespace stratcount
