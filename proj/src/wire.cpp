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

#include "stratcount/wire.hpp"

#include "stratcount/error.hpp"

#include <array>

namespace stratcount {

using json = nlohmann::json;

std::string_view to_string(ReportStatus s) {
	switch (s) {
	case ReportStatus::running:
		return "running";
	case ReportStatus::done:
		return "done";
	case ReportStatus::cancelled:
		return "cancelled";
	}
	return "unknown";
}

ReportStatus parse_report_status(std::string_view s) {
	if (s == "running") {
		return ReportStatus::running;
	}
	if (s == "done") {
		return ReportStatus::done;
	}
	if (s == "cancelled") {
		return ReportStatus::cancelled;
	}
	throw ProtocolError("unknown report status '" + std::string(s) + "'");
}

std::string_view to_string(CollectorStatus s) {
	switch (s) {
	case CollectorStatus::running:
		return "running";
	case CollectorStatus::done_full_scan:
		return "done-full-scan";
	case CollectorStatus::done_threshold:
		return "done-threshold";
	case CollectorStatus::done_idle:
		return "done-idle";
	case CollectorStatus::cancelled:
		return "cancelled";
	}
	return "unknown";
}

CollectorStatus parse_collector_status(std::string_view s) {
	for (auto c : {CollectorStatus::running, CollectorStatus::done_full_scan, CollectorStatus::done_threshold,
	               CollectorStatus::done_idle, CollectorStatus::cancelled}) {
		if (to_string(c) == s) {
			return c;
		}
	}
	throw ProtocolError("unknown collector status '" + std::string(s) + "'");
}

void to_json(json &j, const ReportStatus &s) {
	j = to_string(s);
}
void from_json(const json &j, ReportStatus &s) {
	s = parse_report_status(j.get<std::string>());
}
void to_json(json &j, const CollectorStatus &s) {
	j = to_string(s);
}
void from_json(const json &j, CollectorStatus &s) {
	s = parse_collector_status(j.get<std::string>());
}
void to_json(json &j, const Query &q) {
	j = q.to_json();
}
void from_json(const json &j, Query &q) {
	q = Query::from_json(j);
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CountEstimate, value, margin, fraction_scanned, rows_matched)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(InitiateReport, report_id, query, error_threshold, sub_cluster_size,
                                   fetch_interval_ms)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DistributeRequest, report_id, query, aggregator, push_interval_ms, error_threshold)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DistributeAck, report_id, node_id, accepted, reason)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PartialResult, report_id, node_id, matched_weight, matched_weight_sq, rows_matched,
                                   rows_scanned, rows_total, sample_version, status)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FetchResult, report_id)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ResultEnvelope, report_id, estimate, status)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SampleInformation, node_id, sample_id, stratum_counts, total_weight, rows, version)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Cancel, report_id, reason)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Hello, node_id)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Register, node_id, role)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Member, node_id, role)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Membership, members)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AcquireLease, node_id)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LeaseGrant, node_id, granted, sample_id, subsample_id, path, checksum, epoch,
                                   expires_ms)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RenewLease, node_id, subsample_id, epoch)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ReleaseLease, node_id, subsample_id, epoch)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PermitRequest, node_id)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PermitGrant, node_id, granted)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PermitRelease, node_id)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AggregatorSlot, node_id, release)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SlotGrant, node_id, granted)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SubsampleEntry, subsample_id, path, checksum)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PublishSample, sample_id, manifest)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Event, kind, sample_id, node_id, role)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ErrorReply, code, message)

namespace {

// Indexed like the Message variant.
constexpr std::array<std::string_view, std::variant_size_v<Message>> kTypeNames = {
    "InitiateReport", "DistributeRequest", "DistributeAck", "PartialResult",  "FetchResult",
    "ResultEnvelope", "SampleInformation", "Cancel",        "Hello",          "Register",
    "Membership",     "AcquireLease",      "LeaseGrant",    "RenewLease",     "ReleaseLease",
    "PermitRequest",  "PermitGrant",       "PermitRelease", "AggregatorSlot", "SlotGrant",
    "PublishSample",  "Event",             "Error"};

template <size_t I = 0>
Message decode_alternative(size_t index, const json &j) {
	if constexpr (I < std::variant_size_v<Message>) {
		if (index == I) {
			return Message(std::in_place_index<I>, j.get<std::variant_alternative_t<I, Message>>());
		}
		return decode_alternative<I + 1>(index, j);
	} else {
		throw ProtocolError("unreachable message index");
	}
}

uint32_t read_be32(std::string_view b) {
	return (uint32_t(uint8_t(b[0])) << 24) | (uint32_t(uint8_t(b[1])) << 16) | (uint32_t(uint8_t(b[2])) << 8) |
	       uint32_t(uint8_t(b[3]));
}

} // namespace

std::string_view message_type(const Message &m) {
	return kTypeNames[m.index()];
}

json message_to_json(const Message &m) {
	json j = std::visit([](const auto &x) { return json(x); }, m);
	j["type"] = message_type(m);
	return j;
}

Message message_from_json(const json &j) {
	if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
		throw ProtocolError("message payload has no \"type\" discriminator");
	}
	auto type = j["type"].get<std::string>();
	for (size_t i = 0; i < kTypeNames.size(); ++i) {
		if (kTypeNames[i] == type) {
			try {
				return decode_alternative(i, j);
			} catch (const json::exception &e) {
				throw ProtocolError("malformed " + type + " payload: " + e.what());
			} catch (const Error &e) {
				throw ProtocolError("malformed " + type + " payload: " + e.what());
			}
		}
	}
	throw ProtocolError("unknown message type '" + type + "'");
}

std::string encode(const Message &m) {
	auto payload = message_to_json(m).dump();
	if (payload.size() > kMaxFrameBytes) {
		throw ProtocolError("message exceeds the maximum frame size");
	}
	auto n = static_cast<uint32_t>(payload.size());
	std::string frame;
	frame.reserve(4 + payload.size());
	frame.push_back(static_cast<char>(n >> 24));
	frame.push_back(static_cast<char>(n >> 16));
	frame.push_back(static_cast<char>(n >> 8));
	frame.push_back(static_cast<char>(n));
	frame += payload;
	return frame;
}

std::optional<Message> try_decode(std::string_view bytes, size_t &consumed) {
	if (bytes.size() < 4) {
		return std::nullopt;
	}
	auto n = read_be32(bytes);
	if (n > kMaxFrameBytes) {
		throw ProtocolError("frame length " + std::to_string(n) + " exceeds the maximum");
	}
	if (bytes.size() < 4 + size_t {n}) {
		return std::nullopt;
	}
	json j;
	try {
		j = json::parse(bytes.substr(4, n));
	} catch (const json::exception &e) {
		throw ProtocolError(std::string("malformed frame payload: ") + e.what());
	}
	auto m = message_from_json(j);
	consumed = 4 + size_t {n};
	return m;
}

Message decode(std::string_view frame) {
	size_t consumed = 0;
	auto m = try_decode(frame, consumed);
	if (!m) {
		throw ProtocolError("truncated frame");
	}
	if (consumed != frame.size()) {
		throw ProtocolError("trailing bytes after frame");
	}
	return std::move(*m);
}

std::optional<Message> FrameReader::next() {
	size_t consumed = 0;
	auto m = try_decode(std::string_view(buffer_).substr(offset_), consumed);
	if (!m) {
		return std::nullopt;
	}
	offset_ += consumed;
	if (offset_ > 4096 && offset_ * 2 > buffer_.size()) {
		buffer_.erase(0, offset_);
		offset_ = 0;
	}
	return m;
}

} // namespace stratcount
