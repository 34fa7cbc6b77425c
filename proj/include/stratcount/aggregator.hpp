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

#include "stratcount/node.hpp"
#include "stratcount/query.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace stratcount {

struct AggregatorConfig {
	NodeId id = "aggregator";
	NodeId coordinator = "coordinator";
	uint32_t default_sub_cluster = 0; //!< 0 = every live counter
	uint32_t push_interval_ms = 200;
	//! A participant silent this long is treated as lost; 0 = 5 push intervals.
	Micros stall_timeout = 0;
	Micros idle_window = 120 * kSeconds;
	Micros cache_retention = 300 * kSeconds;
	uint64_t seed = 0;
	//! Forward the report threshold to counters for node-local termination.
	bool forward_threshold = false;
	std::optional<Schema> schema;
};

struct Participant {
	NodeId node;
	SampleInformation snapshot; //!< frozen at initiation (or replacement)
	std::optional<PartialResult> latest;
	Micros last_heard = 0;
	bool lost = false;
	bool rejected = false;

	bool finished() const {
		return rejected || lost || (latest && is_finished(latest->status));
	}
};

struct AggregatorCollector {
	std::string report_id;
	Query query;
	double threshold = 0.0;
	std::vector<Participant> participants;
	std::set<NodeId> tried;
	ReportStatus status = ReportStatus::running;
	Micros created = 0;
	Micros last_fetch = 0;
	Micros finished_at = 0;
	std::optional<CountEstimate> final;
};

/// Merge of the latest cumulative partial per participant: per-counter prefix
/// extrapolation, scale-up by snapshot weight over responding weight, and a
/// margin inflated by the missing weight times the largest observed match rate.
CountEstimate merge_partials(const std::vector<Participant> &participants);

class Aggregator : public Node {
public:
	Aggregator(AggregatorConfig config, Transport &transport);

	const NodeId &id() const override {
		return config_.id;
	}
	void start(Micros now) override;
	void on_message(const NodeId &from, const Message &message, Micros now) override;
	void tick(Micros now) override;

	//! Throws Unavailable when no live counter is known.
	std::string initiate_report(const Query &query, double threshold, uint32_t sub_cluster, Micros now,
	                            std::string report_id = {});
	//! Throws NotFound for unknown or evicted ids.
	ResultEnvelope fetch(const std::string &report_id, Micros now);

	const AggregatorCollector *report(const std::string &report_id) const;
	std::vector<NodeId> live_counters() const;
	const std::map<NodeId, SampleInformation> &registry() const {
		return registry_;
	}
	nlohmann::json cluster_summary() const;
	const std::optional<Schema> &schema() const {
		return config_.schema;
	}
	Micros stall_timeout() const;

	//! Fires once when a report leaves the running state.
	std::function<void(const AggregatorCollector &, Micros)> on_done;

private:
	void handle_partial(const PartialResult &p, Micros now);
	void handle_ack(const DistributeAck &a, Micros now);
	void update_registry(const SampleInformation &info);
	void forget_counter(const NodeId &node);
	void distribute(AggregatorCollector &c, const Participant &p);
	void evaluate(AggregatorCollector &c, Micros now);
	void complete(AggregatorCollector &c, ReportStatus status, Micros now, bool cancel_participants);

	AggregatorConfig config_;
	Transport &transport_;
	std::mt19937_64 rng_;
	uint64_t next_seq_ = 1;
	std::map<NodeId, SampleInformation> registry_;
	std::map<std::string, AggregatorCollector> reports_;
};

} // namespace stratcount
