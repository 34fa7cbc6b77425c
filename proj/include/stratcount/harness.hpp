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

#include "stratcount/aggregator.hpp"
#include "stratcount/counter.hpp"
#include "stratcount/datamodel.hpp"
#include "stratcount/node.hpp"
#include "stratcount/query.hpp"
#include "stratcount/sample.hpp"
#include "stratcount/strata.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace stratcount {

struct KillEvent {
	size_t counter = 0; //!< counter index
	Micros at = 0;
};

/// Virtual-time scenario. Every field participates in determinism.
struct SimConfig {
	size_t counters = 3;
	uint32_t sub_cluster = 0;
	uint32_t push_interval_ms = 100;
	uint32_t fetch_interval_ms = 0; //!< 0 = never fetch before completion
	double drop_probability = 0.0;  //!< applied to PartialResult messages
	std::vector<uint64_t> drop_partials; //!< global PartialResult send indices to drop
	std::vector<KillEvent> kills;
	std::optional<Micros> publish_at; //!< publish the next sample at this time
	uint64_t seed = 1;
	Micros latency = 500;         //!< one-way per message
	Micros jitter = 100;          //!< uniform extra latency, FIFO per link preserved
	double row_cost_us = 0.05;    //!< per row per processor
	Micros scan_quantum = 1000;
	Micros message_cost = 20;     //!< aggregator time per inbound message
	Micros merge_cost = 200;      //!< aggregator time per fetch
	Micros tick_interval = 10000;
	size_t processors = 1;
	bool compress = false;
	double threshold = 0.0;
	Micros report_at = 100000;
	Micros horizon = 600 * kSeconds;
	Micros stall_timeout = 0; //!< aggregator; 0 = 5 push intervals
};

nlohmann::json to_json(const SimConfig &c);
SimConfig sim_config_from_json(const nlohmann::json &j);

/// Sub-samples served by the counters, plus an optional replacement set
/// published mid-run.
struct ScenarioData {
	std::string sample_id;
	std::vector<Sample> subsamples;
	std::string next_sample_id;
	std::vector<Sample> next_subsamples;
	std::vector<Query> queries;
};

ScenarioData make_scenario_data(const Sample &sample, size_t nodes, uint64_t seed, std::vector<Query> queries,
                                const Sample *next = nullptr);

struct TimingBreakdown {
	double t_d = 0; //!< initiation to last request delivered (ms)
	double t_s = 0; //!< to last counter scan finished
	double t_c = 0; //!< to last final partial received
	double t_m = 0; //!< to report completion
	double total() const {
		return t_d + t_s + t_c + t_m;
	}
};

struct ReportOutcome {
	std::string report_id;
	CountEstimate estimate;
	ReportStatus status = ReportStatus::running;
	TimingBreakdown timing;
	Micros initiated_at = 0;
	Micros done_at = 0;
	//! margin/estimate after each merged fetch or partial, in arrival order
	std::vector<CountEstimate> progress;
};

struct SimResult {
	std::vector<ReportOutcome> reports;
	std::vector<std::string> log;
	uint64_t messages_sent = 0;
	uint64_t partials_sent = 0;
	uint64_t partials_dropped = 0;
	std::vector<uint64_t> rows_scanned;      //!< per counter
	std::vector<uint64_t> peak_resident;     //!< per counter
	std::vector<uint64_t> final_versions;    //!< per counter
	Micros ended_at = 0;
};

SimResult run_scenario(const SimConfig &config, const ScenarioData &data);

//! Writes the config as the first line, then the event log.
void write_event_log(const std::string &path, const SimConfig &config, const SimResult &result);
std::pair<SimConfig, std::vector<std::string>> read_event_log(const std::string &path);

// ---------------------------------------------------------------------------
// Synthetic correlated data and experiments
// ---------------------------------------------------------------------------

/// Hub-and-leaf tree model. `hubs` features of cardinality `hub_cardinality`
/// form a chain coupled by `hub_beta` (energy off the diagonal). Binary leaves
/// are dealt round-robin over the hubs; the r-th leaf of a hub agrees with the
/// Walsh function r+1 of the hub value at energy 0 and disagrees at
/// `leaf_beta`. Distinct Walsh functions of a uniform hub are independent, so
/// leaves of one hub are pairwise independent while each depends strongly on
/// its hub.
struct CorrelatedParams {
	size_t hubs = 4;
	uint32_t hub_cardinality = 8;
	size_t leaves = 26;
	double hub_beta = 2.0;
	double leaf_beta = 4.0;
	size_t rows = 1'000'000;
	uint64_t seed = 7;
};

Schema correlated_schema(const CorrelatedParams &p);
std::vector<EdgePotential> correlated_edges(const CorrelatedParams &p);
Dataset generate_correlated(const CorrelatedParams &p);

struct ErrorRatioConfig {
	CorrelatedParams data;
	uint64_t n = 3000;
	std::vector<double> selectivities {0.003, 0.01, 0.03, 0.1};
	size_t queries_per_bin = 200;
	size_t seeds = 10;
	//! Sits between the hub-leaf NMI and the NMIs of induced non-edges.
	double mi_threshold = 0.16;
	FallbackMode fallback = FallbackMode::redistribute;
	uint64_t workload_seed = 11;
};

struct ErrorRatioRow {
	double selectivity = 0;
	size_t queries = 0;
	double err_ours = 0;
	double err_uniform = 0;
	double err_simple = 0;
	double ratio_uniform = 1; //!< ours / uniform, 1 when both are 0
	double ratio_simple = 1;
};

struct ErrorRatioResult {
	std::vector<ErrorRatioRow> rows;
	std::vector<size_t> selected;
	size_t strata_raw = 0;
	size_t strata_unstable = 0;
	size_t strata_final = 0;
};

ErrorRatioResult experiment_error_ratio(const ErrorRatioConfig &config);
ErrorRatioResult experiment_error_ratio(const Dataset &dataset, const ErrorRatioConfig &config);
std::string error_ratio_csv(const ErrorRatioResult &r);

struct FetchIntervalRow {
	uint32_t interval_ms = 0; //!< 0 = no-fetch baseline
	double total_ms = 0;
	double deviation = 0; //!< |T - T_0| / T_0
};

std::vector<FetchIntervalRow> experiment_fetch_interval(const SimConfig &config, const ScenarioData &data,
                                                        const std::vector<uint32_t> &intervals_ms);
std::string fetch_interval_csv(const std::vector<FetchIntervalRow> &rows);

struct OverheadResult {
	double distributed_ms = 0;
	double single_ms = 0;
	double ratio = 0;
	TimingBreakdown timing;
};

/// Distributed report time over the time one machine needs to scan one
/// node-sized sub-sample with the same processors and per-row cost.
OverheadResult experiment_distributed_overhead(const SimConfig &config, const ScenarioData &data);

} // namespace stratcount
