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
#include "stratcount/sample.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace stratcount {

/// In-memory sub-sample in a load-time shuffled row order, split into
/// fixed-size blocks that are optionally zlib-compressed.
class LoadedSubsample {
public:
	LoadedSubsample(const Sample &sample, uint64_t version, uint64_t shuffle_seed, bool compress, size_t block_rows);

	const std::string &sample_id() const {
		return sample_id_;
	}
	uint64_t version() const {
		return version_;
	}
	size_t rows() const {
		return strata_.size();
	}
	size_t features() const {
		return features_;
	}
	size_t block_rows() const {
		return block_rows_;
	}
	size_t blocks() const {
		return blocks_.size();
	}
	bool compressed() const {
		return compressed_;
	}
	const Schema &schema() const {
		return schema_;
	}
	//! Quantized weight of row i (shuffled order).
	double weight(size_t i) const {
		return weights_[strata_[i]];
	}
	//! Row-major cells of block b; `scratch` receives decompressed data when needed.
	std::span<const Value> block(size_t b, std::vector<Value> &scratch) const;
	//! Row range [first, last) of processor p of P, aligned to blocks.
	std::pair<size_t, size_t> processor_range(size_t p, size_t processors) const;
	SampleInformation information(const NodeId &node) const;
	size_t memory_bytes() const;

private:
	std::string sample_id_;
	uint64_t version_;
	Schema schema_;
	size_t features_;
	size_t block_rows_;
	bool compressed_;
	std::vector<uint32_t> strata_;
	std::vector<double> weights_;
	std::vector<std::string> blocks_; //!< raw or compressed little-endian u16 cells
	SampleInfo info_;
};

struct CounterConfig {
	NodeId id = "counter";
	NodeId coordinator = "coordinator";
	size_t processors = 1;
	Micros default_push_interval = 200 * kMillis;
	Micros idle_window = 120 * kSeconds;
	Micros cache_retention = 300 * kSeconds;
	Micros renew_interval = 3 * kSeconds;
	Micros retry_interval = 1 * kSeconds;
	bool compress = false;
	size_t block_rows = 4096;
	uint64_t shuffle_seed = 0;
	//! Run processors on their own threads inside scan(); simulation keeps this off.
	bool parallel = false;
};

struct ProcessorState {
	size_t cursor = 0;
	size_t end = 0;
	ScanTotals totals;
	size_t cached_block = static_cast<size_t>(-1);
	std::vector<Value> scratch;
};

struct CounterCollector {
	std::string report_id;
	CompiledQuery query;
	NodeId aggregator;
	Micros push_interval = 0;
	double threshold = 0.0;
	uint64_t rows_total = 0;
	uint64_t sample_version = 0;
	std::vector<ProcessorState> processors;
	CollectorStatus status = CollectorStatus::running;
	Micros created = 0;
	Micros next_push = 0;
	Micros last_activity = 0;
	Micros finished_at = 0;

	//! Cumulative totals merged over processors.
	ScanTotals totals() const;
};

enum class CounterState { acquiring, serving, draining, loading };
std::string_view to_string(CounterState s);

/// Loads the sub-sample named by a lease grant (path + checksum).
using SampleLoader = std::function<Sample(const LeaseGrant &)>;

/// Loads from the lease path and verifies the checksum against the sample id.
Sample load_subsample_file(const LeaseGrant &grant);

class Counter : public Node {
public:
	Counter(CounterConfig config, Transport &transport, SampleLoader loader);

	const NodeId &id() const override {
		return config_.id;
	}
	void start(Micros now) override;
	void on_message(const NodeId &from, const Message &message, Micros now) override;
	void tick(Micros now) override;

	//! Scans up to `budget` rows per processor, split over running collectors.
	//! Returns the number of rows scanned.
	uint64_t scan(uint64_t budget, Micros now);
	bool has_work() const;

	CounterState state() const {
		return state_;
	}
	const LoadedSubsample *loaded() const {
		return loaded_.get();
	}
	uint64_t sample_version() const {
		return version_;
	}
	const CounterCollector *collector(const std::string &report_id) const;
	size_t running_collectors() const;
	uint64_t resident_rows() const {
		return loaded_ ? loaded_->rows() : 0;
	}
	uint64_t peak_resident_rows() const {
		return peak_resident_;
	}
	uint64_t rows_scanned_total() const {
		return scanned_total_;
	}
	const std::set<NodeId> &peers() const {
		return peers_;
	}

	//! Fires when a collector leaves the running state.
	std::function<void(const CounterCollector &, Micros)> on_finish;
	//! Fires after every sub-sample load.
	std::function<void(const SampleInformation &, Micros)> on_load;

private:
	void handle(const DistributeRequest &m, Micros now);
	void handle(const Cancel &m, Micros now);
	void handle(const LeaseGrant &m, Micros now);
	void handle(const PermitGrant &m, Micros now);
	void handle(const Event &m, Micros now);
	void handle(const Membership &m, Micros now);

	void request_lease(Micros now);
	void load(const LeaseGrant &grant, Micros now);
	void drop_sample();
	void begin_drain(Micros now);
	void finish(CounterCollector &c, CollectorStatus status, Micros now);
	bool push(CounterCollector &c, Micros now);
	void broadcast_information();
	void scan_processor(CounterCollector &c, ProcessorState &p, uint64_t budget);
	void check_threshold(CounterCollector &c, Micros now);

	CounterConfig config_;
	Transport &transport_;
	SampleLoader loader_;

	CounterState state_ = CounterState::acquiring;
	std::unique_ptr<LoadedSubsample> loaded_;
	std::optional<LeaseGrant> lease_;
	uint64_t version_ = 0;
	uint64_t peak_resident_ = 0;
	uint64_t scanned_total_ = 0;

	std::optional<std::string> pending_sample_; //!< newer sample announced but not loaded
	bool permit_requested_ = false;
	bool permit_held_ = false;
	bool lease_requested_ = false;
	Micros next_renew_ = 0;
	Micros next_retry_ = 0;

	std::map<std::string, CounterCollector> collectors_;
	std::vector<std::string> queue_; //!< running collectors in arrival order
	std::set<NodeId> peers_;
};

} // namespace stratcount
