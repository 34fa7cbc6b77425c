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

#include "stratcount/counter.hpp"

#include "stratcount/binary_io.hpp"
#include "stratcount/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>
#include <thread>

namespace stratcount {

// ---------------------------------------------------------------------------
// LoadedSubsample
// ---------------------------------------------------------------------------

namespace {

std::string pack_cells(std::span<const Value> cells) {
	std::string out(cells.size() * 2, '\0');
	for (size_t i = 0; i < cells.size(); ++i) {
		out[2 * i] = static_cast<char>(cells[i] & 0xFF);
		out[2 * i + 1] = static_cast<char>(cells[i] >> 8);
	}
	return out;
}

void unpack_cells(std::string_view bytes, std::vector<Value> &out) {
	out.resize(bytes.size() / 2);
	for (size_t i = 0; i < out.size(); ++i) {
		out[i] = static_cast<Value>(uint8_t(bytes[2 * i]) | (uint16_t(uint8_t(bytes[2 * i + 1])) << 8));
	}
}

std::string deflate_block(const std::string &raw) {
	uLongf bound = compressBound(static_cast<uLong>(raw.size()));
	std::string out(bound, '\0');
	if (compress2(reinterpret_cast<Bytef *>(out.data()), &bound, reinterpret_cast<const Bytef *>(raw.data()),
	              static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK) {
		throw Error("block compression failed");
	}
	out.resize(bound);
	return out;
}

} // namespace

LoadedSubsample::LoadedSubsample(const Sample &sample, uint64_t version, uint64_t shuffle_seed, bool compress,
                                 size_t block_rows)
    : sample_id_(sample.id), version_(version), schema_(sample.schema), features_(sample.schema.size()),
      block_rows_(std::max<size_t>(1, block_rows)), compressed_(compress), info_(sample.info()) {
	for (auto &s : sample.strata) {
		weights_.push_back(quantize_weight(s.weight));
	}
	std::vector<uint32_t> order(sample.rows());
	std::iota(order.begin(), order.end(), 0u);
	std::mt19937_64 rng(shuffle_seed ^ fnv1a64(sample.id));
	std::shuffle(order.begin(), order.end(), rng);

	strata_.reserve(order.size());
	std::vector<Value> cells;
	for (size_t first = 0; first < order.size(); first += block_rows_) {
		auto last = std::min(order.size(), first + block_rows_);
		cells.clear();
		for (size_t i = first; i < last; ++i) {
			strata_.push_back(sample.row_strata[order[i]]);
			auto row = sample.row(order[i]);
			cells.insert(cells.end(), row.begin(), row.end());
		}
		auto raw = pack_cells(cells);
		blocks_.push_back(compressed_ ? deflate_block(raw) : std::move(raw));
	}
}

std::span<const Value> LoadedSubsample::block(size_t b, std::vector<Value> &scratch) const {
	const auto &bytes = blocks_.at(b);
	auto rows = std::min(block_rows_, strata_.size() - b * block_rows_);
	if (!compressed_) {
		unpack_cells(bytes, scratch);
		return scratch;
	}
	std::string raw(rows * features_ * 2, '\0');
	uLongf len = static_cast<uLongf>(raw.size());
	if (uncompress(reinterpret_cast<Bytef *>(raw.data()), &len, reinterpret_cast<const Bytef *>(bytes.data()),
	               static_cast<uLong>(bytes.size())) != Z_OK ||
	    len != raw.size()) {
		throw Error("corrupt compressed block " + std::to_string(b));
	}
	unpack_cells(raw, scratch);
	return scratch;
}

std::pair<size_t, size_t> LoadedSubsample::processor_range(size_t p, size_t processors) const {
	auto nb = blocks_.size();
	auto first_block = p * nb / processors;
	auto last_block = (p + 1) * nb / processors;
	return {std::min(rows(), first_block * block_rows_), std::min(rows(), last_block * block_rows_)};
}

SampleInformation LoadedSubsample::information(const NodeId &node) const {
	SampleInformation out;
	out.node_id = node;
	out.sample_id = sample_id_;
	out.stratum_counts = info_.stratum_counts;
	out.total_weight = info_.total_weight;
	out.rows = info_.rows;
	out.version = version_;
	return out;
}

size_t LoadedSubsample::memory_bytes() const {
	size_t total = strata_.size() * sizeof(uint32_t) + weights_.size() * sizeof(double);
	for (auto &b : blocks_) {
		total += b.size();
	}
	return total;
}

// ---------------------------------------------------------------------------
// Counter
// ---------------------------------------------------------------------------

std::string_view to_string(CounterState s) {
	switch (s) {
	case CounterState::acquiring:
		return "acquiring";
	case CounterState::serving:
		return "serving";
	case CounterState::draining:
		return "draining";
	case CounterState::loading:
		return "loading";
	}
	return "unknown";
}

ScanTotals CounterCollector::totals() const {
	ScanTotals out;
	for (auto &p : processors) {
		out.matched_weight += p.totals.matched_weight;
		out.matched_weight_sq += p.totals.matched_weight_sq;
		out.rows_matched += p.totals.rows_matched;
		out.rows_scanned += p.totals.rows_scanned;
	}
	out.rows_total = rows_total;
	return out;
}

Sample load_subsample_file(const LeaseGrant &grant) {
	auto sample = load_sample(grant.path);
	if (!grant.checksum.empty() && grant.checksum != sample.id) {
		throw Error("sub-sample '" + grant.path + "' does not match the manifest checksum");
	}
	return sample;
}

Counter::Counter(CounterConfig config, Transport &transport, SampleLoader loader)
    : config_(std::move(config)), transport_(transport), loader_(std::move(loader)) {
	if (config_.processors == 0) {
		throw InvalidArgument("counter needs at least one processor");
	}
}

void Counter::start(Micros now) {
	transport_.send(config_.coordinator, Register {config_.id, "counter"});
	request_lease(now);
}

void Counter::request_lease(Micros now) {
	lease_requested_ = true;
	next_retry_ = now + config_.retry_interval;
	transport_.send(config_.coordinator, AcquireLease {config_.id});
}

const CounterCollector *Counter::collector(const std::string &report_id) const {
	auto it = collectors_.find(report_id);
	return it == collectors_.end() ? nullptr : &it->second;
}

size_t Counter::running_collectors() const {
	return queue_.size();
}

bool Counter::has_work() const {
	return !queue_.empty();
}

void Counter::on_message(const NodeId &, const Message &message, Micros now) {
	std::visit(
	    [&](const auto &m) {
		    using T = std::decay_t<decltype(m)>;
		    if constexpr (std::is_same_v<T, DistributeRequest> || std::is_same_v<T, Cancel> ||
		                  std::is_same_v<T, LeaseGrant> || std::is_same_v<T, PermitGrant> ||
		                  std::is_same_v<T, Event> || std::is_same_v<T, Membership>) {
			    handle(m, now);
		    }
	    },
	    message);
}

void Counter::handle(const Membership &m, Micros) {
	for (auto &member : m.members) {
		if (member.node_id != config_.id) {
			peers_.insert(member.node_id);
		}
	}
	broadcast_information();
}

void Counter::handle(const Event &m, Micros now) {
	if (m.kind == "member-joined") {
		if (m.node_id != config_.id && peers_.insert(m.node_id).second && loaded_) {
			transport_.send(m.node_id, loaded_->information(config_.id));
		}
	} else if (m.kind == "member-left") {
		peers_.erase(m.node_id);
	} else if (m.kind == "new-sample") {
		if (state_ == CounterState::acquiring) {
			request_lease(now);
			return;
		}
		if (lease_ && lease_->sample_id == m.sample_id) {
			return;
		}
		pending_sample_ = m.sample_id;
		if (!permit_requested_) {
			permit_requested_ = true;
			transport_.send(config_.coordinator, PermitRequest {config_.id});
		}
	}
}

void Counter::handle(const PermitGrant &m, Micros now) {
	if (!m.granted || permit_held_) {
		return;
	}
	permit_held_ = true;
	if (pending_sample_ && state_ == CounterState::serving) {
		begin_drain(now);
	} else {
		permit_held_ = false;
		permit_requested_ = false;
		transport_.send(config_.coordinator, PermitRelease {config_.id});
	}
}

void Counter::begin_drain(Micros now) {
	state_ = CounterState::draining;
	if (!queue_.empty()) {
		return;
	}
	// Release before acquiring so two versions are never resident together.
	if (lease_) {
		transport_.send(config_.coordinator, ReleaseLease {config_.id, lease_->subsample_id, lease_->epoch});
	}
	drop_sample();
	state_ = CounterState::loading;
	request_lease(now);
}

void Counter::drop_sample() {
	loaded_.reset();
	lease_.reset();
}

void Counter::handle(const LeaseGrant &m, Micros now) {
	if (lease_ && m.subsample_id == lease_->subsample_id && m.epoch == lease_->epoch) {
		if (m.granted) {
			lease_->expires_ms = m.expires_ms;
			return;
		}
		// Renewal refused: the sub-sample went back to the pool.
		for (auto id : std::vector<std::string>(queue_)) {
			finish(collectors_.at(id), CollectorStatus::cancelled, now);
		}
		drop_sample();
		state_ = CounterState::acquiring;
		request_lease(now);
		return;
	}
	if (state_ != CounterState::acquiring && state_ != CounterState::loading) {
		return;
	}
	lease_requested_ = false;
	if (!m.granted) {
		if (permit_held_) {
			permit_held_ = permit_requested_ = false;
			transport_.send(config_.coordinator, PermitRelease {config_.id});
		}
		state_ = CounterState::acquiring;
		next_retry_ = now + config_.retry_interval;
		return;
	}
	load(m, now);
}

void Counter::load(const LeaseGrant &grant, Micros now) {
	try {
		auto sample = loader_(grant);
		loaded_ = std::make_unique<LoadedSubsample>(sample, version_ + 1, config_.shuffle_seed, config_.compress,
		                                            config_.block_rows);
	} catch (const std::exception &) {
		loaded_.reset();
		transport_.send(config_.coordinator, ReleaseLease {config_.id, grant.subsample_id, grant.epoch});
		if (permit_held_) {
			permit_held_ = permit_requested_ = false;
			transport_.send(config_.coordinator, PermitRelease {config_.id});
		}
		state_ = CounterState::acquiring;
		next_retry_ = now + config_.retry_interval;
		return;
	}
	++version_;
	lease_ = grant;
	peak_resident_ = std::max<uint64_t>(peak_resident_, loaded_->rows());
	state_ = CounterState::serving;
	next_renew_ = now + config_.renew_interval;
	if (pending_sample_ && *pending_sample_ == grant.sample_id) {
		pending_sample_.reset();
	}
	if (permit_held_) {
		permit_held_ = permit_requested_ = false;
		transport_.send(config_.coordinator, PermitRelease {config_.id});
	}
	broadcast_information();
	if (on_load) {
		on_load(loaded_->information(config_.id), now);
	}
	if (pending_sample_ && !permit_requested_) {
		permit_requested_ = true;
		transport_.send(config_.coordinator, PermitRequest {config_.id});
	}
}

void Counter::broadcast_information() {
	if (!loaded_) {
		return;
	}
	auto info = loaded_->information(config_.id);
	for (auto &peer : peers_) {
		transport_.send(peer, info);
	}
}

void Counter::handle(const DistributeRequest &m, Micros now) {
	if (auto it = collectors_.find(m.report_id); it != collectors_.end()) {
		transport_.send(m.aggregator, DistributeAck {m.report_id, config_.id, true, ""});
		if (is_finished(it->second.status)) {
			push(it->second, now);
		}
		return;
	}
	if (state_ != CounterState::serving || !loaded_) {
		transport_.send(m.aggregator,
		                DistributeAck {m.report_id, config_.id, false, "busy: " + std::string(to_string(state_))});
		return;
	}
	CounterCollector c;
	try {
		c.query = CompiledQuery(m.query, loaded_->schema());
	} catch (const Error &e) {
		transport_.send(m.aggregator, DistributeAck {m.report_id, config_.id, false, e.what()});
		return;
	}
	c.report_id = m.report_id;
	c.aggregator = m.aggregator;
	c.push_interval = m.push_interval_ms > 0 ? m.push_interval_ms * kMillis : config_.default_push_interval;
	c.threshold = m.error_threshold;
	c.rows_total = loaded_->rows();
	c.sample_version = loaded_->version();
	c.created = c.last_activity = now;
	c.next_push = now + c.push_interval;
	for (size_t p = 0; p < config_.processors; ++p) {
		ProcessorState ps;
		std::tie(ps.cursor, ps.end) = loaded_->processor_range(p, config_.processors);
		c.processors.push_back(std::move(ps));
	}
	auto &stored = collectors_.emplace(m.report_id, std::move(c)).first->second;
	queue_.push_back(m.report_id);
	transport_.send(m.aggregator, DistributeAck {m.report_id, config_.id, true, ""});
	if (stored.rows_total == 0) {
		finish(stored, CollectorStatus::done_full_scan, now);
	}
}

void Counter::handle(const Cancel &m, Micros now) {
	auto it = collectors_.find(m.report_id);
	if (it != collectors_.end() && !is_finished(it->second.status)) {
		finish(it->second, CollectorStatus::cancelled, now);
	}
}

bool Counter::push(CounterCollector &c, Micros now) {
	PartialResult p;
	auto t = c.totals();
	p.report_id = c.report_id;
	p.node_id = config_.id;
	p.matched_weight = t.matched_weight;
	p.matched_weight_sq = t.matched_weight_sq;
	p.rows_matched = t.rows_matched;
	p.rows_scanned = t.rows_scanned;
	p.rows_total = t.rows_total;
	p.sample_version = c.sample_version;
	p.status = c.status;
	bool ok = transport_.send(c.aggregator, p);
	if (ok) {
		c.last_activity = now;
	}
	return ok;
}

void Counter::finish(CounterCollector &c, CollectorStatus status, Micros now) {
	c.status = status;
	c.finished_at = now;
	std::erase(queue_, c.report_id);
	push(c, now);
	if (on_finish) {
		on_finish(c, now);
	}
	if (state_ == CounterState::draining && queue_.empty()) {
		begin_drain(now);
	}
}

void Counter::check_threshold(CounterCollector &c, Micros now) {
	if (c.threshold <= 0.0 || !loaded_) {
		return;
	}
	auto est = extrapolate(c.totals(), loaded_->information(config_.id).total_weight);
	if (est.value > 0.0 && est.margin / est.value <= c.threshold) {
		finish(c, CollectorStatus::done_threshold, now);
	}
}

void Counter::scan_processor(CounterCollector &c, ProcessorState &p, uint64_t budget) {
	const auto &data = *loaded_;
	const size_t K = data.features();
	const size_t B = data.block_rows();
	std::span<const Value> cells;
	while (budget > 0 && p.cursor < p.end) {
		size_t b = p.cursor / B;
		if (p.cached_block != b) {
			data.block(b, p.scratch);
			p.cached_block = b;
		}
		cells = p.scratch;
		size_t stop = std::min({p.end, (b + 1) * B, p.cursor + static_cast<size_t>(budget)});
		for (size_t i = p.cursor; i < stop; ++i) {
			if (c.query.matches(cells.subspan((i - b * B) * K, K))) {
				p.totals.add(data.weight(i));
			}
		}
		p.totals.rows_scanned += stop - p.cursor;
		budget -= stop - p.cursor;
		p.cursor = stop;
	}
}

uint64_t Counter::scan(uint64_t budget, Micros now) {
	if (queue_.empty() || !loaded_ || budget == 0) {
		return 0;
	}
	auto running = queue_;
	uint64_t share = std::max<uint64_t>(1, budget / running.size());
	uint64_t scanned = 0;
	for (auto &id : running) {
		auto &c = collectors_.at(id);
		if (is_finished(c.status)) {
			continue;
		}
		auto before = c.totals().rows_scanned;
		if (config_.parallel && c.processors.size() > 1) {
			std::vector<std::thread> threads;
			for (size_t p = 1; p < c.processors.size(); ++p) {
				threads.emplace_back([&, p] { scan_processor(c, c.processors[p], share); });
			}
			scan_processor(c, c.processors[0], share);
			for (auto &t : threads) {
				t.join();
			}
		} else {
			for (auto &p : c.processors) {
				scan_processor(c, p, share);
			}
		}
		auto t = c.totals();
		scanned += t.rows_scanned - before;
		if (t.rows_scanned == c.rows_total) {
			finish(c, CollectorStatus::done_full_scan, now);
		} else {
			check_threshold(c, now);
		}
	}
	scanned_total_ += scanned;
	return scanned;
}

void Counter::tick(Micros now) {
	if (lease_ && (state_ == CounterState::serving || state_ == CounterState::draining) && now >= next_renew_) {
		next_renew_ = now + config_.renew_interval;
		transport_.send(config_.coordinator, RenewLease {config_.id, lease_->subsample_id, lease_->epoch});
	}
	if ((state_ == CounterState::acquiring || state_ == CounterState::loading) && now >= next_retry_) {
		request_lease(now);
	}
	for (auto id : std::vector<std::string>(queue_)) {
		auto &c = collectors_.at(id);
		if (now - c.last_activity > config_.idle_window) {
			finish(c, CollectorStatus::done_idle, now);
			continue;
		}
		if (now >= c.next_push) {
			push(c, now);
			while (c.next_push <= now) {
				c.next_push += c.push_interval;
			}
		}
	}
	for (auto it = collectors_.begin(); it != collectors_.end();) {
		if (is_finished(it->second.status) && now - it->second.finished_at > config_.cache_retention) {
			it = collectors_.erase(it);
		} else {
			++it;
		}
	}
}

} // namespace stratcount
