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

#include "stratcount/aggregator.hpp"

#include "stratcount/error.hpp"

#include <algorithm>
#include <cmath>

namespace stratcount {

CountEstimate merge_partials(const std::vector<Participant> &participants) {
	CountEstimate out;
	double snapshot_weight = 0.0;
	for (auto &p : participants) {
		snapshot_weight += p.snapshot.total_weight;
	}
	double responding_weight = 0.0;
	double sum = 0.0;
	double variance = 0.0;
	double scanned_weight = 0.0;
	double missing = 0.0;
	double max_rate = 0.0;
	bool any = false;
	for (auto &p : participants) {
		if (!p.latest || p.rejected) {
			continue;
		}
		any = true;
		const auto &r = *p.latest;
		ScanTotals t {r.matched_weight, r.matched_weight_sq, r.rows_matched, r.rows_scanned, r.rows_total};
		const double w = p.snapshot.total_weight;
		auto est = extrapolate(t, w);
		sum += est.value;
		variance += (est.margin / kZ95) * (est.margin / kZ95);
		responding_weight += w;
		scanned_weight += w * est.fraction_scanned;
		out.rows_matched += r.rows_matched;
		if (p.lost) {
			missing += w * (1.0 - est.fraction_scanned);
		}
		if (w > 0.0) {
			max_rate = std::max(max_rate, est.value / w);
		}
	}
	if (!any) {
		out.margin = snapshot_weight;
		return out;
	}
	missing += snapshot_weight - responding_weight;
	double scale = responding_weight == snapshot_weight ? 1.0 : snapshot_weight / responding_weight;
	out.value = scale == 1.0 ? sum : scale * sum;
	out.margin = kZ95 * scale * std::sqrt(variance) + missing * max_rate;
	out.fraction_scanned = snapshot_weight > 0.0 ? scanned_weight / snapshot_weight : 1.0;
	return out;
}

Aggregator::Aggregator(AggregatorConfig config, Transport &transport)
    : config_(std::move(config)), transport_(transport), rng_(config_.seed) {
	if (config_.push_interval_ms == 0) {
		throw InvalidArgument("push interval must be positive");
	}
}

Micros Aggregator::stall_timeout() const {
	return config_.stall_timeout > 0 ? config_.stall_timeout : 5 * config_.push_interval_ms * kMillis;
}

void Aggregator::start(Micros) {
	transport_.send(config_.coordinator, Register {config_.id, "aggregator"});
	transport_.send(config_.coordinator, AggregatorSlot {config_.id, false});
}

const AggregatorCollector *Aggregator::report(const std::string &report_id) const {
	auto it = reports_.find(report_id);
	return it == reports_.end() ? nullptr : &it->second;
}

std::vector<NodeId> Aggregator::live_counters() const {
	std::vector<NodeId> out;
	for (auto &[node, info] : registry_) {
		out.push_back(node);
	}
	return out;
}

void Aggregator::update_registry(const SampleInformation &info) {
	auto it = registry_.find(info.node_id);
	if (it == registry_.end() || info.version >= it->second.version) {
		registry_[info.node_id] = info;
	}
}

void Aggregator::forget_counter(const NodeId &node) {
	registry_.erase(node);
}

void Aggregator::distribute(AggregatorCollector &c, const Participant &p) {
	DistributeRequest d;
	d.report_id = c.report_id;
	d.query = c.query;
	d.aggregator = config_.id;
	d.push_interval_ms = config_.push_interval_ms;
	d.error_threshold = config_.forward_threshold ? c.threshold : 0.0;
	transport_.send(p.node, d);
}

std::string Aggregator::initiate_report(const Query &query, double threshold, uint32_t sub_cluster, Micros now,
                                        std::string report_id) {
	if (threshold < 0.0 || !std::isfinite(threshold)) {
		throw InvalidArgument("error threshold must be a finite non-negative number");
	}
	if (config_.schema) {
		query.validate(*config_.schema);
	}
	auto live = live_counters();
	if (live.empty()) {
		throw Unavailable("no live counter nodes");
	}
	if (report_id.empty()) {
		report_id = config_.id + "-" + std::to_string(next_seq_++);
	}
	if (reports_.count(report_id)) {
		return report_id;
	}
	size_t c = sub_cluster ? sub_cluster : config_.default_sub_cluster;
	if (c == 0 || c > live.size()) {
		c = live.size();
	}
	std::shuffle(live.begin(), live.end(), rng_);
	live.resize(c);
	std::sort(live.begin(), live.end());

	AggregatorCollector col;
	col.report_id = report_id;
	col.query = query;
	col.threshold = threshold;
	col.created = col.last_fetch = now;
	for (auto &node : live) {
		col.participants.push_back({node, registry_.at(node), std::nullopt, now, false, false});
		col.tried.insert(node);
	}
	auto &stored = reports_.emplace(report_id, std::move(col)).first->second;
	for (auto &p : stored.participants) {
		distribute(stored, p);
	}
	return report_id;
}

ResultEnvelope Aggregator::fetch(const std::string &report_id, Micros now) {
	auto it = reports_.find(report_id);
	if (it == reports_.end()) {
		throw NotFound("unknown report '" + report_id + "'");
	}
	auto &c = it->second;
	c.last_fetch = now;
	ResultEnvelope env;
	env.report_id = report_id;
	env.status = c.status;
	env.estimate = c.final ? *c.final : merge_partials(c.participants);
	return env;
}

void Aggregator::handle_partial(const PartialResult &p, Micros now) {
	auto it = reports_.find(p.report_id);
	if (it == reports_.end() || it->second.status != ReportStatus::running) {
		return;
	}
	auto &c = it->second;
	for (auto &part : c.participants) {
		if (part.node != p.node_id || part.rejected) {
			continue;
		}
		if (p.sample_version != part.snapshot.version) {
			return; // scanned a different sample than the snapshot scales for
		}
		if (part.latest && (p.rows_scanned < part.latest->rows_scanned ||
		                    (is_finished(part.latest->status) && !is_finished(p.status)))) {
			return; // stale, reordered push
		}
		part.latest = p;
		part.last_heard = now;
		part.lost = false;
		evaluate(c, now);
		return;
	}
}

void Aggregator::handle_ack(const DistributeAck &a, Micros now) {
	if (a.accepted) {
		return;
	}
	auto it = reports_.find(a.report_id);
	if (it == reports_.end() || it->second.status != ReportStatus::running) {
		return;
	}
	auto &c = it->second;
	auto part = std::find_if(c.participants.begin(), c.participants.end(),
	                         [&](const Participant &p) { return p.node == a.node_id; });
	if (part == c.participants.end() || part->latest) {
		return;
	}
	// Busy counter: swap in an untried live counter and rebuild its snapshot.
	std::vector<NodeId> spare;
	for (auto &node : live_counters()) {
		if (!c.tried.count(node)) {
			spare.push_back(node);
		}
	}
	if (spare.empty()) {
		part->rejected = true;
	} else {
		std::uniform_int_distribution<size_t> pick(0, spare.size() - 1);
		auto node = spare[pick(rng_)];
		c.tried.insert(node);
		*part = Participant {node, registry_.at(node), std::nullopt, now, false, false};
		distribute(c, *part);
	}
	evaluate(c, now);
}

void Aggregator::complete(AggregatorCollector &c, ReportStatus status, Micros now, bool cancel_participants) {
	c.final = merge_partials(c.participants);
	c.status = status;
	c.finished_at = now;
	if (cancel_participants) {
		for (auto &p : c.participants) {
			if (!p.finished()) {
				transport_.send(p.node, Cancel {c.report_id, std::string(to_string(status))});
			}
		}
	}
	if (on_done) {
		on_done(c, now);
	}
}

void Aggregator::evaluate(AggregatorCollector &c, Micros now) {
	if (c.status != ReportStatus::running) {
		return;
	}
	bool all_finished = std::all_of(c.participants.begin(), c.participants.end(),
	                                [](const Participant &p) { return p.finished(); });
	if (all_finished) {
		complete(c, ReportStatus::done, now, false);
		return;
	}
	if (c.threshold > 0.0) {
		auto est = merge_partials(c.participants);
		if (est.value > 0.0 && est.margin / est.value <= c.threshold) {
			complete(c, ReportStatus::done, now, true);
		}
	}
}

void Aggregator::on_message(const NodeId &from, const Message &message, Micros now) {
	std::visit(
	    [&](const auto &m) {
		    using T = std::decay_t<decltype(m)>;
		    if constexpr (std::is_same_v<T, SampleInformation>) {
			    update_registry(m);
		    } else if constexpr (std::is_same_v<T, PartialResult>) {
			    handle_partial(m, now);
		    } else if constexpr (std::is_same_v<T, DistributeAck>) {
			    handle_ack(m, now);
		    } else if constexpr (std::is_same_v<T, Event>) {
			    if (m.kind == "member-left" || m.kind == "lease-expired") {
				    forget_counter(m.node_id);
			    }
		    } else if constexpr (std::is_same_v<T, InitiateReport>) {
			    try {
				    auto id = initiate_report(m.query, m.error_threshold, m.sub_cluster_size, now, m.report_id);
				    transport_.send(from, fetch(id, now));
			    } catch (const Error &e) {
				    transport_.send(from, ErrorReply {"rejected", e.what()});
			    }
		    } else if constexpr (std::is_same_v<T, FetchResult>) {
			    try {
				    transport_.send(from, fetch(m.report_id, now));
			    } catch (const NotFound &e) {
				    transport_.send(from, ErrorReply {"not-found", e.what()});
			    }
		    }
	    },
	    message);
}

void Aggregator::tick(Micros now) {
	const auto stall = stall_timeout();
	for (auto it = reports_.begin(); it != reports_.end();) {
		auto &c = it->second;
		if (c.status == ReportStatus::running) {
			for (auto &p : c.participants) {
				if (!p.finished() && now - p.last_heard > stall) {
					p.lost = true;
				}
			}
			evaluate(c, now);
			if (c.status == ReportStatus::running && now - c.last_fetch > config_.idle_window) {
				complete(c, ReportStatus::cancelled, now, true);
			}
			++it;
		} else if (now - std::max(c.finished_at, c.last_fetch) > config_.cache_retention) {
			it = reports_.erase(it);
		} else {
			++it;
		}
	}
}

nlohmann::json Aggregator::cluster_summary() const {
	nlohmann::json counters = nlohmann::json::array();
	for (auto &[node, info] : registry_) {
		counters.push_back({{"node", node},
		                    {"sampleId", info.sample_id},
		                    {"rows", info.rows},
		                    {"totalWeight", info.total_weight},
		                    {"version", info.version}});
	}
	size_t running = 0, finished = 0;
	for (auto &[id, c] : reports_) {
		(c.status == ReportStatus::running ? running : finished)++;
	}
	return {{"aggregator", config_.id},
	        {"counters", counters},
	        {"liveCounters", registry_.size()},
	        {"reports", {{"running", running}, {"finished", finished}}}};
}

} // namespace stratcount
