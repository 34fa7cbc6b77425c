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

#include "stratcount/harness.hpp"

#include "stratcount/coordinator.hpp"
#include "stratcount/error.hpp"
#include "stratcount/mrf.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <set>
#include <sstream>

namespace stratcount {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config serialization
// ---------------------------------------------------------------------------

json to_json(const SimConfig &c) {
	json kills = json::array();
	for (auto &k : c.kills) {
		kills.push_back({{"counter", k.counter}, {"at", k.at}});
	}
	json j = {{"counters", c.counters},
	          {"sub_cluster", c.sub_cluster},
	          {"push_interval_ms", c.push_interval_ms},
	          {"fetch_interval_ms", c.fetch_interval_ms},
	          {"drop_probability", c.drop_probability},
	          {"drop_partials", c.drop_partials},
	          {"kills", kills},
	          {"seed", c.seed},
	          {"latency", c.latency},
	          {"jitter", c.jitter},
	          {"row_cost_us", c.row_cost_us},
	          {"scan_quantum", c.scan_quantum},
	          {"message_cost", c.message_cost},
	          {"merge_cost", c.merge_cost},
	          {"tick_interval", c.tick_interval},
	          {"processors", c.processors},
	          {"compress", c.compress},
	          {"threshold", c.threshold},
	          {"report_at", c.report_at},
	          {"horizon", c.horizon},
	          {"stall_timeout", c.stall_timeout}};
	j["publish_at"] = c.publish_at ? json(*c.publish_at) : json(nullptr);
	return j;
}

SimConfig sim_config_from_json(const json &j) {
	SimConfig c;
	auto get = [&](const char *key, auto &field) {
		if (j.contains(key) && !j[key].is_null()) {
			field = j[key].get<std::decay_t<decltype(field)>>();
		}
	};
	try {
		get("counters", c.counters);
		get("sub_cluster", c.sub_cluster);
		get("push_interval_ms", c.push_interval_ms);
		get("fetch_interval_ms", c.fetch_interval_ms);
		get("drop_probability", c.drop_probability);
		get("drop_partials", c.drop_partials);
		get("seed", c.seed);
		get("latency", c.latency);
		get("jitter", c.jitter);
		get("row_cost_us", c.row_cost_us);
		get("scan_quantum", c.scan_quantum);
		get("message_cost", c.message_cost);
		get("merge_cost", c.merge_cost);
		get("tick_interval", c.tick_interval);
		get("processors", c.processors);
		get("compress", c.compress);
		get("threshold", c.threshold);
		get("report_at", c.report_at);
		get("horizon", c.horizon);
		get("stall_timeout", c.stall_timeout);
		if (j.contains("kills")) {
			for (auto &k : j["kills"]) {
				c.kills.push_back({k.at("counter").get<size_t>(), k.at("at").get<Micros>()});
			}
		}
		if (j.contains("publish_at") && !j["publish_at"].is_null()) {
			c.publish_at = j["publish_at"].get<Micros>();
		}
	} catch (const json::exception &e) {
		throw ParseError(std::string("bad scenario config: ") + e.what());
	}
	return c;
}

ScenarioData make_scenario_data(const Sample &sample, size_t nodes, uint64_t seed, std::vector<Query> queries,
                                const Sample *next) {
	ScenarioData d;
	d.sample_id = sample.id;
	d.subsamples = split_subsamples(sample, nodes, seed);
	if (next) {
		d.next_sample_id = next->id;
		d.next_subsamples = split_subsamples(*next, nodes, seed + 1);
	}
	d.queries = std::move(queries);
	return d;
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

namespace {

class Simulation;

class SimTransport : public Transport {
public:
	SimTransport(Simulation &sim, NodeId self) : sim_(sim), self_(std::move(self)) {
	}
	bool send(const NodeId &to, const Message &message) override;

private:
	Simulation &sim_;
	NodeId self_;
};

enum class EventKind { deliver, tick, scan, initiate, fetch, kill, publish, aggregator_process };

struct SimEvent {
	Micros at;
	uint64_t seq;
	EventKind kind;
	size_t node = 0;
	NodeId from;
	std::optional<Message> message;
	std::string report_id;
};

struct LaterFirst {
	bool operator()(const SimEvent &a, const SimEvent &b) const {
		return std::tie(a.at, a.seq) > std::tie(b.at, b.seq);
	}
};

struct InboxItem {
	NodeId from;
	std::optional<Message> message; //!< empty = client fetch of `report_id`
	std::string report_id;
};

struct ReportTrack {
	ReportOutcome outcome;
	Micros distributed = 0;
	Micros scanned = 0;
	Micros final_partial = 0;
	bool done = false;
};

PublishSample manifest_of(const std::string &sample_id, const std::vector<Sample> &subs) {
	PublishSample p;
	p.sample_id = sample_id;
	for (auto &s : subs) {
		p.manifest.push_back({s.id, s.id, s.id});
	}
	return p;
}

class Simulation {
public:
	Simulation(const SimConfig &config, const ScenarioData &data)
	    : config_(config), data_(data), rng_(config.seed * 0x9E3779B97F4A7C15ULL + 1),
	      drops_(config.drop_partials.begin(), config.drop_partials.end()) {
		if (config.counters == 0) {
			throw InvalidArgument("scenario needs at least one counter");
		}
		if (config.row_cost_us <= 0 || config.scan_quantum <= 0 || config.tick_interval <= 0) {
			throw InvalidArgument("row cost, scan quantum and tick interval must be positive");
		}
		for (auto *set : {&data.subsamples, &data.next_subsamples}) {
			for (auto &s : *set) {
				samples_.emplace(s.id, &s);
			}
		}
		ids_.push_back("coordinator");
		ids_.push_back("aggregator");
		for (size_t i = 0; i < config.counters; ++i) {
			ids_.push_back("counter-" + std::to_string(i));
		}
		for (size_t i = 0; i < ids_.size(); ++i) {
			index_.emplace(ids_[i], i);
			transports_.push_back(std::make_unique<SimTransport>(*this, ids_[i]));
		}
		dead_.assign(ids_.size(), false);
		scan_scheduled_.assign(ids_.size(), false);

		coordinator_ = std::make_unique<Coordinator>(CoordinatorConfig {}, transports_[0].get());
		AggregatorConfig ac;
		ac.push_interval_ms = config.push_interval_ms;
		ac.default_sub_cluster = config.sub_cluster;
		ac.seed = config.seed;
		ac.stall_timeout = config.stall_timeout;
		if (!data.subsamples.empty()) {
			ac.schema = data.subsamples.front().schema;
		}
		aggregator_ = std::make_unique<Aggregator>(ac, *transports_[1]);
		aggregator_->on_done = [this](const AggregatorCollector &c, Micros now) {
			auto &t = tracks_.at(c.report_id);
			t.done = true;
			t.outcome.done_at = now;
			t.outcome.status = c.status;
			t.outcome.estimate = *c.final;
			log(now, "report-done " + c.report_id + " " + std::string(to_string(c.status)));
		};
		for (size_t i = 0; i < config.counters; ++i) {
			CounterConfig cc;
			cc.id = ids_[2 + i];
			cc.processors = config.processors;
			cc.compress = config.compress;
			cc.shuffle_seed = config.seed + i;
			auto counter = std::make_unique<Counter>(cc, *transports_[2 + i], [this](const LeaseGrant &g) {
				auto it = samples_.find(g.path);
				if (it == samples_.end()) {
					throw NotFound("no sub-sample at '" + g.path + "'");
				}
				return *it->second;
			});
			counter->on_finish = [this](const CounterCollector &c, Micros now) {
				auto it = tracks_.find(c.report_id);
				if (it != tracks_.end()) {
					it->second.scanned = std::max(it->second.scanned, now);
				}
			};
			counters_.push_back(std::move(counter));
		}
	}

	bool send(const NodeId &from, const NodeId &to, const Message &m) {
		++result_.messages_sent;
		auto it = index_.find(to);
		if (it == index_.end()) {
			return true;
		}
		if (dead_[it->second]) {
			log(now_, "refused " + from + " " + to + " " + std::string(message_type(m)));
			return false;
		}
		if (std::holds_alternative<PartialResult>(m)) {
			auto idx = result_.partials_sent++;
			bool drop = drops_.count(idx) > 0;
			if (config_.drop_probability > 0.0) {
				drop |= std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < config_.drop_probability;
			}
			if (drop) {
				++result_.partials_dropped;
				log(now_, "drop " + from + " " + to + " " + message_to_json(m).dump());
				return true;
			}
		}
		Micros extra = config_.jitter > 0 ? std::uniform_int_distribution<Micros>(0, config_.jitter)(rng_) : 0;
		auto &last = link_last_[{from, to}];
		Micros at = std::max(now_ + config_.latency + extra, last);
		last = at;
		push({at, 0, EventKind::deliver, it->second, from, m, {}});
		return true;
	}

	SimResult run() {
		coordinator_->publish_sample(manifest_of(data_.sample_id, data_.subsamples), 0);
		for (size_t i = 0; i < ids_.size(); ++i) {
			node(i).start(0);
			push({config_.tick_interval, 0, EventKind::tick, i, {}, std::nullopt, {}});
		}
		push({config_.report_at, 0, EventKind::initiate, 1, {}, std::nullopt, {}});
		Micros settle = config_.report_at;
		for (auto &k : config_.kills) {
			if (k.counter >= config_.counters) {
				throw InvalidArgument("kill schedule names counter " + std::to_string(k.counter));
			}
			push({k.at, 0, EventKind::kill, 2 + k.counter, {}, std::nullopt, {}});
			settle = std::max(settle, k.at);
		}
		if (config_.publish_at) {
			if (data_.next_subsamples.empty()) {
				throw InvalidArgument("publish requested without a next sample");
			}
			push({*config_.publish_at, 0, EventKind::publish, 0, {}, std::nullopt, {}});
			settle = std::max(settle, *config_.publish_at + 2 * kSeconds);
		}

		while (!queue_.empty()) {
			auto ev = queue_.top();
			queue_.pop();
			if (ev.at > config_.horizon) {
				break;
			}
			now_ = ev.at;
			dispatch(ev);
			if (initiated_ && now_ >= settle && all_done()) {
				break;
			}
		}
		result_.ended_at = now_;
		for (auto &id : report_order_) {
			auto &t = tracks_.at(id);
			auto &o = t.outcome;
			if (!t.done) {
				o.estimate = aggregator_->fetch(id, now_).estimate;
			}
			auto a = o.initiated_at;
			auto b = std::max(a, t.distributed);
			auto c = std::max(b, t.scanned);
			auto d = std::max(c, t.final_partial);
			auto e = std::max(d, t.done ? o.done_at : now_);
			o.timing = {(b - a) / 1000.0, (c - b) / 1000.0, (d - c) / 1000.0, (e - d) / 1000.0};
			result_.reports.push_back(o);
		}
		for (auto &c : counters_) {
			result_.rows_scanned.push_back(c->rows_scanned_total());
			result_.peak_resident.push_back(c->peak_resident_rows());
			result_.final_versions.push_back(c->sample_version());
		}
		result_.log = std::move(log_);
		return std::move(result_);
	}

private:
	Node &node(size_t i) {
		if (i == 0) {
			return *coordinator_;
		}
		if (i == 1) {
			return *aggregator_;
		}
		return *counters_[i - 2];
	}

	void push(SimEvent ev) {
		ev.seq = seq_++;
		queue_.push(std::move(ev));
	}

	void log(Micros at, const std::string &line) {
		log_.push_back(std::to_string(at) + " " + line);
	}

	bool all_done() const {
		for (auto &[id, t] : tracks_) {
			if (!t.done) {
				return false;
			}
		}
		return true;
	}

	void schedule_scan(size_t i) {
		if (i >= 2 && !dead_[i] && !scan_scheduled_[i] && counters_[i - 2]->has_work()) {
			scan_scheduled_[i] = true;
			push({now_ + config_.scan_quantum, 0, EventKind::scan, i, {}, std::nullopt, {}});
		}
	}

	void enqueue_aggregator(InboxItem item) {
		inbox_.push_back(std::move(item));
		if (!aggregator_busy_) {
			aggregator_busy_ = true;
			push({std::max(now_, busy_until_), 0, EventKind::aggregator_process, 1, {}, std::nullopt, {}});
		}
	}

	void record_progress(const std::string &report_id) {
		auto it = tracks_.find(report_id);
		if (it == tracks_.end()) {
			return;
		}
		auto env = aggregator_->fetch(report_id, now_);
		it->second.outcome.progress.push_back(env.estimate);
	}

	void process_aggregator() {
		auto item = std::move(inbox_.front());
		inbox_.pop_front();
		Micros cost = config_.message_cost;
		if (item.message) {
			const auto &m = *item.message;
			const PartialResult *partial = std::get_if<PartialResult>(&m);
			bool was_running = false;
			if (partial) {
				auto *r = aggregator_->report(partial->report_id);
				was_running = r && r->status == ReportStatus::running;
			}
			aggregator_->on_message(item.from, m, now_);
			if (partial && was_running) {
				auto &t = tracks_.at(partial->report_id);
				if (is_finished(partial->status)) {
					t.final_partial = std::max(t.final_partial, now_);
				}
				auto *r = aggregator_->report(partial->report_id);
				auto est = r->final ? *r->final : merge_partials(r->participants);
				t.outcome.progress.push_back(est);
			}
		} else {
			cost += config_.merge_cost;
			auto *r = aggregator_->report(item.report_id);
			if (r) {
				record_progress(item.report_id);
				log(now_, "fetch " + item.report_id);
				if (r->status == ReportStatus::running) {
					push({now_ + config_.fetch_interval_ms * kMillis, 0, EventKind::fetch, 1, {}, std::nullopt,
					      item.report_id});
				}
			}
		}
		busy_until_ = now_ + cost;
		if (!inbox_.empty()) {
			push({busy_until_, 0, EventKind::aggregator_process, 1, {}, std::nullopt, {}});
		} else {
			aggregator_busy_ = false;
		}
	}

	void dispatch(const SimEvent &ev) {
		switch (ev.kind) {
		case EventKind::deliver: {
			if (dead_[ev.node]) {
				return;
			}
			const auto &m = *ev.message;
			log(now_, "deliver " + ev.from + " " + ids_[ev.node] + " " + message_to_json(m).dump());
			if (ev.node == 1) {
				enqueue_aggregator({ev.from, m, {}});
				return;
			}
			if (auto *d = std::get_if<DistributeRequest>(&m)) {
				auto it = tracks_.find(d->report_id);
				if (it != tracks_.end()) {
					it->second.distributed = std::max(it->second.distributed, now_);
				}
			}
			node(ev.node).on_message(ev.from, m, now_);
			schedule_scan(ev.node);
			return;
		}
		case EventKind::tick:
			if (dead_[ev.node]) {
				return;
			}
			node(ev.node).tick(now_);
			schedule_scan(ev.node);
			push({now_ + config_.tick_interval, 0, EventKind::tick, ev.node, {}, std::nullopt, {}});
			return;
		case EventKind::scan: {
			scan_scheduled_[ev.node] = false;
			if (dead_[ev.node]) {
				return;
			}
			auto budget = static_cast<uint64_t>(static_cast<double>(config_.scan_quantum) / config_.row_cost_us);
			counters_[ev.node - 2]->scan(std::max<uint64_t>(1, budget), now_);
			schedule_scan(ev.node);
			return;
		}
		case EventKind::initiate:
			initiated_ = true;
			for (auto &q : data_.queries) {
				try {
					auto id = aggregator_->initiate_report(q, config_.threshold, config_.sub_cluster, now_);
					ReportTrack t;
					t.outcome.report_id = id;
					t.outcome.initiated_at = now_;
					tracks_.emplace(id, t);
					report_order_.push_back(id);
					log(now_, "initiate " + id + " " + q.to_json().dump());
					if (config_.fetch_interval_ms > 0) {
						push({now_ + config_.fetch_interval_ms * kMillis, 0, EventKind::fetch, 1, {}, std::nullopt,
						      id});
					}
				} catch (const Unavailable &e) {
					log(now_, std::string("initiate-failed ") + e.what());
				}
			}
			return;
		case EventKind::fetch:
			enqueue_aggregator({"client", std::nullopt, ev.report_id});
			return;
		case EventKind::kill:
			dead_[ev.node] = true;
			log(now_, "kill " + ids_[ev.node]);
			return;
		case EventKind::publish:
			coordinator_->publish_sample(manifest_of(data_.next_sample_id, data_.next_subsamples), now_);
			log(now_, "publish " + data_.next_sample_id);
			return;
		case EventKind::aggregator_process:
			process_aggregator();
			return;
		}
	}

	const SimConfig &config_;
	const ScenarioData &data_;
	std::mt19937_64 rng_;
	std::set<uint64_t> drops_;
	std::map<std::string, const Sample *> samples_;

	std::vector<NodeId> ids_;
	std::map<NodeId, size_t> index_;
	std::vector<std::unique_ptr<SimTransport>> transports_;
	std::unique_ptr<Coordinator> coordinator_;
	std::unique_ptr<Aggregator> aggregator_;
	std::vector<std::unique_ptr<Counter>> counters_;
	std::vector<bool> dead_;
	std::vector<bool> scan_scheduled_;

	std::priority_queue<SimEvent, std::vector<SimEvent>, LaterFirst> queue_;
	uint64_t seq_ = 0;
	Micros now_ = 0;
	std::map<std::pair<NodeId, NodeId>, Micros> link_last_;

	std::deque<InboxItem> inbox_;
	bool aggregator_busy_ = false;
	Micros busy_until_ = 0;

	bool initiated_ = false;
	std::map<std::string, ReportTrack> tracks_;
	std::vector<std::string> report_order_;
	std::vector<std::string> log_;
	SimResult result_;
};

bool SimTransport::send(const NodeId &to, const Message &message) {
	return sim_.send(self_, to, message);
}

} // namespace

SimResult run_scenario(const SimConfig &config, const ScenarioData &data) {
	Simulation sim(config, data);
	return sim.run();
}

void write_event_log(const std::string &path, const SimConfig &config, const SimResult &result) {
	std::ofstream out(path, std::ios::binary);
	if (!out) {
		throw Error("cannot write event log '" + path + "'");
	}
	out << to_json(config).dump() << "\n";
	for (auto &line : result.log) {
		out << line << "\n";
	}
}

std::pair<SimConfig, std::vector<std::string>> read_event_log(const std::string &path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw Error("cannot read event log '" + path + "'");
	}
	std::string line;
	if (!std::getline(in, line)) {
		throw ParseError("event log '" + path + "' is empty");
	}
	SimConfig config;
	try {
		config = sim_config_from_json(json::parse(line));
	} catch (const json::exception &e) {
		throw ParseError(std::string("event log header: ") + e.what());
	}
	std::vector<std::string> lines;
	while (std::getline(in, line)) {
		lines.push_back(line);
	}
	return {config, lines};
}

// ---------------------------------------------------------------------------
// Correlated synthetic data
// ---------------------------------------------------------------------------

namespace {

void check_params(const CorrelatedParams &p) {
	if (p.hubs == 0 || p.hub_cardinality < 2) {
		throw InvalidArgument("correlated data needs at least one hub of cardinality >= 2");
	}
	if (p.hub_cardinality > 256 || (p.hub_cardinality & (p.hub_cardinality - 1)) != 0) {
		throw InvalidArgument("hub cardinality must be a power of two up to 256");
	}
	size_t per_hub = (p.leaves + p.hubs - 1) / p.hubs;
	if (per_hub > p.hub_cardinality - 1) {
		throw InvalidArgument("at most hub_cardinality - 1 leaves per hub");
	}
}

size_t leaf_rank(const CorrelatedParams &p, size_t leaf) {
	return leaf / p.hubs;
}

} // namespace

Schema correlated_schema(const CorrelatedParams &p) {
	check_params(p);
	std::vector<Feature> features;
	for (size_t h = 0; h < p.hubs; ++h) {
		features.push_back({"h" + std::to_string(h), p.hub_cardinality, {}});
	}
	// Leaves are grouped by hub in feature order.
	for (size_t h = 0; h < p.hubs; ++h) {
		for (size_t leaf = h; leaf < p.leaves; leaf += p.hubs) {
			features.push_back({"l" + std::to_string(h) + "_" + std::to_string(leaf_rank(p, leaf)), 2, {}});
		}
	}
	return Schema(std::move(features));
}

std::vector<EdgePotential> correlated_edges(const CorrelatedParams &p) {
	check_params(p);
	const auto m = p.hub_cardinality;
	std::vector<EdgePotential> edges;
	for (size_t h = 0; h + 1 < p.hubs; ++h) {
		Matrix theta(m, m);
		for (size_t t = 0; t < m; ++t) {
			for (size_t q = 0; q < m; ++q) {
				theta(t, q) = t == q ? 0.0 : p.hub_beta;
			}
		}
		edges.push_back({h, h + 1, theta});
	}
	size_t feature = p.hubs;
	for (size_t h = 0; h < p.hubs; ++h) {
		for (size_t leaf = h; leaf < p.leaves; leaf += p.hubs) {
			const size_t walsh = leaf_rank(p, leaf) + 1;
			Matrix theta(m, 2);
			for (size_t t = 0; t < m; ++t) {
				const size_t parity = static_cast<size_t>(__builtin_popcountll(walsh & t) & 1);
				for (size_t q = 0; q < 2; ++q) {
					theta(t, q) = q == parity ? 0.0 : p.leaf_beta;
				}
			}
			edges.push_back({h, feature++, theta});
		}
	}
	return edges;
}

Dataset generate_correlated(const CorrelatedParams &p) {
	auto edges = correlated_edges(p);
	return generate_synthetic(correlated_schema(p), edges, p.rows, p.seed);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

ErrorRatioResult experiment_error_ratio(const ErrorRatioConfig &config) {
	return experiment_error_ratio(generate_correlated(config.data), config);
}

ErrorRatioResult experiment_error_ratio(const Dataset &dataset, const ErrorRatioConfig &config) {
	LearnOptions lo;
	lo.mi_threshold = config.mi_threshold;
	auto graph = learn_structure(dataset, lo);
	auto cover = approx_min_vertex_cover(graph);
	if (cover.empty()) {
		throw InvalidArgument("learned graph has no edges; no stratification features selected");
	}
	ErrorRatioResult out;
	out.selected = cover;

	auto raw = build_partition(dataset, cover);
	auto stability = classify_stability(raw, config.n);
	StrataPartition fallback;
	switch (config.fallback) {
	case FallbackMode::merge:
		fallback = fallback_merge(raw, stability);
		break;
	case FallbackMode::redistribute:
		fallback = fallback_redistribute(raw, stability);
		break;
	case FallbackMode::none:
		fallback = raw;
		break;
	}
	auto alloc_ours = allocate(fallback, config.n);
	auto alloc_simple = allocate(raw, config.n);
	out.strata_raw = raw.strata.size();
	out.strata_unstable = stability.unstable.size();
	out.strata_final = fallback.strata.size();

	auto workload = generate_workload(dataset, config.selectivities, config.queries_per_bin, config.workload_seed);
	const size_t bins = config.selectivities.size();
	std::vector<double> sum_ours(bins, 0), sum_uniform(bins, 0), sum_simple(bins, 0);
	std::vector<size_t> count(bins, 0);
	for (size_t s = 0; s < config.seeds; ++s) {
		uint64_t seed = 1000 + s;
		auto ours = draw_stratified(dataset, fallback, alloc_ours, seed, SampleMethod::fallback_stratified);
		auto uniform = draw_uniform(dataset, config.n, seed);
		auto simple = draw_stratified(dataset, raw, alloc_simple, seed, SampleMethod::simple_stratified);
		for (auto &wq : workload.queries) {
			auto truth = static_cast<double>(wq.count);
			auto err = [&](const Sample &sample) {
				return std::abs(1.0 - estimate_count(sample, wq.query).value / truth);
			};
			sum_ours[wq.bin] += err(ours);
			sum_uniform[wq.bin] += err(uniform);
			sum_simple[wq.bin] += err(simple);
			++count[wq.bin];
		}
	}
	auto ratio = [](double a, double b) {
		if (a == 0.0 && b == 0.0) {
			return 1.0;
		}
		return b == 0.0 ? INFINITY : a / b;
	};
	for (size_t b = 0; b < bins; ++b) {
		ErrorRatioRow row;
		row.selectivity = config.selectivities[b];
		row.queries = count[b] / std::max<size_t>(1, config.seeds);
		if (count[b] > 0) {
			auto c = static_cast<double>(count[b]);
			row.err_ours = sum_ours[b] / c;
			row.err_uniform = sum_uniform[b] / c;
			row.err_simple = sum_simple[b] / c;
		}
		row.ratio_uniform = ratio(row.err_ours, row.err_uniform);
		row.ratio_simple = ratio(row.err_ours, row.err_simple);
		out.rows.push_back(row);
	}
	return out;
}

std::string error_ratio_csv(const ErrorRatioResult &r) {
	std::ostringstream out;
	out.precision(6);
	out << "selectivity,queries,err_ours,err_uniform,err_simple,ratio_uniform,ratio_simple\n";
	for (auto &row : r.rows) {
		out << row.selectivity << "," << row.queries << "," << row.err_ours << "," << row.err_uniform << ","
		    << row.err_simple << "," << row.ratio_uniform << "," << row.ratio_simple << "\n";
	}
	return out.str();
}

namespace {

double report_time_ms(const SimResult &r) {
	double worst = 0.0;
	for (auto &o : r.reports) {
		worst = std::max(worst, o.timing.total());
	}
	return worst;
}

} // namespace

std::vector<FetchIntervalRow> experiment_fetch_interval(const SimConfig &config, const ScenarioData &data,
                                                        const std::vector<uint32_t> &intervals_ms) {
	std::vector<FetchIntervalRow> rows;
	auto base = config;
	base.fetch_interval_ms = 0;
	double t0 = report_time_ms(run_scenario(base, data));
	rows.push_back({0, t0, 0.0});
	for (auto interval : intervals_ms) {
		auto c = config;
		c.fetch_interval_ms = interval;
		double t = report_time_ms(run_scenario(c, data));
		rows.push_back({interval, t, t0 > 0 ? std::abs(t - t0) / t0 : 0.0});
	}
	return rows;
}

std::string fetch_interval_csv(const std::vector<FetchIntervalRow> &rows) {
	std::ostringstream out;
	out.precision(6);
	out << "interval_ms,total_ms,deviation\n";
	for (auto &r : rows) {
		out << r.interval_ms << "," << r.total_ms << "," << r.deviation << "\n";
	}
	return out.str();
}

OverheadResult experiment_distributed_overhead(const SimConfig &config, const ScenarioData &data) {
	auto result = run_scenario(config, data);
	OverheadResult out;
	if (result.reports.empty()) {
		throw Error("overhead scenario produced no report");
	}
	out.timing = result.reports.front().timing;
	out.distributed_ms = report_time_ms(result);
	size_t rows = 0;
	for (auto &s : data.subsamples) {
		rows = std::max(rows, s.rows());
	}
	out.single_ms = static_cast<double>(rows) * config.row_cost_us /
	                static_cast<double>(std::max<size_t>(1, config.processors)) / 1000.0 *
	                std::max<double>(1.0, static_cast<double>(data.queries.size()));
	out.ratio = out.single_ms > 0 ? out.distributed_ms / out.single_ms : 0.0;
	return out;
}

} // namespace stratcount
