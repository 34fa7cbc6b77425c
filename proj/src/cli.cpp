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

#include "stratcount/cli.hpp"

#include "stratcount/coordinator.hpp"
#include "stratcount/error.hpp"
#include "stratcount/gateway.hpp"
#include "stratcount/harness.hpp"
#include "stratcount/mrf.hpp"
#include "stratcount/runtime.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <iostream>
#include <thread>

namespace stratcount {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop {false};

void on_signal(int) {
	g_stop = true;
}

void wait_for_signal() {
	g_stop = false;
	std::signal(SIGINT, on_signal);
	std::signal(SIGTERM, on_signal);
	while (!g_stop) {
		std::this_thread::sleep_for(std::chrono::milliseconds(100));
	}
}

bool ends_with(const std::string &s, std::string_view suffix) {
	return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string read_text(const std::string &path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw NotFound("cannot open '" + path + "'");
	}
	std::ostringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

void write_text(const std::string &path, const std::string &text) {
	std::ofstream out(path, std::ios::binary);
	if (!out || !(out << text)) {
		throw Error("cannot write '" + path + "'");
	}
}

Schema load_schema(const std::string &path) {
	try {
		return Schema::from_json(json::parse(read_text(path)));
	} catch (const json::exception &e) {
		throw ParseError("schema '" + path + "': " + e.what());
	}
}

//! CSV inputs need a schema file (default: <path>.schema.json).
Dataset load_any_dataset(const std::string &path, const std::string &schema_path) {
	if (ends_with(path, ".csv")) {
		auto sp = schema_path.empty() ? path + ".schema.json" : schema_path;
		return ingest_csv(path, load_schema(sp));
	}
	return load_dataset(path);
}

std::vector<size_t> resolve_features(const Schema &schema, const std::vector<std::string> &names) {
	std::vector<size_t> out;
	for (auto &name : names) {
		auto idx = schema.index_of(name);
		if (!idx) {
			throw InvalidArgument("unknown feature '" + name + "'");
		}
		out.push_back(*idx);
	}
	return out;
}

json feature_names(const Schema &schema, std::span<const size_t> features) {
	json out = json::array();
	for (auto f : features) {
		out.push_back(schema.feature(f).name);
	}
	return out;
}

json estimate_json(const CountEstimate &e) {
	return {{"estimate", e.value},
	        {"margin", e.margin},
	        {"fractionScanned", e.fraction_scanned},
	        {"rowsMatched", e.rows_matched}};
}

json timing_json(const TimingBreakdown &t) {
	return {{"t_d", t.t_d}, {"t_s", t.t_s}, {"t_c", t.t_c}, {"t_m", t.t_m}, {"total", t.total()}};
}

std::vector<Query> parse_queries(const std::vector<std::string> &texts, const Schema &schema) {
	std::vector<Query> out;
	for (auto &t : texts) {
		out.push_back(Query::parse(t, schema));
	}
	return out;
}

// Deterministic bench scenario: correlated data, stratified sample over the
// hubs, split across the counters, one single-hub query per entry of `queries`.
struct BenchScenario {
	CorrelatedParams data;
	uint64_t n = 30000;
	size_t queries = 1;
	uint64_t seed = 1;
	FallbackMode fallback = FallbackMode::redistribute;

	json to_json() const {
		return {{"rows", data.rows}, {"hubs", data.hubs}, {"leaves", data.leaves},
		        {"hub_cardinality", data.hub_cardinality}, {"n", n}, {"queries", queries}, {"seed", seed},
		        {"fallback", to_string(fallback)}};
	}
	static BenchScenario from_json(const json &j) {
		BenchScenario s;
		s.data.rows = j.at("rows").get<size_t>();
		s.data.hubs = j.at("hubs").get<size_t>();
		s.data.leaves = j.at("leaves").get<size_t>();
		s.data.hub_cardinality = j.at("hub_cardinality").get<uint32_t>();
		s.n = j.at("n").get<uint64_t>();
		s.queries = j.at("queries").get<size_t>();
		s.seed = j.at("seed").get<uint64_t>();
		s.fallback = parse_fallback_mode(j.at("fallback").get<std::string>());
		return s;
	}
};

ScenarioData build_bench_data(const BenchScenario &s, size_t nodes, bool with_next) {
	auto params = s.data;
	params.seed = s.seed;
	auto dataset = generate_correlated(params);
	std::vector<size_t> hubs(params.hubs);
	std::iota(hubs.begin(), hubs.end(), 0);
	auto plan = plan_sample(dataset, hubs, s.n, s.seed, s.fallback);
	std::vector<Query> queries;
	for (size_t i = 0; i < s.queries; ++i) {
		Query q;
		q.where(i % params.hubs, {static_cast<Value>(1 + i % params.hub_cardinality)});
		queries.push_back(q);
	}
	if (with_next) {
		auto next = plan_sample(dataset, hubs, s.n, s.seed + 1, s.fallback);
		return make_scenario_data(plan.sample, nodes, s.seed, queries, &next.sample);
	}
	return make_scenario_data(plan.sample, nodes, s.seed, queries);
}

void add_sim_flags(CLI::App *cmd, SimConfig &c) {
	cmd->add_option("--nodes", c.counters, "counter nodes")->check(CLI::PositiveNumber);
	cmd->add_option("--sub-cluster", c.sub_cluster, "counters per report (0 = all)");
	cmd->add_option("--push-interval-ms", c.push_interval_ms, "partial push interval")->check(CLI::PositiveNumber);
	cmd->add_option("--threshold", c.threshold, "relative error threshold (0 = full scan)")
	    ->check(CLI::NonNegativeNumber);
	cmd->add_option("--latency-us", c.latency, "one-way message latency");
	cmd->add_option("--row-cost-us", c.row_cost_us, "scan cost per row per processor")
	    ->check(CLI::PositiveNumber);
	cmd->add_option("--processors", c.processors, "processors per counter")->check(CLI::PositiveNumber);
	cmd->add_option("--drop-probability", c.drop_probability, "partial-result drop probability")
	    ->check(CLI::Range(0.0, 1.0));
}

void add_scenario_flags(CLI::App *cmd, BenchScenario &s) {
	cmd->add_option("--rows", s.data.rows, "dataset rows")->check(CLI::PositiveNumber);
	cmd->add_option("--n", s.n, "sample size")->check(CLI::PositiveNumber);
	cmd->add_option("--queries", s.queries, "concurrent reports")->check(CLI::PositiveNumber);
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
	CLI::App app {"Stratified-sample count estimation: offline sampling and the serving cluster."};
	app.require_subcommand(1);
	uint64_t seed = 1;
	int verbosity = 0;
	app.add_option("--seed", seed, "global seed");
	app.add_flag("-v,--verbose", verbosity, "more diagnostics on stderr");

	std::function<json()> action;
	json config;

	// gen-data -----------------------------------------------------------
	auto *gen = app.add_subcommand("gen-data", "generate a correlated synthetic dataset");
	CorrelatedParams gp;
	std::string gen_out;
	gen->add_option("output", gen_out, "dataset file (.csv writes a schema sidecar)")->required();
	gen->add_option("--rows", gp.rows, "rows")->check(CLI::PositiveNumber);
	gen->add_option("--hubs", gp.hubs, "hub features")->check(CLI::PositiveNumber);
	gen->add_option("--leaves", gp.leaves, "binary leaf features");
	gen->add_option("--hub-cardinality", gp.hub_cardinality, "values per hub (power of two)")
	    ->check(CLI::Range(2, 256));
	gen->add_option("--hub-beta", gp.hub_beta, "hub chain coupling energy");
	gen->add_option("--leaf-beta", gp.leaf_beta, "hub-leaf coupling energy");
	gen->callback([&] {
		action = [&] {
			gp.seed = seed;
			config = {{"rows", gp.rows}, {"hubs", gp.hubs}, {"leaves", gp.leaves},
			          {"hub_cardinality", gp.hub_cardinality}, {"hub_beta", gp.hub_beta}, {"leaf_beta", gp.leaf_beta},
			          {"seed", seed}, {"output", gen_out}};
			auto ds = generate_correlated(gp);
			if (ends_with(gen_out, ".csv")) {
				write_text(gen_out, to_csv(ds));
				write_text(gen_out + ".schema.json", ds.schema().to_json().dump(2));
			} else {
				save_dataset(ds, gen_out);
			}
			return json {{"rows", ds.rows()}, {"features", ds.features()}};
		};
	});

	// learn-mrf ----------------------------------------------------------
	auto *learn = app.add_subcommand("learn-mrf", "learn the feature dependency graph");
	std::string learn_in, learn_out, learn_schema;
	LearnOptions lo;
	learn->add_option("dataset", learn_in, "dataset file")->required()->check(CLI::ExistingFile);
	learn->add_option("output", learn_out, "graph JSON")->required();
	learn->add_option("--schema", learn_schema, "schema JSON for CSV input");
	learn->add_option("--mi-threshold", lo.mi_threshold, "normalized MI edge threshold")
	    ->check(CLI::Range(0.0, 1.0));
	learn->callback([&] {
		action = [&] {
			config = {{"dataset", learn_in}, {"output", learn_out}, {"mi_threshold", lo.mi_threshold}};
			auto ds = load_any_dataset(learn_in, learn_schema);
			auto graph = learn_structure(ds, lo);
			save_graph(graph, learn_out);
			auto cover = approx_min_vertex_cover(graph);
			return json {{"edges", graph.edge_list().size()}, {"cover", feature_names(ds.schema(), cover)}};
		};
	});

	// build-sample -------------------------------------------------------
	auto *build = app.add_subcommand("build-sample", "learn, stratify, fall back, allocate and draw");
	std::string build_in, build_out, build_schema, build_graph, build_report;
	std::vector<std::string> build_features;
	uint64_t build_n = 0;
	std::string build_fallback = "redistribute";
	LearnOptions blo;
	build->add_option("dataset", build_in, "dataset file")->required()->check(CLI::ExistingFile);
	build->add_option("output", build_out, "sample file")->required();
	build->add_option("--n", build_n, "sample size")->required()->check(CLI::PositiveNumber);
	build->add_option("--fallback", build_fallback, "merge | redistribute | none")
	    ->check(CLI::IsMember({"merge", "redistribute", "none"}));
	build->add_option("--mi-threshold", blo.mi_threshold, "normalized MI edge threshold")
	    ->check(CLI::Range(0.0, 1.0));
	build->add_option("--features", build_features, "stratify on these features instead of the learned cover")
	    ->delimiter(',');
	build->add_option("--graph", build_graph, "use a previously learned graph")->check(CLI::ExistingFile);
	build->add_option("--schema", build_schema, "schema JSON for CSV input");
	build->add_option("--report", build_report, "strata report (default <output>.strata.json)");
	build->callback([&] {
		action = [&] {
			auto ds = load_any_dataset(build_in, build_schema);
			std::vector<size_t> selected;
			std::string source;
			if (!build_features.empty()) {
				selected = resolve_features(ds.schema(), build_features);
				source = "flag";
			} else {
				auto graph = build_graph.empty() ? learn_structure(ds, blo) : load_graph(build_graph);
				selected = approx_min_vertex_cover(graph);
				source = build_graph.empty() ? "learned" : "graph";
			}
			if (selected.empty()) {
				throw InvalidArgument("no stratification features (graph has no edges)");
			}
			auto mode = parse_fallback_mode(build_fallback);
			config = {{"dataset", build_in}, {"output", build_out}, {"n", build_n}, {"seed", seed},
			          {"fallback", build_fallback}, {"mi_threshold", blo.mi_threshold},
			          {"features", feature_names(ds.schema(), selected)}, {"feature_source", source}};
			auto plan = plan_sample(ds, selected, build_n, seed, mode);
			save_sample(plan.sample, build_out);

			const auto &schema = ds.schema();
			json raw = json::array();
			std::vector<bool> stable(plan.raw.strata.size(), false);
			for (auto i : plan.stability.stable) {
				stable[i] = true;
			}
			uint64_t raw_total = 0;
			for (size_t i = 0; i < plan.raw.strata.size(); ++i) {
				auto &s = plan.raw.strata[i];
				raw_total += s.population();
				raw.push_back({{"stratum", describe_signature(s.signature, selected, schema)},
				               {"population", s.population()},
				               {"stable", static_cast<bool>(stable[i])}});
			}
			json actions = json::array();
			for (auto &a : plan.actions) {
				actions.push_back({{"from", describe_signature(a.from, selected, schema)},
				                   {"to", describe_signature(a.to, selected, schema)},
				                   {"rows", a.rows}});
			}
			json final_strata = json::array();
			uint64_t final_total = 0;
			for (auto &s : plan.sample.strata) {
				final_total += s.population;
				final_strata.push_back({{"stratum", describe_signature(s.signature, selected, schema)},
				                        {"population", s.population},
				                        {"drawn", s.drawn},
				                        {"weight", s.weight}});
			}
			json report = {{"sample_id", plan.sample.id},
			               {"N", ds.rows()},
			               {"n", plan.sample.rows()},
			               {"raw_strata", raw},
			               {"raw_total", raw_total},
			               {"unstable", plan.stability.unstable.size()},
			               {"fallback_actions", actions},
			               {"strata", final_strata},
			               {"strata_total", final_total},
			               {"reconciled", raw_total == ds.rows() && final_total == ds.rows()}};
			auto report_path = build_report.empty() ? build_out + ".strata.json" : build_report;
			write_text(report_path, report.dump(2));
			return json {{"sample_id", plan.sample.id},
			             {"rows", plan.sample.rows()},
			             {"strata", plan.sample.strata.size()},
			             {"unstable", plan.stability.unstable.size()},
			             {"report", report_path},
			             {"reconciled", report["reconciled"]}};
		};
	});

	// split --------------------------------------------------------------
	auto *split = app.add_subcommand("split", "split a sample into per-node sub-samples");
	std::string split_in, split_dir;
	size_t split_nodes = 3;
	split->add_option("sample", split_in, "sample file")->required()->check(CLI::ExistingFile);
	split->add_option("outdir", split_dir, "output directory")->required();
	split->add_option("--nodes", split_nodes, "number of sub-samples")->check(CLI::PositiveNumber);
	split->callback([&] {
		action = [&] {
			config = {{"sample", split_in}, {"outdir", split_dir}, {"nodes", split_nodes}, {"seed", seed}};
			auto sample = load_sample(split_in);
			auto subs = split_subsamples(sample, split_nodes, seed);
			fs::create_directories(split_dir);
			json manifest = json::array();
			for (size_t i = 0; i < subs.size(); ++i) {
				auto path = fs::absolute(fs::path(split_dir) / ("sub-" + std::to_string(i) + ".smp")).string();
				save_sample(subs[i], path);
				manifest.push_back({{"subsample_id", subs[i].id}, {"path", path}, {"checksum", subs[i].id},
				                    {"rows", subs[i].rows()}});
			}
			auto manifest_path = (fs::path(split_dir) / "manifest.json").string();
			write_text(manifest_path, json {{"sample_id", sample.id}, {"subsamples", manifest}}.dump(2));
			return json {{"manifest", manifest_path}, {"subsamples", manifest}};
		};
	});

	// query --------------------------------------------------------------
	auto *query = app.add_subcommand("query", "estimate counts on a sample file");
	std::string query_sample, query_data, query_schema, query_workload;
	std::vector<std::string> query_texts;
	query->add_option("sample", query_sample, "sample file")->required()->check(CLI::ExistingFile);
	query->add_option("queries", query_texts, "queries such as 'f in {1,2}, g in {3}'; empty = count all");
	query->add_option("--workload", query_workload, "workload file")->check(CLI::ExistingFile);
	query->add_option("--data", query_data, "dataset for exact counts")->check(CLI::ExistingFile);
	query->add_option("--schema", query_schema, "schema JSON for CSV input");
	query->callback([&] {
		action = [&] {
			config = {{"sample", query_sample}, {"queries", query_texts}, {"workload", query_workload},
			          {"data", query_data}};
			auto sample = load_sample(query_sample);
			std::vector<Query> queries = parse_queries(query_texts, sample.schema);
			if (!query_workload.empty()) {
				for (auto &[q, count] : load_workload(query_workload, sample.schema)) {
					queries.push_back(q);
				}
			}
			if (queries.empty()) {
				queries.emplace_back();
			}
			std::optional<Dataset> ds;
			if (!query_data.empty()) {
				ds = load_any_dataset(query_data, query_schema);
			}
			json results = json::array();
			for (auto &q : queries) {
				auto r = estimate_json(estimate_count(sample, q));
				r["query"] = q.to_text(sample.schema);
				if (ds) {
					r["exact"] = exact_count(*ds, q);
				}
				results.push_back(r);
			}
			return json {{"sample_id", sample.id}, {"results", results}};
		};
	});

	// serve-coordinator --------------------------------------------------
	auto *scoord = app.add_subcommand("serve-coordinator", "run the coordination service");
	uint16_t coord_port = 7400;
	std::string coord_bind = "127.0.0.1", coord_manifest;
	double lease_seconds = 10;
	scoord->add_option("--port", coord_port, "listen port");
	scoord->add_option("--bind", coord_bind, "listen address");
	scoord->add_option("--manifest", coord_manifest, "publish this split manifest at start")
	    ->check(CLI::ExistingFile);
	scoord->add_option("--lease-seconds", lease_seconds, "lease duration")->check(CLI::PositiveNumber);
	scoord->callback([&] {
		action = [&] {
			TcpRuntime rt({coord_bind, coord_port, 10 * kMillis, {}});
			CoordinatorConfig cc;
			cc.id = rt.address();
			cc.lease_duration = static_cast<Micros>(lease_seconds * kSeconds);
			Coordinator coordinator(cc, &rt.transport());
			config = {{"id", cc.id}, {"manifest", coord_manifest}, {"lease_seconds", lease_seconds}};
			out << json {{"command", "serve-coordinator"}, {"config", config}}.dump() << std::endl;
			rt.start(coordinator);
			if (!coord_manifest.empty()) {
				auto m = json::parse(read_text(coord_manifest));
				PublishSample p;
				p.sample_id = m.at("sample_id").get<std::string>();
				for (auto &e : m.at("subsamples")) {
					p.manifest.push_back({e.at("subsample_id").get<std::string>(), e.at("path").get<std::string>(),
					                      e.at("checksum").get<std::string>()});
				}
				rt.call([&](Micros now) { coordinator.publish_sample(p, now); });
			}
			wait_for_signal();
			rt.stop();
			return json(nullptr);
		};
	});

	// serve-counter ------------------------------------------------------
	auto *scounter = app.add_subcommand("serve-counter", "run a counter node");
	uint16_t counter_port = 0;
	std::string counter_bind = "127.0.0.1", counter_coord;
	CounterConfig ccfg;
	uint32_t counter_push_ms = 200;
	scounter->add_option("--port", counter_port, "listen port (0 = ephemeral)");
	scounter->add_option("--bind", counter_bind, "listen address");
	scounter->add_option("--coordinator", counter_coord, "coordinator host:port")->required();
	scounter->add_option("--processors", ccfg.processors, "scan threads")->check(CLI::PositiveNumber);
	scounter->add_option("--push-interval-ms", counter_push_ms, "default push interval")
	    ->check(CLI::PositiveNumber);
	scounter->add_flag("--compress", ccfg.compress, "compress resident blocks");
	scounter->callback([&] {
		action = [&] {
			Counter *counter_ptr = nullptr;
			RuntimeOptions ro {counter_bind, counter_port, 10 * kMillis, [&counter_ptr](Micros now) {
				                   if (!counter_ptr || !counter_ptr->has_work()) {
					                   return false;
				                   }
				                   counter_ptr->scan(1 << 16, now);
				                   return true;
			                   }};
			TcpRuntime rt(std::move(ro));
			ccfg.id = rt.address();
			ccfg.coordinator = counter_coord;
			ccfg.default_push_interval = counter_push_ms * kMillis;
			ccfg.shuffle_seed = seed;
			ccfg.parallel = ccfg.processors > 1;
			Counter counter(ccfg, rt.transport(), load_subsample_file);
			counter_ptr = &counter;
			config = {{"id", ccfg.id}, {"coordinator", counter_coord}, {"processors", ccfg.processors},
			          {"push_interval_ms", counter_push_ms}, {"compress", ccfg.compress}, {"seed", seed}};
			out << json {{"command", "serve-counter"}, {"config", config}}.dump() << std::endl;
			rt.start(counter);
			wait_for_signal();
			rt.stop();
			return json(nullptr);
		};
	});

	// serve-aggregator ---------------------------------------------------
	auto *sagg = app.add_subcommand("serve-aggregator", "run an aggregator node with its HTTP gateway");
	uint16_t agg_port = 0, gateway_port = 8080;
	std::string agg_bind = "127.0.0.1", agg_coord, agg_schema;
	AggregatorConfig acfg;
	double retention_seconds = 300;
	sagg->add_option("--port", agg_port, "cluster listen port (0 = ephemeral)");
	sagg->add_option("--bind", agg_bind, "listen address");
	sagg->add_option("--gateway-port", gateway_port, "HTTP gateway port");
	sagg->add_option("--coordinator", agg_coord, "coordinator host:port")->required();
	sagg->add_option("--sub-cluster", acfg.default_sub_cluster, "default counters per report (0 = all)");
	sagg->add_option("--push-interval-ms", acfg.push_interval_ms, "push interval requested from counters")
	    ->check(CLI::PositiveNumber);
	sagg->add_option("--retention-seconds", retention_seconds, "finished report cache retention")
	    ->check(CLI::PositiveNumber);
	sagg->add_option("--schema", agg_schema, "schema JSON or sample file served at /schema")
	    ->check(CLI::ExistingFile);
	sagg->callback([&] {
		action = [&] {
			TcpRuntime rt({agg_bind, agg_port, 10 * kMillis, {}});
			acfg.id = rt.address();
			acfg.coordinator = agg_coord;
			acfg.seed = seed;
			acfg.cache_retention = static_cast<Micros>(retention_seconds * kSeconds);
			if (!agg_schema.empty()) {
				acfg.schema = ends_with(agg_schema, ".json") ? load_schema(agg_schema) : load_sample(agg_schema).schema;
			}
			Aggregator aggregator(acfg, rt.transport());
			Gateway gateway(aggregator, [&rt](std::function<void(Micros)> fn) { rt.call(fn); });
			httplib::Server server;
			gateway.install(server);
			if (!server.bind_to_port(agg_bind, gateway_port)) {
				throw Unavailable("cannot bind gateway port " + std::to_string(gateway_port));
			}
			config = {{"id", acfg.id}, {"coordinator", agg_coord}, {"gateway_port", gateway_port},
			          {"sub_cluster", acfg.default_sub_cluster}, {"push_interval_ms", acfg.push_interval_ms},
			          {"retention_seconds", retention_seconds}, {"seed", seed}};
			out << json {{"command", "serve-aggregator"}, {"config", config}}.dump() << std::endl;
			rt.start(aggregator);
			std::thread http([&] { server.listen_after_bind(); });
			wait_for_signal();
			server.stop();
			http.join();
			rt.stop();
			return json(nullptr);
		};
	});

	// bench --------------------------------------------------------------
	auto *bench = app.add_subcommand("bench", "experiments and simulation replay");
	bench->require_subcommand(1);

	auto *ber = bench->add_subcommand("error-ratio", "sampling error versus uniform and simple stratified");
	ErrorRatioConfig erc;
	std::string ber_fallback = "redistribute", ber_csv, ber_data;
	ber->add_option("--rows", erc.data.rows, "dataset rows")->check(CLI::PositiveNumber);
	ber->add_option("--n", erc.n, "sample size")->check(CLI::PositiveNumber);
	ber->add_option("--queries-per-bin", erc.queries_per_bin, "workload queries per size bin");
	ber->add_option("--seeds", erc.seeds, "sampling seeds")->check(CLI::PositiveNumber);
	ber->add_option("--selectivities", erc.selectivities, "size bins")->delimiter(',');
	ber->add_option("--mi-threshold", erc.mi_threshold, "normalized MI edge threshold")
	    ->check(CLI::Range(0.0, 1.0));
	ber->add_option("--fallback", ber_fallback, "merge | redistribute | none")
	    ->check(CLI::IsMember({"merge", "redistribute", "none"}));
	ber->add_option("--data", ber_data, "use this dataset instead of generating one")->check(CLI::ExistingFile);
	ber->add_option("--csv", ber_csv, "write the table here");
	ber->callback([&] {
		action = [&] {
			erc.fallback = parse_fallback_mode(ber_fallback);
			erc.data.seed = seed;
			config = {{"rows", erc.data.rows}, {"n", erc.n}, {"queries_per_bin", erc.queries_per_bin},
			          {"seeds", erc.seeds}, {"selectivities", erc.selectivities}, {"mi_threshold", erc.mi_threshold},
			          {"fallback", ber_fallback}, {"seed", seed}, {"data", ber_data}};
			auto result = ber_data.empty() ? experiment_error_ratio(erc)
			                               : experiment_error_ratio(load_dataset(ber_data), erc);
			auto csv = error_ratio_csv(result);
			if (!ber_csv.empty()) {
				write_text(ber_csv, csv);
			}
			json rows = json::array();
			for (auto &r : result.rows) {
				rows.push_back({{"selectivity", r.selectivity}, {"queries", r.queries}, {"err_ours", r.err_ours},
				                {"err_uniform", r.err_uniform}, {"err_simple", r.err_simple},
				                {"ratio_uniform", r.ratio_uniform}, {"ratio_simple", r.ratio_simple}});
			}
			return json {{"rows", rows}, {"selected", result.selected}, {"strata_raw", result.strata_raw},
			             {"strata_unstable", result.strata_unstable}, {"strata_final", result.strata_final}};
		};
	});

	SimConfig sim;
	BenchScenario scenario;
	auto *bfi = bench->add_subcommand("fetch-interval", "report time with progressive fetches");
	std::vector<uint32_t> intervals {100, 250, 500, 1000};
	std::string bfi_csv;
	add_sim_flags(bfi, sim);
	add_scenario_flags(bfi, scenario);
	bfi->add_option("--intervals", intervals, "fetch intervals in ms")->delimiter(',');
	bfi->add_option("--csv", bfi_csv, "write the table here");
	bfi->callback([&] {
		action = [&] {
			sim.seed = scenario.seed = seed;
			config = {{"sim", to_json(sim)}, {"scenario", scenario.to_json()}, {"intervals", intervals}};
			auto data = build_bench_data(scenario, sim.counters, false);
			auto rows = experiment_fetch_interval(sim, data, intervals);
			if (!bfi_csv.empty()) {
				write_text(bfi_csv, fetch_interval_csv(rows));
			}
			json table = json::array();
			for (auto &r : rows) {
				table.push_back({{"interval_ms", r.interval_ms}, {"total_ms", r.total_ms}, {"deviation", r.deviation}});
			}
			return json {{"rows", table}};
		};
	});

	auto *bov = bench->add_subcommand("overhead", "distributed report time over a single-machine scan");
	add_sim_flags(bov, sim);
	add_scenario_flags(bov, scenario);
	bov->callback([&] {
		action = [&] {
			sim.seed = scenario.seed = seed;
			config = {{"sim", to_json(sim)}, {"scenario", scenario.to_json()}};
			auto data = build_bench_data(scenario, sim.counters, false);
			auto r = experiment_distributed_overhead(sim, data);
			return json {{"distributed_ms", r.distributed_ms}, {"single_ms", r.single_ms}, {"ratio", r.ratio},
			             {"timing", timing_json(r.timing)}};
		};
	});

	auto *brun = bench->add_subcommand("run", "run one simulated scenario and write its event log");
	std::string brun_log;
	std::vector<size_t> kill_counters;
	std::vector<Micros> kill_times;
	std::optional<Micros> publish_at;
	add_sim_flags(brun, sim);
	add_scenario_flags(brun, scenario);
	brun->add_option("--fetch-interval-ms", sim.fetch_interval_ms, "progressive fetch interval (0 = none)");
	brun->add_option("--kill", kill_counters, "counter indices to kill")->delimiter(',');
	brun->add_option("--kill-at-us", kill_times, "kill times, one per --kill entry")->delimiter(',');
	brun->add_option("--publish-at-us", publish_at, "publish a fresh sample at this time");
	brun->add_option("--log", brun_log, "event log output");
	brun->callback([&] {
		action = [&] {
			if (kill_counters.size() != kill_times.size()) {
				throw CLI::ValidationError("--kill and --kill-at-us need the same number of entries");
			}
			sim.seed = scenario.seed = seed;
			for (size_t i = 0; i < kill_counters.size(); ++i) {
				sim.kills.push_back({kill_counters[i], kill_times[i]});
			}
			sim.publish_at = publish_at;
			auto header = to_json(sim);
			header["scenario"] = scenario.to_json();
			config = header;
			auto data = build_bench_data(scenario, sim.counters, publish_at.has_value());
			auto r = run_scenario(sim, data);
			if (!brun_log.empty()) {
				std::ofstream log(brun_log, std::ios::binary);
				log << header.dump() << "\n";
				for (auto &line : r.log) {
					log << line << "\n";
				}
				if (!log) {
					throw Error("cannot write '" + brun_log + "'");
				}
			}
			json reports = json::array();
			for (auto &o : r.reports) {
				auto e = estimate_json(o.estimate);
				e["reportId"] = o.report_id;
				e["status"] = to_string(o.status);
				e["timing"] = timing_json(o.timing);
				reports.push_back(e);
			}
			return json {{"reports", reports}, {"messages", r.messages_sent}, {"events", r.log.size()}};
		};
	});

	auto *breplay = bench->add_subcommand("replay", "re-run a logged scenario and compare event logs");
	std::string replay_log;
	breplay->add_option("log", replay_log, "event log from bench run --log")->required()->check(CLI::ExistingFile);
	breplay->callback([&] {
		action = [&] {
			auto [sim_config, lines] = read_event_log(replay_log);
			std::ifstream in(replay_log);
			std::string first;
			std::getline(in, first);
			auto header = json::parse(first);
			if (!header.contains("scenario")) {
				throw ParseError("event log has no scenario block");
			}
			auto s = BenchScenario::from_json(header["scenario"]);
			config = header;
			auto data = build_bench_data(s, sim_config.counters, sim_config.publish_at.has_value());
			auto r = run_scenario(sim_config, data);
			size_t first_diff = std::min(lines.size(), r.log.size());
			for (size_t i = 0; i < std::min(lines.size(), r.log.size()); ++i) {
				if (lines[i] != r.log[i]) {
					first_diff = i;
					break;
				}
			}
			bool identical = lines == r.log;
			if (!identical) {
				throw Error("replay diverged at event " + std::to_string(first_diff));
			}
			return json {{"identical", true}, {"events", lines.size()}};
		};
	});

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError &e) {
		return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
	}
	if (!action) {
		return kExitUsage;
	}
	try {
		std::string command;
		for (auto *sub = app.get_subcommands().front(); sub; ) {
			command += (command.empty() ? "" : " ") + sub->get_name();
			auto subs = sub->get_subcommands();
			sub = subs.empty() ? nullptr : subs.front();
		}
		auto result = action();
		if (!result.is_null()) {
			out << json {{"command", command}, {"config", config}, {"result", result}}.dump(2) << std::endl;
		}
		return kExitOk;
	} catch (const CLI::ValidationError &e) {
		err << "usage: " << e.what() << "\n";
		return kExitUsage;
	} catch (const InvalidArgument &e) {
		err << "error: " << e.what() << "\n";
		return kExitUsage;
	} catch (const std::exception &e) {
		err << "error: " << e.what() << "\n";
		if (verbosity > 0) {
			err << "config: " << config.dump() << "\n";
		}
		return kExitFailure;
	}
}

} // namespace stratcount
