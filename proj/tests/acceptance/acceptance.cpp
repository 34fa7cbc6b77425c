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

// Acceptance checks. One line per criterion: PASS/FAIL, name, measured
// values, wall time against its limit. Exit status is nonzero on any FAIL.

#include "stratcount/harness.hpp"
#include "stratcount/query.hpp"
#include "stratcount/strata.hpp"

#include "../coordinator_explorer.hpp"
#include "../oracles.hpp"
#include "../test_util.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace stratcount {
namespace {

struct Verdict {
	bool ok = false;
	std::string detail;
};

int failures = 0;

void check(const char *name, double limit_s, const std::function<Verdict()> &fn) {
	auto start = std::chrono::steady_clock::now();
	Verdict v;
	try {
		v = fn();
	} catch (const std::exception &e) {
		v = {false, std::string("threw: ") + e.what()};
	}
	double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
	bool in_time = secs < limit_s;
	bool pass = v.ok && in_time;
	failures += !pass;
	std::printf("%s  %-32s %s  [%.2fs / limit %.0fs%s]\n", pass ? "PASS" : "FAIL", name, v.detail.c_str(), secs,
	            limit_s, in_time ? "" : ", too slow");
	std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char *f, Args... args) {
	char buf[512];
	std::snprintf(buf, sizeof buf, f, args...);
	return buf;
}

using EdgeList = std::vector<std::pair<size_t, size_t>>;

std::vector<uint64_t> random_sizes(std::mt19937_64 &rng, size_t m, uint64_t total) {
	// m positive parts summing to total
	std::vector<uint64_t> cuts;
	for (size_t i = 0; i + 1 < m; ++i) {
		cuts.push_back(1 + rng() % (total - 1));
	}
	std::sort(cuts.begin(), cuts.end());
	cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
	while (cuts.size() + 1 < m) {
		uint64_t c = 1 + rng() % (total - 1);
		if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) {
			cuts.insert(std::upper_bound(cuts.begin(), cuts.end(), c), c);
		}
	}
	std::vector<uint64_t> sizes;
	uint64_t prev = 0;
	for (auto c : cuts) {
		sizes.push_back(c - prev);
		prev = c;
	}
	sizes.push_back(total - prev);
	return sizes;
}

bool rounded_sum_is_n(const std::vector<uint64_t> &sizes, uint64_t n) {
	uint64_t N = 0, sum = 0;
	for (auto s : sizes) {
		N += s;
	}
	for (auto s : sizes) {
		sum += static_cast<uint64_t>(std::llround(static_cast<double>(n) * static_cast<double>(s) / N));
	}
	return sum == n;
}

Verdict toy_probability() {
	std::vector<uint64_t> toy {10, 20, 30, 40};
	double p = uniform_exact_probability(toy, 10);
	double oracle = oracle::proportional_composition_probability(toy, 10);
	bool ok = std::abs(p - oracle) < 1e-15 && std::round(p * 100) == 4;
	return {ok, fmt("p=%.6f oracle=%.6f", p, oracle)};
}

Verdict bound_dominance() {
	// The bound rests on a normal approximation to the hypergeometric, which
	// needs a non-degenerate draw; n(N-n)/N >= 1 is the precondition applied.
	// Census-like draws are still evaluated and reported, not asserted.
	std::mt19937_64 rng(2024);
	size_t cases = 0, bad = 0, excluded = 0, excluded_bad = 0;
	double worst = 0;
	for (size_t m = 2; m <= 6; ++m) {
		for (uint64_t N = 2 * m; N <= 200; ++N) {
			for (int rep = 0; rep < 3; ++rep) {
				auto sizes = random_sizes(rng, m, N);
				for (uint64_t n = m; n <= N; ++n) {
					if (!rounded_sum_is_n(sizes, n)) {
						continue;
					}
					double exact = uniform_exact_probability(sizes, n);
					double bound = uniform_probability_bound(sizes, n);
					if (n * (N - n) < N) {
						++excluded;
						excluded_bad += bound < exact;
						continue;
					}
					++cases;
					if (bound < exact) {
						++bad;
						worst = std::max(worst, exact - bound);
					}
				}
			}
		}
	}
	// fixed N and n, growing M: the bound must shrink
	size_t monotone_bad = 0, monotone_cases = 0;
	for (uint64_t N : {60u, 120u, 200u}) {
		for (uint64_t n = 6; n <= N; n += 7) {
			double prev = INFINITY;
			for (size_t m = 2; m <= 6; ++m) {
				std::vector<uint64_t> sizes(m, N / m);
				sizes.back() += N - (N / m) * m;
				double b = log_uniform_probability_bound(sizes, n); // N! overflows a double
				++monotone_cases;
				monotone_bad += !(b < prev);
				prev = b;
			}
		}
	}
	return {bad == 0 && monotone_bad == 0 && cases > 10000,
	        fmt("%zu cases, %zu violations (worst %.3g); monotone %zu/%zu; %zu degenerate draws skipped (%zu below)",
	            cases, bad, worst, monotone_cases - monotone_bad, monotone_cases, excluded, excluded_bad)};
}

Verdict per_stratum_bound() {
	std::mt19937_64 rng(77);
	size_t bad = 0, strata = 0, bad_sum = 0;
	for (int t = 0; t < 1000; ++t) {
		size_t m = 1 + rng() % 40;
		uint64_t N = m + rng() % 100000;
		uint64_t n = 1 + rng() % N;
		auto sizes = random_sizes(rng, m, N);
		StrataPartition p;
		p.total = N;
		uint32_t next = 0;
		for (size_t h = 0; h < m; ++h) {
			Stratum s;
			s.signature = {static_cast<Value>(h + 1)};
			for (uint64_t i = 0; i < sizes[h]; ++i) {
				s.rows.push_back(next++);
			}
			p.strata.push_back(std::move(s));
		}
		auto alloc = allocate(p, n);
		uint64_t sum = 0;
		for (auto a : alloc) {
			sum += a;
		}
		bad_sum += sum != n;
		for (auto Nh : sizes) {
			// round-half-up of n N_h / N in integers
			uint64_t r = (2 * n * Nh + N) / (2 * N);
			double lhs = std::abs(static_cast<double>(Nh) * static_cast<double>(n) - static_cast<double>(N * r));
			++strata;
			bad += 2 * lhs > static_cast<double>(N); // |N_h - (N/n) r| <= N/(2n), scaled by n
		}
	}
	return {bad == 0 && bad_sum == 0, fmt("%zu strata, %zu over bound, %zu allocations off n", strata, bad, bad_sum)};
}

std::vector<Query> all_queries(const Schema &s) {
	std::vector<Query> out {Query {}};
	for (size_t f = 0; f < s.size(); ++f) {
		std::vector<Query> next;
		for (auto &q : out) {
			next.push_back(q);
			for (uint32_t mask = 1; mask < (1u << s.cardinality(f)); ++mask) {
				std::vector<Value> values;
				for (uint32_t v = 0; v < s.cardinality(f); ++v) {
					if (mask >> v & 1u) {
						values.push_back(static_cast<Value>(v + 1));
					}
				}
				auto copy = q;
				next.push_back(copy.where(f, values));
			}
		}
		out = std::move(next);
	}
	return out;
}

Verdict toy_pipeline() {
	auto d = testing::toy_dataset();
	std::vector<size_t> selected {0, 1};
	auto plan = plan_sample(d, selected, 10, 1, FallbackMode::merge);
	auto queries = all_queries(d.schema());
	auto report = error_metric(d, plan.sample, queries);
	bool alloc_ok = plan.allocation == std::vector<uint64_t> {2, 1, 3, 4};
	std::ostringstream a;
	for (auto x : plan.allocation) {
		a << x << ' ';
	}
	return {alloc_ok && report.max == 0.0,
	        fmt("allocation {%s} over %zu queries max error %g", a.str().c_str(), queries.size(), report.max)};
}

Verdict sampling_superiority() {
	ErrorRatioConfig cfg;
	auto r = experiment_error_ratio(cfg);
	bool ok = r.rows.size() >= 2;
	std::string detail;
	for (auto &row : r.rows) {
		detail += fmt("s=%g u=%.3f s=%.3f; ", row.selectivity, row.ratio_uniform, row.ratio_simple);
		if (row.selectivity >= 0.01) {
			ok = ok && row.ratio_uniform < 0.6 && row.ratio_simple < 0.9;
		}
	}
	if (r.rows.size() >= 2) {
		auto &a = r.rows[r.rows.size() - 2], &b = r.rows.back();
		ok = ok && b.ratio_uniform <= a.ratio_uniform && b.ratio_simple <= a.ratio_simple;
	}
	return {ok, detail + fmt("strata %zu", r.strata_final)};
}

Verdict oracle_equivalence() {
	CorrelatedParams p;
	p.rows = 100000;
	auto d = generate_correlated(p);
	std::vector<size_t> selected {0, 1, 2, 3};
	auto plan = plan_sample(d, selected, d.rows(), 3, FallbackMode::merge);
	std::vector<Query> workload;
	for (size_t f = 0; f < d.schema().size(); ++f) {
		for (uint32_t v = 1; v <= d.schema().cardinality(f); ++v) {
			workload.push_back(Query {}.where(f, {static_cast<Value>(v)}));
		}
	}
	size_t mismatched = 0;
	for (auto &q : workload) {
		mismatched += estimate_count(plan.sample, q).value != static_cast<double>(exact_count(d, q));
	}
	auto report = error_metric(d, plan.sample, workload);
	return {mismatched == 0 && report.max == 0.0,
	        fmt("%zu single-tag queries, %zu mismatched, max error %g", workload.size(), mismatched, report.max)};
}

struct SimFixture {
	Dataset data = testing::random_dataset({3, 4, 2, 5, 3}, 30000, 21, 0.02);
	std::vector<size_t> selected {0, 1};
	std::vector<Query> queries {Query {}.where(2, {1}), Query {}.where(0, {2}).where(3, {1, 4}),
	                            Query {}.where(4, {3})};
	Sample sample(uint64_t n, uint64_t seed = 5) const {
		return plan_sample(data, selected, n, seed, FallbackMode::merge).sample;
	}
	SimConfig config(size_t counters) const {
		SimConfig c;
		c.counters = counters;
		c.row_cost_us = 20;
		return c;
	}
};

const SimFixture &sim() {
	static const SimFixture f;
	return f;
}

Verdict distributed_correctness() {
	auto &f = sim();
	auto s = f.sample(3000);
	auto one = run_scenario(f.config(1), make_scenario_data(s, 1, 1, f.queries));
	auto three = run_scenario(f.config(3), make_scenario_data(s, 3, 1, f.queries));
	size_t unequal = 0;
	for (size_t i = 0; i < f.queries.size(); ++i) {
		unequal += three.reports[i].estimate.value != one.reports[i].estimate.value ||
		           three.reports[i].estimate.value != estimate_count(s, f.queries[i]).value;
	}
	std::mt19937_64 rng(5150);
	size_t covered = 0, runs = 100;
	for (size_t seed = 1; seed <= runs; ++seed) {
		auto data = make_scenario_data(s, 3, seed, f.queries);
		auto c = f.config(3);
		c.seed = seed;
		auto full = run_scenario(c, data);
		c.kills = {{rng() % 3, c.report_at + static_cast<Micros>(1000 + rng() % 15000)}};
		auto killed = run_scenario(c, data);
		bool all = true;
		for (size_t i = 0; i < f.queries.size(); ++i) {
			auto &e = killed.reports[i].estimate;
			all = all && killed.reports[i].status == ReportStatus::done &&
			      std::abs(e.value - full.reports[i].estimate.value) <= e.margin;
		}
		covered += all;
	}
	return {unequal == 0 && covered >= 95, fmt("k=3 vs k=1 unequal %zu; killed runs covered %zu/%zu", unequal,
	                                            covered, runs)};
}

Verdict snapshot_isolation() {
	auto &f = sim();
	auto s = f.sample(3000, 5), next = f.sample(3000, 6);
	auto data = make_scenario_data(s, 3, 1, f.queries, &next);
	auto c = f.config(3);
	auto before = run_scenario(c, data);
	size_t changed = 0, runs = 0;
	for (Micros offset : {1000, 5000, 10000, 20000}) {
		c.publish_at = c.report_at + offset;
		auto during = run_scenario(c, data);
		++runs;
		for (size_t i = 0; i < f.queries.size(); ++i) {
			changed += !(during.reports[i].estimate == before.reports[i].estimate);
		}
	}
	return {changed == 0, fmt("%zu publish times, %zu changed estimates", runs, changed)};
}

Verdict partial_robustness() {
	auto &f = sim();
	auto s = f.sample(1500);
	auto data = make_scenario_data(s, 3, 3, {f.queries[0]});
	auto c = f.config(3);
	c.push_interval_ms = 20;
	c.row_cost_us = 200;
	auto clean = run_scenario(c, data);
	size_t tried = 0, finals = 0, changed = 0;
	for (uint64_t i = 0; i < clean.partials_sent; ++i) {
		c.drop_partials = {i};
		auto r = run_scenario(c, data);
		bool final_dropped = false;
		for (auto &line : r.log) {
			final_dropped = final_dropped || (line.find(" drop ") != std::string::npos &&
			                                  line.find("\"status\":\"running\"") == std::string::npos);
		}
		if (final_dropped) {
			++finals;
			continue;
		}
		++tried;
		changed += r.partials_dropped != 1 || !(r.reports[0].estimate == clean.reports[0].estimate);
	}
	return {changed == 0 && tried > 0,
	        fmt("%zu intermediate drops, %zu changed; %zu final drops skipped", tried, changed, finals)};
}

Verdict fetch_interval() {
	auto &f = sim();
	auto s = f.sample(3000);
	auto data = make_scenario_data(s, 3, 1, f.queries);
	auto rows = experiment_fetch_interval(f.config(3), data, {100});
	bool ok = rows.size() == 2 && rows[1].deviation < 0.2;
	return {ok, fmt("T0=%.1fms T100=%.1fms deviation %.4f", rows[0].total_ms, rows.back().total_ms,
	                rows.back().deviation)};
}

Verdict coordinator_safety() {
	uint64_t sequences = 0, violations = 0;
	std::string first;
	auto run = [&](size_t nodes, size_t subs, size_t depth) {
		auto r = testing::CoordinatorExplorer(nodes, subs, depth).run();
		sequences += r.sequences;
		violations += r.violations;
		if (first.empty()) {
			first = r.first_violation;
		}
	};
	for (size_t nodes = 1; nodes <= 3; ++nodes) {
		for (size_t subs = 1; subs <= 3; ++subs) {
			run(nodes, subs, 6);
		}
	}
	// the permit cap only rises above one with four members
	run(4, 2, 5);
	return {violations == 0, fmt("%llu sequences, %llu violations %s", static_cast<unsigned long long>(sequences),
	                             static_cast<unsigned long long>(violations), first.c_str())};
}

Verdict vertex_cover() {
	std::mt19937_64 rng(4242);
	size_t bad = 0, edges_total = 0;
	for (int t = 0; t < 500; ++t) {
		size_t nodes = 1 + rng() % 12;
		double density = std::uniform_real_distribution<double>(0.05, 0.9)(rng);
		EdgeList edges;
		for (size_t a = 0; a < nodes; ++a) {
			for (size_t b = a + 1; b < nodes; ++b) {
				if (std::bernoulli_distribution(density)(rng)) {
					edges.emplace_back(a, b);
				}
			}
		}
		edges_total += edges.size();
		auto cover = approx_min_vertex_cover(nodes, edges);
		uint32_t mask = 0;
		for (auto v : cover) {
			mask |= 1u << v;
		}
		bad += !oracle::covers(mask, edges) || cover.size() > 2 * oracle::exact_min_vertex_cover(nodes, edges);
	}
	return {bad == 0, fmt("500 graphs, %zu edges, %zu failures", edges_total, bad)};
}

} // namespace
} // namespace stratcount

int main() {
	using namespace stratcount;
	check("toy-probability", 1, toy_probability);
	check("bound-dominance", 10, bound_dominance);
	check("per-stratum-bound", 5, per_stratum_bound);
	check("toy-pipeline", 1, toy_pipeline);
	check("sampling-superiority", 300, sampling_superiority);
	check("oracle-equivalence", 30, oracle_equivalence);
	check("distributed-correctness", 120, distributed_correctness);
	check("snapshot-isolation", 30, snapshot_isolation);
	check("cumulative-partial-robustness", 60, partial_robustness);
	check("fetch-interval-insignificance", 60, fetch_interval);
	check("coordinator-safety", 60, coordinator_safety);
	check("vertex-cover", 60, vertex_cover);
	std::printf("%d failed\n", failures);
	return failures == 0 ? 0 : 1;
}
