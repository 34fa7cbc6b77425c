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


#include "stratcount/error.hpp"
#include "stratcount/harness.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

namespace stratcount {
namespace {

struct Fixture {
	Dataset data = testing::random_dataset({3, 4, 2, 5, 3}, 30000, 21, 0.02);
	std::vector<size_t> selected {0, 1};
	std::vector<Query> queries {Query {}.where(2, {1}), Query {}.where(0, {2}).where(3, {1, 4}),
	                            Query {}.where(4, {3})};
	Sample sample(uint64_t n, uint64_t seed = 5) const {
		return plan_sample(data, selected, n, seed, FallbackMode::merge).sample;
	}
};

const Fixture &fixture() {
	static const Fixture f;
	return f;
}

SimConfig base_config(size_t counters = 3) {
	SimConfig c;
	c.counters = counters;
	c.row_cost_us = 20;
	return c;
}

TEST(Harness, SingleCounterMatchesDirectQuery) {
	auto s = fixture().sample(2000);
	auto data = make_scenario_data(s, 1, 1, fixture().queries);
	auto r = run_scenario(base_config(1), data);
	ASSERT_EQ(r.reports.size(), 3u);
	for (size_t i = 0; i < 3; ++i) {
		EXPECT_EQ(r.reports[i].status, ReportStatus::done);
		EXPECT_EQ(r.reports[i].estimate.value, estimate_count(s, fixture().queries[i]).value);
		EXPECT_EQ(r.reports[i].estimate.margin, 0.0);
	}
}

TEST(Harness, ThreeCountersBitEqualToOne) {
	auto s = fixture().sample(3000);
	auto one = run_scenario(base_config(1), make_scenario_data(s, 1, 1, fixture().queries));
	auto three = run_scenario(base_config(3), make_scenario_data(s, 3, 1, fixture().queries));
	for (size_t i = 0; i < 3; ++i) {
		EXPECT_EQ(three.reports[i].estimate.value, one.reports[i].estimate.value);
		EXPECT_EQ(three.reports[i].estimate.margin, 0.0);
		EXPECT_EQ(three.reports[i].estimate.fraction_scanned, 1.0);
	}
	EXPECT_EQ(three.rows_scanned.size(), 3u);
}

TEST(Harness, SameSeedSameLog) {
	auto s = fixture().sample(1500);
	auto data = make_scenario_data(s, 3, 2, fixture().queries);
	auto c = base_config();
	c.fetch_interval_ms = 50;
	c.drop_probability = 0.2;
	auto a = run_scenario(c, data), b = run_scenario(c, data);
	EXPECT_EQ(a.log, b.log);
	EXPECT_EQ(a.ended_at, b.ended_at);
	c.seed = 2;
	auto other = run_scenario(c, data);
	EXPECT_NE(other.log, a.log);
}

TEST(Harness, TimingIsNonNegativeAndScanDominates) {
	auto s = fixture().sample(3000);
	auto r = run_scenario(base_config(), make_scenario_data(s, 3, 1, fixture().queries));
	for (auto &o : r.reports) {
		EXPECT_GE(o.timing.t_d, 0);
		EXPECT_GE(o.timing.t_c, 0);
		EXPECT_GE(o.timing.t_m, 0);
		EXPECT_GT(o.timing.t_s, o.timing.t_d + o.timing.t_c + o.timing.t_m);
		EXPECT_FALSE(o.progress.empty());
	}
}

TEST(Harness, KilledCounterWidensMarginAroundTruth) {
	auto s = fixture().sample(3000);
	auto data = make_scenario_data(s, 3, 1, fixture().queries);
	auto full = run_scenario(base_config(), data);
	auto c = base_config();
	c.kills = {{1, c.report_at + 5 * kMillis}};
	auto killed = run_scenario(c, data);
	for (size_t i = 0; i < 3; ++i) {
		auto &e = killed.reports[i].estimate;
		EXPECT_EQ(killed.reports[i].status, ReportStatus::done);
		EXPECT_GT(e.margin, 0.0);
		EXPECT_LE(std::abs(e.value - full.reports[i].estimate.value), e.margin);
	}
	c.kills = {{7, 0}};
	EXPECT_THROW(run_scenario(c, data), InvalidArgument);
}

TEST(Harness, DroppedIntermediatePartialsDoNotChangeFinals) {
	auto s = fixture().sample(1500);
	auto data = make_scenario_data(s, 3, 3, {fixture().queries[0]});
	auto c = base_config();
	c.push_interval_ms = 20;
	c.row_cost_us = 200;
	auto clean = run_scenario(c, data);
	ASSERT_GT(clean.partials_sent, 6u);
	int dropped_intermediate = 0;
	for (uint64_t i = 0; i < clean.partials_sent; i += 3) {
		c.drop_partials = {i};
		auto r = run_scenario(c, data);
		bool final_dropped = false;
		for (auto &line : r.log) {
			final_dropped = final_dropped || (line.find(" drop ") != std::string::npos &&
			                                  line.find("\"status\":\"running\"") == std::string::npos);
		}
		if (final_dropped) {
			continue;
		}
		++dropped_intermediate;
		EXPECT_EQ(r.partials_dropped, 1u);
		EXPECT_EQ(r.reports[0].estimate, clean.reports[0].estimate) << "drop " << i;
	}
	EXPECT_GT(dropped_intermediate, 0);
}

TEST(Harness, PublishMidReportKeepsInFlightAnswer) {
	auto s = fixture().sample(3000, 5), next = fixture().sample(3000, 6);
	auto data = make_scenario_data(s, 3, 1, fixture().queries, &next);
	auto c = base_config();
	auto before = run_scenario(c, data);
	c.publish_at = c.report_at + 10 * kMillis;
	auto during = run_scenario(c, data);
	for (size_t i = 0; i < 3; ++i) {
		EXPECT_EQ(during.reports[i].estimate, before.reports[i].estimate);
	}
	// every counter ends on the new sample and never held two at once
	for (size_t i = 0; i < 3; ++i) {
		EXPECT_EQ(during.final_versions[i], 2u);
		size_t old_rows = data.subsamples[i].rows(), new_rows = 0;
		for (auto &sub : data.next_subsamples) {
			new_rows = std::max(new_rows, sub.rows());
		}
		EXPECT_LE(during.peak_resident[i], std::max(old_rows, new_rows));
	}
	c.publish_at.reset();
	c.publish_at = 1;
	EXPECT_THROW(run_scenario(c, make_scenario_data(s, 3, 1, fixture().queries)), InvalidArgument);
}

TEST(Harness, ScanTimeFlatInClusterSize) {
	const uint64_t per_node = 2000;
	for (size_t k : {2u, 3u, 4u}) {
		auto t = [&](size_t nodes) {
			auto s = fixture().sample(per_node * nodes);
			auto r = run_scenario(base_config(nodes), make_scenario_data(s, nodes, 1, {fixture().queries[0]}));
			return r.reports[0].timing.t_s;
		};
		double a = t(k), b = t(k + 1);
		EXPECT_LT(std::abs(a - b) / a, 0.05) << k << " vs " << k + 1 << ": " << a << " / " << b;
	}
}

TEST(Harness, EventLogRoundTrip) {
	testing::TempDir dir;
	auto s = fixture().sample(1000);
	auto c = base_config();
	c.kills = {{2, 150000}};
	c.drop_partials = {1, 4};
	c.publish_at = 777;
	c.threshold = 0.05;
	auto data = make_scenario_data(s, 3, 1, {fixture().queries[0]});
	auto plain = c;
	plain.publish_at.reset();
	auto r = run_scenario(plain, data);
	write_event_log(dir.file("log.txt"), c, r);
	auto [config, lines] = read_event_log(dir.file("log.txt"));
	EXPECT_EQ(to_json(config), to_json(c));
	EXPECT_EQ(config.kills.size(), 1u);
	EXPECT_EQ(config.publish_at, std::optional<Micros> {777});
	EXPECT_EQ(lines, r.log);
	EXPECT_THROW(read_event_log(dir.file("missing.txt")), Error);
}

TEST(Harness, ConfigValidation) {
	auto s = fixture().sample(500);
	auto data = make_scenario_data(s, 1, 1, {Query {}});
	auto c = base_config(0);
	EXPECT_THROW(run_scenario(c, data), InvalidArgument);
	c = base_config(1);
	c.row_cost_us = 0;
	EXPECT_THROW(run_scenario(c, data), InvalidArgument);
}

// -- experiments ------------------------------------------------------------

TEST(Experiments, FullSampleGivesZeroErrorAndUnitRatios) {
	ErrorRatioConfig cfg;
	cfg.data.rows = 3000;
	cfg.data.leaves = 6;
	cfg.n = 3000;
	cfg.selectivities = {0.05, 0.2};
	cfg.queries_per_bin = 10;
	cfg.seeds = 2;
	auto r = experiment_error_ratio(cfg);
	ASSERT_EQ(r.rows.size(), 2u);
	for (auto &row : r.rows) {
		EXPECT_EQ(row.err_ours, 0.0);
		EXPECT_EQ(row.err_uniform, 0.0);
		EXPECT_EQ(row.ratio_uniform, 1.0);
		EXPECT_EQ(row.ratio_simple, 1.0);
	}
	EXPECT_FALSE(r.selected.empty());
	auto csv = error_ratio_csv(r);
	EXPECT_EQ(csv.substr(0, csv.find('\n')), "selectivity,queries,err_ours,err_uniform,err_simple,ratio_uniform,ratio_simple");
}

TEST(Experiments, CorrelatedModelShape) {
	CorrelatedParams p;
	auto schema = correlated_schema(p);
	EXPECT_EQ(schema.size(), 30u);
	EXPECT_EQ(correlated_edges(p).size(), 3u + 26u);
	p.hub_cardinality = 6;
	EXPECT_THROW(correlated_schema(p), InvalidArgument);
	p.hub_cardinality = 4;
	EXPECT_THROW(correlated_schema(p), InvalidArgument); // 7 leaves per hub > 3
}

TEST(Experiments, FetchIntervalDeviation) {
	auto s = fixture().sample(3000);
	auto data = make_scenario_data(s, 3, 1, fixture().queries);
	auto rows = experiment_fetch_interval(base_config(), data, {100, 1000000});
	ASSERT_EQ(rows.size(), 3u);
	EXPECT_EQ(rows[0].interval_ms, 0u);
	EXPECT_EQ(rows[0].deviation, 0.0);
	EXPECT_LT(rows[1].deviation, 0.2);
	EXPECT_LT(rows[2].deviation, 0.01);
	EXPECT_NE(fetch_interval_csv(rows).find("interval_ms,total_ms,deviation\n0,"), std::string::npos);
}

TEST(Experiments, OverheadGrowsWithLatency) {
	auto s = fixture().sample(3000);
	auto data = make_scenario_data(s, 3, 1, {fixture().queries[0]});
	double previous = 0;
	for (Micros latency : {0, 1000, 10000, 50000}) {
		auto c = base_config();
		c.latency = latency;
		c.jitter = 0;
		c.report_at = 2 * kSeconds; // registration needs a few round trips
		auto r = experiment_distributed_overhead(c, data);
		EXPECT_GE(r.ratio, 1.0);
		EXPECT_GT(r.ratio, previous);
		previous = r.ratio;
	}
}

} // namespace
} // namespace stratcount
