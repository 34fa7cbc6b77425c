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
#include "stratcount/mrf.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <iostream>
#include <random>
#include <set>

namespace stratcount {
namespace {

using Edges = std::set<std::pair<size_t, size_t>>;

Edges edge_set(const MrfGraph &g) {
	auto list = g.edge_list();
	return Edges(list.begin(), list.end());
}

Matrix agreement(size_t m, double beta) {
	Matrix t(m, m, beta);
	for (size_t i = 0; i < m; ++i) {
		t(i, i) = 0.0;
	}
	return t;
}

MrfGraph random_graph(std::mt19937_64 &rng, size_t K) {
	std::uniform_int_distribution<uint32_t> card(2, 4);
	std::uniform_real_distribution<double> energy(-2.0, 2.0);
	std::bernoulli_distribution keep(0.5);
	std::vector<uint32_t> cards(K);
	for (auto &c : cards) {
		c = card(rng);
	}
	std::vector<MrfEdge> edges;
	for (size_t j = 0; j < K; ++j) {
		for (size_t k = j + 1; k < K; ++k) {
			if (keep(rng)) {
				Matrix t(cards[j], cards[k]);
				for (size_t a = 0; a < cards[j]; ++a) {
					for (size_t b = 0; b < cards[k]; ++b) {
						t(a, b) = energy(rng);
					}
				}
				edges.push_back({j, k, t, 0.0});
			}
		}
	}
	return MrfGraph(cards, edges);
}

double energy_of(const MrfGraph &g, const std::vector<Value> &x) {
	double e = 0;
	for (auto &edge : g.edges()) {
		e += edge.theta(x[edge.j] - 1, x[edge.k] - 1);
	}
	return e;
}

TEST(MrfGraph, CanonicalizesEdges) {
	Matrix t {{1, 2, 3}, {4, 5, 6}}; // 2 x 3 for (2, 0)
	MrfGraph g({3, 4, 2}, {{2, 0, t, 0.0}, {0, 1, Matrix(3, 4, 1.0), 0.0}});
	ASSERT_EQ(g.edges().size(), 2u);
	EXPECT_EQ(g.edges()[0].j, 0u);
	EXPECT_EQ(g.edges()[0].k, 1u);
	EXPECT_EQ(g.edges()[1].j, 0u);
	EXPECT_EQ(g.edges()[1].k, 2u);
	EXPECT_EQ(g.edges()[1].theta, t.transposed());
	EXPECT_DOUBLE_EQ(g.edges()[1].summary, 3.5);
	EXPECT_TRUE(g.has_edge(2, 0));
	EXPECT_FALSE(g.has_edge(1, 2));
	EXPECT_EQ(g.incident(0).size(), 2u);
	EXPECT_EQ(g.incident(1).size(), 1u);
}

TEST(MrfGraph, RejectsMalformedEdges) {
	EXPECT_THROW(MrfGraph({2, 2}, {{1, 1, Matrix(2, 2), 0.0}}), InvalidArgument);
	EXPECT_THROW(MrfGraph({2, 2}, {{0, 2, Matrix(2, 2), 0.0}}), InvalidArgument);
	EXPECT_THROW(MrfGraph({2, 3}, {{0, 1, Matrix(2, 2), 0.0}}), InvalidArgument);
	EXPECT_THROW(MrfGraph({2, 2}, {{0, 1, Matrix(2, 2), 0.0}, {1, 0, Matrix(2, 2), 0.0}}), InvalidArgument);
	EXPECT_THROW(MrfGraph({2, 2}, {{0, 1, Matrix(2, 2, INFINITY), 0.0}}), InvalidArgument);
}

TEST(MrfGraph, SerializationRoundTrip) {
	testing::TempDir dir;
	std::mt19937_64 rng(5);
	auto g = random_graph(rng, 5);
	auto back = MrfGraph::from_json(g.to_json());
	EXPECT_EQ(back.cardinalities(), g.cardinalities());
	EXPECT_EQ(back.edge_list(), g.edge_list());
	for (size_t e = 0; e < g.edges().size(); ++e) {
		EXPECT_EQ(back.edges()[e].theta, g.edges()[e].theta);
		EXPECT_EQ(back.edges()[e].summary, g.edges()[e].summary);
	}
	save_graph(g, dir.file("g.json"));
	EXPECT_EQ(load_graph(dir.file("g.json")).edge_list(), g.edge_list());
	write_file(dir.file("bad.json"), "{\"nodes\": 3");
	EXPECT_THROW(load_graph(dir.file("bad.json")), ParseError);
}

TEST(Conditional, ZeroEnergiesAreUniform) {
	MrfGraph g({4, 3}, {{0, 1, Matrix(4, 3, 0.0), 0.0}});
	std::vector<Value> x {0, 2};
	auto p = conditional_distribution(g, 0, x);
	ASSERT_EQ(p.size(), 4u);
	for (double v : p) {
		EXPECT_DOUBLE_EQ(v, 0.25);
	}
}

TEST(Conditional, HandEvaluatedEdge) {
	double l2 = std::log(2.0);
	MrfGraph g({2, 2}, {{0, 1, Matrix {{l2, 0}, {0, l2}}, 0.0}});
	std::vector<Value> x {kMissing, 1};
	auto p = conditional_distribution(g, 0, x);
	EXPECT_NEAR(p[0], 1.0 / 3, 1e-15);
	EXPECT_NEAR(p[1], 2.0 / 3, 1e-15);
}

TEST(Conditional, MatchesEnumeratedJoint) {
	std::mt19937_64 rng(17);
	for (int trial = 0; trial < 50; ++trial) {
		auto g = random_graph(rng, 4);
		auto cards = g.cardinalities();
		std::vector<Value> x(4);
		for (size_t j = 0; j < 4; ++j) {
			x[j] = static_cast<Value>(1 + rng() % cards[j]);
		}
		size_t j = rng() % 4;
		std::vector<double> joint(cards[j]);
		double z = 0;
		for (Value t = 1; t <= cards[j]; ++t) {
			auto y = x;
			y[j] = t;
			joint[t - 1] = std::exp(-energy_of(g, y));
			z += joint[t - 1];
		}
		auto p = conditional_distribution(g, j, x);
		double sum = 0;
		for (size_t t = 0; t < p.size(); ++t) {
			EXPECT_NEAR(p[t], joint[t] / z, 1e-12);
			sum += p[t];
		}
		EXPECT_NEAR(sum, 1.0, 1e-9);
	}
}

TEST(Conditional, NonNeighborsNeverMatter) {
	std::mt19937_64 rng(23);
	for (int trial = 0; trial < 200; ++trial) {
		auto g = random_graph(rng, 6);
		size_t j = rng() % 6;
		auto cards = g.cardinalities();
		std::vector<Value> x(6);
		for (size_t f = 0; f < 6; ++f) {
			x[f] = static_cast<Value>(1 + rng() % cards[f]);
		}
		auto base = conditional_distribution(g, j, x);
		for (size_t other = 0; other < 6; ++other) {
			if (other == j || g.has_edge(j, other)) {
				continue;
			}
			for (Value v = 1; v <= cards[other]; ++v) {
				auto y = x;
				y[other] = v;
				ASSERT_EQ(conditional_distribution(g, j, y), base);
			}
		}
		// the value at j itself is ignored
		auto y = x;
		y[j] = kMissing;
		ASSERT_EQ(conditional_distribution(g, j, y), base);
	}
}

TEST(Conditional, RejectsBadAssignments) {
	MrfGraph g({2, 3}, {{0, 1, Matrix(2, 3), 0.0}});
	std::vector<Value> short_x {1};
	std::vector<Value> out_of_range {1, 4};
	std::vector<Value> ok {1, 3};
	EXPECT_THROW(conditional_distribution(g, 0, short_x), InvalidArgument);
	EXPECT_THROW(conditional_distribution(g, 0, out_of_range), InvalidArgument);
	EXPECT_THROW(conditional_distribution(g, 2, ok), InvalidArgument);
}

TEST(EdgeSummaries, MeanAbsoluteEntry) {
	EXPECT_EQ(mean_absolute(Matrix(3, 3, 0.0)), 0.0);
	EXPECT_EQ(mean_absolute(Matrix {{1, -1}, {-1, 1}}), 1.0);
	std::mt19937_64 rng(3);
	auto g = random_graph(rng, 6);
	auto summaries = edge_summaries(g);
	ASSERT_EQ(summaries.size(), g.edges().size());
	for (auto &e : g.edges()) {
		double s = 0;
		for (double v : e.theta.data()) {
			s += std::abs(v);
		}
		EXPECT_NEAR(summaries.at({e.j, e.k}), s / static_cast<double>(e.theta.data().size()), 1e-15);
	}
}

TEST(Learn, IndependentDataHasNoEdges) {
	Schema s({{"a", 3, {}}, {"b", 4, {}}, {"c", 2, {}}, {"d", 5, {}}});
	auto d = generate_synthetic(s, {}, 20000, 1);
	EXPECT_TRUE(learn_structure(d, {.mi_threshold = 0.05}).edges().empty());
}

TEST(Learn, ChainRecoveredWithoutShortcut) {
	Schema s({{"A", 3, {}}, {"B", 3, {}}, {"C", 3, {}}});
	std::vector<EdgePotential> chain {{0, 1, agreement(3, 1.0)}, {1, 2, agreement(3, 1.0)}};
	auto d = generate_synthetic(s, chain, 20000, 2);
	ASSERT_LT(normalized_mutual_information(d, 0, 2), 0.05);
	ASSERT_GT(normalized_mutual_information(d, 0, 1), 0.05);
	auto g = learn_structure(d, {.mi_threshold = 0.05});
	EXPECT_EQ(edge_set(g), (Edges {{0, 1}, {1, 2}}));
}

TEST(Learn, ZeroThresholdGivesCompleteGraph) {
	auto d = testing::random_dataset({3, 3, 4, 2, 5}, 2000, 9);
	EXPECT_EQ(learn_structure(d, {.mi_threshold = 0.0}).edges().size(), 10u);
}

TEST(Learn, NmiMatchesDefinition) {
	auto d = testing::random_dataset({3, 4}, 400, 4, 0.1);
	// brute force from rows
	std::map<std::pair<Value, Value>, double> joint;
	std::map<Value, double> pa, pb;
	double n = 0;
	for (size_t i = 0; i < d.rows(); ++i) {
		auto a = d.at(i, 0), b = d.at(i, 1);
		if (a == kMissing || b == kMissing) {
			continue;
		}
		joint[{a, b}] += 1;
		pa[a] += 1;
		pb[b] += 1;
		n += 1;
	}
	double mi = 0, ha = 0, hb = 0;
	for (auto &[ab, c] : joint) {
		mi += c / n * std::log((c / n) / (pa[ab.first] / n * pb[ab.second] / n));
	}
	for (auto &[v, c] : pa) {
		ha -= c / n * std::log(c / n);
	}
	for (auto &[v, c] : pb) {
		hb -= c / n * std::log(c / n);
	}
	EXPECT_NEAR(normalized_mutual_information(d, 0, 1), mi / std::min(ha, hb), 1e-12);
	EXPECT_NEAR(mutual_information(d, 0, 1), mi, 1e-12);
}

TEST(Learn, ThetaIsSmoothedLogOdds) {
	Schema s({{"a", 2, {}}, {"b", 3, {}}});
	std::vector<EdgePotential> e {{0, 1, Matrix {{0, 2, 2}, {2, 0, 2}}}};
	auto d = generate_synthetic(s, e, 500, 6);
	auto g = learn_structure(d, {.mi_threshold = 0.0});
	ASSERT_EQ(g.edges().size(), 1u);
	Matrix counts(2, 3, 1.0); // add-one
	for (size_t i = 0; i < d.rows(); ++i) {
		counts(d.at(i, 0) - 1, d.at(i, 1) - 1) += 1;
	}
	double total = d.rows() + 6.0;
	for (size_t t = 0; t < 2; ++t) {
		for (size_t q = 0; q < 3; ++q) {
			double row = 0, col = 0;
			for (size_t x = 0; x < 3; ++x) {
				row += counts(t, x) / total;
			}
			for (size_t x = 0; x < 2; ++x) {
				col += counts(x, q) / total;
			}
			EXPECT_NEAR(g.edges()[0].theta(t, q), -std::log(counts(t, q) / total / (row * col)), 1e-12);
		}
	}
}

TEST(Learn, MonotoneInThreshold) {
	Schema s({{"a", 3, {}}, {"b", 3, {}}, {"c", 3, {}}, {"d", 2, {}}, {"e", 4, {}}});
	std::vector<EdgePotential> e {{0, 1, agreement(3, 1.0)}, {1, 2, agreement(3, 0.5)}, {2, 3, Matrix(3, 2, 0.0)}};
	auto d = generate_synthetic(s, e, 5000, 12);
	Edges previous = edge_set(learn_structure(d, {.mi_threshold = 0.0}));
	for (double t = 0.0005; t < 0.6; t *= 1.5) {
		auto now = edge_set(learn_structure(d, {.mi_threshold = t}));
		for (auto &edge : now) {
			EXPECT_TRUE(previous.count(edge)) << "threshold " << t << " added an edge";
		}
		previous = now;
	}
}

TEST(Learn, RecoversKnownSparseGraphInAWindow) {
	const size_t K = 9;
	std::vector<Feature> f;
	for (size_t j = 0; j < K; ++j) {
		f.push_back({"x" + std::to_string(j), static_cast<uint32_t>(2 + j % 3), {}});
	}
	Schema s(f);
	auto edge = [&](size_t j, size_t k, double beta) {
		Matrix t(s.cardinality(j), s.cardinality(k), beta);
		for (size_t i = 0; i < std::min(t.rows(), t.cols()); ++i) {
			t(i, i) = 0.0;
		}
		return EdgePotential {j, k, t};
	};
	// a forest: 0-1-2, 1-3, 4-5, 6-7; 8 isolated
	std::vector<EdgePotential> truth {edge(0, 1, 2.5), edge(1, 2, 2.5), edge(1, 3, 2.5), edge(4, 5, 2.5),
	                                  edge(6, 7, 2.5)};
	Edges want {{0, 1}, {1, 2}, {1, 3}, {4, 5}, {6, 7}};
	auto d = generate_synthetic(s, truth, 50000, 31);
	double lo = -1, hi = -1;
	for (double t = 0.001; t < 1.0; t += 0.001) {
		if (edge_set(learn_structure(d, {.mi_threshold = t, .threads = 1})) == want) {
			if (lo < 0) {
				lo = t;
			}
			hi = t;
		}
	}
	std::cout << "exact recovery window: [" << lo << ", " << hi << "]\n";
	::testing::Test::RecordProperty("window_lo", std::to_string(lo));
	::testing::Test::RecordProperty("window_hi", std::to_string(hi));
	EXPECT_GT(lo, 0.0);
	EXPECT_GE(hi, lo);
}

TEST(Learn, ThreadCountDoesNotChangeResult) {
	auto d = testing::random_dataset({3, 3, 4, 2, 5, 2, 2}, 3000, 10);
	auto a = learn_structure(d, {.mi_threshold = 0.001, .threads = 1});
	auto b = learn_structure(d, {.mi_threshold = 0.001, .threads = 4});
	EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(Learn, PairCapKeepsHighEntropyFeatures) {
	// feature 1 is nearly constant: lowest entropy, dropped first
	auto d = testing::random_dataset({4, 2, 4, 4}, 1000, 3);
	auto col1 = std::vector<Value>(d.column(1).begin(), d.column(1).end());
	std::fill(col1.begin(), col1.end() - 5, Value {1});
	std::vector<std::vector<Value>> cols;
	for (size_t j = 0; j < 4; ++j) {
		cols.emplace_back(d.column(j).begin(), d.column(j).end());
	}
	cols[1] = col1;
	Dataset skewed(d.schema(), cols);
	auto g = learn_structure(skewed, {.mi_threshold = 0.0, .max_pairs = 3});
	EXPECT_EQ(edge_set(g), (Edges {{0, 2}, {0, 3}, {2, 3}}));
}

TEST(Learn, Preconditions) {
	auto tiny = testing::random_dataset({2, 2}, 50, 1);
	EXPECT_THROW(learn_structure(tiny, {}), InvalidArgument);
	auto empty = testing::random_dataset({2, 2}, 0, 1);
	EXPECT_THROW(learn_structure(empty, {}), InvalidArgument);
	auto ok = testing::random_dataset({2, 2}, 200, 1);
	EXPECT_THROW(learn_structure(ok, {.mi_threshold = -0.1}), InvalidArgument);
	EXPECT_THROW(learn_structure(ok, {.mi_threshold = 1.5}), InvalidArgument);
}

} // namespace
} // namespace stratcount
