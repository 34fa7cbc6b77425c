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

#include "stratcount/mrf.hpp"

#include "stratcount/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace stratcount {

namespace {

struct PairCounts {
	std::vector<double> joint; // m_j x m_k
	double total = 0;
};

PairCounts count_pair(const Dataset &dataset, size_t j, size_t k) {
	auto mk = dataset.schema().cardinality(k);
	PairCounts out;
	out.joint.assign(static_cast<size_t>(dataset.schema().cardinality(j)) * mk, 0.0);
	auto cj = dataset.column(j);
	auto ck = dataset.column(k);
	std::vector<uint64_t> counts(out.joint.size(), 0);
	uint64_t total = 0;
	for (size_t i = 0; i < dataset.rows(); ++i) {
		if (cj[i] == kMissing || ck[i] == kMissing) {
			continue;
		}
		++counts[static_cast<size_t>(cj[i] - 1) * mk + (ck[i] - 1)];
		++total;
	}
	for (size_t c = 0; c < counts.size(); ++c) {
		out.joint[c] = static_cast<double>(counts[c]);
	}
	out.total = static_cast<double>(total);
	return out;
}

double entropy(const std::vector<double> &counts, double total) {
	double h = 0;
	for (auto c : counts) {
		if (c > 0) {
			h -= (c / total) * std::log(c / total);
		}
	}
	return h;
}

double nmi_from_counts(const PairCounts &pc, size_t mj, size_t mk) {
	if (pc.total == 0) {
		return 0.0;
	}
	std::vector<double> pj(mj, 0.0), pk(mk, 0.0);
	for (size_t t = 0; t < mj; ++t) {
		for (size_t q = 0; q < mk; ++q) {
			pj[t] += pc.joint[t * mk + q];
			pk[q] += pc.joint[t * mk + q];
		}
	}
	double hj = entropy(pj, pc.total);
	double hk = entropy(pk, pc.total);
	double denom = std::min(hj, hk);
	if (denom <= 0) {
		return 0.0;
	}
	double mi = 0;
	for (size_t t = 0; t < mj; ++t) {
		for (size_t q = 0; q < mk; ++q) {
			auto c = pc.joint[t * mk + q];
			if (c > 0) {
				mi += (c / pc.total) * std::log(c * pc.total / (pj[t] * pk[q]));
			}
		}
	}
	return std::clamp(mi / denom, 0.0, 1.0);
}

Matrix smoothed_log_odds(const PairCounts &pc, size_t mj, size_t mk) {
	double total = pc.total + static_cast<double>(mj * mk);
	std::vector<double> pj(mj, 0.0), pk(mk, 0.0);
	for (size_t t = 0; t < mj; ++t) {
		for (size_t q = 0; q < mk; ++q) {
			double p = (pc.joint[t * mk + q] + 1.0) / total;
			pj[t] += p;
			pk[q] += p;
		}
	}
	Matrix theta(mj, mk);
	for (size_t t = 0; t < mj; ++t) {
		for (size_t q = 0; q < mk; ++q) {
			double p = (pc.joint[t * mk + q] + 1.0) / total;
			theta(t, q) = -std::log(p / (pj[t] * pk[q]));
		}
	}
	return theta;
}

double column_entropy(const Dataset &dataset, size_t j) {
	std::vector<double> counts(dataset.schema().cardinality(j), 0.0);
	double total = 0;
	for (auto v : dataset.column(j)) {
		if (v != kMissing) {
			counts[v - 1] += 1;
			total += 1;
		}
	}
	return total > 0 ? entropy(counts, total) : 0.0;
}

} // namespace

MrfGraph::MrfGraph(std::vector<uint32_t> cardinalities, std::vector<MrfEdge> edges)
    : cardinalities_(std::move(cardinalities)), edges_(std::move(edges)) {
	for (auto &e : edges_) {
		if (e.j == e.k) {
			throw InvalidArgument("self-edge on feature " + std::to_string(e.j));
		}
		if (e.j >= cardinalities_.size() || e.k >= cardinalities_.size()) {
			throw InvalidArgument("edge references a feature outside the graph");
		}
		if (e.j > e.k) {
			std::swap(e.j, e.k);
			e.theta = e.theta.transposed();
		}
		if (e.theta.rows() != cardinalities_[e.j] || e.theta.cols() != cardinalities_[e.k]) {
			throw InvalidArgument("edge (" + std::to_string(e.j) + "," + std::to_string(e.k) +
			                      ") matrix shape does not match cardinalities");
		}
		for (auto x : e.theta.data()) {
			if (!std::isfinite(x)) {
				throw InvalidArgument("edge (" + std::to_string(e.j) + "," + std::to_string(e.k) +
				                      ") has a non-finite potential");
			}
		}
		e.summary = mean_absolute(e.theta);
	}
	std::sort(edges_.begin(), edges_.end(),
	          [](const MrfEdge &a, const MrfEdge &b) { return std::tie(a.j, a.k) < std::tie(b.j, b.k); });
	for (size_t i = 1; i < edges_.size(); ++i) {
		if (edges_[i].j == edges_[i - 1].j && edges_[i].k == edges_[i - 1].k) {
			throw InvalidArgument("duplicate edge (" + std::to_string(edges_[i].j) + "," +
			                      std::to_string(edges_[i].k) + ")");
		}
	}
	incident_.assign(cardinalities_.size(), {});
	for (size_t i = 0; i < edges_.size(); ++i) {
		incident_[edges_[i].j].push_back(i);
		incident_[edges_[i].k].push_back(i);
	}
}

bool MrfGraph::has_edge(size_t a, size_t b) const {
	if (a > b) {
		std::swap(a, b);
	}
	return std::binary_search(edges_.begin(), edges_.end(), MrfEdge {a, b, {}, 0.0},
	                          [](const MrfEdge &x, const MrfEdge &y) { return std::tie(x.j, x.k) < std::tie(y.j, y.k); });
}

std::vector<std::pair<size_t, size_t>> MrfGraph::edge_list() const {
	std::vector<std::pair<size_t, size_t>> out;
	out.reserve(edges_.size());
	for (auto &e : edges_) {
		out.emplace_back(e.j, e.k);
	}
	return out;
}

nlohmann::json MrfGraph::to_json() const {
	nlohmann::json nodes = nlohmann::json::array();
	for (size_t j = 0; j < cardinalities_.size(); ++j) {
		nodes.push_back({{"index", j}, {"cardinality", cardinalities_[j]}});
	}
	nlohmann::json edges = nlohmann::json::array();
	for (auto &e : edges_) {
		nlohmann::json rows = nlohmann::json::array();
		for (size_t t = 0; t < e.theta.rows(); ++t) {
			nlohmann::json row = nlohmann::json::array();
			for (size_t q = 0; q < e.theta.cols(); ++q) {
				row.push_back(e.theta(t, q));
			}
			rows.push_back(std::move(row));
		}
		edges.push_back({{"j", e.j}, {"k", e.k}, {"theta", std::move(rows)}, {"summary", e.summary}});
	}
	return {{"format", "stratcount-mrf/1"}, {"nodes", nodes}, {"edges", edges}};
}

MrfGraph MrfGraph::from_json(const nlohmann::json &j) {
	std::vector<uint32_t> cards;
	for (auto &node : j.at("nodes")) {
		cards.push_back(node.at("cardinality").get<uint32_t>());
	}
	std::vector<MrfEdge> edges;
	for (auto &e : j.at("edges")) {
		MrfEdge edge;
		edge.j = e.at("j").get<size_t>();
		edge.k = e.at("k").get<size_t>();
		auto &rows = e.at("theta");
		size_t cols = rows.empty() ? 0 : rows[0].size();
		edge.theta = Matrix(rows.size(), cols);
		for (size_t t = 0; t < rows.size(); ++t) {
			if (rows[t].size() != cols) {
				throw ParseError("ragged theta matrix in graph file");
			}
			for (size_t q = 0; q < cols; ++q) {
				edge.theta(t, q) = rows[t][q].get<double>();
			}
		}
		edges.push_back(std::move(edge));
	}
	return MrfGraph(std::move(cards), std::move(edges));
}

double mean_absolute(const Matrix &m) {
	if (m.data().empty()) {
		return 0.0;
	}
	double sum = 0;
	for (auto x : m.data()) {
		sum += std::abs(x);
	}
	return sum / static_cast<double>(m.data().size());
}

double normalized_mutual_information(const Dataset &dataset, size_t j, size_t k) {
	return nmi_from_counts(count_pair(dataset, j, k), dataset.schema().cardinality(j),
	                       dataset.schema().cardinality(k));
}

MrfGraph learn_structure(const Dataset &dataset, const LearnOptions &options) {
	if (dataset.rows() == 0) {
		throw InvalidArgument("cannot learn a graph from an empty dataset");
	}
	if (dataset.rows() < 100) {
		throw InvalidArgument("learn_structure needs at least 100 rows, got " + std::to_string(dataset.rows()));
	}
	if (!(options.mi_threshold >= 0.0) || options.mi_threshold > 1.0) {
		throw InvalidArgument("mi_threshold must lie in [0, 1]");
	}
	const size_t K = dataset.features();

	// Candidate features: all of them, unless the pair count would exceed the
	// cap, in which case the highest-entropy features are kept.
	std::vector<size_t> candidates(K);
	for (size_t j = 0; j < K; ++j) {
		candidates[j] = j;
	}
	if (K * (K - 1) / 2 > options.max_pairs) {
		std::vector<double> h(K);
		for (size_t j = 0; j < K; ++j) {
			h[j] = column_entropy(dataset, j);
		}
		std::stable_sort(candidates.begin(), candidates.end(), [&](size_t a, size_t b) { return h[a] > h[b]; });
		size_t keep = 2;
		while ((keep + 1) * keep / 2 <= options.max_pairs && keep < K) {
			++keep;
		}
		candidates.resize(keep);
		std::sort(candidates.begin(), candidates.end());
	}

	std::vector<std::pair<size_t, size_t>> pairs;
	for (size_t a = 0; a < candidates.size(); ++a) {
		for (size_t b = a + 1; b < candidates.size(); ++b) {
			pairs.emplace_back(candidates[a], candidates[b]);
		}
	}

	// Each pair is independent; results land in their own slot.
	std::vector<std::optional<MrfEdge>> found(pairs.size());
	std::atomic<size_t> next {0};
	auto worker = [&] {
		for (size_t p = next++; p < pairs.size(); p = next++) {
			auto [j, k] = pairs[p];
			auto mj = dataset.schema().cardinality(j);
			auto mk = dataset.schema().cardinality(k);
			auto pc = count_pair(dataset, j, k);
			if (nmi_from_counts(pc, mj, mk) > options.mi_threshold) {
				found[p] = MrfEdge {j, k, smoothed_log_odds(pc, mj, mk), 0.0};
			}
		}
	};
	unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
	threads = static_cast<unsigned>(std::min<size_t>(threads, std::max<size_t>(1, pairs.size())));
	std::vector<std::thread> pool;
	for (unsigned t = 1; t < threads; ++t) {
		pool.emplace_back(worker);
	}
	worker();
	for (auto &t : pool) {
		t.join();
	}

	std::vector<MrfEdge> edges;
	for (auto &e : found) {
		if (e) {
			edges.push_back(std::move(*e));
		}
	}
	return MrfGraph(dataset.schema().cardinalities(), std::move(edges));
}

std::vector<double> conditional_distribution(const MrfGraph &graph, size_t j, std::span<const Value> assignment) {
	if (j >= graph.num_features()) {
		throw InvalidArgument("feature index out of range");
	}
	if (assignment.size() != graph.num_features()) {
		throw InvalidArgument("assignment must hold one value per feature");
	}
	const auto mj = graph.cardinalities()[j];
	std::vector<double> energy(mj, 0.0);
	for (auto idx : graph.incident(j)) {
		auto &e = graph.edges()[idx];
		auto other = e.j == j ? e.k : e.j;
		auto v = assignment[other];
		if (v == kMissing) {
			continue;
		}
		if (v > graph.cardinalities()[other]) {
			throw InvalidArgument("assignment value out of range for feature " + std::to_string(other));
		}
		for (size_t t = 0; t < mj; ++t) {
			energy[t] += e.j == j ? e.theta(t, v - 1u) : e.theta(v - 1u, t);
		}
	}
	double lowest = *std::min_element(energy.begin(), energy.end());
	std::vector<double> probs(mj);
	double total = 0;
	for (size_t t = 0; t < mj; ++t) {
		probs[t] = std::exp(-(energy[t] - lowest));
		total += probs[t];
	}
	for (auto &p : probs) {
		p /= total;
	}
	return probs;
}

std::map<std::pair<size_t, size_t>, double> edge_summaries(const MrfGraph &graph) {
	std::map<std::pair<size_t, size_t>, double> out;
	for (auto &e : graph.edges()) {
		out[{e.j, e.k}] = e.summary;
	}
	return out;
}

void save_graph(const MrfGraph &graph, const std::string &path) {
	write_file(path, graph.to_json().dump(2) + "\n");
}

MrfGraph load_graph(const std::string &path) {
	try {
		return MrfGraph::from_json(nlohmann::json::parse(read_file(path)));
	} catch (const nlohmann::json::exception &e) {
		throw ParseError("bad graph file '" + path + "': " + e.what());
	}
}

} // namespace stratcount
