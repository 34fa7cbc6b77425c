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

#include "stratcount/datamodel.hpp"
#include "stratcount/matrix.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <span>
#include <utility>
#include <vector>

namespace stratcount {

struct MrfEdge {
	size_t j = 0; //!< always j < k
	size_t k = 0;
	Matrix theta; //!< m_j x m_k, zero-based value indices
	double summary = 0.0;
};

/// Pairwise Markov random field over categorical features. Immutable once
/// built; smaller Theta(t, q) means affinity.
class MrfGraph {
public:
	MrfGraph() = default;
	//! Canonicalizes edge order (j < k, sorted) and recomputes summaries.
	MrfGraph(std::vector<uint32_t> cardinalities, std::vector<MrfEdge> edges);

	size_t num_features() const {
		return cardinalities_.size();
	}
	const std::vector<uint32_t> &cardinalities() const {
		return cardinalities_;
	}
	const std::vector<MrfEdge> &edges() const {
		return edges_;
	}
	//! Indices into edges() of the edges touching feature j.
	const std::vector<size_t> &incident(size_t j) const {
		return incident_[j];
	}
	bool has_edge(size_t a, size_t b) const;
	std::vector<std::pair<size_t, size_t>> edge_list() const;

	nlohmann::json to_json() const;
	static MrfGraph from_json(const nlohmann::json &j);

private:
	std::vector<uint32_t> cardinalities_;
	std::vector<MrfEdge> edges_;
	std::vector<std::vector<size_t>> incident_;
};

struct LearnOptions {
	//! Edge kept iff normalized mutual information exceeds this.
	double mi_threshold = 0.05;
	//! Cap on evaluated feature pairs; features ranked by entropy when exceeded.
	size_t max_pairs = 1'000'000;
	//! 0 picks hardware concurrency.
	unsigned threads = 0;
};

/// NMI(j, k) = I(j; k) / min(H(j), H(k)) from unsmoothed empirical counts;
/// 0 when either entropy is 0.
double normalized_mutual_information(const Dataset &dataset, size_t j, size_t k);

/// Thresholded-NMI structure learner with add-one smoothed log-odds-ratio
/// potentials Theta(t, q) = -ln(p(t, q) / (p(t) p(q))).
MrfGraph learn_structure(const Dataset &dataset, const LearnOptions &options);

/// P[x_j = t | all other features] per the pairwise model. The assignment
/// holds a value for every feature; entry j is ignored.
std::vector<double> conditional_distribution(const MrfGraph &graph, size_t j, std::span<const Value> assignment);

/// Mean absolute entry of each edge matrix.
std::map<std::pair<size_t, size_t>, double> edge_summaries(const MrfGraph &graph);

double mean_absolute(const Matrix &m);

void save_graph(const MrfGraph &graph, const std::string &path);
MrfGraph load_graph(const std::string &path);

} // namespace stratcount
