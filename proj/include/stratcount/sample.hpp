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

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stratcount {

/// Tag signature over the selected features: slot i holds the value of
/// selected feature i, or kMissing when the row carries no tag for it.
using Signature = std::vector<Value>;

enum class SampleMethod { uniform, simple_stratified, fallback_stratified };

std::string_view to_string(SampleMethod method);
SampleMethod parse_sample_method(std::string_view text);

struct SampleStratum {
	Signature signature;
	uint64_t population = 0; //!< N_h
	uint64_t drawn = 0;      //!< n_h in the full sample
	double weight = 0.0;     //!< N_h / n_h, 0 when nothing was drawn

	bool operator==(const SampleStratum &) const = default;
};

struct SubsampleOrigin {
	std::string parent_id;
	uint32_t node_index = 0;
	uint32_t node_count = 1;

	bool operator==(const SubsampleOrigin &) const = default;
};

/// Per-node metadata the aggregator needs for scaling.
struct SampleInfo {
	std::string sample_id;
	std::vector<uint64_t> stratum_counts;
	double total_weight = 0.0;
	uint64_t rows = 0;

	bool operator==(const SampleInfo &) const = default;
};

/// Weights are accumulated on a 2^-16 grid so weighted sums are exact and
/// therefore independent of summation order (totals stay far below 2^37).
inline double quantize_weight(double w) {
	return std::round(w * 65536.0) / 65536.0;
}

/// Weighted sample (or per-node sub-sample). Rows are stored row-major.
struct Sample {
	std::string id;
	std::optional<SubsampleOrigin> origin;
	Schema schema;
	uint64_t population = 0; //!< N
	uint64_t seed = 0;
	SampleMethod method = SampleMethod::uniform;
	std::vector<size_t> selected;
	std::vector<SampleStratum> strata;
	std::vector<uint32_t> row_strata;
	std::vector<Value> cells;

	size_t rows() const {
		return row_strata.size();
	}
	std::span<const Value> row(size_t i) const {
		return {cells.data() + i * schema.size(), schema.size()};
	}
	double weight(size_t i) const {
		return strata[row_strata[i]].weight;
	}
	void add_row(uint32_t stratum, std::span<const Value> values);

	//! Recomputes `id` from the content hash.
	void assign_id();
	SampleInfo info() const;

	bool operator==(const Sample &) const = default;
};

// Sample file: "SMP1", kind, ids (+ parent id and node index for
// sub-samples), N, n, seed, method tag, schema, selected features, strata
// table (signature, N_h, n_h, w_h), then rows (stratum id + feature vector).
std::string encode_sample(const Sample &sample);
Sample decode_sample(std::string_view bytes);
void save_sample(const Sample &sample, const std::string &path);
Sample load_sample(const std::string &path);

} // namespace stratcount
