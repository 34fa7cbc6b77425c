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

#include "stratcount/binary_io.hpp"
#include "stratcount/matrix.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stratcount {

/// Encoded categorical value. Valid values are 1..cardinality; 0 marks a
/// missing cell.
using Value = uint16_t;
inline constexpr Value kMissing = 0;
inline constexpr uint32_t kMaxCardinality = 0xFFFF;

using FeatureVector = std::vector<Value>;

struct Feature {
	std::string name;
	uint32_t cardinality = 0;
	//! Optional category labels; labels[v - 1] is the label of value v.
	std::vector<std::string> labels;

	bool operator==(const Feature &) const = default;
};

class Schema {
public:
	Schema() = default;
	explicit Schema(std::vector<Feature> features);

	size_t size() const {
		return features_.size();
	}
	const Feature &feature(size_t j) const {
		return features_[j];
	}
	const std::vector<Feature> &features() const {
		return features_;
	}
	uint32_t cardinality(size_t j) const {
		return features_[j].cardinality;
	}
	std::vector<uint32_t> cardinalities() const;
	std::optional<size_t> index_of(std::string_view name) const;

	//! Maps a label to its value, or nullopt when the feature has no such label.
	std::optional<Value> value_of_label(size_t j, std::string_view label) const;

	nlohmann::json to_json() const;
	static Schema from_json(const nlohmann::json &j);

	bool operator==(const Schema &) const = default;

private:
	std::vector<Feature> features_;
};

/// Immutable categorical dataset stored column-major.
class Dataset {
public:
	Dataset() = default;
	Dataset(Schema schema, std::vector<std::vector<Value>> columns);

	static Dataset from_rows(Schema schema, std::span<const FeatureVector> rows);

	const Schema &schema() const {
		return schema_;
	}
	size_t rows() const {
		return rows_;
	}
	size_t features() const {
		return schema_.size();
	}
	std::span<const Value> column(size_t j) const {
		return columns_[j];
	}
	Value at(size_t row, size_t j) const {
		return columns_[j][row];
	}
	FeatureVector row(size_t i) const;

	bool operator==(const Dataset &) const = default;

private:
	Schema schema_;
	std::vector<std::vector<Value>> columns_;
	size_t rows_ = 0;
};

Dataset ingest_csv(const std::string &path, const Schema &schema);
Dataset parse_csv(std::string_view text, const Schema &schema);
std::string to_csv(const Dataset &dataset);

// Binary dataset file: "STR1", schema block, row count, then one column block
// per feature of fixed-width little-endian unsigned integers.
std::string encode_dataset(const Dataset &dataset);
Dataset decode_dataset(std::string_view bytes);
void save_dataset(const Dataset &dataset, const std::string &path);
Dataset load_dataset(const std::string &path);

void write_schema_block(BinaryWriter &writer, const Schema &schema);
Schema read_schema_block(BinaryReader &reader);

struct Bucketization {
	std::vector<Value> column;
	//! Strictly increasing cut points; value x falls in bucket 1 + #{cuts < x}.
	std::vector<double> boundaries;
};

/// Equal-frequency bucketization of a real-valued column.
Bucketization bucketize(std::span<const double> values, uint32_t buckets);

struct EdgePotential {
	size_t j = 0;
	size_t k = 0;
	//! m_j x m_k energy matrix, indexed by zero-based values.
	Matrix theta;
};

struct SyntheticOptions {
	//! Gibbs sweeps per row when the edge graph has a cycle.
	size_t gibbs_sweeps = 50;
};

/// Draws N rows from the pairwise model P(x) ~ exp(-sum Theta_jk(x_j, x_k)).
/// Forests are sampled exactly; cyclic graphs by per-row Gibbs chains.
Dataset generate_synthetic(const Schema &schema, std::span<const EdgePotential> edges, size_t rows, uint64_t seed,
                           const SyntheticOptions &options = {});

/// Empirical mutual information (nats) between two columns, skipping rows
/// where either value is missing.
double mutual_information(const Dataset &dataset, size_t j, size_t k);

} // namespace stratcount
