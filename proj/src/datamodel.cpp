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

#include "stratcount/datamodel.hpp"

#include "stratcount/binary_io.hpp"
#include "stratcount/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace stratcount {

namespace {

constexpr std::string_view kDatasetMagic = "STR1";

std::string_view trim(std::string_view s) {
	while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
		s.remove_prefix(1);
	}
	while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
		s.remove_suffix(1);
	}
	if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
		s = s.substr(1, s.size() - 2);
	}
	return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
	std::vector<std::string_view> cells;
	size_t start = 0;
	while (true) {
		auto comma = line.find(',', start);
		if (comma == std::string_view::npos) {
			cells.push_back(trim(line.substr(start)));
			break;
		}
		cells.push_back(trim(line.substr(start, comma - start)));
		start = comma + 1;
	}
	return cells;
}

std::optional<long long> parse_integer(std::string_view s) {
	long long value = 0;
	auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
	if (ec != std::errc() || ptr != s.data() + s.size()) {
		return std::nullopt;
	}
	return value;
}

double uniform01(std::mt19937_64 &rng) {
	return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

size_t draw_from_cdf(const double *cdf, size_t count, double u) {
	auto it = std::upper_bound(cdf, cdf + count, u * cdf[count - 1]);
	return std::min(static_cast<size_t>(it - cdf), count - 1);
}

} // namespace

Schema::Schema(std::vector<Feature> features) : features_(std::move(features)) {
	if (features_.empty()) {
		throw InvalidArgument("schema needs at least one feature");
	}
	std::set<std::string> names;
	for (auto &f : features_) {
		if (f.cardinality < 2) {
			throw InvalidArgument("feature '" + f.name + "' has cardinality " + std::to_string(f.cardinality) +
			                      "; at least 2 is required");
		}
		if (f.cardinality > kMaxCardinality) {
			throw InvalidArgument("feature '" + f.name + "' cardinality exceeds " + std::to_string(kMaxCardinality));
		}
		if (!f.labels.empty() && f.labels.size() != f.cardinality) {
			throw InvalidArgument("feature '" + f.name + "' has " + std::to_string(f.labels.size()) +
			                      " labels for cardinality " + std::to_string(f.cardinality));
		}
		if (!names.insert(f.name).second) {
			throw InvalidArgument("duplicate feature name '" + f.name + "'");
		}
	}
}

std::vector<uint32_t> Schema::cardinalities() const {
	std::vector<uint32_t> out;
	out.reserve(features_.size());
	for (auto &f : features_) {
		out.push_back(f.cardinality);
	}
	return out;
}

std::optional<size_t> Schema::index_of(std::string_view name) const {
	for (size_t j = 0; j < features_.size(); ++j) {
		if (features_[j].name == name) {
			return j;
		}
	}
	return std::nullopt;
}

std::optional<Value> Schema::value_of_label(size_t j, std::string_view label) const {
	auto &labels = features_[j].labels;
	for (size_t v = 0; v < labels.size(); ++v) {
		if (labels[v] == label) {
			return static_cast<Value>(v + 1);
		}
	}
	return std::nullopt;
}

nlohmann::json Schema::to_json() const {
	nlohmann::json features = nlohmann::json::array();
	for (auto &f : features_) {
		nlohmann::json entry = {{"name", f.name}, {"cardinality", f.cardinality}};
		if (!f.labels.empty()) {
			entry["labels"] = f.labels;
		}
		features.push_back(std::move(entry));
	}
	return {{"features", features}};
}

Schema Schema::from_json(const nlohmann::json &j) {
	std::vector<Feature> features;
	for (auto &entry : j.at("features")) {
		Feature f;
		f.name = entry.at("name").get<std::string>();
		f.cardinality = entry.at("cardinality").get<uint32_t>();
		if (entry.contains("labels")) {
			f.labels = entry.at("labels").get<std::vector<std::string>>();
		}
		features.push_back(std::move(f));
	}
	return Schema(std::move(features));
}

Dataset::Dataset(Schema schema, std::vector<std::vector<Value>> columns)
    : schema_(std::move(schema)), columns_(std::move(columns)) {
	if (columns_.size() != schema_.size()) {
		throw InvalidArgument("dataset has " + std::to_string(columns_.size()) + " columns but schema has " +
		                      std::to_string(schema_.size()) + " features");
	}
	rows_ = columns_.empty() ? 0 : columns_[0].size();
	for (size_t j = 0; j < columns_.size(); ++j) {
		if (columns_[j].size() != rows_) {
			throw InvalidArgument("column '" + schema_.feature(j).name + "' has a different row count");
		}
		auto m = schema_.cardinality(j);
		for (auto v : columns_[j]) {
			if (v > m) {
				throw InvalidArgument("value " + std::to_string(v) + " out of range for feature '" +
				                      schema_.feature(j).name + "'");
			}
		}
	}
}

Dataset Dataset::from_rows(Schema schema, std::span<const FeatureVector> rows) {
	std::vector<std::vector<Value>> columns(schema.size());
	for (auto &col : columns) {
		col.reserve(rows.size());
	}
	for (size_t i = 0; i < rows.size(); ++i) {
		if (rows[i].size() != schema.size()) {
			throw InvalidArgument("row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) + " values");
		}
		for (size_t j = 0; j < schema.size(); ++j) {
			columns[j].push_back(rows[i][j]);
		}
	}
	return Dataset(std::move(schema), std::move(columns));
}

FeatureVector Dataset::row(size_t i) const {
	FeatureVector out(columns_.size());
	for (size_t j = 0; j < columns_.size(); ++j) {
		out[j] = columns_[j][i];
	}
	return out;
}

Dataset parse_csv(std::string_view text, const Schema &schema) {
	std::vector<std::string_view> lines;
	size_t start = 0;
	while (start < text.size()) {
		auto nl = text.find('\n', start);
		if (nl == std::string_view::npos) {
			nl = text.size();
		}
		lines.push_back(text.substr(start, nl - start));
		start = nl + 1;
	}
	while (!lines.empty() && trim(lines.back()).empty()) {
		lines.pop_back();
	}
	if (lines.empty()) {
		throw ParseError("CSV input has no header row");
	}

	auto header = split_csv_line(lines[0]);
	if (header.size() != schema.size()) {
		throw ParseError("CSV header has " + std::to_string(header.size()) + " columns, schema has " +
		                 std::to_string(schema.size()));
	}
	// position in file -> feature index
	std::vector<size_t> feature_of_column(header.size());
	std::vector<bool> seen(schema.size(), false);
	for (size_t c = 0; c < header.size(); ++c) {
		auto idx = schema.index_of(header[c]);
		if (!idx || seen[*idx]) {
			throw ParseError("CSV header column '" + std::string(header[c]) + "' does not match the schema");
		}
		seen[*idx] = true;
		feature_of_column[c] = *idx;
	}

	std::vector<std::vector<Value>> columns(schema.size());
	for (size_t line_no = 1; line_no < lines.size(); ++line_no) {
		if (trim(lines[line_no]).empty()) {
			continue;
		}
		auto cells = split_csv_line(lines[line_no]);
		if (cells.size() != header.size()) {
			throw ParseError("malformed CSV row " + std::to_string(line_no) + ": expected " +
			                 std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
		}
		for (size_t c = 0; c < cells.size(); ++c) {
			auto j = feature_of_column[c];
			auto cell = cells[c];
			Value value = kMissing;
			if (!cell.empty()) {
				if (auto label = schema.value_of_label(j, cell)) {
					value = *label;
				} else if (auto number = parse_integer(cell)) {
					if (*number < 1 || *number > static_cast<long long>(schema.cardinality(j))) {
						throw ParseError("value " + std::string(cell) + " in row " + std::to_string(line_no) +
						                 " overflows cardinality " + std::to_string(schema.cardinality(j)) +
						                 " of feature '" + schema.feature(j).name + "'");
					}
					value = static_cast<Value>(*number);
				}
				// anything else is an unknown label and stays missing
			}
			columns[j].push_back(value);
		}
	}
	return Dataset(schema, std::move(columns));
}

Dataset ingest_csv(const std::string &path, const Schema &schema) {
	return parse_csv(read_file(path), schema);
}

std::string to_csv(const Dataset &dataset) {
	std::ostringstream out;
	auto &schema = dataset.schema();
	for (size_t j = 0; j < schema.size(); ++j) {
		out << (j ? "," : "") << schema.feature(j).name;
	}
	out << '\n';
	for (size_t i = 0; i < dataset.rows(); ++i) {
		for (size_t j = 0; j < schema.size(); ++j) {
			if (j) {
				out << ',';
			}
			auto v = dataset.at(i, j);
			if (v != kMissing) {
				out << v;
			}
		}
		out << '\n';
	}
	return out.str();
}

void write_schema_block(BinaryWriter &writer, const Schema &schema) {
	writer.write_uint<uint32_t>(static_cast<uint32_t>(schema.size()));
	for (auto &f : schema.features()) {
		writer.write_string(f.name);
		writer.write_uint<uint32_t>(f.cardinality);
		writer.write_uint<uint32_t>(static_cast<uint32_t>(f.labels.size()));
		for (auto &label : f.labels) {
			writer.write_string(label);
		}
	}
}

Schema read_schema_block(BinaryReader &reader) {
	auto count = reader.read_uint<uint32_t>();
	std::vector<Feature> features;
	for (uint32_t i = 0; i < count; ++i) {
		Feature f;
		f.name = reader.read_string();
		f.cardinality = reader.read_uint<uint32_t>();
		auto labels = reader.read_uint<uint32_t>();
		for (uint32_t l = 0; l < labels; ++l) {
			f.labels.push_back(reader.read_string());
		}
		features.push_back(std::move(f));
	}
	return Schema(std::move(features));
}

std::string encode_dataset(const Dataset &dataset) {
	BinaryWriter writer;
	writer.write_bytes(kDatasetMagic);
	write_schema_block(writer, dataset.schema());
	writer.write_uint<uint64_t>(dataset.rows());
	for (size_t j = 0; j < dataset.features(); ++j) {
		auto width = byte_width_for(dataset.schema().cardinality(j));
		for (auto v : dataset.column(j)) {
			writer.write_uint_width(v, width);
		}
	}
	return writer.release();
}

Dataset decode_dataset(std::string_view bytes) {
	BinaryReader reader(bytes);
	if (reader.read_bytes(4) != kDatasetMagic) {
		throw ParseError("not a dataset file (bad magic)");
	}
	auto schema = read_schema_block(reader);
	auto rows = reader.read_uint<uint64_t>();
	std::vector<std::vector<Value>> columns(schema.size());
	for (size_t j = 0; j < schema.size(); ++j) {
		auto width = byte_width_for(schema.cardinality(j));
		columns[j].resize(rows);
		for (uint64_t i = 0; i < rows; ++i) {
			columns[j][i] = static_cast<Value>(reader.read_uint_width(width));
		}
	}
	if (!reader.at_end()) {
		throw ParseError("trailing bytes after dataset columns");
	}
	return Dataset(std::move(schema), std::move(columns));
}

void save_dataset(const Dataset &dataset, const std::string &path) {
	write_file(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::string &path) {
	return decode_dataset(read_file(path));
}

std::string read_file(const std::string &path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw Error("cannot open '" + path + "'");
	}
	std::ostringstream buffer;
	buffer << in.rdbuf();
	return buffer.str();
}

void write_file(const std::string &path, std::string_view bytes) {
	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out) {
		throw Error("cannot write '" + path + "'");
	}
	out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
	if (!out) {
		throw Error("short write to '" + path + "'");
	}
}

Bucketization bucketize(std::span<const double> values, uint32_t buckets) {
	if (buckets < 2) {
		throw InvalidArgument("bucket count must be at least 2");
	}
	if (buckets > kMaxCardinality) {
		throw InvalidArgument("bucket count exceeds the maximum cardinality");
	}
	std::vector<double> sorted(values.begin(), values.end());
	std::sort(sorted.begin(), sorted.end());
	// change points: indices i where sorted[i-1] < sorted[i]
	std::vector<size_t> changes;
	for (size_t i = 1; i < sorted.size(); ++i) {
		if (sorted[i - 1] < sorted[i]) {
			changes.push_back(i);
		}
	}
	auto distinct = sorted.empty() ? 0 : changes.size() + 1;
	if (distinct < buckets) {
		throw InvalidArgument("only " + std::to_string(distinct) + " distinct values for " + std::to_string(buckets) +
		                      " buckets; use at most " + std::to_string(distinct) + " buckets");
	}

	Bucketization out;
	size_t lo = 0;
	for (uint32_t b = 1; b < buckets; ++b) {
		double target = static_cast<double>(sorted.size()) * b / buckets;
		// leave room for the cuts still to place
		size_t hi = changes.size() - (buckets - 1 - b) - 1;
		auto it = std::lower_bound(changes.begin() + lo, changes.begin() + hi + 1, target,
		                           [](size_t c, double t) { return static_cast<double>(c) < t; });
		size_t pick = static_cast<size_t>(it - changes.begin());
		if (pick > hi) {
			pick = hi;
		}
		if (pick > lo && std::abs(static_cast<double>(changes[pick - 1]) - target) <=
		                     std::abs(static_cast<double>(changes[pick]) - target)) {
			--pick;
		}
		auto cut = changes[pick];
		out.boundaries.push_back((sorted[cut - 1] + sorted[cut]) / 2.0);
		lo = pick + 1;
	}

	out.column.reserve(values.size());
	for (double x : values) {
		auto bucket = std::lower_bound(out.boundaries.begin(), out.boundaries.end(), x) - out.boundaries.begin();
		out.column.push_back(static_cast<Value>(bucket + 1));
	}
	return out;
}

Dataset generate_synthetic(const Schema &schema, std::span<const EdgePotential> edges, size_t rows, uint64_t seed,
                           const SyntheticOptions &options) {
	const size_t K = schema.size();
	for (auto &e : edges) {
		auto name = "(" + std::to_string(e.j) + "," + std::to_string(e.k) + ")";
		if (e.j >= K || e.k >= K || e.j == e.k) {
			throw InvalidArgument("edge " + name + " references invalid features");
		}
		if (e.theta.rows() != schema.cardinality(e.j) || e.theta.cols() != schema.cardinality(e.k)) {
			throw InvalidArgument("edge " + name + " matrix is " + std::to_string(e.theta.rows()) + "x" +
			                      std::to_string(e.theta.cols()) + ", expected " +
			                      std::to_string(schema.cardinality(e.j)) + "x" +
			                      std::to_string(schema.cardinality(e.k)));
		}
	}

	// Adjacency with matrices oriented as (this feature, neighbor).
	struct Neighbor {
		size_t other;
		Matrix theta;
	};
	std::vector<std::vector<Neighbor>> adjacency(K);
	for (auto &e : edges) {
		adjacency[e.j].push_back({e.k, e.theta});
		adjacency[e.k].push_back({e.j, e.theta.transposed()});
	}

	// Union-find cycle detection.
	std::vector<size_t> parent(K);
	std::iota(parent.begin(), parent.end(), 0);
	auto find = [&](size_t x) {
		while (parent[x] != x) {
			parent[x] = parent[parent[x]];
			x = parent[x];
		}
		return x;
	};
	bool forest = true;
	for (auto &e : edges) {
		auto a = find(e.j), b = find(e.k);
		if (a == b) {
			forest = false;
			break;
		}
		parent[a] = b;
	}

	std::mt19937_64 rng(seed);
	std::vector<std::vector<Value>> columns(K, std::vector<Value>(rows));

	if (forest) {
		// Root each tree at its smallest feature, compute upward messages, then
		// turn them into per-parent-value conditional CDFs for ancestral sampling.
		std::vector<size_t> order;
		std::vector<long> tree_parent(K, -1);
		std::vector<const Matrix *> parent_theta(K, nullptr); // oriented (child, parent)
		std::vector<bool> visited(K, false);
		for (size_t root = 0; root < K; ++root) {
			if (visited[root]) {
				continue;
			}
			std::queue<size_t> frontier;
			frontier.push(root);
			visited[root] = true;
			while (!frontier.empty()) {
				auto u = frontier.front();
				frontier.pop();
				order.push_back(u);
				for (auto &nb : adjacency[u]) {
					if (!visited[nb.other]) {
						visited[nb.other] = true;
						tree_parent[nb.other] = static_cast<long>(u);
						frontier.push(nb.other);
					}
				}
			}
		}
		std::vector<Matrix> child_theta(K);
		for (size_t v = 0; v < K; ++v) {
			if (tree_parent[v] < 0) {
				continue;
			}
			for (auto &nb : adjacency[v]) {
				if (nb.other == static_cast<size_t>(tree_parent[v])) {
					child_theta[v] = nb.theta;
					break;
				}
			}
			parent_theta[v] = &child_theta[v];
		}

		// belief[v][t]: product of messages from v's children, for value t.
		std::vector<std::vector<double>> belief(K);
		for (size_t v = 0; v < K; ++v) {
			belief[v].assign(schema.cardinality(v), 1.0);
		}
		for (auto it = order.rbegin(); it != order.rend(); ++it) {
			auto v = *it;
			if (tree_parent[v] < 0) {
				continue;
			}
			auto p = static_cast<size_t>(tree_parent[v]);
			auto &theta = *parent_theta[v];
			std::vector<double> message(schema.cardinality(p), 0.0);
			for (size_t q = 0; q < message.size(); ++q) {
				for (size_t t = 0; t < belief[v].size(); ++t) {
					message[q] += std::exp(-theta(t, q)) * belief[v][t];
				}
			}
			double scale = *std::max_element(message.begin(), message.end());
			for (size_t q = 0; q < message.size(); ++q) {
				belief[p][q] *= message[q] / scale;
			}
		}

		// cdf[v]: for roots a single row, else one row per parent value.
		std::vector<std::vector<double>> cdf(K);
		for (size_t v = 0; v < K; ++v) {
			auto m = schema.cardinality(v);
			if (tree_parent[v] < 0) {
				cdf[v].resize(m);
				double acc = 0;
				for (size_t t = 0; t < m; ++t) {
					acc += belief[v][t];
					cdf[v][t] = acc;
				}
			} else {
				auto mp = schema.cardinality(static_cast<size_t>(tree_parent[v]));
				auto &theta = *parent_theta[v];
				cdf[v].resize(static_cast<size_t>(m) * mp);
				for (size_t q = 0; q < mp; ++q) {
					double acc = 0;
					for (size_t t = 0; t < m; ++t) {
						acc += std::exp(-theta(t, q)) * belief[v][t];
						cdf[v][q * m + t] = acc;
					}
				}
			}
		}

		for (size_t i = 0; i < rows; ++i) {
			for (auto v : order) {
				auto m = schema.cardinality(v);
				size_t t;
				if (tree_parent[v] < 0) {
					t = draw_from_cdf(cdf[v].data(), m, uniform01(rng));
				} else {
					auto q = columns[static_cast<size_t>(tree_parent[v])][i] - 1u;
					t = draw_from_cdf(cdf[v].data() + static_cast<size_t>(q) * m, m, uniform01(rng));
				}
				columns[v][i] = static_cast<Value>(t + 1);
			}
		}
	} else {
		std::vector<size_t> state(K);
		std::vector<double> weights;
		for (size_t i = 0; i < rows; ++i) {
			for (size_t v = 0; v < K; ++v) {
				state[v] = static_cast<size_t>(rng() % schema.cardinality(v));
			}
			for (size_t sweep = 0; sweep < options.gibbs_sweeps; ++sweep) {
				for (size_t v = 0; v < K; ++v) {
					auto m = schema.cardinality(v);
					weights.assign(m, 0.0);
					for (size_t t = 0; t < m; ++t) {
						double energy = 0;
						for (auto &nb : adjacency[v]) {
							energy += nb.theta(t, state[nb.other]);
						}
						weights[t] = energy;
					}
					double lowest = *std::min_element(weights.begin(), weights.end());
					double acc = 0;
					for (auto &w : weights) {
						acc += std::exp(-(w - lowest));
						w = acc;
					}
					state[v] = draw_from_cdf(weights.data(), m, uniform01(rng));
				}
			}
			for (size_t v = 0; v < K; ++v) {
				columns[v][i] = static_cast<Value>(state[v] + 1);
			}
		}
	}
	return Dataset(schema, std::move(columns));
}

double mutual_information(const Dataset &dataset, size_t j, size_t k) {
	auto mj = dataset.schema().cardinality(j);
	auto mk = dataset.schema().cardinality(k);
	std::vector<double> joint(static_cast<size_t>(mj) * mk, 0.0);
	auto cj = dataset.column(j);
	auto ck = dataset.column(k);
	double total = 0;
	for (size_t i = 0; i < dataset.rows(); ++i) {
		if (cj[i] == kMissing || ck[i] == kMissing) {
			continue;
		}
		joint[static_cast<size_t>(cj[i] - 1) * mk + (ck[i] - 1)] += 1;
		total += 1;
	}
	if (total == 0) {
		return 0.0;
	}
	std::vector<double> pj(mj, 0.0), pk(mk, 0.0);
	for (size_t t = 0; t < mj; ++t) {
		for (size_t q = 0; q < mk; ++q) {
			pj[t] += joint[t * mk + q];
			pk[q] += joint[t * mk + q];
		}
	}
	double mi = 0;
	for (size_t t = 0; t < mj; ++t) {
		for (size_t q = 0; q < mk; ++q) {
			auto c = joint[t * mk + q];
			if (c > 0) {
				mi += (c / total) * std::log(c * total / (pj[t] * pk[q]));
			}
		}
	}
	return std::max(0.0, mi);
}

} // namespace stratcount
