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
#include "stratcount/sample.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stratcount {

/// Conjunction of per-feature value sets. An absent feature is unconstrained;
/// the empty query counts every row.
struct Query {
	//! feature index -> sorted, de-duplicated allowed values
	std::map<size_t, std::vector<Value>> constraints;

	//! Adds (or intersects with) a constraint on `feature`.
	Query &where(size_t feature, std::vector<Value> values);

	//! Throws InvalidArgument when a feature or value is out of range or a set is empty.
	void validate(const Schema &schema) const;
	bool matches(std::span<const Value> row) const;

	//! `name in {1,2}, other in {3}`; empty string for the empty query.
	std::string to_text(const Schema &schema) const;
	static Query parse(std::string_view text, const Schema &schema);

	//! {"constraints":[{"feature":3,"values":[1,2]}]}
	nlohmann::json to_json() const;
	//! Accepts feature names when a schema is given, indices always.
	static Query from_json(const nlohmann::json &j, const Schema *schema = nullptr);

	bool operator==(const Query &) const = default;
};

/// Query flattened to per-feature lookup masks for scanning.
class CompiledQuery {
public:
	CompiledQuery() = default;
	CompiledQuery(const Query &query, const Schema &schema);

	bool matches(std::span<const Value> row) const {
		for (auto &c : clauses_) {
			if (!c.allowed[row[c.feature]]) {
				return false;
			}
		}
		return true;
	}

private:
	struct Clause {
		size_t feature;
		std::vector<uint8_t> allowed; //!< indexed by value; slot 0 (missing) is false
	};
	std::vector<Clause> clauses_;
};

struct CountEstimate {
	double value = 0.0;
	double margin = 0.0; //!< 95% half-width
	double fraction_scanned = 0.0;
	uint64_t rows_matched = 0;

	bool operator==(const CountEstimate &) const = default;
};

inline constexpr double kZ95 = 1.96;

uint64_t exact_count(const Dataset &dataset, const Query &query);

/// Weighted full-sample estimate. The margin is the stratified-sampling
/// half-width using each stratum's in-sample count and weight; it is 0 when
/// every weight is 1.
CountEstimate estimate_count(const Sample &sample, const Query &query);

/// Cumulative scan totals over a prefix of a (shuffled) row sequence.
struct ScanTotals {
	double matched_weight = 0.0;    //!< sum of y_i = w_i 1{match}
	double matched_weight_sq = 0.0; //!< sum of y_i^2
	uint64_t rows_matched = 0;
	uint64_t rows_scanned = 0;
	uint64_t rows_total = 0;

	void add(double weight) {
		matched_weight += weight;
		matched_weight_sq += weight * weight;
		++rows_matched;
	}
};

/// Prefix extrapolation (R/s) sum y with variance R^2 (1 - s/R) Var(y) / s.
/// With fewer than two scanned rows the margin falls back to `total_weight`.
CountEstimate extrapolate(const ScanTotals &totals, double total_weight);

struct ErrorReport {
	std::vector<double> errors;          //!< |1 - estimate / N_i| for evaluated queries
	std::vector<size_t> evaluated;       //!< workload indices with N_i > 0
	std::vector<size_t> excluded;        //!< workload indices with N_i = 0
	double max = 0.0;
	double mean = 0.0;
};

ErrorReport error_metric(const Dataset &dataset, const Sample &sample, std::span<const Query> workload);
//! Same, with the exact counts supplied by the caller.
ErrorReport error_metric(std::span<const uint64_t> exact, const Sample &sample, std::span<const Query> workload);

/// Probability that a uniform draw of n rows hits the proportional
/// composition round(n N_i / N) in every stratum, from exact binomials.
double uniform_exact_probability(std::span<const uint64_t> strata_sizes, uint64_t n);
//! Natural log of the upper bound N! (e/n)^n / (sqrt(2 pi)^M (n - M + 1)).
double log_uniform_probability_bound(std::span<const uint64_t> strata_sizes, uint64_t n);
//! exp of the above; may be +inf for large N.
double uniform_probability_bound(std::span<const uint64_t> strata_sizes, uint64_t n);

/// Per-(feature, value) row bitmaps for fast conjunctive counting.
class BitmapIndex {
public:
	explicit BitmapIndex(const Dataset &dataset);

	size_t rows() const {
		return rows_;
	}
	size_t words() const {
		return words_;
	}
	const std::vector<uint64_t> &bits(size_t feature, Value value) const {
		return bits_[feature][value];
	}
	uint64_t count(const Query &query) const;
	//! Rows in `base` restricted to the union of `values` of `feature`.
	void restrict(std::vector<uint64_t> &base, size_t feature, std::span<const Value> values) const;
	static uint64_t popcount(std::span<const uint64_t> bits);
	std::vector<uint64_t> all_rows() const;

private:
	size_t rows_ = 0;
	size_t words_ = 0;
	std::vector<std::vector<std::vector<uint64_t>>> bits_;
};

struct WorkloadOptions {
	double tolerance = 0.25;    //!< accepted relative deviation from the target size
	size_t attempts_per_query = 200;
};

struct WorkloadQuery {
	Query query;
	size_t bin = 0; //!< index into the requested sizes
	uint64_t count = 0;
};

struct Workload {
	std::vector<WorkloadQuery> queries;
	//! queries that could not be found within the attempt budget, per bin
	std::vector<size_t> shortfall;
};

/// Seeded queries whose exact counts fall within the tolerance band of each
/// target selectivity (fraction of N), built by anchor-row tightening and
/// value-set widening.
Workload generate_workload(const Dataset &dataset, std::span<const double> selectivities, size_t per_size,
                           uint64_t seed, const WorkloadOptions &options = {});

// Workload file: one query per line as `<text>` or `<text>\t<exact count>`.
void save_workload(const std::string &path, const Schema &schema, std::span<const Query> queries,
                   std::span<const uint64_t> counts = {});
std::vector<std::pair<Query, std::optional<uint64_t>>> load_workload(const std::string &path, const Schema &schema);

} // namespace stratcount
