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
#include "stratcount/mrf.hpp"
#include "stratcount/sample.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stratcount {

size_t tag_count(const Signature &signature);

/// True when every tag of `sub` is also a tag of `super` and sub != super.
bool is_strict_tag_subset(const Signature &sub, const Signature &super);

std::string describe_signature(const Signature &signature, std::span<const size_t> selected, const Schema &schema);

//! Maximal-matching 2-approximation; edges visited in canonical (j, k) order.
std::vector<size_t> approx_min_vertex_cover(size_t nodes, std::span<const std::pair<size_t, size_t>> edges);
std::vector<size_t> approx_min_vertex_cover(const MrfGraph &graph);

struct Stratum {
	Signature signature;
	std::vector<uint32_t> rows;

	uint64_t population() const {
		return rows.size();
	}
};

/// Disjoint strata covering every dataset row, sorted by signature.
struct StrataPartition {
	std::vector<size_t> selected;
	std::vector<Stratum> strata;
	uint64_t total = 0;

	std::optional<size_t> find(const Signature &signature) const;
	//! Throws if strata overlap, miss a row, or populations do not sum to total.
	void validate() const;
};

StrataPartition build_partition(const Dataset &dataset, std::span<const size_t> selected);

/// Stable iff N_h > N / (2n), or the signature carries exactly one tag.
bool is_stable(uint64_t population, size_t tags, uint64_t total, uint64_t n);

struct Stability {
	uint64_t total = 0;
	uint64_t n = 0;
	std::vector<size_t> stable; //!< indices into the partition's strata
	std::vector<size_t> unstable;
};

Stability classify_stability(const StrataPartition &partition, uint64_t n);

struct FallbackAction {
	Signature from;
	Signature to;
	uint64_t rows = 0;
};

/// Merge each unstable stratum into its smallest maximal-tag stable subset
/// (or the empty-signature stratum when none exists).
StrataPartition fallback_merge(const StrataPartition &partition, const Stability &stability,
                               std::vector<FallbackAction> *log = nullptr);

/// Repeatedly spread the most-tagged unstable stratum over its one-fewer-tag
/// children in proportion to their populations.
StrataPartition fallback_redistribute(const StrataPartition &partition, const Stability &stability,
                                      std::vector<FallbackAction> *log = nullptr);

/// Largest-remainder apportionment of `total` units by `weights` (equal
/// shares when every weight is zero). Ties go to the lower index.
std::vector<uint64_t> largest_remainder(uint64_t total, std::span<const uint64_t> weights);

/// Proportional allocation n_h ~ n N_h / N, rounded then corrected so the
/// counts sum to n. Strata with N_h > N / (2n) get at least one row.
std::vector<uint64_t> allocate(const StrataPartition &partition, uint64_t n);

Sample draw_stratified(const Dataset &dataset, const StrataPartition &partition, std::span<const uint64_t> allocation,
                       uint64_t seed, SampleMethod method = SampleMethod::fallback_stratified);
Sample draw_uniform(const Dataset &dataset, uint64_t n, uint64_t seed);
Sample draw_simple_stratified(const Dataset &dataset, uint64_t n, std::span<const size_t> selected, uint64_t seed);

/// Deals each stratum's rows round-robin over k disjoint sub-samples after a
/// seeded shuffle; the deal position carries across strata.
std::vector<Sample> split_subsamples(const Sample &sample, size_t k, uint64_t seed);

enum class FallbackMode { merge, redistribute, none };

FallbackMode parse_fallback_mode(std::string_view text);
std::string_view to_string(FallbackMode mode);

struct SamplePlan {
	StrataPartition raw;
	Stability stability;
	StrataPartition partition;
	std::vector<FallbackAction> actions;
	std::vector<uint64_t> allocation;
	Sample sample;
};

/// partition -> classify -> fall-back -> allocate -> draw.
SamplePlan plan_sample(const Dataset &dataset, std::span<const size_t> selected, uint64_t n, uint64_t seed,
                       FallbackMode mode);

} // namespace stratcount
