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

#include "stratcount/strata.hpp"

#include "stratcount/error.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string_view>
#include <tuple>
#include <unordered_map>

namespace stratcount {

namespace {

struct SignatureHash {
	size_t operator()(const Signature &signature) const {
		return std::hash<std::string_view> {}(
		    {reinterpret_cast<const char *>(signature.data()), signature.size() * sizeof(Value)});
	}
};

// Mutable working copy of a partition with signature lookup.
class WorkingPartition {
public:
	explicit WorkingPartition(const StrataPartition &p) : selected_(p.selected), total_(p.total), strata_(p.strata) {
		for (size_t i = 0; i < strata_.size(); ++i) {
			index_.emplace(strata_[i].signature, i);
		}
	}

	std::optional<size_t> find(const Signature &signature) const {
		auto it = index_.find(signature);
		if (it == index_.end()) {
			return std::nullopt;
		}
		return it->second;
	}

	size_t find_or_create(const Signature &signature) {
		if (auto idx = find(signature)) {
			return *idx;
		}
		strata_.push_back(Stratum {signature, {}});
		index_.emplace(signature, strata_.size() - 1);
		return strata_.size() - 1;
	}

	Stratum &at(size_t i) {
		return strata_[i];
	}
	size_t size() const {
		return strata_.size();
	}

	StrataPartition finish() && {
		StrataPartition out;
		out.selected = std::move(selected_);
		out.total = total_;
		for (auto &s : strata_) {
			if (!s.rows.empty()) {
				out.strata.push_back(std::move(s));
			}
		}
		std::sort(out.strata.begin(), out.strata.end(),
		          [](const Stratum &a, const Stratum &b) { return a.signature < b.signature; });
		return out;
	}

private:
	std::vector<size_t> selected_;
	uint64_t total_;
	std::vector<Stratum> strata_;
	std::unordered_map<Signature, size_t, SignatureHash> index_;
};

std::vector<size_t> tag_positions(const Signature &signature) {
	std::vector<size_t> out;
	for (size_t i = 0; i < signature.size(); ++i) {
		if (signature[i] != kMissing) {
			out.push_back(i);
		}
	}
	return out;
}

void move_rows(Stratum &from, Stratum &to, std::vector<FallbackAction> *log) {
	if (log) {
		log->push_back({from.signature, to.signature, from.population()});
	}
	to.rows.insert(to.rows.end(), from.rows.begin(), from.rows.end());
	from.rows.clear();
}

Sample empty_sample_for(const Dataset &dataset, uint64_t seed, SampleMethod method) {
	Sample s;
	s.schema = dataset.schema();
	s.population = dataset.rows();
	s.seed = seed;
	s.method = method;
	return s;
}

} // namespace

size_t tag_count(const Signature &signature) {
	return static_cast<size_t>(std::count_if(signature.begin(), signature.end(), [](Value v) { return v != kMissing; }));
}

bool is_strict_tag_subset(const Signature &sub, const Signature &super) {
	if (sub.size() != super.size()) {
		return false;
	}
	bool strictly_smaller = false;
	for (size_t i = 0; i < sub.size(); ++i) {
		if (sub[i] == kMissing) {
			strictly_smaller |= super[i] != kMissing;
		} else if (sub[i] != super[i]) {
			return false;
		}
	}
	return strictly_smaller;
}

std::string describe_signature(const Signature &signature, std::span<const size_t> selected, const Schema &schema) {
	std::string out = "{";
	bool first = true;
	for (size_t i = 0; i < signature.size(); ++i) {
		if (signature[i] == kMissing) {
			continue;
		}
		if (!first) {
			out += ",";
		}
		first = false;
		out += schema.feature(selected[i]).name + "=" + std::to_string(signature[i]);
	}
	return out + "}";
}

std::vector<size_t> approx_min_vertex_cover(size_t nodes, std::span<const std::pair<size_t, size_t>> edges) {
	std::vector<std::pair<size_t, size_t>> canonical;
	canonical.reserve(edges.size());
	for (auto [a, b] : edges) {
		if (a >= nodes || b >= nodes) {
			throw InvalidArgument("edge references a node outside the graph");
		}
		if (a != b) {
			canonical.emplace_back(std::min(a, b), std::max(a, b));
		}
	}
	std::sort(canonical.begin(), canonical.end());
	std::vector<bool> covered(nodes, false);
	for (auto [a, b] : canonical) {
		if (!covered[a] && !covered[b]) {
			covered[a] = covered[b] = true;
		}
	}
	std::vector<size_t> cover;
	for (size_t v = 0; v < nodes; ++v) {
		if (covered[v]) {
			cover.push_back(v);
		}
	}
	return cover;
}

std::vector<size_t> approx_min_vertex_cover(const MrfGraph &graph) {
	auto edges = graph.edge_list();
	return approx_min_vertex_cover(graph.num_features(), edges);
}

std::optional<size_t> StrataPartition::find(const Signature &signature) const {
	auto it = std::lower_bound(strata.begin(), strata.end(), signature,
	                           [](const Stratum &s, const Signature &sig) { return s.signature < sig; });
	if (it == strata.end() || it->signature != signature) {
		return std::nullopt;
	}
	return static_cast<size_t>(it - strata.begin());
}

void StrataPartition::validate() const {
	std::vector<bool> seen(total, false);
	uint64_t sum = 0;
	for (auto &s : strata) {
		if (s.signature.size() != selected.size()) {
			throw Error("stratum signature width does not match the selected features");
		}
		for (auto r : s.rows) {
			if (r >= total) {
				throw Error("stratum references row " + std::to_string(r) + " outside the dataset");
			}
			if (seen[r]) {
				throw Error("row " + std::to_string(r) + " assigned to two strata");
			}
			seen[r] = true;
		}
		sum += s.population();
	}
	if (sum != total) {
		throw Error("stratum populations sum to " + std::to_string(sum) + ", expected " + std::to_string(total));
	}
}

StrataPartition build_partition(const Dataset &dataset, std::span<const size_t> selected) {
	if (selected.empty()) {
		throw InvalidArgument("build_partition needs at least one selected feature");
	}
	std::vector<bool> used(dataset.features(), false);
	for (auto f : selected) {
		if (f >= dataset.features()) {
			throw InvalidArgument("selected feature " + std::to_string(f) + " out of range");
		}
		if (used[f]) {
			throw InvalidArgument("selected feature " + std::to_string(f) + " listed twice");
		}
		used[f] = true;
	}

	StrataPartition out;
	out.selected.assign(selected.begin(), selected.end());
	out.total = dataset.rows();

	std::vector<std::span<const Value>> columns;
	for (auto f : selected) {
		columns.push_back(dataset.column(f));
	}
	std::unordered_map<Signature, size_t, SignatureHash> index;
	Signature signature(selected.size());
	for (size_t i = 0; i < dataset.rows(); ++i) {
		for (size_t s = 0; s < columns.size(); ++s) {
			signature[s] = columns[s][i];
		}
		auto [it, inserted] = index.try_emplace(signature, out.strata.size());
		if (inserted) {
			out.strata.push_back(Stratum {signature, {}});
		}
		out.strata[it->second].rows.push_back(static_cast<uint32_t>(i));
	}
	std::sort(out.strata.begin(), out.strata.end(),
	          [](const Stratum &a, const Stratum &b) { return a.signature < b.signature; });
	return out;
}

bool is_stable(uint64_t population, size_t tags, uint64_t total, uint64_t n) {
	// N_h > N / (2n) without division
	auto lhs = static_cast<unsigned __int128>(population) * 2 * n;
	return lhs > total || tags == 1;
}

Stability classify_stability(const StrataPartition &partition, uint64_t n) {
	if (n == 0) {
		throw InvalidArgument("sample size must be at least 1");
	}
	Stability out;
	out.total = partition.total;
	out.n = n;
	for (size_t i = 0; i < partition.strata.size(); ++i) {
		auto &s = partition.strata[i];
		if (is_stable(s.population(), tag_count(s.signature), partition.total, n)) {
			out.stable.push_back(i);
		} else {
			out.unstable.push_back(i);
		}
	}
	return out;
}

StrataPartition fallback_merge(const StrataPartition &partition, const Stability &stability,
                               std::vector<FallbackAction> *log) {
	WorkingPartition work(partition);
	std::vector<bool> stable(partition.strata.size(), false);
	for (auto i : stability.stable) {
		stable.at(i) = true;
	}

	std::vector<size_t> order = stability.unstable;
	std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
		auto ta = tag_count(partition.strata[a].signature);
		auto tb = tag_count(partition.strata[b].signature);
		if (ta != tb) {
			return ta > tb;
		}
		return partition.strata[a].signature < partition.strata[b].signature;
	});

	// Preference: more tags, then smaller population, then smaller signature.
	auto better = [&](size_t cand, size_t best) {
		auto &c = partition.strata[cand];
		auto &b = partition.strata[best];
		auto tc = tag_count(c.signature), tb = tag_count(b.signature);
		if (tc != tb) {
			return tc > tb;
		}
		if (c.population() != b.population()) {
			return c.population() < b.population();
		}
		return c.signature < b.signature;
	};

	for (auto p : order) {
		const auto &signature = partition.strata[p].signature;
		auto positions = tag_positions(signature);
		if (positions.empty()) {
			continue; // the empty-signature stratum has nowhere to go
		}
		std::optional<size_t> best;
		if (positions.size() <= 16) {
			// Walk strict subsets from the largest size down; stop at the first
			// size holding a stable stratum.
			const size_t t = positions.size();
			for (size_t size = t; size-- > 0 && !best;) {
				std::vector<bool> pick(t, false);
				std::fill(pick.begin(), pick.begin() + static_cast<long>(size), true);
				do {
					Signature sub(signature.size(), kMissing);
					for (size_t i = 0; i < t; ++i) {
						if (pick[i]) {
							sub[positions[i]] = signature[positions[i]];
						}
					}
					if (auto q = partition.find(sub); q && stable[*q]) {
						if (!best || better(*q, *best)) {
							best = *q;
						}
					}
				} while (std::prev_permutation(pick.begin(), pick.end()));
			}
		} else {
			for (auto q : stability.stable) {
				if (is_strict_tag_subset(partition.strata[q].signature, signature) && (!best || better(q, *best))) {
					best = q;
				}
			}
		}

		auto from = *work.find(signature);
		size_t to = best ? *work.find(partition.strata[*best].signature)
		                 : work.find_or_create(Signature(signature.size(), kMissing));
		move_rows(work.at(from), work.at(to), log);
	}
	return std::move(work).finish();
}

StrataPartition fallback_redistribute(const StrataPartition &partition, const Stability &stability,
                                      std::vector<FallbackAction> *log) {
	WorkingPartition work(partition);
	size_t max_tags = 0;
	for (auto &s : partition.strata) {
		max_tags = std::max(max_tags, tag_count(s.signature));
	}

	// Redistribution only feeds strata with one fewer tag and populations only
	// grow elsewhere, so handling levels from the top down visits unstable
	// strata in exactly the max-tag-count, then lexicographic, order.
	std::vector<std::vector<size_t>> by_level(max_tags + 1);
	for (size_t i = 0; i < work.size(); ++i) {
		by_level[tag_count(work.at(i).signature)].push_back(i);
	}
	for (size_t level = max_tags; level >= 2; --level) {
		std::vector<size_t> pending;
		for (auto i : by_level[level]) {
			auto &s = work.at(i);
			if (!s.rows.empty() && !is_stable(s.population(), level, stability.total, stability.n)) {
				pending.push_back(i);
			}
		}
		std::sort(pending.begin(), pending.end(),
		          [&](size_t a, size_t b) { return work.at(a).signature < work.at(b).signature; });

		for (auto p : pending) {
			// Blanking an earlier tag gives a smaller signature, so children in
			// tag-position order are already sorted.
			auto signature = work.at(p).signature;
			auto positions = tag_positions(signature);
			std::vector<uint64_t> populations;
			populations.reserve(positions.size());
			auto probe = signature;
			for (auto pos : positions) {
				probe[pos] = kMissing;
				auto idx = work.find(probe);
				populations.push_back(idx ? work.at(*idx).population() : 0);
				probe[pos] = signature[pos];
			}
			auto rows = std::move(work.at(p).rows);
			work.at(p).rows.clear();
			std::sort(rows.begin(), rows.end());
			auto shares = largest_remainder(rows.size(), populations);
			size_t offset = 0;
			for (size_t c = 0; c < positions.size(); ++c) {
				if (shares[c] == 0) {
					continue;
				}
				probe[positions[c]] = kMissing;
				auto before = work.size();
				auto idx = work.find_or_create(probe);
				if (work.size() != before) {
					by_level[level - 1].push_back(idx);
				}
				auto &child = work.at(idx);
				child.rows.insert(child.rows.end(), rows.begin() + static_cast<long>(offset),
				                  rows.begin() + static_cast<long>(offset + shares[c]));
				offset += shares[c];
				if (log) {
					log->push_back({signature, probe, shares[c]});
				}
				probe[positions[c]] = signature[positions[c]];
			}
		}
	}
	return std::move(work).finish();
}

std::vector<uint64_t> largest_remainder(uint64_t total, std::span<const uint64_t> weights) {
	std::vector<uint64_t> out(weights.size(), 0);
	if (weights.empty()) {
		if (total != 0) {
			throw InvalidArgument("cannot apportion units over zero recipients");
		}
		return out;
	}
	unsigned __int128 sum = 0;
	for (auto w : weights) {
		sum += w;
	}
	std::vector<uint64_t> effective(weights.begin(), weights.end());
	if (sum == 0) {
		std::fill(effective.begin(), effective.end(), 1);
		sum = effective.size();
	}
	std::vector<unsigned __int128> remainder(weights.size());
	uint64_t assigned = 0;
	for (size_t i = 0; i < effective.size(); ++i) {
		auto scaled = static_cast<unsigned __int128>(total) * effective[i];
		out[i] = static_cast<uint64_t>(scaled / sum);
		remainder[i] = scaled % sum;
		assigned += out[i];
	}
	std::vector<size_t> order(weights.size());
	std::iota(order.begin(), order.end(), 0);
	std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return remainder[a] > remainder[b]; });
	for (size_t i = 0; assigned < total; ++i) {
		++out[order[i % order.size()]];
		++assigned;
	}
	return out;
}

std::vector<uint64_t> allocate(const StrataPartition &partition, uint64_t n) {
	const uint64_t N = partition.total;
	if (n > N) {
		throw InvalidArgument("sample size " + std::to_string(n) + " exceeds population " + std::to_string(N));
	}
	const size_t M = partition.strata.size();
	std::vector<uint64_t> out(M, 0);
	if (n == 0 || M == 0) {
		return out;
	}
	using i128 = __int128;
	// quota_h = n N_h / N = num_h / N
	std::vector<i128> num(M);
	i128 sum = 0;
	for (size_t h = 0; h < M; ++h) {
		num[h] = static_cast<i128>(n) * partition.strata[h].population();
		out[h] = static_cast<uint64_t>((2 * num[h] + N) / (2 * static_cast<i128>(N))); // round half up
		sum += out[h];
	}
	auto must_keep = [&](size_t h) {
		return static_cast<i128>(partition.strata[h].population()) * 2 * n > static_cast<i128>(N);
	};

	std::vector<size_t> order(M);
	std::iota(order.begin(), order.end(), 0);
	if (sum > static_cast<i128>(n)) {
		// Take back from the strata rounded up the most.
		std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
			return static_cast<i128>(out[a]) * N - num[a] > static_cast<i128>(out[b]) * N - num[b];
		});
		// Strata above N/(2n) keep their row unless more of them exist than n.
		for (int pass = 0; pass < 2 && sum > static_cast<i128>(n); ++pass) {
			bool progress = true;
			while (progress && sum > static_cast<i128>(n)) {
				progress = false;
				for (auto h : order) {
					if (sum == static_cast<i128>(n)) {
						break;
					}
					if (out[h] == 0 || (pass == 0 && out[h] == 1 && must_keep(h))) {
						continue;
					}
					--out[h];
					--sum;
					progress = true;
				}
			}
		}
	} else if (sum < static_cast<i128>(n)) {
		std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
			return num[a] - static_cast<i128>(out[a]) * N > num[b] - static_cast<i128>(out[b]) * N;
		});
		while (sum < static_cast<i128>(n)) {
			for (auto h : order) {
				if (sum == static_cast<i128>(n)) {
					break;
				}
				if (out[h] < partition.strata[h].population()) {
					++out[h];
					++sum;
				}
			}
		}
	}
	return out;
}

Sample draw_stratified(const Dataset &dataset, const StrataPartition &partition, std::span<const uint64_t> allocation,
                       uint64_t seed, SampleMethod method) {
	if (allocation.size() != partition.strata.size()) {
		throw InvalidArgument("allocation size does not match the number of strata");
	}
	if (partition.total != dataset.rows()) {
		throw InvalidArgument("partition was built over a different dataset");
	}
	auto sample = empty_sample_for(dataset, seed, method);
	sample.selected = partition.selected;
	for (size_t h = 0; h < partition.strata.size(); ++h) {
		auto &st = partition.strata[h];
		if (allocation[h] > st.population()) {
			throw InvalidArgument("allocation " + std::to_string(allocation[h]) + " exceeds stratum population " +
			                      std::to_string(st.population()));
		}
		double weight = allocation[h] ? static_cast<double>(st.population()) / static_cast<double>(allocation[h]) : 0;
		sample.strata.push_back({st.signature, st.population(), allocation[h], weight});
	}

	std::mt19937_64 rng(seed);
	FeatureVector row;
	for (size_t h = 0; h < partition.strata.size(); ++h) {
		auto take = allocation[h];
		if (take == 0) {
			continue;
		}
		auto ids = partition.strata[h].rows;
		for (uint64_t i = 0; i < take; ++i) {
			std::uniform_int_distribution<size_t> pick(i, ids.size() - 1);
			std::swap(ids[i], ids[pick(rng)]);
		}
		std::sort(ids.begin(), ids.begin() + static_cast<long>(take));
		for (uint64_t i = 0; i < take; ++i) {
			row = dataset.row(ids[i]);
			sample.add_row(static_cast<uint32_t>(h), row);
		}
	}
	sample.assign_id();
	return sample;
}

Sample draw_uniform(const Dataset &dataset, uint64_t n, uint64_t seed) {
	const uint64_t N = dataset.rows();
	if (n > N) {
		throw InvalidArgument("sample size " + std::to_string(n) + " exceeds population " + std::to_string(N));
	}
	if (n == 0) {
		throw InvalidArgument("uniform sample size must be at least 1");
	}
	auto sample = empty_sample_for(dataset, seed, SampleMethod::uniform);
	sample.strata.push_back({Signature {}, N, n, static_cast<double>(N) / static_cast<double>(n)});

	std::mt19937_64 rng(seed);
	std::vector<uint32_t> ids(N);
	std::iota(ids.begin(), ids.end(), 0u);
	for (uint64_t i = 0; i < n; ++i) {
		std::uniform_int_distribution<size_t> pick(i, N - 1);
		std::swap(ids[i], ids[pick(rng)]);
	}
	std::sort(ids.begin(), ids.begin() + static_cast<long>(n));
	for (uint64_t i = 0; i < n; ++i) {
		sample.add_row(0, dataset.row(ids[i]));
	}
	sample.assign_id();
	return sample;
}

Sample draw_simple_stratified(const Dataset &dataset, uint64_t n, std::span<const size_t> selected, uint64_t seed) {
	auto partition = build_partition(dataset, selected);
	auto allocation = allocate(partition, n);
	return draw_stratified(dataset, partition, allocation, seed, SampleMethod::simple_stratified);
}

std::vector<Sample> split_subsamples(const Sample &sample, size_t k, uint64_t seed) {
	if (k == 0) {
		throw InvalidArgument("node count must be at least 1");
	}
	std::vector<Sample> out(k);
	for (size_t node = 0; node < k; ++node) {
		auto &sub = out[node];
		sub.origin = SubsampleOrigin {sample.id, static_cast<uint32_t>(node), static_cast<uint32_t>(k)};
		sub.schema = sample.schema;
		sub.population = sample.population;
		sub.seed = sample.seed;
		sub.method = sample.method;
		sub.selected = sample.selected;
		sub.strata = sample.strata;
	}

	std::vector<std::vector<size_t>> rows_of(sample.strata.size());
	for (size_t i = 0; i < sample.rows(); ++i) {
		rows_of[sample.row_strata[i]].push_back(i);
	}
	std::mt19937_64 rng(seed);
	size_t deal = 0;
	for (size_t h = 0; h < rows_of.size(); ++h) {
		auto &ids = rows_of[h];
		std::shuffle(ids.begin(), ids.end(), rng);
		for (auto i : ids) {
			out[deal % k].add_row(static_cast<uint32_t>(h), sample.row(i));
			++deal;
		}
	}
	for (auto &sub : out) {
		sub.assign_id();
	}
	return out;
}

FallbackMode parse_fallback_mode(std::string_view text) {
	if (text == "merge") {
		return FallbackMode::merge;
	}
	if (text == "redistribute") {
		return FallbackMode::redistribute;
	}
	if (text == "none") {
		return FallbackMode::none;
	}
	throw InvalidArgument("unknown fall-back mode '" + std::string(text) + "' (merge|redistribute|none)");
}

std::string_view to_string(FallbackMode mode) {
	switch (mode) {
	case FallbackMode::merge:
		return "merge";
	case FallbackMode::redistribute:
		return "redistribute";
	case FallbackMode::none:
		return "none";
	}
	return "unknown";
}

SamplePlan plan_sample(const Dataset &dataset, std::span<const size_t> selected, uint64_t n, uint64_t seed,
                       FallbackMode mode) {
	SamplePlan plan;
	plan.raw = build_partition(dataset, selected);
	plan.stability = classify_stability(plan.raw, n);
	switch (mode) {
	case FallbackMode::merge:
		plan.partition = fallback_merge(plan.raw, plan.stability, &plan.actions);
		break;
	case FallbackMode::redistribute:
		plan.partition = fallback_redistribute(plan.raw, plan.stability, &plan.actions);
		break;
	case FallbackMode::none:
		plan.partition = plan.raw;
		break;
	}
	plan.allocation = allocate(plan.partition, n);
	plan.sample = draw_stratified(dataset, plan.partition, plan.allocation, seed,
	                              mode == FallbackMode::none ? SampleMethod::simple_stratified
	                                                         : SampleMethod::fallback_stratified);
	return plan;
}

} // namespace stratcount
