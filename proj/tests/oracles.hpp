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


// Independent reference computations shared by the unit and acceptance tests.

#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace stratcount::oracle {

inline bool covers(uint32_t mask, const std::vector<std::pair<size_t, size_t>> &edges) {
	for (auto [a, b] : edges) {
		if (!(mask >> a & 1u) && !(mask >> b & 1u)) {
			return false;
		}
	}
	return true;
}

/// Size of a minimum vertex cover by enumerating every vertex subset.
inline size_t exact_min_vertex_cover(size_t nodes, const std::vector<std::pair<size_t, size_t>> &edges) {
	size_t best = nodes;
	for (uint32_t mask = 0; mask < (1u << nodes); ++mask) {
		auto size = static_cast<size_t>(std::popcount(mask));
		if (size < best && covers(mask, edges)) {
			best = size;
		}
	}
	return best;
}

inline boost::multiprecision::cpp_int binomial(uint64_t n, uint64_t k) {
	boost::multiprecision::cpp_int r = 1;
	if (k > n) {
		return 0;
	}
	for (uint64_t i = 1; i <= k; ++i) {
		r *= n - k + i;
		r /= i;
	}
	return r;
}

/// prod_h C(N_h, n_h) / C(N, n) with n_h = round(n N_h / N), in exact
/// rational arithmetic, converted to double at the end.
inline double proportional_composition_probability(const std::vector<uint64_t> &sizes, uint64_t n) {
	uint64_t N = 0;
	for (auto s : sizes) {
		N += s;
	}
	boost::multiprecision::cpp_int num = 1;
	for (auto s : sizes) {
		auto nh = static_cast<uint64_t>(std::llround(static_cast<double>(n) * static_cast<double>(s) / N));
		num *= binomial(s, nh);
	}
	boost::multiprecision::cpp_rational p(num, binomial(N, n));
	return static_cast<double>(p);
}

/// Same quantity by enumerating every n-subset of N <= 20 labeled items.
inline double enumerated_composition_probability(const std::vector<uint64_t> &sizes, uint64_t n) {
	std::vector<size_t> label;
	std::vector<uint64_t> want;
	uint64_t N = 0;
	for (auto s : sizes) {
		N += s;
	}
	for (size_t h = 0; h < sizes.size(); ++h) {
		label.insert(label.end(), sizes[h], h);
		want.push_back(static_cast<uint64_t>(std::llround(static_cast<double>(n) * static_cast<double>(sizes[h]) / N)));
	}
	uint64_t hits = 0, total = 0;
	for (uint32_t mask = 0; mask < (1u << N); ++mask) {
		if (static_cast<uint64_t>(std::popcount(mask)) != n) {
			continue;
		}
		++total;
		std::vector<uint64_t> got(sizes.size(), 0);
		for (size_t i = 0; i < N; ++i) {
			if (mask >> i & 1u) {
				++got[label[i]];
			}
		}
		hits += got == want;
	}
	return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace stratcount::oracle
