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

#include "stratcount/query.hpp"

#include "stratcount/binary_io.hpp"
#include "stratcount/error.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace stratcount {

namespace mp = boost::multiprecision;

// ---------------------------------------------------------------------------
// Query
// ---------------------------------------------------------------------------

Query &Query::where(size_t feature, std::vector<Value> values) {
	std::sort(values.begin(), values.end());
	values.erase(std::unique(values.begin(), values.end()), values.end());
	auto it = constraints.find(feature);
	if (it == constraints.end()) {
		constraints.emplace(feature, std::move(values));
	} else {
		std::vector<Value> both;
		std::set_intersection(it->second.begin(), it->second.end(), values.begin(), values.end(),
		                      std::back_inserter(both));
		it->second = std::move(both);
	}
	return *this;
}

void Query::validate(const Schema &schema) const {
	for (auto &[f, values] : constraints) {
		if (f >= schema.size()) {
			throw InvalidArgument("query references feature " + std::to_string(f) + " but the schema has " +
			                      std::to_string(schema.size()));
		}
		if (values.empty()) {
			throw InvalidArgument("empty value set for feature '" + schema.feature(f).name + "'");
		}
		for (auto v : values) {
			if (v == kMissing || v > schema.cardinality(f)) {
				throw InvalidArgument("value " + std::to_string(v) + " out of range for feature '" +
				                      schema.feature(f).name + "'");
			}
		}
	}
}

bool Query::matches(std::span<const Value> row) const {
	for (auto &[f, values] : constraints) {
		if (!std::binary_search(values.begin(), values.end(), row[f])) {
			return false;
		}
	}
	return true;
}

std::string Query::to_text(const Schema &schema) const {
	std::string out;
	for (auto &[f, values] : constraints) {
		if (!out.empty()) {
			out += ", ";
		}
		out += schema.feature(f).name + " in {";
		for (size_t i = 0; i < values.size(); ++i) {
			out += (i ? "," : "") + std::to_string(values[i]);
		}
		out += "}";
	}
	return out;
}

namespace {

class TextCursor {
public:
	explicit TextCursor(std::string_view text) : text_(text) {
	}

	void skip_space() {
		while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
			++pos_;
		}
	}
	bool done() {
		skip_space();
		return pos_ >= text_.size();
	}
	bool accept(char c) {
		skip_space();
		if (pos_ < text_.size() && text_[pos_] == c) {
			++pos_;
			return true;
		}
		return false;
	}
	void expect(char c) {
		if (!accept(c)) {
			fail(std::string("expected '") + c + "'");
		}
	}
	//! Reads up to whitespace or one of the stop characters.
	std::string_view word(std::string_view stops) {
		skip_space();
		auto start = pos_;
		while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
		       stops.find(text_[pos_]) == std::string_view::npos) {
			++pos_;
		}
		if (start == pos_) {
			fail("expected a name or value");
		}
		return text_.substr(start, pos_ - start);
	}
	[[noreturn]] void fail(const std::string &what) const {
		throw ParseError("query text: " + what + " at offset " + std::to_string(pos_));
	}

private:
	std::string_view text_;
	size_t pos_ = 0;
};

Value parse_value(std::string_view token, size_t feature, const Schema &schema) {
	unsigned v = 0;
	auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
	if (ec == std::errc() && ptr == token.data() + token.size()) {
		if (v == 0 || v > schema.cardinality(feature)) {
			throw InvalidArgument("value " + std::string(token) + " out of range for feature '" +
			                      schema.feature(feature).name + "'");
		}
		return static_cast<Value>(v);
	}
	if (auto label = schema.value_of_label(feature, token)) {
		return *label;
	}
	throw ParseError("unknown value '" + std::string(token) + "' for feature '" + schema.feature(feature).name + "'");
}

size_t resolve_feature(const nlohmann::json &f, const Schema *schema) {
	if (f.is_number_unsigned() || (f.is_number_integer() && f.get<int64_t>() >= 0)) {
		auto idx = f.get<uint64_t>();
		if (schema && idx >= schema->size()) {
			throw InvalidArgument("feature index " + std::to_string(idx) + " out of range");
		}
		return idx;
	}
	if (f.is_string() && schema) {
		auto idx = schema->index_of(f.get<std::string>());
		if (!idx) {
			throw InvalidArgument("unknown feature '" + f.get<std::string>() + "'");
		}
		return *idx;
	}
	throw ParseError("query feature must be an index" + std::string(schema ? " or a name" : ""));
}

} // namespace

Query Query::parse(std::string_view text, const Schema &schema) {
	Query q;
	TextCursor cur(text);
	if (cur.done()) {
		return q;
	}
	do {
		auto name = cur.word("{},");
		auto f = schema.index_of(name);
		if (!f) {
			throw ParseError("unknown feature '" + std::string(name) + "' in query text");
		}
		if (cur.word("{},") != "in") {
			cur.fail("expected 'in'");
		}
		cur.expect('{');
		std::vector<Value> values;
		if (!cur.accept('}')) {
			do {
				values.push_back(parse_value(cur.word("{},"), *f, schema));
			} while (cur.accept(','));
			cur.expect('}');
		}
		if (values.empty()) {
			throw ParseError("empty value set for feature '" + std::string(name) + "'");
		}
		q.where(*f, std::move(values));
	} while (cur.accept(','));
	if (!cur.done()) {
		cur.fail("trailing text");
	}
	q.validate(schema);
	return q;
}

nlohmann::json Query::to_json() const {
	auto list = nlohmann::json::array();
	for (auto &[f, values] : constraints) {
		list.push_back({{"feature", f}, {"values", values}});
	}
	return {{"constraints", list}};
}

Query Query::from_json(const nlohmann::json &j, const Schema *schema) {
	if (!j.is_object() || !j.contains("constraints") || !j["constraints"].is_array()) {
		throw ParseError("query JSON needs a \"constraints\" array");
	}
	Query q;
	for (auto &c : j["constraints"]) {
		if (!c.is_object() || !c.contains("feature") || !c.contains("values") || !c["values"].is_array()) {
			throw ParseError("query constraint needs \"feature\" and \"values\"");
		}
		auto f = resolve_feature(c["feature"], schema);
		std::vector<Value> values;
		for (auto &v : c["values"]) {
			if (v.is_number_unsigned() || (v.is_number_integer() && v.get<int64_t>() >= 0)) {
				auto x = v.get<uint64_t>();
				if (x > kMaxCardinality) {
					throw InvalidArgument("query value " + std::to_string(x) + " out of range");
				}
				values.push_back(static_cast<Value>(x));
			} else if (v.is_string() && schema) {
				values.push_back(parse_value(v.get<std::string>(), f, *schema));
			} else {
				throw ParseError("query values must be integers");
			}
		}
		if (values.empty()) {
			throw InvalidArgument("empty value set in query constraint");
		}
		q.where(f, std::move(values));
	}
	if (schema) {
		q.validate(*schema);
	}
	return q;
}

CompiledQuery::CompiledQuery(const Query &query, const Schema &schema) {
	query.validate(schema);
	for (auto &[f, values] : query.constraints) {
		Clause c {f, std::vector<uint8_t>(schema.cardinality(f) + 1, 0)};
		for (auto v : values) {
			c.allowed[v] = 1;
		}
		clauses_.push_back(std::move(c));
	}
}

// ---------------------------------------------------------------------------
// Counting and estimation
// ---------------------------------------------------------------------------

uint64_t exact_count(const Dataset &dataset, const Query &query) {
	query.validate(dataset.schema());
	std::vector<std::pair<std::span<const Value>, std::vector<uint8_t>>> clauses;
	for (auto &[f, values] : query.constraints) {
		std::vector<uint8_t> allowed(dataset.schema().cardinality(f) + 1, 0);
		for (auto v : values) {
			allowed[v] = 1;
		}
		clauses.emplace_back(dataset.column(f), std::move(allowed));
	}
	uint64_t count = 0;
	for (size_t i = 0; i < dataset.rows(); ++i) {
		bool ok = true;
		for (auto &[column, allowed] : clauses) {
			if (!allowed[column[i]]) {
				ok = false;
				break;
			}
		}
		count += ok;
	}
	return count;
}

CountEstimate estimate_count(const Sample &sample, const Query &query) {
	if (sample.rows() == 0) {
		throw InvalidArgument("cannot estimate from an empty sample");
	}
	CompiledQuery compiled(query, sample.schema);
	std::vector<uint64_t> in_stratum(sample.strata.size(), 0);
	std::vector<uint64_t> matched(sample.strata.size(), 0);
	CountEstimate out;
	for (size_t i = 0; i < sample.rows(); ++i) {
		auto h = sample.row_strata[i];
		++in_stratum[h];
		if (compiled.matches(sample.row(i))) {
			++matched[h];
			++out.rows_matched;
			out.value += quantize_weight(sample.strata[h].weight);
		}
	}
	double variance = 0.0;
	for (size_t h = 0; h < sample.strata.size(); ++h) {
		auto nh = static_cast<double>(in_stratum[h]);
		if (in_stratum[h] < 2) {
			continue;
		}
		double w = quantize_weight(sample.strata[h].weight);
		double p = static_cast<double>(matched[h]) / nh;
		double s2 = p * (1.0 - p) * nh / (nh - 1.0);
		double big = w * nh;
		variance += big * big * std::max(0.0, 1.0 - 1.0 / w) * s2 / nh;
	}
	out.margin = kZ95 * std::sqrt(variance);
	out.fraction_scanned = 1.0;
	return out;
}

CountEstimate extrapolate(const ScanTotals &t, double total_weight) {
	CountEstimate out;
	out.rows_matched = t.rows_matched;
	if (t.rows_total == 0) {
		out.fraction_scanned = 1.0;
		return out;
	}
	const double s = static_cast<double>(t.rows_scanned);
	const double R = static_cast<double>(t.rows_total);
	out.fraction_scanned = s / R;
	if (t.rows_scanned == t.rows_total) {
		out.value = t.matched_weight;
		return out;
	}
	if (t.rows_scanned == 0) {
		out.margin = total_weight;
		return out;
	}
	out.value = t.matched_weight * R / s;
	if (t.rows_scanned < 2) {
		out.margin = std::max(total_weight, out.value);
		return out;
	}
	double var_y = std::max(0.0, (t.matched_weight_sq - t.matched_weight * t.matched_weight / s) / (s - 1.0));
	double variance = R * R * (1.0 - s / R) * var_y / s;
	out.margin = kZ95 * std::sqrt(variance);
	return out;
}

ErrorReport error_metric(std::span<const uint64_t> exact, const Sample &sample, std::span<const Query> workload) {
	if (exact.size() != workload.size()) {
		throw InvalidArgument("exact counts do not match the workload size");
	}
	ErrorReport out;
	for (size_t i = 0; i < workload.size(); ++i) {
		if (exact[i] == 0) {
			out.excluded.push_back(i);
			continue;
		}
		auto est = estimate_count(sample, workload[i]).value;
		double err = std::abs(1.0 - est / static_cast<double>(exact[i]));
		out.errors.push_back(err);
		out.evaluated.push_back(i);
		out.max = std::max(out.max, err);
		out.mean += err;
	}
	if (!out.errors.empty()) {
		out.mean /= static_cast<double>(out.errors.size());
	}
	return out;
}

ErrorReport error_metric(const Dataset &dataset, const Sample &sample, std::span<const Query> workload) {
	std::vector<uint64_t> exact;
	exact.reserve(workload.size());
	for (auto &q : workload) {
		exact.push_back(exact_count(dataset, q));
	}
	return error_metric(exact, sample, workload);
}

// ---------------------------------------------------------------------------
// Uniform-sampling probability calculators
// ---------------------------------------------------------------------------

namespace {

mp::cpp_int binomial(uint64_t n, uint64_t k) {
	if (k > n) {
		return 0;
	}
	k = std::min(k, n - k);
	mp::cpp_int r = 1;
	for (uint64_t i = 1; i <= k; ++i) {
		r *= n - k + i;
		r /= i;
	}
	return r;
}

double ratio_to_double(mp::cpp_int num, mp::cpp_int den) {
	if (num == 0) {
		return 0.0;
	}
	auto shift = 64 - (static_cast<long>(mp::msb(num)) - static_cast<long>(mp::msb(den)));
	if (shift > 0) {
		num <<= shift;
	} else {
		den <<= -shift;
	}
	mp::cpp_int q = num / den;
	return std::ldexp(q.convert_to<double>(), static_cast<int>(-shift));
}

uint64_t checked_total(std::span<const uint64_t> sizes) {
	if (sizes.empty()) {
		throw InvalidArgument("need at least one stratum");
	}
	uint64_t total = 0;
	for (auto s : sizes) {
		if (s == 0) {
			throw InvalidArgument("stratum sizes must be positive");
		}
		total += s;
	}
	return total;
}

} // namespace

double uniform_exact_probability(std::span<const uint64_t> sizes, uint64_t n) {
	const uint64_t N = checked_total(sizes);
	if (n == 0 || n > N) {
		throw InvalidArgument("sample size must be in 1..N");
	}
	mp::cpp_int num = 1;
	uint64_t drawn = 0;
	for (size_t i = 0; i < sizes.size(); ++i) {
		auto num128 = static_cast<unsigned __int128>(n) * sizes[i];
		auto k = static_cast<uint64_t>((2 * num128 + N) / (2 * static_cast<unsigned __int128>(N)));
		if (k > sizes[i]) {
			throw InvalidArgument("proportional count " + std::to_string(k) + " exceeds stratum " +
			                      std::to_string(i) + " size " + std::to_string(sizes[i]));
		}
		drawn += k;
		num *= binomial(sizes[i], k);
	}
	if (drawn != n) {
		throw InvalidArgument("rounded proportional counts sum to " + std::to_string(drawn) + ", not n = " +
		                      std::to_string(n));
	}
	return ratio_to_double(std::move(num), binomial(N, n));
}

double log_uniform_probability_bound(std::span<const uint64_t> sizes, uint64_t n) {
	const uint64_t N = checked_total(sizes);
	const uint64_t M = sizes.size();
	if (n < M) {
		throw InvalidArgument("bound needs n >= M (n = " + std::to_string(n) + ", M = " + std::to_string(M) + ")");
	}
	const double dn = static_cast<double>(n);
	return std::lgamma(static_cast<double>(N) + 1.0) + dn * (1.0 - std::log(dn)) -
	       static_cast<double>(M) * 0.5 * std::log(2.0 * std::numbers::pi) - std::log(static_cast<double>(n - M + 1));
}

double uniform_probability_bound(std::span<const uint64_t> sizes, uint64_t n) {
	return std::exp(log_uniform_probability_bound(sizes, n));
}

// ---------------------------------------------------------------------------
// Bitmap index and workload generation
// ---------------------------------------------------------------------------

BitmapIndex::BitmapIndex(const Dataset &dataset) : rows_(dataset.rows()), words_((dataset.rows() + 63) / 64) {
	bits_.resize(dataset.features());
	for (size_t f = 0; f < dataset.features(); ++f) {
		bits_[f].assign(dataset.schema().cardinality(f) + 1, std::vector<uint64_t>(words_, 0));
		auto column = dataset.column(f);
		for (size_t i = 0; i < rows_; ++i) {
			bits_[f][column[i]][i >> 6] |= uint64_t {1} << (i & 63);
		}
	}
}

std::vector<uint64_t> BitmapIndex::all_rows() const {
	std::vector<uint64_t> out(words_, ~uint64_t {0});
	if (rows_ % 64) {
		out.back() = (uint64_t {1} << (rows_ % 64)) - 1;
	}
	return out;
}

void BitmapIndex::restrict(std::vector<uint64_t> &base, size_t feature, std::span<const Value> values) const {
	for (size_t w = 0; w < words_; ++w) {
		uint64_t any = 0;
		for (auto v : values) {
			any |= bits_[feature][v][w];
		}
		base[w] &= any;
	}
}

uint64_t BitmapIndex::popcount(std::span<const uint64_t> bits) {
	uint64_t c = 0;
	for (auto w : bits) {
		c += static_cast<uint64_t>(std::popcount(w));
	}
	return c;
}

uint64_t BitmapIndex::count(const Query &query) const {
	auto cur = all_rows();
	for (auto &[f, values] : query.constraints) {
		restrict(cur, f, values);
	}
	return popcount(cur);
}

Workload generate_workload(const Dataset &dataset, std::span<const double> selectivities, size_t per_size,
                           uint64_t seed, const WorkloadOptions &options) {
	Workload out;
	out.shortfall.assign(selectivities.size(), 0);
	if (dataset.rows() == 0) {
		throw InvalidArgument("cannot generate a workload over an empty dataset");
	}
	const BitmapIndex index(dataset);
	const auto &schema = dataset.schema();
	const double N = static_cast<double>(dataset.rows());
	std::mt19937_64 rng(seed);
	std::uniform_int_distribution<size_t> pick_row(0, dataset.rows() - 1);

	for (size_t bin = 0; bin < selectivities.size(); ++bin) {
		if (!(selectivities[bin] > 0.0) || selectivities[bin] > 1.0) {
			throw InvalidArgument("selectivity must be in (0, 1]");
		}
		const double target = selectivities[bin] * N;
		const auto lo = static_cast<uint64_t>(std::ceil(target * (1.0 - options.tolerance)));
		const auto hi = static_cast<uint64_t>(std::floor(target * (1.0 + options.tolerance)));
		auto in_band = [&](uint64_t c) { return c >= lo && c <= hi && c > 0; };

		std::set<std::string> seen;
		size_t found = 0;
		for (size_t attempt = 0; attempt < per_size * options.attempts_per_query && found < per_size; ++attempt) {
			Query q;
			auto cur = index.all_rows();
			uint64_t count = dataset.rows();
			bool ok = in_band(count);
			auto anchor = dataset.row(pick_row(rng));
			std::vector<size_t> order(schema.size());
			std::iota(order.begin(), order.end(), size_t {0});
			std::shuffle(order.begin(), order.end(), rng);
			for (size_t oi = 0; oi < order.size() && !ok; ++oi) {
				auto f = order[oi];
				if (anchor[f] == kMissing) {
					continue;
				}
				// Tighten with the anchor's value, widening by extra values while
				// the result undershoots the band.
				std::vector<Value> others;
				for (Value v = 1; v <= schema.cardinality(f); ++v) {
					if (v != anchor[f]) {
						others.push_back(v);
					}
				}
				std::shuffle(others.begin(), others.end(), rng);
				std::vector<Value> values {anchor[f]};
				auto next = cur;
				index.restrict(next, f, values);
				auto c = BitmapIndex::popcount(next);
				size_t widen = 0;
				while (c < lo && widen < others.size()) {
					values.push_back(others[widen++]);
					next = cur;
					index.restrict(next, f, values);
					c = BitmapIndex::popcount(next);
				}
				if (values.size() == schema.cardinality(f) || c == count) {
					continue; // no-op constraint
				}
				if (c < lo) {
					continue;
				}
				q.where(f, values);
				cur = std::move(next);
				count = c;
				ok = in_band(count);
			}
			if (!ok) {
				continue;
			}
			if (!seen.insert(q.to_text(schema)).second) {
				continue;
			}
			out.queries.push_back({std::move(q), bin, count});
			++found;
		}
		out.shortfall[bin] = per_size - found;
	}
	return out;
}

void save_workload(const std::string &path, const Schema &schema, std::span<const Query> queries,
                   std::span<const uint64_t> counts) {
	if (!counts.empty() && counts.size() != queries.size()) {
		throw InvalidArgument("workload counts do not match the query list");
	}
	std::string text;
	for (size_t i = 0; i < queries.size(); ++i) {
		text += queries[i].to_text(schema);
		if (!counts.empty()) {
			text += "\t" + std::to_string(counts[i]);
		}
		text += "\n";
	}
	write_file(path, text);
}

std::vector<std::pair<Query, std::optional<uint64_t>>> load_workload(const std::string &path, const Schema &schema) {
	std::vector<std::pair<Query, std::optional<uint64_t>>> out;
	std::istringstream in(read_file(path));
	std::string line;
	size_t line_no = 0;
	while (std::getline(in, line)) {
		++line_no;
		if (!line.empty() && line.back() == '\r') {
			line.pop_back();
		}
		if (line.empty() || line[0] == '#') {
			continue;
		}
		std::optional<uint64_t> count;
		auto tab = line.find('\t');
		if (tab != std::string::npos) {
			uint64_t c = 0;
			auto field = std::string_view(line).substr(tab + 1);
			auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), c);
			if (ec != std::errc() || ptr != field.data() + field.size()) {
				throw ParseError("workload line " + std::to_string(line_no) + ": bad count");
			}
			count = c;
			line.resize(tab);
		}
		try {
			out.emplace_back(Query::parse(line, schema), count);
		} catch (const Error &e) {
			throw ParseError("workload line " + std::to_string(line_no) + ": " + e.what());
		}
	}
	return out;
}

} // namespace stratcount
