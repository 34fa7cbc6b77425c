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

#include "stratcount/sample.hpp"

#include "stratcount/binary_io.hpp"
#include "stratcount/error.hpp"

#include <cstdio>

namespace stratcount {

namespace {

constexpr std::string_view kSampleMagic = "SMP1";

void encode_body(BinaryWriter &w, const Sample &s) {
	w.write_uint<uint8_t>(s.origin ? 1 : 0);
	if (s.origin) {
		w.write_string(s.origin->parent_id);
		w.write_uint<uint32_t>(s.origin->node_index);
		w.write_uint<uint32_t>(s.origin->node_count);
	}
	w.write_uint<uint64_t>(s.population);
	w.write_uint<uint64_t>(s.rows());
	w.write_uint<uint64_t>(s.seed);
	w.write_string(to_string(s.method));
	write_schema_block(w, s.schema);
	w.write_uint<uint32_t>(static_cast<uint32_t>(s.selected.size()));
	for (auto f : s.selected) {
		w.write_uint<uint32_t>(static_cast<uint32_t>(f));
	}
	w.write_uint<uint32_t>(static_cast<uint32_t>(s.strata.size()));
	for (auto &st : s.strata) {
		for (auto v : st.signature) {
			w.write_uint<uint16_t>(v);
		}
		w.write_uint<uint64_t>(st.population);
		w.write_uint<uint64_t>(st.drawn);
		w.write_double(st.weight);
	}
	std::vector<size_t> widths;
	for (size_t j = 0; j < s.schema.size(); ++j) {
		widths.push_back(byte_width_for(s.schema.cardinality(j)));
	}
	for (size_t i = 0; i < s.rows(); ++i) {
		w.write_uint<uint32_t>(s.row_strata[i]);
		auto row = s.row(i);
		for (size_t j = 0; j < row.size(); ++j) {
			w.write_uint_width(row[j], widths[j]);
		}
	}
}

std::string hex64(uint64_t x) {
	char buf[17];
	std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
	return buf;
}

} // namespace

std::string_view to_string(SampleMethod method) {
	switch (method) {
	case SampleMethod::uniform:
		return "uniform";
	case SampleMethod::simple_stratified:
		return "simple-stratified";
	case SampleMethod::fallback_stratified:
		return "fallback-stratified";
	}
	return "unknown";
}

SampleMethod parse_sample_method(std::string_view text) {
	if (text == "uniform") {
		return SampleMethod::uniform;
	}
	if (text == "simple-stratified") {
		return SampleMethod::simple_stratified;
	}
	if (text == "fallback-stratified") {
		return SampleMethod::fallback_stratified;
	}
	throw ParseError("unknown sample method '" + std::string(text) + "'");
}

void Sample::add_row(uint32_t stratum, std::span<const Value> values) {
	if (values.size() != schema.size()) {
		throw InvalidArgument("sample row width does not match the schema");
	}
	row_strata.push_back(stratum);
	cells.insert(cells.end(), values.begin(), values.end());
}

void Sample::assign_id() {
	BinaryWriter w;
	encode_body(w, *this);
	id = hex64(fnv1a64(w.buffer()));
}

SampleInfo Sample::info() const {
	SampleInfo out;
	out.sample_id = id;
	out.stratum_counts.assign(strata.size(), 0);
	for (auto h : row_strata) {
		++out.stratum_counts[h];
	}
	for (size_t h = 0; h < strata.size(); ++h) {
		out.total_weight += static_cast<double>(out.stratum_counts[h]) * quantize_weight(strata[h].weight);
	}
	out.rows = rows();
	return out;
}

std::string encode_sample(const Sample &sample) {
	BinaryWriter w;
	w.write_bytes(kSampleMagic);
	w.write_string(sample.id);
	encode_body(w, sample);
	return w.release();
}

Sample decode_sample(std::string_view bytes) {
	BinaryReader r(bytes);
	if (r.read_bytes(4) != kSampleMagic) {
		throw ParseError("not a sample file (bad magic)");
	}
	Sample s;
	s.id = r.read_string();
	if (r.read_uint<uint8_t>() == 1) {
		SubsampleOrigin origin;
		origin.parent_id = r.read_string();
		origin.node_index = r.read_uint<uint32_t>();
		origin.node_count = r.read_uint<uint32_t>();
		s.origin = std::move(origin);
	}
	s.population = r.read_uint<uint64_t>();
	auto rows = r.read_uint<uint64_t>();
	s.seed = r.read_uint<uint64_t>();
	s.method = parse_sample_method(r.read_string());
	s.schema = read_schema_block(r);
	auto selected = r.read_uint<uint32_t>();
	for (uint32_t i = 0; i < selected; ++i) {
		auto f = r.read_uint<uint32_t>();
		if (f >= s.schema.size()) {
			throw ParseError("selected feature out of range in sample file");
		}
		s.selected.push_back(f);
	}
	auto strata = r.read_uint<uint32_t>();
	for (uint32_t h = 0; h < strata; ++h) {
		SampleStratum st;
		for (uint32_t i = 0; i < selected; ++i) {
			st.signature.push_back(r.read_uint<uint16_t>());
		}
		st.population = r.read_uint<uint64_t>();
		st.drawn = r.read_uint<uint64_t>();
		st.weight = r.read_double();
		s.strata.push_back(std::move(st));
	}
	std::vector<size_t> widths;
	for (size_t j = 0; j < s.schema.size(); ++j) {
		widths.push_back(byte_width_for(s.schema.cardinality(j)));
	}
	s.row_strata.reserve(rows);
	s.cells.reserve(rows * s.schema.size());
	for (uint64_t i = 0; i < rows; ++i) {
		auto h = r.read_uint<uint32_t>();
		if (h >= s.strata.size()) {
			throw ParseError("row " + std::to_string(i) + " references unknown stratum " + std::to_string(h));
		}
		s.row_strata.push_back(h);
		for (size_t j = 0; j < widths.size(); ++j) {
			auto v = r.read_uint_width(widths[j]);
			if (v > s.schema.cardinality(j)) {
				throw ParseError("row " + std::to_string(i) + " value out of range");
			}
			s.cells.push_back(static_cast<Value>(v));
		}
	}
	if (!r.at_end()) {
		throw ParseError("trailing bytes after sample rows");
	}
	return s;
}

void save_sample(const Sample &sample, const std::string &path) {
	write_file(path, encode_sample(sample));
}

Sample load_sample(const std::string &path) {
	return decode_sample(read_file(path));
}

} // namespace stratcount
