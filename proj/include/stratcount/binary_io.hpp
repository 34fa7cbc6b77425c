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

#include "stratcount/error.hpp"

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stratcount {

// Little-endian byte writer used by the dataset and sample file formats.
class BinaryWriter {
public:
	void write_bytes(std::string_view bytes) {
		buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
	}

	template <typename T>
	void write_uint(T value) {
		for (size_t i = 0; i < sizeof(T); ++i) {
			buffer_.push_back(static_cast<char>((static_cast<uint64_t>(value) >> (8 * i)) & 0xFF));
		}
	}

	void write_uint_width(uint64_t value, size_t width) {
		for (size_t i = 0; i < width; ++i) {
			buffer_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
		}
	}

	void write_double(double value) {
		uint64_t bits;
		std::memcpy(&bits, &value, sizeof(bits));
		write_uint<uint64_t>(bits);
	}

	void write_string(std::string_view s) {
		write_uint<uint32_t>(static_cast<uint32_t>(s.size()));
		write_bytes(s);
	}

	const std::string &buffer() const {
		return buffer_;
	}
	std::string release() {
		return std::move(buffer_);
	}

private:
	std::string buffer_;
};

class BinaryReader {
public:
	explicit BinaryReader(std::string_view data) : data_(data) {
	}

	std::string_view read_bytes(size_t count) {
		require(count);
		auto out = data_.substr(pos_, count);
		pos_ += count;
		return out;
	}

	template <typename T>
	T read_uint() {
		return static_cast<T>(read_uint_width(sizeof(T)));
	}

	uint64_t read_uint_width(size_t width) {
		require(width);
		uint64_t value = 0;
		for (size_t i = 0; i < width; ++i) {
			value |= static_cast<uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
		}
		pos_ += width;
		return value;
	}

	double read_double() {
		auto bits = read_uint<uint64_t>();
		double value;
		std::memcpy(&value, &bits, sizeof(value));
		return value;
	}

	std::string read_string() {
		auto size = read_uint<uint32_t>();
		return std::string(read_bytes(size));
	}

	bool at_end() const {
		return pos_ == data_.size();
	}
	size_t position() const {
		return pos_;
	}

private:
	void require(size_t count) const {
		if (data_.size() - pos_ < count) {
			throw ParseError("unexpected end of binary data at offset " + std::to_string(pos_));
		}
	}

	std::string_view data_;
	size_t pos_ = 0;
};

/// Smallest byte width able to hold values 0..max_value.
inline size_t byte_width_for(uint64_t max_value) {
	if (max_value <= 0xFF) {
		return 1;
	}
	if (max_value <= 0xFFFF) {
		return 2;
	}
	if (max_value <= 0xFFFFFFFFull) {
		return 4;
	}
	return 8;
}

/// 64-bit FNV-1a, used for sample ids and manifest checksums.
inline uint64_t fnv1a64(std::string_view bytes) {
	uint64_t hash = 0xcbf29ce484222325ull;
	for (unsigned char c : bytes) {
		hash ^= c;
		hash *= 0x100000001b3ull;
	}
	return hash;
}

std::string read_file(const std::string &path);
void write_file(const std::string &path, std::string_view bytes);

} // namespace stratcount
