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

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace stratcount {

// Small dense row-major matrix for edge potentials.
class Matrix {
public:
	Matrix() = default;
	Matrix(size_t rows, size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {
	}
	Matrix(std::initializer_list<std::initializer_list<double>> init) {
		rows_ = init.size();
		cols_ = rows_ ? init.begin()->size() : 0;
		for (auto &row : init) {
			data_.insert(data_.end(), row.begin(), row.end());
		}
	}

	size_t rows() const {
		return rows_;
	}
	size_t cols() const {
		return cols_;
	}
	double &operator()(size_t r, size_t c) {
		return data_[r * cols_ + c];
	}
	double operator()(size_t r, size_t c) const {
		return data_[r * cols_ + c];
	}
	const std::vector<double> &data() const {
		return data_;
	}

	Matrix transposed() const {
		Matrix out(cols_, rows_);
		for (size_t r = 0; r < rows_; ++r) {
			for (size_t c = 0; c < cols_; ++c) {
				out(c, r) = (*this)(r, c);
			}
		}
		return out;
	}

	bool operator==(const Matrix &) const = default;

private:
	size_t rows_ = 0;
	size_t cols_ = 0;
	std::vector<double> data_;
};

} // namespace stratcount
