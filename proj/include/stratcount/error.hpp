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

#include <stdexcept>
#include <string>

namespace stratcount {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Caller passed arguments that violate an operation's precondition.
class InvalidArgument : public Error {
public:
	using Error::Error;
};

/// Malformed input file or text (CSV row, query text, sample file).
class ParseError : public Error {
public:
	using Error::Error;
};

/// Malformed or unknown wire frame.
class ProtocolError : public Error {
public:
	using Error::Error;
};

class NotFound : public Error {
public:
	using Error::Error;
};

/// No counter (or other resource) is available to serve a request.
class Unavailable : public Error {
public:
	using Error::Error;
};

} // namespace stratcount
