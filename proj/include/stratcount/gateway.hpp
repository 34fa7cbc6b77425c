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

#include "stratcount/aggregator.hpp"

#include <functional>
#include <string>

namespace httplib {
class Server;
}

namespace stratcount {

struct HttpResponse {
	int status = 200;
	std::string body; //!< JSON
};

/// HTTP front of an aggregator.
///
///   POST /reports      {query, threshold?, subClusterSize?} -> {reportId}
///   GET  /reports/{id} -> {reportId, estimate, margin, fractionScanned, rowsMatched, status}
///   GET  /cluster      -> registry summary
///   GET  /schema       -> schema of the served samples
///
/// `query` is either the wire JSON form or the text form ("f in {1,2}, g in {3}").
/// Errors come back as {"error": message} with 400, 404 or 503.
class Gateway {
public:
	//! Runs a task on the aggregator's thread and returns once it finished.
	using Executor = std::function<void(std::function<void(Micros)>)>;

	Gateway(Aggregator &aggregator, Executor executor);

	HttpResponse handle(const std::string &method, const std::string &path, const std::string &body);
	//! Registers the routes on `server`.
	void install(httplib::Server &server);

private:
	HttpResponse create_report(const std::string &body);
	HttpResponse get_report(const std::string &id);

	Aggregator &aggregator_;
	Executor executor_;
};

} // namespace stratcount
