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

#include "stratcount/gateway.hpp"

#include "stratcount/error.hpp"

#include <httplib.h>

namespace stratcount {

using json = nlohmann::json;

namespace {

HttpResponse error_response(int status, const std::string &message) {
	return {status, json {{"error", message}}.dump()};
}

json envelope_json(const ResultEnvelope &env) {
	return {{"reportId", env.report_id},
	        {"estimate", env.estimate.value},
	        {"margin", env.estimate.margin},
	        {"fractionScanned", env.estimate.fraction_scanned},
	        {"rowsMatched", env.estimate.rows_matched},
	        {"status", to_string(env.status)}};
}

} // namespace

Gateway::Gateway(Aggregator &aggregator, Executor executor)
    : aggregator_(aggregator), executor_(std::move(executor)) {
}

HttpResponse Gateway::create_report(const std::string &body) {
	json request;
	try {
		request = json::parse(body);
	} catch (const json::exception &e) {
		return error_response(400, std::string("malformed JSON: ") + e.what());
	}
	if (!request.is_object() || !request.contains("query")) {
		return error_response(400, "body must be an object with a 'query' field");
	}
	const auto &schema = aggregator_.schema();
	Query query;
	double threshold = 0.0;
	uint32_t sub_cluster = 0;
	try {
		const auto &q = request["query"];
		if (q.is_string()) {
			if (!schema) {
				return error_response(400, "text queries need a schema; send the JSON form");
			}
			query = Query::parse(q.get<std::string>(), *schema);
		} else {
			query = Query::from_json(q, schema ? &*schema : nullptr);
		}
		if (request.contains("threshold") && !request["threshold"].is_null()) {
			threshold = request["threshold"].get<double>();
		}
		if (request.contains("subClusterSize") && !request["subClusterSize"].is_null()) {
			auto c = request["subClusterSize"].get<int64_t>();
			if (c < 0) {
				return error_response(400, "subClusterSize must be non-negative");
			}
			sub_cluster = static_cast<uint32_t>(c);
		}
	} catch (const json::exception &e) {
		return error_response(400, e.what());
	} catch (const ParseError &e) {
		return error_response(400, e.what());
	} catch (const InvalidArgument &e) {
		return error_response(400, e.what());
	}
	HttpResponse out;
	executor_([&](Micros now) {
		try {
			auto id = aggregator_.initiate_report(query, threshold, sub_cluster, now);
			out = {200, json {{"reportId", id}}.dump()};
		} catch (const InvalidArgument &e) {
			out = error_response(400, e.what());
		} catch (const Unavailable &e) {
			out = error_response(503, e.what());
		}
	});
	return out;
}

HttpResponse Gateway::get_report(const std::string &id) {
	HttpResponse out;
	executor_([&](Micros now) {
		try {
			out = {200, envelope_json(aggregator_.fetch(id, now)).dump()};
		} catch (const NotFound &e) {
			out = error_response(404, e.what());
		}
	});
	return out;
}

HttpResponse Gateway::handle(const std::string &method, const std::string &path, const std::string &body) {
	static const std::string reports_prefix = "/reports/";
	if (method == "POST" && path == "/reports") {
		return create_report(body);
	}
	if (method == "GET" && path.rfind(reports_prefix, 0) == 0 && path.size() > reports_prefix.size()) {
		return get_report(path.substr(reports_prefix.size()));
	}
	if (method == "GET" && path == "/cluster") {
		HttpResponse out;
		executor_([&](Micros) { out = {200, aggregator_.cluster_summary().dump()}; });
		return out;
	}
	if (method == "GET" && path == "/schema") {
		const auto &schema = aggregator_.schema();
		if (!schema) {
			return error_response(404, "no schema configured");
		}
		return {200, schema->to_json().dump()};
	}
	return error_response(404, "no route for " + method + " " + path);
}

void Gateway::install(httplib::Server &server) {
	auto bridge = [this](const httplib::Request &req, httplib::Response &res) {
		auto out = handle(req.method, req.path, req.body);
		res.status = out.status;
		res.set_content(out.body, "application/json");
	};
	server.Post("/reports", bridge);
	server.Get(R"(/reports/([^/]+))", bridge);
	server.Get("/cluster", bridge);
	server.Get("/schema", bridge);
}

} // namespace stratcount
