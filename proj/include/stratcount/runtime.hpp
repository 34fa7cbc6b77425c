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

#include "stratcount/node.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace stratcount {

struct Endpoint {
	std::string host;
	uint16_t port = 0;
	std::string to_string() const {
		return host + ":" + std::to_string(port);
	}
};

//! "host:port"; throws InvalidArgument.
Endpoint parse_endpoint(const std::string &text);

struct RuntimeOptions {
	std::string bind_host = "127.0.0.1";
	uint16_t port = 0; //!< 0 = ephemeral
	Micros tick_interval = 10 * kMillis;
	//! Called on the loop thread between messages while it returns true
	//! (counter scans).
	std::function<bool(Micros)> work;
};

/// Framed TCP runtime for one node. Node ids are "host:port" addresses; a
/// send to an id without an open connection dials it. Every connection opens
/// with a Hello frame naming the dialer. All Node calls happen on one loop
/// thread.
class TcpRuntime {
public:
	explicit TcpRuntime(RuntimeOptions options);
	~TcpRuntime();
	TcpRuntime(const TcpRuntime &) = delete;
	TcpRuntime &operator=(const TcpRuntime &) = delete;

	uint16_t port() const;
	//! Address-form id of this runtime.
	NodeId address() const;
	Transport &transport();

	//! Spawns the loop thread; calls node.start first.
	void start(Node &node);
	void stop();
	bool running() const {
		return running_;
	}

	//! Runs `fn` on the loop thread.
	void post(std::function<void(Micros)> fn);
	//! Runs `fn` on the loop thread and waits; rethrows its exception.
	template <class F>
	auto call(F fn) -> decltype(fn(Micros {})) {
		using R = decltype(fn(Micros {}));
		auto task = std::make_shared<std::packaged_task<R(Micros)>>(std::move(fn));
		auto future = task->get_future();
		post([task](Micros now) { (*task)(now); });
		return future.get();
	}

	Micros now() const;

private:
	struct Impl;
	std::unique_ptr<Impl> impl_;
	std::atomic<bool> running_ {false};
};

} // namespace stratcount
