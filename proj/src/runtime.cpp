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

#include "stratcount/runtime.hpp"

#include "stratcount/error.hpp"

#include <boost/asio.hpp>

#include <sys/socket.h>

#include <chrono>
#include <iostream>

namespace stratcount {

namespace asio = boost::asio;
using asio::ip::tcp;

Endpoint parse_endpoint(const std::string &text) {
	auto colon = text.rfind(':');
	if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
		throw InvalidArgument("expected host:port, got '" + text + "'");
	}
	Endpoint e;
	e.host = text.substr(0, colon);
	try {
		size_t used = 0;
		auto port = std::stoul(text.substr(colon + 1), &used);
		if (used != text.size() - colon - 1 || port == 0 || port > 65535) {
			throw std::out_of_range("port");
		}
		e.port = static_cast<uint16_t>(port);
	} catch (const std::logic_error &) {
		throw InvalidArgument("bad port in '" + text + "'");
	}
	return e;
}

namespace {

struct Connection {
	explicit Connection(tcp::socket s) : socket(std::move(s)) {
	}
	tcp::socket socket;
	std::mutex write_mutex;
	NodeId peer;
	std::atomic<bool> closed {false};

	void shutdown() {
		if (!closed.exchange(true)) {
			::shutdown(socket.native_handle(), SHUT_RDWR);
		}
	}
};

} // namespace

struct TcpRuntime::Impl : Transport {
	explicit Impl(TcpRuntime &owner, RuntimeOptions o)
	    : owner(owner), options(std::move(o)), acceptor(io), epoch(std::chrono::steady_clock::now()) {
	}

	TcpRuntime &owner;
	RuntimeOptions options;
	asio::io_context io;
	tcp::acceptor acceptor;
	std::chrono::steady_clock::time_point epoch;
	Node *node = nullptr;

	std::mutex conn_mutex;
	std::map<NodeId, std::shared_ptr<Connection>> by_peer;
	std::vector<std::shared_ptr<Connection>> all;
	std::vector<std::thread> readers;
	std::thread accept_thread;
	std::thread loop_thread;

	std::mutex inbox_mutex;
	std::condition_variable inbox_cv;
	std::deque<std::pair<NodeId, Message>> inbox;
	std::deque<std::function<void(Micros)>> tasks;

	Micros now() const {
		return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - epoch)
		    .count();
	}

	NodeId self() const {
		return options.bind_host + ":" + std::to_string(acceptor.local_endpoint().port());
	}

	void enqueue(NodeId from, Message m) {
		{
			std::lock_guard lock(inbox_mutex);
			inbox.emplace_back(std::move(from), std::move(m));
		}
		inbox_cv.notify_one();
	}

	void register_peer(const std::shared_ptr<Connection> &c) {
		std::lock_guard lock(conn_mutex);
		by_peer[c->peer] = c;
	}

	void drop_peer(const std::shared_ptr<Connection> &c) {
		c->shutdown();
		std::lock_guard lock(conn_mutex);
		auto it = by_peer.find(c->peer);
		if (it != by_peer.end() && it->second == c) {
			by_peer.erase(it);
		}
	}

	void read_loop(std::shared_ptr<Connection> c) {
		FrameReader reader;
		std::array<char, 64 * 1024> buf;
		boost::system::error_code ec;
		while (true) {
			auto got = c->socket.read_some(asio::buffer(buf), ec);
			if (ec) {
				break;
			}
			reader.feed(std::string_view(buf.data(), got));
			try {
				while (auto m = reader.next()) {
					if (auto *hello = std::get_if<Hello>(&*m)) {
						c->peer = hello->node_id;
						register_peer(c);
					} else if (c->peer.empty()) {
						throw ProtocolError("first frame must be Hello");
					} else {
						enqueue(c->peer, std::move(*m));
					}
				}
			} catch (const Error &e) {
				std::cerr << "dropping connection from '" << c->peer << "': " << e.what() << "\n";
				break;
			}
		}
		drop_peer(c);
	}

	void spawn_reader(const std::shared_ptr<Connection> &c) {
		std::lock_guard lock(conn_mutex);
		all.push_back(c);
		readers.emplace_back([this, c] { read_loop(c); });
	}

	bool write(const std::shared_ptr<Connection> &c, const std::string &frame) {
		std::lock_guard lock(c->write_mutex);
		boost::system::error_code ec;
		asio::write(c->socket, asio::buffer(frame), ec);
		return !ec;
	}

	std::shared_ptr<Connection> dial(const NodeId &to) {
		Endpoint e;
		try {
			e = parse_endpoint(to);
		} catch (const InvalidArgument &) {
			return nullptr;
		}
		boost::system::error_code ec;
		tcp::resolver resolver(io);
		auto results = resolver.resolve(e.host, std::to_string(e.port), ec);
		if (ec) {
			return nullptr;
		}
		tcp::socket socket(io);
		asio::connect(socket, results, ec);
		if (ec) {
			return nullptr;
		}
		socket.set_option(tcp::no_delay(true), ec);
		auto c = std::make_shared<Connection>(std::move(socket));
		c->peer = to;
		if (!write(c, encode(Hello {self()}))) {
			return nullptr;
		}
		register_peer(c);
		spawn_reader(c);
		return c;
	}

	bool send(const NodeId &to, const Message &message) override {
		if (!owner.running_) {
			return false;
		}
		std::shared_ptr<Connection> c;
		{
			std::lock_guard lock(conn_mutex);
			auto it = by_peer.find(to);
			if (it != by_peer.end() && !it->second->closed) {
				c = it->second;
			}
		}
		if (!c) {
			c = dial(to);
			if (!c) {
				return false;
			}
		}
		if (!write(c, encode(message))) {
			drop_peer(c);
			return false;
		}
		return true;
	}

	void accept_loop() {
		while (owner.running_) {
			boost::system::error_code ec;
			tcp::socket socket(io);
			acceptor.accept(socket, ec);
			if (ec) {
				if (!owner.running_) {
					break;
				}
				continue;
			}
			socket.set_option(tcp::no_delay(true), ec);
			spawn_reader(std::make_shared<Connection>(std::move(socket)));
		}
	}

	void loop() {
		Micros next_tick = now();
		node->start(now());
		while (owner.running_) {
			std::deque<std::pair<NodeId, Message>> messages;
			std::deque<std::function<void(Micros)>> work;
			{
				std::lock_guard lock(inbox_mutex);
				messages.swap(inbox);
				work.swap(tasks);
			}
			for (auto &fn : work) {
				fn(now());
			}
			for (auto &[from, m] : messages) {
				try {
					node->on_message(from, m, now());
				} catch (const std::exception &e) {
					std::cerr << node->id() << ": error handling " << message_type(m) << " from " << from << ": "
					          << e.what() << "\n";
				}
			}
			if (now() >= next_tick) {
				node->tick(now());
				next_tick = now() + options.tick_interval;
			}
			if (options.work && options.work(now())) {
				continue;
			}
			std::unique_lock lock(inbox_mutex);
			auto wait = std::chrono::microseconds(std::max<Micros>(0, next_tick - now()));
			inbox_cv.wait_for(lock, wait, [&] { return !inbox.empty() || !tasks.empty() || !owner.running_; });
		}
	}
};

TcpRuntime::TcpRuntime(RuntimeOptions options) : impl_(std::make_unique<Impl>(*this, std::move(options))) {
	boost::system::error_code ec;
	auto address = asio::ip::make_address(impl_->options.bind_host, ec);
	if (ec) {
		throw InvalidArgument("bad bind address '" + impl_->options.bind_host + "'");
	}
	tcp::endpoint ep(address, impl_->options.port);
	impl_->acceptor.open(ep.protocol());
	impl_->acceptor.set_option(tcp::acceptor::reuse_address(true));
	impl_->acceptor.bind(ep, ec);
	if (ec) {
		throw Unavailable("cannot bind " + ep.address().to_string() + ":" + std::to_string(ep.port()) + ": " +
		                  ec.message());
	}
	impl_->acceptor.listen();
}

TcpRuntime::~TcpRuntime() {
	stop();
}

uint16_t TcpRuntime::port() const {
	return impl_->acceptor.local_endpoint().port();
}

NodeId TcpRuntime::address() const {
	return impl_->self();
}

Transport &TcpRuntime::transport() {
	return *impl_;
}

Micros TcpRuntime::now() const {
	return impl_->now();
}

void TcpRuntime::start(Node &node) {
	if (running_.exchange(true)) {
		throw Error("runtime already started");
	}
	impl_->node = &node;
	impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
	impl_->loop_thread = std::thread([this] { impl_->loop(); });
}

void TcpRuntime::post(std::function<void(Micros)> fn) {
	if (!running_) {
		fn(impl_->now());
		return;
	}
	{
		std::lock_guard lock(impl_->inbox_mutex);
		impl_->tasks.push_back(std::move(fn));
	}
	impl_->inbox_cv.notify_one();
}

void TcpRuntime::stop() {
	if (!running_.exchange(false)) {
		return;
	}
	impl_->inbox_cv.notify_all();
	if (impl_->loop_thread.joinable()) {
		impl_->loop_thread.join();
	}
	::shutdown(impl_->acceptor.native_handle(), SHUT_RDWR);
	if (impl_->accept_thread.joinable()) {
		impl_->accept_thread.join();
	}
	std::vector<std::thread> readers;
	{
		std::lock_guard lock(impl_->conn_mutex);
		for (auto &c : impl_->all) {
			c->shutdown();
		}
		readers.swap(impl_->readers);
	}
	for (auto &t : readers) {
		t.join();
	}
	boost::system::error_code ec;
	impl_->acceptor.close(ec);
	// Tasks posted after the loop exited would never run; fail them.
	std::deque<std::function<void(Micros)>> pending;
	{
		std::lock_guard lock(impl_->inbox_mutex);
		pending.swap(impl_->tasks);
	}
	for (auto &fn : pending) {
		fn(impl_->now());
	}
}

} // namespace stratcount
