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


#include "stratcount/aggregator.hpp"
#include "stratcount/coordinator.hpp"
#include "stratcount/counter.hpp"
#include "stratcount/error.hpp"
#include "stratcount/runtime.hpp"
#include "stratcount/strata.hpp"

#include "test_util.hpp"

#include <boost/asio.hpp>
#include <gtest/gtest.h>

#include <chrono>

namespace stratcount {
namespace {

using namespace std::chrono_literals;

//! Polls `pred` for up to `limit`.
template <class P> bool eventually(P pred, std::chrono::milliseconds limit = 10s) {
	auto deadline = std::chrono::steady_clock::now() + limit;
	while (std::chrono::steady_clock::now() < deadline) {
		if (pred()) {
			return true;
		}
		std::this_thread::sleep_for(5ms);
	}
	return pred();
}

class Echo : public Node {
public:
	explicit Echo(TcpRuntime &rt) : rt_(rt), id_(rt.address()) {
	}
	const NodeId &id() const override {
		return id_;
	}
	void start(Micros) override {
		started = true;
	}
	void on_message(const NodeId &from, const Message &m, Micros) override {
		std::lock_guard lock(mutex);
		received.emplace_back(from, m);
		if (auto *c = std::get_if<Cancel>(&m); c && c->reason == "ping") {
			rt_.transport().send(from, Cancel {c->report_id, "pong"});
		}
	}
	void tick(Micros) override {
		++ticks;
	}
	std::vector<std::pair<NodeId, Message>> snapshot() {
		std::lock_guard lock(mutex);
		return received;
	}

	std::atomic<bool> started {false};
	std::atomic<int> ticks {0};
	std::mutex mutex;
	std::vector<std::pair<NodeId, Message>> received;

private:
	TcpRuntime &rt_;
	NodeId id_;
};

TEST(Endpoint, Parse) {
	auto e = parse_endpoint("10.0.0.1:7400");
	EXPECT_EQ(e.host, "10.0.0.1");
	EXPECT_EQ(e.port, 7400);
	EXPECT_EQ(e.to_string(), "10.0.0.1:7400");
	EXPECT_EQ(parse_endpoint("[::1]:80").host, "[::1]");
	for (auto bad : {"nohost", ":80", "host:", "host:0", "host:70000", "host:8x"}) {
		EXPECT_THROW(parse_endpoint(bad), InvalidArgument) << bad;
	}
}

TEST(TcpRuntime, PingPongNamesTheSender) {
	TcpRuntime a({}), b({});
	Echo na(a), nb(b);
	a.start(na);
	b.start(nb);
	EXPECT_TRUE(eventually([&] { return na.started.load(); }));
	a.call([&](Micros) { return a.transport().send(b.address(), Cancel {"r1", "ping"}); });
	ASSERT_TRUE(eventually([&] { return !na.snapshot().empty(); }));
	auto at_b = nb.snapshot();
	ASSERT_EQ(at_b.size(), 1u);
	EXPECT_EQ(at_b[0].first, a.address());
	auto at_a = na.snapshot();
	EXPECT_EQ(at_a[0].first, b.address());
	EXPECT_EQ(std::get<Cancel>(at_a[0].second).reason, "pong");
	EXPECT_TRUE(eventually([&] { return na.ticks > 2; }));
	a.stop();
	b.stop();
}

TEST(TcpRuntime, ManyFramesArriveInOrder) {
	TcpRuntime a({}), b({});
	Echo na(a), nb(b);
	a.start(na);
	b.start(nb);
	const int n = 500;
	a.post([&](Micros) {
		for (int i = 0; i < n; ++i) {
			a.transport().send(b.address(), FetchResult {std::to_string(i)});
		}
	});
	ASSERT_TRUE(eventually([&] { return nb.snapshot().size() == n; }));
	auto got = nb.snapshot();
	for (int i = 0; i < n; ++i) {
		EXPECT_EQ(std::get<FetchResult>(got[static_cast<size_t>(i)].second).report_id, std::to_string(i));
	}
}

TEST(TcpRuntime, UnreachablePeer) {
	uint16_t closed_port;
	{
		TcpRuntime probe({});
		closed_port = probe.port();
	}
	TcpRuntime a({});
	Echo na(a);
	a.start(na);
	EXPECT_FALSE(a.call([&](Micros) { return a.transport().send("127.0.0.1:" + std::to_string(closed_port), Hello {}); }));
	EXPECT_FALSE(a.call([&](Micros) { return a.transport().send("not-an-endpoint", Hello {}); }));
}

TEST(TcpRuntime, GarbageConnectionIsDroppedOthersUnaffected) {
	TcpRuntime a({}), b({});
	Echo na(a), nb(b);
	a.start(na);
	b.start(nb);
	{
		boost::asio::io_context io;
		boost::asio::ip::tcp::socket s(io);
		s.connect({boost::asio::ip::make_address("127.0.0.1"), b.port()});
		// a frame that is not preceded by Hello, then junk
		auto frame = encode(FetchResult {"sneaky"});
		boost::asio::write(s, boost::asio::buffer(frame + std::string("\0\0\0\x05hello", 9)));
		std::array<char, 16> buf;
		boost::system::error_code ec;
		s.read_some(boost::asio::buffer(buf), ec); // closed by the peer
		EXPECT_TRUE(ec);
	}
	a.call([&](Micros) { return a.transport().send(b.address(), FetchResult {"fine"}); });
	ASSERT_TRUE(eventually([&] { return !nb.snapshot().empty(); }));
	auto got = nb.snapshot();
	ASSERT_EQ(got.size(), 1u);
	EXPECT_EQ(std::get<FetchResult>(got[0].second).report_id, "fine");
}

TEST(TcpRuntime, LifecycleEdges) {
	TcpRuntime a({});
	Echo na(a);
	EXPECT_FALSE(a.running());
	bool ran = false;
	a.post([&](Micros) { ran = true; }); // not started: runs inline
	EXPECT_TRUE(ran);
	a.start(na);
	EXPECT_THROW(a.start(na), Error);
	EXPECT_THROW(a.call([](Micros) -> int { throw NotFound("x"); }), NotFound);
	a.stop();
	a.stop();
	EXPECT_FALSE(a.running());
	EXPECT_THROW(TcpRuntime({.bind_host = "not an address"}), InvalidArgument);
	TcpRuntime taken({});
	EXPECT_THROW(TcpRuntime({.port = taken.port()}), Unavailable);
}

// Coordinator, aggregator and two counters on localhost sockets.
TEST(TcpRuntime, ClusterAnswersLikeTheSample) {
	testing::TempDir dir;
	auto d = testing::random_dataset({3, 4, 2, 5}, 20000, 9, 0.02);
	std::vector<size_t> sel {0, 1};
	auto sample = plan_sample(d, sel, 3000, 9, FallbackMode::merge).sample;
	auto subs = split_subsamples(sample, 2, 1);
	PublishSample manifest {sample.id, {}};
	for (size_t i = 0; i < subs.size(); ++i) {
		auto path = dir.file("sub" + std::to_string(i) + ".smp");
		save_sample(subs[i], path);
		manifest.manifest.push_back({subs[i].id, path, subs[i].id});
	}

	TcpRuntime coord_rt({});
	Coordinator coordinator({.id = coord_rt.address()}, &coord_rt.transport());
	coord_rt.start(coordinator);
	coord_rt.call([&](Micros now) { return coordinator.publish_sample(manifest, now); });

	std::array<Counter *, 2> active {};
	std::vector<std::unique_ptr<Counter>> counters(2);
	std::vector<std::unique_ptr<TcpRuntime>> counter_rts;
	for (size_t i = 0; i < 2; ++i) {
		auto scan = [&active, i](Micros now) {
			auto *c = active[i];
			if (!c || !c->has_work()) {
				return false;
			}
			c->scan(512, now);
			return true;
		};
		auto rt = std::make_unique<TcpRuntime>(RuntimeOptions {"127.0.0.1", 0, 10 * kMillis, scan});
		CounterConfig cc;
		cc.id = rt->address();
		cc.coordinator = coord_rt.address();
		cc.default_push_interval = 20 * kMillis;
		counters[i] = std::make_unique<Counter>(cc, rt->transport(), load_subsample_file);
		active[i] = counters[i].get();
		rt->start(*counters[i]);
		counter_rts.push_back(std::move(rt));
	}

	TcpRuntime agg_rt({});
	Aggregator aggregator({.id = agg_rt.address(), .coordinator = coord_rt.address(), .push_interval_ms = 20},
	                      agg_rt.transport());
	agg_rt.start(aggregator);
	ASSERT_TRUE(eventually([&] { return agg_rt.call([&](Micros) { return aggregator.live_counters().size(); }) == 2; }));

	std::vector<Query> queries {Query {}, Query {}.where(2, {1}), Query {}.where(0, {1, 3}).where(3, {2})};
	for (auto &q : queries) {
		auto id = agg_rt.call([&](Micros now) { return aggregator.initiate_report(q, 0, 0, now); });
		ResultEnvelope env;
		ASSERT_TRUE(eventually([&] {
			env = agg_rt.call([&](Micros now) { return aggregator.fetch(id, now); });
			return env.status != ReportStatus::running;
		}));
		EXPECT_EQ(env.status, ReportStatus::done);
		EXPECT_EQ(env.estimate.value, estimate_count(sample, q).value) << q.to_text(sample.schema);
		EXPECT_EQ(env.estimate.margin, 0.0);
	}
	auto leases = coord_rt.call([&](Micros) { return coordinator.leases().size(); });
	EXPECT_EQ(leases, 2u);

	agg_rt.stop();
	for (auto &rt : counter_rts) {
		rt->stop();
	}
	coord_rt.stop();
}

} // namespace
} // namespace stratcount
