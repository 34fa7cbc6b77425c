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

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stratcount {

struct CoordinatorConfig {
	NodeId id = "coordinator";
	Micros lease_duration = 10 * kSeconds;
	size_t aggregator_capacity = 1;
};

struct Lease {
	std::string subsample_id;
	std::string sample_id;
	NodeId holder;
	Micros expiry = 0;
	uint64_t epoch = 0;

	bool operator==(const Lease &) const = default;
};

/// FIFO-fair counting semaphore over node ids.
class Semaphore {
public:
	explicit Semaphore(size_t capacity = 1) : capacity_(capacity) {
	}

	//! True when `id` holds (or now holds) a slot; otherwise queues it.
	bool acquire(const NodeId &id);
	//! Releases `id` (holder or waiter) and returns the waiters promoted.
	std::vector<NodeId> release(const NodeId &id);
	//! Changes capacity; returns the waiters promoted by a raise.
	std::vector<NodeId> set_capacity(size_t capacity);

	size_t capacity() const {
		return capacity_;
	}
	const std::vector<NodeId> &holders() const {
		return holders_;
	}
	const std::deque<NodeId> &waiters() const {
		return waiters_;
	}
	bool holds(const NodeId &id) const;

private:
	std::vector<NodeId> promote();

	size_t capacity_;
	std::vector<NodeId> holders_;
	std::deque<NodeId> waiters_;
};

/// Lease, permit, slot and membership authority. A single serialized state
/// machine; every method takes the current time explicitly.
class Coordinator : public Node {
public:
	//! `transport` may be null for pure state-machine use.
	explicit Coordinator(CoordinatorConfig config, Transport *transport = nullptr);

	// Direct API -------------------------------------------------------------

	Membership register_node(const NodeId &id, const std::string &role, Micros now);
	//! Drops membership and frees every lease, permit and slot of `id`.
	void unregister_node(const NodeId &id, Micros now);

	//! Grants a free sub-sample of the newest sample, or granted = false.
	LeaseGrant acquire_subsample(const NodeId &id, Micros now);
	LeaseGrant renew(const NodeId &id, const std::string &subsample_id, uint64_t epoch, Micros now);
	void release(const NodeId &id, const std::string &subsample_id, uint64_t epoch);
	//! Returns expired leases to the pool.
	void expire(Micros now);

	//! Cap is max(1, floor(k / 2)) over k registered counters.
	size_t permit_cap() const;
	bool acquire_reload_permit(const NodeId &id);
	void release_reload_permit(const NodeId &id);

	bool aggregator_slot(const NodeId &id);
	void release_aggregator_slot(const NodeId &id);

	//! False (and no notifications) when `sample_id` was already published.
	bool publish_sample(const PublishSample &sample, Micros now);

	const std::map<std::string, Lease> &leases() const {
		return leases_;
	}
	const Semaphore &permits() const {
		return permits_;
	}
	const Semaphore &slots() const {
		return slots_;
	}
	const std::map<NodeId, std::string> &members() const {
		return members_;
	}
	std::optional<std::string> latest_sample() const;

	// Node ---------------------------------------------------------------------

	const NodeId &id() const override {
		return config_.id;
	}
	void start(Micros) override {
	}
	void on_message(const NodeId &from, const Message &message, Micros now) override;
	void tick(Micros now) override {
		expire(now);
	}

private:
	void notify(const NodeId &to, const Message &m);
	void broadcast(const Message &m, const NodeId &except = {});
	void sync_permit_capacity();
	void grant_permits(const std::vector<NodeId> &promoted);

	CoordinatorConfig config_;
	Transport *transport_;
	std::map<NodeId, std::string> members_;
	std::vector<PublishSample> samples_;
	std::map<std::string, Lease> leases_;       //!< active leases by sub-sample id
	std::map<std::string, uint64_t> epochs_;    //!< last epoch per sub-sample id
	Semaphore permits_ {1};
	Semaphore slots_;
};

} // namespace stratcount
