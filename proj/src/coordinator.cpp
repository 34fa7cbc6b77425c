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

#include "stratcount/coordinator.hpp"

#include "stratcount/error.hpp"

#include <algorithm>

namespace stratcount {

bool Semaphore::holds(const NodeId &id) const {
	return std::find(holders_.begin(), holders_.end(), id) != holders_.end();
}

bool Semaphore::acquire(const NodeId &id) {
	if (holds(id)) {
		return true;
	}
	if (std::find(waiters_.begin(), waiters_.end(), id) != waiters_.end()) {
		return false;
	}
	if (holders_.size() < capacity_ && waiters_.empty()) {
		holders_.push_back(id);
		return true;
	}
	waiters_.push_back(id);
	return false;
}

std::vector<NodeId> Semaphore::promote() {
	std::vector<NodeId> promoted;
	while (holders_.size() < capacity_ && !waiters_.empty()) {
		holders_.push_back(waiters_.front());
		promoted.push_back(waiters_.front());
		waiters_.pop_front();
	}
	return promoted;
}

std::vector<NodeId> Semaphore::release(const NodeId &id) {
	std::erase(holders_, id);
	std::erase(waiters_, id);
	return promote();
}

std::vector<NodeId> Semaphore::set_capacity(size_t capacity) {
	capacity_ = capacity;
	return promote();
}

Coordinator::Coordinator(CoordinatorConfig config, Transport *transport)
    : config_(std::move(config)), transport_(transport), slots_(config_.aggregator_capacity) {
	if (config_.lease_duration <= 0) {
		throw InvalidArgument("lease duration must be positive");
	}
}

void Coordinator::notify(const NodeId &to, const Message &m) {
	if (transport_) {
		transport_->send(to, m);
	}
}

void Coordinator::broadcast(const Message &m, const NodeId &except) {
	for (auto &[node, role] : members_) {
		if (node != except) {
			notify(node, m);
		}
	}
}

size_t Coordinator::permit_cap() const {
	auto k = static_cast<size_t>(
	    std::count_if(members_.begin(), members_.end(), [](auto &m) { return m.second == "counter"; }));
	return std::max<size_t>(1, k / 2);
}

void Coordinator::sync_permit_capacity() {
	grant_permits(permits_.set_capacity(permit_cap()));
}

void Coordinator::grant_permits(const std::vector<NodeId> &promoted) {
	for (auto &node : promoted) {
		notify(node, PermitGrant {node, true});
	}
}

std::optional<std::string> Coordinator::latest_sample() const {
	if (samples_.empty()) {
		return std::nullopt;
	}
	return samples_.back().sample_id;
}

Membership Coordinator::register_node(const NodeId &id, const std::string &role, Micros now) {
	if (role != "counter" && role != "aggregator") {
		throw InvalidArgument("unknown node role '" + role + "'");
	}
	expire(now);
	bool fresh = members_.emplace(id, role).second;
	if (fresh) {
		broadcast(Event {"member-joined", "", id, role}, id);
		sync_permit_capacity();
	}
	Membership out;
	for (auto &[node, r] : members_) {
		out.members.push_back({node, r});
	}
	notify(id, out);
	if (!samples_.empty()) {
		// Publications made before this node joined are delivered now.
		notify(id, Event {"new-sample", samples_.back().sample_id, "", ""});
	}
	return out;
}

void Coordinator::unregister_node(const NodeId &id, Micros now) {
	expire(now);
	auto it = members_.find(id);
	if (it == members_.end()) {
		return;
	}
	auto role = it->second;
	members_.erase(it);
	for (auto l = leases_.begin(); l != leases_.end();) {
		l = l->second.holder == id ? leases_.erase(l) : std::next(l);
	}
	// Shrink the cap before the freed permit can promote a waiter.
	sync_permit_capacity();
	grant_permits(permits_.release(id));
	for (auto &node : slots_.release(id)) {
		notify(node, SlotGrant {node, true});
	}
	broadcast(Event {"member-left", "", id, role});
}

void Coordinator::expire(Micros now) {
	for (auto l = leases_.begin(); l != leases_.end();) {
		if (l->second.expiry < now) {
			auto holder = l->second.holder;
			l = leases_.erase(l);
			for (auto &[node, role] : members_) {
				if (role == "aggregator") {
					notify(node, Event {"lease-expired", "", holder, "counter"});
				}
			}
		} else {
			++l;
		}
	}
}

LeaseGrant Coordinator::acquire_subsample(const NodeId &id, Micros now) {
	expire(now);
	LeaseGrant out;
	out.node_id = id;
	if (!members_.count(id)) {
		throw InvalidArgument("node '" + id + "' is not registered");
	}
	if (samples_.empty()) {
		return out;
	}
	const auto &current = samples_.back();
	auto fill = [&](const Lease &lease, const SubsampleEntry &entry) {
		out.granted = true;
		out.sample_id = lease.sample_id;
		out.subsample_id = lease.subsample_id;
		out.path = entry.path;
		out.checksum = entry.checksum;
		out.epoch = lease.epoch;
		out.expires_ms = static_cast<uint64_t>(lease.expiry / kMillis);
	};
	for (auto &entry : current.manifest) {
		auto it = leases_.find(entry.subsample_id);
		if (it != leases_.end() && it->second.holder == id) {
			fill(it->second, entry); // idempotent re-request
			return out;
		}
	}
	for (auto &entry : current.manifest) {
		if (leases_.count(entry.subsample_id)) {
			continue;
		}
		Lease lease {entry.subsample_id, current.sample_id, id, now + config_.lease_duration,
		             ++epochs_[entry.subsample_id]};
		leases_.emplace(entry.subsample_id, lease);
		fill(lease, entry);
		return out;
	}
	return out;
}

LeaseGrant Coordinator::renew(const NodeId &id, const std::string &subsample_id, uint64_t epoch, Micros now) {
	expire(now);
	LeaseGrant out;
	out.node_id = id;
	out.subsample_id = subsample_id;
	out.epoch = epoch;
	auto it = leases_.find(subsample_id);
	if (it == leases_.end() || it->second.holder != id || it->second.epoch != epoch) {
		return out;
	}
	it->second.expiry = now + config_.lease_duration;
	out.granted = true;
	out.sample_id = it->second.sample_id;
	out.expires_ms = static_cast<uint64_t>(it->second.expiry / kMillis);
	for (auto &s : samples_) {
		for (auto &entry : s.manifest) {
			if (entry.subsample_id == subsample_id) {
				out.path = entry.path;
				out.checksum = entry.checksum;
			}
		}
	}
	return out;
}

void Coordinator::release(const NodeId &id, const std::string &subsample_id, uint64_t epoch) {
	auto it = leases_.find(subsample_id);
	if (it != leases_.end() && it->second.holder == id && it->second.epoch == epoch) {
		leases_.erase(it);
	}
}

bool Coordinator::acquire_reload_permit(const NodeId &id) {
	if (!members_.count(id)) {
		throw InvalidArgument("node '" + id + "' is not registered");
	}
	return permits_.acquire(id);
}

void Coordinator::release_reload_permit(const NodeId &id) {
	grant_permits(permits_.release(id));
}

bool Coordinator::aggregator_slot(const NodeId &id) {
	return slots_.acquire(id);
}

void Coordinator::release_aggregator_slot(const NodeId &id) {
	for (auto &node : slots_.release(id)) {
		notify(node, SlotGrant {node, true});
	}
}

bool Coordinator::publish_sample(const PublishSample &sample, Micros now) {
	expire(now);
	for (auto &s : samples_) {
		if (s.sample_id == sample.sample_id) {
			return false;
		}
	}
	if (sample.manifest.empty()) {
		throw InvalidArgument("sample '" + sample.sample_id + "' has an empty manifest");
	}
	samples_.push_back(sample);
	broadcast(Event {"new-sample", sample.sample_id, "", ""});
	return true;
}

void Coordinator::on_message(const NodeId &from, const Message &message, Micros now) {
	try {
		std::visit(
		    [&](const auto &m) {
			    using T = std::decay_t<decltype(m)>;
			    if constexpr (std::is_same_v<T, Register>) {
				    register_node(m.node_id, m.role, now);
			    } else if constexpr (std::is_same_v<T, AcquireLease>) {
				    notify(m.node_id, acquire_subsample(m.node_id, now));
			    } else if constexpr (std::is_same_v<T, RenewLease>) {
				    notify(m.node_id, renew(m.node_id, m.subsample_id, m.epoch, now));
			    } else if constexpr (std::is_same_v<T, ReleaseLease>) {
				    release(m.node_id, m.subsample_id, m.epoch);
			    } else if constexpr (std::is_same_v<T, PermitRequest>) {
				    notify(m.node_id, PermitGrant {m.node_id, acquire_reload_permit(m.node_id)});
			    } else if constexpr (std::is_same_v<T, PermitRelease>) {
				    release_reload_permit(m.node_id);
			    } else if constexpr (std::is_same_v<T, AggregatorSlot>) {
				    if (m.release) {
					    release_aggregator_slot(m.node_id);
				    } else {
					    notify(m.node_id, SlotGrant {m.node_id, aggregator_slot(m.node_id)});
				    }
			    } else if constexpr (std::is_same_v<T, PublishSample>) {
				    publish_sample(m, now);
			    } else {
				    notify(from, ErrorReply {"unexpected", "coordinator does not handle " +
				                                               std::string(message_type(message))});
			    }
		    },
		    message);
	} catch (const Error &e) {
		notify(from, ErrorReply {"rejected", e.what()});
	}
}

} // namespace stratcount
