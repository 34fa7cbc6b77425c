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

#include "stratcount/wire.hpp"

#include <cstdint>

namespace stratcount {

/// Microseconds on whatever clock drives the node (virtual in simulation,
/// steady clock under the TCP runtime).
using Micros = int64_t;

inline constexpr Micros kMillis = 1000;
inline constexpr Micros kSeconds = 1000 * kMillis;

/// Outbound message path. Implementations must not call back into the node.
class Transport {
public:
	virtual ~Transport() = default;
	//! Returns false when the destination is known to be unreachable.
	virtual bool send(const NodeId &to, const Message &message) = 0;
};

/// Event-driven node logic shared by the simulator and the TCP runtime. All
/// calls come from a single thread.
class Node {
public:
	virtual ~Node() = default;
	virtual const NodeId &id() const = 0;
	virtual void start(Micros now) = 0;
	virtual void on_message(const NodeId &from, const Message &message, Micros now) = 0;
	//! Periodic housekeeping; safe to call at any rate.
	virtual void tick(Micros now) = 0;
};

} // namespace stratcount
