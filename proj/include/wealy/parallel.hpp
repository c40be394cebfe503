// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#pragma once

#include <cstddef>
#include <functional>

namespace wealy {

/// Worker count: WEALY_THREADS if set to a positive integer, else the hardware concurrency.
std::size_t worker_count();
/// Overrides the worker count for this process (0 restores the default).
void set_worker_count(std::size_t n);

/// Runs fn(i) for i in [0, n) across workers. The first exception thrown by any
/// task is rethrown on the calling thread after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace wealy
