// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The wealy Authors

#include "wealy/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace wealy {

namespace {

std::atomic<std::size_t> g_override{0};

}  // namespace

std::size_t worker_count() {
  if (const auto n = g_override.load(); n > 0) {
    return n;
  }
  if (const char* env = std::getenv("WEALY_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) {
        return static_cast<std::size_t>(v);
      }
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_worker_count(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) {
          error = std::current_exception();
        }
        next.store(n);
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    pool.emplace_back(work);
  }
  work();
  pool.clear();
  if (error) {
    std::rethrow_exception(error);
  }
}

}  // namespace wealy
