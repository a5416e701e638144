// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ergo {

/// Process-wide worker cap (the CLI --threads flag lands here).
/// 0 means use the hardware concurrency.
inline std::atomic<int>& max_threads() {
  static std::atomic<int> cap{0};
  return cap;
}

inline void set_max_threads(int threads) { max_threads().store(threads); }

inline int resolved_threads() {
  int cap = max_threads().load();
  if (cap <= 0) {
    cap = static_cast<int>(std::thread::hardware_concurrency());
    if (cap <= 0) cap = 1;
  }
  return cap;
}

/**
 * Runs body(i) for i in [0, n).  Work items must be independent and
 * write only to their own slots; every item derives its randomness from
 * its index, so the result is identical no matter how many workers run.
 * The first exception thrown by any item is rethrown to the caller.
 */
template <class Body>
void parallel_for(std::size_t n, const Body& body) {
  const int workers = std::min<int>(resolved_threads(), static_cast<int>(n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ergo
