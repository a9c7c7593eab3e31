// Copyright (c) 2026 The phnet Authors. All Rights Reserved.
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

#include "phnet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace phnet {

namespace {
int threads_from_env() {
  if (const char* env = std::getenv("PHNET_THREADS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      return 1;
    }
  }
  return 1;
}

std::atomic<int> g_threads{threads_from_env()};
}  // namespace

int thread_count() { return g_threads.load(); }
void set_thread_count(int threads) { g_threads.store(std::max(1, threads)); }

void parallel_for(std::int64_t count,
                  const std::function<void(std::int64_t, std::int64_t, int)>& fn) {
  const int workers = static_cast<int>(std::min<std::int64_t>(thread_count(), count));
  if (workers <= 1) {
    fn(0, count, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  const std::int64_t chunk = (count + workers - 1) / workers;
  for (int wkr = 1; wkr < workers; ++wkr) {
    const std::int64_t b = wkr * chunk;
    const std::int64_t e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e, wkr] { fn(b, e, wkr); });
  }
  fn(0, std::min(count, chunk), 0);
  for (auto& t : pool) t.join();
}

}  // namespace phnet
