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

#pragma once

#include <cstdint>
#include <functional>

namespace phnet {

/// Worker threads used by kernels. Defaults to PHNET_THREADS, or 1.
int thread_count();
void set_thread_count(int threads);

/// Splits [0, count) into contiguous chunks, one per worker. `fn` receives
/// (begin, end, worker index). Chunk boundaries depend only on `count` and
/// the thread count, so reductions ordered by worker index are deterministic.
void parallel_for(std::int64_t count,
                  const std::function<void(std::int64_t, std::int64_t, int)>& fn);

}  // namespace phnet
