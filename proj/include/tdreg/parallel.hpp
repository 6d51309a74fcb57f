/*
Copyright 2026 the tdreg authors
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#ifndef TDREG_PARALLEL_HPP
#define TDREG_PARALLEL_HPP

#include <functional>

namespace tdreg {

// Process-wide cap on worker threads (0 = hardware concurrency).
// Only pure per-element maps and independent tasks are parallelized, with
// results written to disjoint slots, so outputs are bit-identical for any
// thread count.
void set_thread_cap(int threads);
int effective_threads();

// Runs fn(i) for i in [begin, end) on up to effective_threads() workers,
// splitting the range into contiguous chunks.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

// Runs fn(task_index, worker_index) for tasks [0, n); each worker owns its
// scratch identified by worker_index in [0, workers).
void parallel_tasks(int n, int workers,
                    const std::function<void(int, int)>& fn);

} // namespace tdreg

#endif
