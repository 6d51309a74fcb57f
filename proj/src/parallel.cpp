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

#include "tdreg/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tdreg {

namespace {

std::atomic<int> g_thread_cap{0};

// captures the first exception thrown by any worker and rethrows it on the
// calling thread
class ExceptionRelay {
public:
    template <typename Fn>
    void run(Fn&& fn) noexcept {
        try {
            fn();
        } catch (...) {
            std::lock_guard<std::mutex> lock(mutex_);
            if (!error_) error_ = std::current_exception();
            failed_.store(true);
        }
    }
    bool failed() const { return failed_.load(); }
    void rethrow() {
        if (error_) std::rethrow_exception(error_);
    }

private:
    std::mutex mutex_;
    std::exception_ptr error_;
    std::atomic<bool> failed_{false};
};

} // namespace

void set_thread_cap(int threads) { g_thread_cap.store(threads < 0 ? 0 : threads); }

int effective_threads() {
    const int cap = g_thread_cap.load();
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (cap > 0 && cap < hw) return cap;
    return hw;
}

void parallel_for(int begin, int end, const std::function<void(int)>& fn) {
    const int n = end - begin;
    if (n <= 0) return;
    const int workers = std::min(effective_threads(), n);
    if (workers <= 1 || n < 4) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    ExceptionRelay relay;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    const int chunk = (n + workers - 1) / workers;
    auto run = [&](int w) {
        relay.run([&] {
            const int lo = begin + w * chunk;
            const int hi = std::min(end, lo + chunk);
            for (int i = lo; i < hi && !relay.failed(); ++i) fn(i);
        });
    };
    for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    for (auto& t : pool) t.join();
    relay.rethrow();
}

void parallel_tasks(int n, int workers, const std::function<void(int, int)>& fn) {
    if (n <= 0) return;
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    ExceptionRelay relay;
    std::atomic<int> next{0};
    auto run = [&](int w) {
        relay.run([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n || relay.failed()) break;
                fn(i, w);
            }
        });
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    for (auto& t : pool) t.join();
    relay.rethrow();
}

} // namespace tdreg
