#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace lagrangian {

// Static round-robin split of [0, n) over `workers` threads. Each index is
// handled by exactly one worker, so results written per index do not depend
// on the worker count. The first exception (lowest index) is rethrown.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn)
{
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace lagrangian
