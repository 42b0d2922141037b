#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace moran {

// Runs fn(k) for k in [0,n) on up to `workers` threads. Work is handed out in
// index order; results must be stored by index so the outcome does not depend
// on scheduling.
template <typename Fn>
void parallel_for(long n, int workers, Fn fn) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<long>(n, 256))));
    if (workers == 1) {
        for (long k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr err;
    std::mutex errMutex;
    auto body = [&] {
        try {
            for (long k; (k = next.fetch_add(1)) < n;) fn(k);
        } catch (...) {
            std::lock_guard<std::mutex> lock(errMutex);
            if (!err) err = std::current_exception();
            next = n;
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace moran
