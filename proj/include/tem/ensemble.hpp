#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace tem {

/// 0 selects the hardware concurrency.
unsigned resolve_workers(unsigned requested);

/// out[i] = fn(i) for i in [0, count), computed by `workers` threads.
/// Results are written by index, so the output does not depend on the
/// worker count or scheduling. If any call throws, the exception of the
/// lowest failing index is rethrown after all workers stop.
template <class R, class F>
std::vector<R> parallel_map(std::size_t count, unsigned workers, F&& fn) {
    std::vector<std::optional<R>> slots(count);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::size_t error_index = count;
    std::exception_ptr error;

    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };

    const unsigned n = std::max(1u, std::min<unsigned>(resolve_workers(workers), static_cast<unsigned>(count)));
    if (n <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n);
        for (unsigned t = 0; t < n; ++t) {
            pool.emplace_back(work);
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
    std::vector<R> out;
    out.reserve(count);
    for (auto& s : slots) {
        out.push_back(std::move(*s));
    }
    return out;
}

}  // namespace tem
