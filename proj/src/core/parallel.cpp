#include "imargin/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace imargin {

namespace {

std::atomic<std::size_t>& worker_setting() {
    static std::atomic<std::size_t> value{
        std::max<std::size_t>(1, std::thread::hardware_concurrency())};
    return value;
}

}  // namespace

std::size_t default_workers() { return worker_setting().load(); }

void set_default_workers(std::size_t workers) {
    worker_setting().store(std::max<std::size_t>(1, workers));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t workers) {
    if (n == 0) return;
    if (workers == 0) workers = default_workers();
    workers = std::min(workers, n);

    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::size_t error_index = std::numeric_limits<std::size_t>::max();
    std::exception_ptr error;

    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace imargin
