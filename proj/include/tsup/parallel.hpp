// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace tsup {

// Shared worker pool for parallel_for. Every parallel_for call partitions its
// index range into disjoint chunks, so outputs are bitwise independent of the
// thread count as long as callers never reduce across chunks.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    void set_threads(int n) {
        if (n < 1) n = 1;
        std::unique_lock<std::mutex> lk(config_mutex_);
        shutdown_workers();
        threads_ = n;
        if (threads_ > 1) spawn_workers(threads_ - 1);
    }

    int threads() const { return threads_; }

    // fn(begin, end) over [0, count) split into contiguous chunks.
    void run(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& fn) {
        if (count <= 0) return;
        int nt = threads_;
        if (nt <= 1 || count < 2 * nt) {
            fn(0, count);
            return;
        }
        std::unique_lock<std::mutex> lk(config_mutex_);
        job_fn_ = &fn;
        job_count_ = count;
        job_chunks_ = nt;
        next_chunk_.store(0, std::memory_order_relaxed);
        pending_.store(nt - 1, std::memory_order_relaxed);
        {
            std::lock_guard<std::mutex> g(wake_mutex_);
            ++generation_;
        }
        wake_cv_.notify_all();
        work_chunks();
        std::unique_lock<std::mutex> dl(done_mutex_);
        done_cv_.wait(dl, [this] { return pending_.load(std::memory_order_acquire) == 0; });
        job_fn_ = nullptr;
    }

    ~ThreadPool() { shutdown_workers(); }

private:
    ThreadPool() = default;

    void spawn_workers(int n) {
        stop_ = false;
        for (int i = 0; i < n; ++i) {
            workers_.emplace_back([this] {
                std::uint64_t seen = 0;
                for (;;) {
                    {
                        std::unique_lock<std::mutex> lk(wake_mutex_);
                        wake_cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                        if (stop_) return;
                        seen = generation_;
                    }
                    work_chunks();
                    if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                        std::lock_guard<std::mutex> g(done_mutex_);
                        done_cv_.notify_all();
                    }
                }
            });
        }
    }

    void work_chunks() {
        const auto* fn = job_fn_;
        if (!fn) return;
        const std::int64_t count = job_count_;
        const int chunks = job_chunks_;
        for (;;) {
            int c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
            if (c >= chunks) break;
            std::int64_t begin = count * c / chunks;
            std::int64_t end = count * (c + 1) / chunks;
            if (begin < end) (*fn)(begin, end);
        }
    }

    void shutdown_workers() {
        {
            std::lock_guard<std::mutex> g(wake_mutex_);
            stop_ = true;
        }
        wake_cv_.notify_all();
        for (auto& w : workers_) w.join();
        workers_.clear();
    }

    std::mutex config_mutex_;
    std::vector<std::thread> workers_;
    int threads_ = 1;
    bool stop_ = false;

    std::mutex wake_mutex_;
    std::condition_variable wake_cv_;
    std::uint64_t generation_ = 0;

    const std::function<void(std::int64_t, std::int64_t)>* job_fn_ = nullptr;
    std::int64_t job_count_ = 0;
    int job_chunks_ = 1;
    std::atomic<int> next_chunk_{0};
    std::atomic<int> pending_{0};
    std::mutex done_mutex_;
    std::condition_variable done_cv_;
};

inline void set_threads(int n) { ThreadPool::instance().set_threads(n); }
inline int thread_count() { return ThreadPool::instance().threads(); }

template <typename Fn>
void parallel_for(std::int64_t count, Fn&& fn) {
    std::function<void(std::int64_t, std::int64_t)> f = std::forward<Fn>(fn);
    ThreadPool::instance().run(count, f);
}

} // namespace tsup
