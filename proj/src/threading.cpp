#include "ddreg/threading.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace ddreg {

namespace {

int resolve_default_threads() {
    if (const char* env = std::getenv("DDREG_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

std::atomic<int> g_threads{0};  // 0 = not yet resolved
thread_local bool tl_in_pool = false;

// Minimal persistent pool. Tasks are (begin, end) chunks of one parallel_for;
// the calling thread participates and blocks until all chunks finish.
class Pool {
public:
    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(std::int64_t n, int chunks, const std::function<void(std::int64_t, std::int64_t)>& fn) {
        std::int64_t chunk = (n + chunks - 1) / chunks;
        {
            std::lock_guard lk(mu_);
            fn_ = &fn;
            total_ = n;
            chunk_ = chunk;
            next_ = 0;
            pending_ = (n + chunk - 1) / chunk;
            done_ = false;
        }
        cv_.notify_all();
        help();  // caller works too
        std::unique_lock lk(mu_);
        done_cv_.wait(lk, [this] { return done_; });
    }

private:
    void help() {
        for (;;) {
            std::int64_t b, e;
            {
                std::lock_guard lk(mu_);
                if (next_ >= total_) return;
                b = next_;
                e = std::min<std::int64_t>(total_, b + chunk_);
                next_ = e;
            }
            (*fn_)(b, e);
            std::lock_guard lk(mu_);
            if (--pending_ == 0) {
                done_ = true;
                done_cv_.notify_all();
            }
        }
    }

    void worker_loop() {
        tl_in_pool = true;  // nested parallel_for inside a chunk runs serially
        for (;;) {
            std::int64_t b, e;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [this] { return stop_ || next_ < total_; });
                if (stop_) return;
                b = next_;
                e = std::min<std::int64_t>(total_, b + chunk_);
                next_ = e;
            }
            (*fn_)(b, e);
            std::lock_guard lk(mu_);
            if (--pending_ == 0) {
                done_ = true;
                done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(std::int64_t, std::int64_t)>* fn_ = nullptr;
    std::int64_t total_ = 0, chunk_ = 1, next_ = 0;
    int pending_ = 0;
    bool done_ = true;
    bool stop_ = false;
};

Pool* g_pool = nullptr;
int g_pool_workers = -1;
std::mutex g_pool_mu;

}  // namespace

int thread_count() {
    int n = g_threads.load();
    if (n == 0) {
        n = resolve_default_threads();
        g_threads.store(n);
    }
    return n;
}

void set_thread_count(int n) {
    g_threads.store(std::max(1, n));
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    int t = thread_count();
    if (t <= 1 || n < 2048 || tl_in_pool) {
        fn(0, n);
        return;
    }
    Pool* pool;
    {
        std::lock_guard lk(g_pool_mu);
        if (!g_pool || g_pool_workers != t - 1) {
            delete g_pool;
            g_pool = new Pool(t - 1);
            g_pool_workers = t - 1;
        }
        pool = g_pool;
    }
    tl_in_pool = true;
    // 4x oversubscription smooths imbalance; chunking does not affect results.
    pool->run(n, 4 * t, fn);
    tl_in_pool = false;
}

}  // namespace ddreg
