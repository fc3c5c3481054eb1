#include "xct/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace xct {

namespace {

int resolve_default() {
    if (const char* env = std::getenv("XCT_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    return static_cast<int>(hw > 8 ? 8 : hw);
}

std::atomic<int> g_threads{0}; // 0 = not resolved yet

// Minimal persistent pool. One job at a time; workers pull indices from a
// shared counter until exhausted. Submissions are serialized, so nested or
// concurrent parallel_for calls degrade to serial execution instead of
// corrupting job state.
class Pool {
public:
    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i)
            threads_.emplace_back([this] { worker(); });
    }

    ~Pool() {
        {
            std::unique_lock lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(size_t n, const std::function<void(size_t)>& fn) {
        std::unique_lock job_lk(job_mu_, std::try_to_lock);
        if (!job_lk.owns_lock()) { // re-entrant or concurrent call: run inline
            for (size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        {
            std::unique_lock lk(mu_);
            fn_.store(&fn);
            pending_.store(n);
            total_.store(n);
            next_.store(0);
        }
        cv_.notify_all();
        drain(); // the submitting thread participates
        std::unique_lock lk(mu_);
        done_cv_.wait(lk, [this] { return pending_.load() == 0; });
        fn_.store(nullptr);
    }

private:
    void drain() {
        for (;;) {
            size_t i = next_.fetch_add(1);
            if (i >= total_.load()) break;
            // Loaded after the index claim: a claimed index pins its job
            // (run() cannot return while pending_ > 0), and seq_cst ordering
            // of fn_/next_ stores means a claim of a fresh index can only
            // observe that job's function.
            (*fn_.load())(i);
            if (pending_.fetch_sub(1) == 1) {
                std::unique_lock lk(mu_);
                done_cv_.notify_all();
            }
        }
    }

    void worker() {
        std::unique_lock lk(mu_);
        for (;;) {
            cv_.wait(lk, [this] {
                return stop_ || (fn_.load() && next_.load() < total_.load());
            });
            if (stop_) return;
            lk.unlock();
            drain();
            lk.lock();
        }
    }

    std::mutex mu_;      // guards sleep/wake state
    std::mutex job_mu_;  // serializes submissions
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> threads_;
    std::atomic<const std::function<void(size_t)>*> fn_{nullptr};
    std::atomic<size_t> next_{0};
    std::atomic<size_t> total_{0};
    std::atomic<size_t> pending_{0};
    bool stop_ = false;
};

Pool* pool_for(int workers) {
    static std::mutex mu;
    static Pool* pool = nullptr;
    static int pool_workers = 0;
    std::unique_lock lk(mu);
    if (!pool || pool_workers != workers) {
        delete pool;
        pool = new Pool(workers > 1 ? workers - 1 : 0); // caller thread counts as one
        pool_workers = workers;
    }
    return pool;
}

} // namespace

int thread_count() {
    int v = g_threads.load();
    if (v == 0) {
        v = resolve_default();
        g_threads.store(v);
    }
    return v;
}

void set_thread_count(int n) {
    g_threads.store(n >= 1 ? n : 1);
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    const int workers = thread_count();
    if (n == 1 || workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    pool_for(workers)->run(n, fn);
}

} // namespace xct
