#include "core/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace flowseed {

namespace {

thread_local bool inside_pool_job = false;

class Pool {
 public:
  explicit Pool(int workers) : workers_(workers) {
    threads_.reserve(workers_);
    for (int i = 0; i < workers_; ++i) {
      threads_.emplace_back([this, i] { run_worker(i); });
    }
  }

  // Blocks until all chunks of the submitted job are done. jobs_mutex_
  // serializes outside callers; the calling thread works the last lane.
  void run(int n, const std::function<void(int)>& fn) {
    std::unique_lock<std::mutex> job_lock(jobs_mutex_);
    inside_pool_job = true;
    {
      std::lock_guard<std::mutex> lk(m_);
      fn_ = &fn;
      n_ = n;
      pending_ = workers_;
      ++generation_;
    }
    cv_.notify_all();
    work_chunk(workers_, n, fn);
    {
      std::unique_lock<std::mutex> lk(m_);
      done_cv_.wait(lk, [this] { return pending_ == 0; });
      fn_ = nullptr;
    }
    inside_pool_job = false;
  }

  int lanes() const { return workers_ + 1; }

 private:
  void run_worker(int lane) {
    inside_pool_job = true;
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int)>* fn = nullptr;
      int n = 0;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return generation_ != seen; });
        seen = generation_;
        fn = fn_;
        n = n_;
      }
      work_chunk(lane, n, *fn);
      {
        std::lock_guard<std::mutex> lk(m_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  // Static partition: lane k handles [k*n/L, (k+1)*n/L).
  void work_chunk(int lane, int n, const std::function<void(int)>& fn) {
    const int lanes_total = lanes();
    const int lo = static_cast<int>(static_cast<long long>(n) * lane / lanes_total);
    const int hi = static_cast<int>(static_cast<long long>(n) * (lane + 1) / lanes_total);
    for (int i = lo; i < hi; ++i) fn(i);
  }

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex jobs_mutex_;
  std::mutex m_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(int)>* fn_ = nullptr;
  int n_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
};

int configured_threads() {
  if (const char* env = std::getenv("FLOWSEED_THREADS")) {
    const int k = std::atoi(env);
    if (k >= 1) return std::min(k, 64);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 8u));
}

Pool* pool_instance() {
  // Leaked on purpose: workers run until process exit.
  static Pool* pool = [] {
    const int threads = configured_threads();
    return threads <= 1 ? nullptr : new Pool(threads - 1);
  }();
  return pool;
}

}  // namespace

int thread_count() {
  Pool* p = pool_instance();
  return p ? p->lanes() : 1;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  Pool* p = pool_instance();
  if (p == nullptr || inside_pool_job || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  p->run(n, fn);
}

}  // namespace flowseed
