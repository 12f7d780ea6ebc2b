#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace granular {

/// Fixed pool of persistent workers running static-chunked parallel loops.
/// With one worker every loop runs inline on the calling thread, which is the
/// deterministic reference mode used by the tests.
class WorkerPool
{
public:
  using RangeFn = std::function<void(size_t begin, size_t end, size_t worker)>;

  explicit WorkerPool(size_t workers = 1);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  size_t size() const noexcept { return workers_; }
  bool serial() const noexcept { return workers_ == 1; }

  /// Splits [0, count) into one contiguous chunk per worker and blocks until
  /// all chunks finish. Exceptions thrown by a chunk are rethrown here.
  void parallel_for(size_t count, const RangeFn& fn);

private:
  void worker_loop(size_t index);

  size_t workers_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const RangeFn* job_ = nullptr;
  size_t job_count_ = 0;
  size_t generation_ = 0;
  size_t pending_ = 0;
  bool stopping_ = false;
  std::exception_ptr error_;
};

/// Worker count from GRANULAR_WORKERS, falling back to `fallback`.
size_t workers_from_environment(size_t fallback);

}  // namespace granular
