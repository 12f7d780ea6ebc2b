#include "granular/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace granular {

namespace {

std::pair<size_t, size_t> chunk(size_t count, size_t parts, size_t index)
{
  const size_t base = count / parts;
  const size_t extra = count % parts;
  const size_t begin = index * base + std::min(index, extra);
  return {begin, begin + base + (index < extra ? 1 : 0)};
}

}  // namespace

WorkerPool::WorkerPool(size_t workers) : workers_(std::max<size_t>(1, workers))
{
  // Worker 0 is the calling thread.
  for (size_t i = 1; i < workers_; ++i)
    threads_.emplace_back([this, i] { worker_loop(i); });
}

WorkerPool::~WorkerPool()
{
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_)
    t.join();
}

void WorkerPool::parallel_for(size_t count, const RangeFn& fn)
{
  if (count == 0)
    return;
  if (workers_ == 1) {
    fn(0, count, 0);
    return;
  }

  {
    std::lock_guard lock(mutex_);
    job_ = &fn;
    job_count_ = count;
    pending_ = workers_ - 1;
    error_ = nullptr;
    ++generation_;
  }
  start_cv_.notify_all();

  std::exception_ptr local;
  try {
    const auto [b, e] = chunk(count, workers_, 0);
    if (b < e)
      fn(b, e, 0);
  } catch (...) {
    local = std::current_exception();
  }

  std::unique_lock lock(mutex_);
  done_cv_.wait(lock, [this] { return pending_ == 0; });
  job_ = nullptr;
  if (local)
    std::rethrow_exception(local);
  if (error_)
    std::rethrow_exception(error_);
}

void WorkerPool::worker_loop(size_t index)
{
  size_t seen = 0;
  for (;;) {
    const RangeFn* job = nullptr;
    size_t count = 0;
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stopping_ || generation_ != seen; });
      if (stopping_)
        return;
      seen = generation_;
      job = job_;
      count = job_count_;
    }

    try {
      const auto [b, e] = chunk(count, workers_, index);
      if (b < e)
        (*job)(b, e, index);
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_)
        error_ = std::current_exception();
    }

    {
      std::lock_guard lock(mutex_);
      --pending_;
    }
    done_cv_.notify_one();
  }
}

size_t workers_from_environment(size_t fallback)
{
  if (const char* env = std::getenv("GRANULAR_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1)
        return static_cast<size_t>(v);
    } catch (...) {
    }
  }
  return fallback;
}

}  // namespace granular
