#include "granular/broadphase.hpp"

#include <atomic>
#include <bit>
#include <cmath>

#include "granular/error.hpp"
#include "granular/parallel.hpp"

namespace granular {

CellCoord cell_of(const Vec3& x, double cell_size)
{
  return {static_cast<int64_t>(std::round(x.x / cell_size)), static_cast<int64_t>(std::round(x.y / cell_size)),
          static_cast<int64_t>(std::round(x.z / cell_size))};
}

size_t spatial_hash(const CellCoord& cell, size_t table_size)
{
  // Products are formed in wrapping unsigned arithmetic; for any realistic
  // cell index they fit in int64, so the bit pattern equals the signed value.
  uint64_t v = 0;
  for (int j = 0; j < 3; ++j)
    v ^= static_cast<uint64_t>(kHashPrimes[j]) * static_cast<uint64_t>(cell[static_cast<size_t>(j)] - kHashOffset);
  const int64_t s = static_cast<int64_t>(v);
  const int64_t n = static_cast<int64_t>(table_size);
  if ((table_size & (table_size - 1)) == 0)
    return static_cast<size_t>(v & (table_size - 1));
  const int64_t m = s % n;
  return static_cast<size_t>(m < 0 ? m + n : m);
}

size_t default_table_size(size_t particle_count)
{
  return std::bit_ceil(std::max<size_t>(1, 2 * particle_count));
}

void SpatialHashmap::build(std::span<const Vec3> positions, double radius, size_t table_size, WorkerPool* pool)
{
  if (table_size == 0)
    fail(ErrorKind::InvalidArgument, "hashmap size must be at least 1");
  if (positions.size() >= static_cast<size_t>(INT32_MAX))
    fail(ErrorKind::InvalidArgument, "too many particles for 32-bit chain indices");

  cell_size_ = 2.0 * radius;
  table_.assign(table_size, kEmptySlot);
  next_.resize(positions.size());
  bucket_.resize(positions.size());

  if (!pool || pool->serial()) {
    for (size_t i = 0; i < positions.size(); ++i) {
      const size_t h = spatial_hash(cell_of(positions[i], cell_size_), table_size);
      bucket_[i] = h;
      next_[i] = table_[h];
      table_[h] = static_cast<int32_t>(i);
    }
    return;
  }

  pool->parallel_for(positions.size(), [&](size_t begin, size_t end, size_t) {
    for (size_t i = begin; i < end; ++i) {
      const size_t h = spatial_hash(cell_of(positions[i], cell_size_), table_size);
      bucket_[i] = h;
      std::atomic_ref<int32_t> slot(table_[h]);
      int32_t head = slot.load(std::memory_order_relaxed);
      while (!slot.compare_exchange_weak(head, static_cast<int32_t>(i), std::memory_order_acq_rel,
                                         std::memory_order_relaxed)) {
      }
      next_[i] = head;
    }
  });
}

std::vector<size_t> query_candidates(const SpatialHashmap& map, std::span<const Vec3> positions, size_t i)
{
  std::vector<size_t> out;
  map.for_each_candidate(positions, i, [&](size_t j) { out.push_back(j); });
  return out;
}

std::vector<std::pair<size_t, size_t>> brute_force_pairs(std::span<const Vec3> positions, double r)
{
  std::vector<std::pair<size_t, size_t>> out;
  const double limit = 4.0 * r * r;
  for (size_t i = 0; i < positions.size(); ++i)
    for (size_t j = i + 1; j < positions.size(); ++j)
      if (norm2(positions[i] - positions[j]) <= limit)
        out.emplace_back(i, j);
  return out;
}

}  // namespace granular
