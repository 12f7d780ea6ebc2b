#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "granular/vec.hpp"

namespace granular {

class WorkerPool;

using CellCoord = std::array<int64_t, 3>;

inline constexpr int32_t kEmptySlot = -1;
inline constexpr int64_t kHashPrimes[3] = {73856093, 19349663, 83492791};
inline constexpr int64_t kHashOffset = 100;

/// Cell of a position: round-half-away-from-zero of x / cell_size per axis.
CellCoord cell_of(const Vec3& x, double cell_size);

/// XOR of p_j * (c_j - q), reduced as ((v mod n) + n) mod n so negative
/// intermediates are well defined.
size_t spatial_hash(const CellCoord& cell, size_t table_size);

/// Default table size: twice the particle count, rounded up to a power of two.
size_t default_table_size(size_t particle_count);

/// Linked spatial hashmap: `table` holds the head particle of each bucket and
/// `next` links particles of the same bucket. Buckets are not re-checked for
/// cell equality during traversal, so aliased cells produce extra candidates
/// that the narrowphase rejects.
class SpatialHashmap
{
public:
  /// Rebuilds from scratch. With a pool of more than one worker the heads are
  /// inserted with a compare-and-swap loop and chain order is unspecified;
  /// otherwise insertion is serial in index order.
  void build(std::span<const Vec3> positions, double radius, size_t table_size, WorkerPool* pool = nullptr);

  size_t table_size() const noexcept { return table_.size(); }
  size_t particle_count() const noexcept { return next_.size(); }
  double cell_size() const noexcept { return cell_size_; }
  int32_t head(size_t bucket) const noexcept { return table_[bucket]; }
  int32_t next(size_t particle) const noexcept { return next_[particle]; }
  size_t bucket_of(size_t particle) const noexcept { return bucket_[particle]; }

  /// Calls fn(j) for every particle j != i in the 27 cells around particle i.
  /// Each bucket is walked at most once per query even if neighboring cells
  /// alias. Returns the number of candidates visited.
  template <typename Fn>
  size_t for_each_candidate(std::span<const Vec3> positions, size_t i, Fn&& fn) const
  {
    return walk(positions[i], i, fn);
  }

private:
  template <typename Visit>
  size_t walk(const Vec3& xi, size_t i, Visit&& visit) const
  {
    const CellCoord c = cell_of(xi, cell_size_);
    size_t visited_buckets[27];
    size_t n_visited = 0;
    size_t candidates = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const size_t h = spatial_hash({c[0] + dx, c[1] + dy, c[2] + dz}, table_.size());
          bool seen = false;
          for (size_t k = 0; k < n_visited; ++k)
            seen = seen || visited_buckets[k] == h;
          if (seen)
            continue;
          visited_buckets[n_visited++] = h;
          for (int32_t j = table_[h]; j != kEmptySlot;) {
            if (static_cast<size_t>(j) != i) {
              ++candidates;
              visit(static_cast<size_t>(j));
            }
            j = next_[static_cast<size_t>(j)];
          }
        }
    return candidates;
  }

  std::vector<int32_t> table_;
  std::vector<int32_t> next_;
  std::vector<size_t> bucket_;
  double cell_size_ = 1.0;
};

/// Candidate indices for particle i (see SpatialHashmap::for_each_candidate).
std::vector<size_t> query_candidates(const SpatialHashmap& map, std::span<const Vec3> positions, size_t i);

/// Exact all-pairs test ||x_i - x_j||^2 <= (2r)^2, pairs with i < j.
std::vector<std::pair<size_t, size_t>> brute_force_pairs(std::span<const Vec3> positions, double r);

}  // namespace granular
