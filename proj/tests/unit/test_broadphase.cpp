#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "granular/broadphase.hpp"
#include "granular/contact.hpp"
#include "granular/error.hpp"
#include "granular/parallel.hpp"

using namespace granular;

namespace {

std::vector<Vec3> random_cloud(size_t n, double box, uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-box, box);
  std::vector<Vec3> x(n);
  for (Vec3& p : x)
    p = {u(rng), u(rng), u(rng)};
  return x;
}

std::set<std::pair<size_t, size_t>> hashed_pairs(const std::vector<Vec3>& x, double r, size_t table)
{
  SpatialHashmap map;
  map.build(x, r, table);
  std::set<std::pair<size_t, size_t>> out;
  for (const Contact& c : detect_contacts(x, r, map, {}))
    if (c.i < c.j)
      out.emplace(c.i, c.j);
  return out;
}

}  // namespace

TEST_CASE("hash values are frozen")
{
  CHECK(spatial_hash({0, 0, 0}, 65536) == 22220);
  CHECK(spatial_hash({0, 0, 0}, 20000) == 7564);
  CHECK(spatial_hash({3, -7, 12}, 20000) == 15280);
  CHECK(spatial_hash({-250, 40, -3}, 1000) == 729);
  CHECK(spatial_hash({1, 2, 3}, 16) == 2);
  CHECK(spatial_hash({150, 150, 150}, 20000) == 16218);
  CHECK(spatial_hash({5, 5, 5}, 1) == 0);
}

TEST_CASE("hash is always inside the table")
{
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int64_t> c(-100000, 100000);
  for (size_t n : {1u, 7u, 1000u, 4096u, 20000u})
    for (int k = 0; k < 2000; ++k)
      CHECK(spatial_hash({c(rng), c(rng), c(rng)}, n) < n);
}

TEST_CASE("cells round half away from zero")
{
  CHECK(cell_of({0.0, 0.0, 0.0}, 0.02) == CellCoord{0, 0, 0});
  CHECK(cell_of({0.01, -0.01, 0.0099}, 0.02) == CellCoord{1, -1, 0});
  CHECK(cell_of({0.031, -0.049, 0.05}, 0.02) == CellCoord{2, -2, 3});
}

TEST_CASE("default table size is twice the particle count rounded up to a power of two")
{
  CHECK(default_table_size(0) == 1);
  CHECK(default_table_size(1) == 2);
  CHECK(default_table_size(1000) == 2048);
  CHECK(default_table_size(1024) == 2048);
  CHECK(default_table_size(10000) == 32768);
}

TEST_CASE("every particle sits in exactly one chain, the one of its cell")
{
  const double r = 0.01;
  const auto x = random_cloud(3000, 0.2, 5);
  SpatialHashmap map;
  map.build(x, r, 1500);
  CHECK(map.cell_size() == 2 * r);
  std::vector<int> seen(x.size(), 0);
  for (size_t b = 0; b < map.table_size(); ++b)
    for (int32_t j = map.head(b); j != kEmptySlot; j = map.next(static_cast<size_t>(j))) {
      ++seen[static_cast<size_t>(j)];
      CHECK(spatial_hash(cell_of(x[static_cast<size_t>(j)], 2 * r), 1500) == b);
      CHECK(map.bucket_of(static_cast<size_t>(j)) == b);
    }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

TEST_CASE("parallel build holds the same bucket membership as the serial build")
{
  const double r = 0.01;
  const auto x = random_cloud(5000, 0.15, 6);
  SpatialHashmap serial, parallel;
  serial.build(x, r, 4096);
  WorkerPool pool(4);
  parallel.build(x, r, 4096, &pool);
  for (size_t b = 0; b < 4096; ++b) {
    std::set<int32_t> a, c;
    for (int32_t j = serial.head(b); j != kEmptySlot; j = serial.next(static_cast<size_t>(j)))
      a.insert(j);
    for (int32_t j = parallel.head(b); j != kEmptySlot; j = parallel.next(static_cast<size_t>(j)))
      c.insert(j);
    CHECK(a == c);
  }
}

TEST_CASE("candidates cover every neighbor once and never the query particle")
{
  const double r = 0.01;
  const auto x = random_cloud(800, 0.1, 7);
  for (size_t table : {size_t{1}, size_t{13}, size_t{1600}}) {
    SpatialHashmap map;
    map.build(x, r, table);
    for (size_t i = 0; i < x.size(); i += 37) {
      const auto cand = query_candidates(map, x, i);
      const std::set<size_t> unique(cand.begin(), cand.end());
      CHECK(unique.size() == cand.size());
      CHECK(unique.count(i) == 0);
      for (size_t j = 0; j < x.size(); ++j)
        if (j != i && norm(x[i] - x[j]) <= 2 * r)
          CHECK(unique.count(j) == 1);
    }
    if (table == 1) {
      CHECK(query_candidates(map, x, 0).size() == x.size() - 1);
    }
  }
}

TEST_CASE("hashmap narrowphase equals brute force on random clouds")
{
  const double r = 0.01;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_cloud(400, 0.08, 100 + seed);
    std::set<std::pair<size_t, size_t>> brute;
    for (const auto& [i, j] : brute_force_pairs(x, r))
      if (norm(x[i] - x[j]) < 2 * r)
        brute.emplace(i, j);
    CHECK(hashed_pairs(x, r, default_table_size(x.size())) == brute);
    CHECK(hashed_pairs(x, r, 37) == brute);
  }
}

TEST_CASE("far-apart particles whose cells alias are candidates but not contacts")
{
  const double r = 0.01;
  std::vector<Vec3> x{{0, 0, 0}, {10, 10, 10}};
  SpatialHashmap map;
  map.build(x, r, 1);
  CHECK(query_candidates(map, x, 0) == std::vector<size_t>{1});
  DetectionStats st;
  CHECK(detect_contacts(x, r, map, {}, &st).empty());
  CHECK(st.candidates == 2);
}

TEST_CASE("broadphase input errors")
{
  SpatialHashmap map;
  std::vector<Vec3> x{{0, 0, 0}};
  CHECK_THROWS_AS(map.build(x, 0.01, 0), Error);
}
