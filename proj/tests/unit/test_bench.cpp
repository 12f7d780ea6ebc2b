#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "granular/bench.hpp"
#include "granular/error.hpp"
#include "granular/scenes.hpp"

using namespace granular;

namespace {

Scene pile(size_t n)
{
  PileConfig cfg;
  cfg.n_particles = n;
  cfg.footprint = 0.05;
  return make_pile_scene(cfg);
}

BenchConfig quick(uint64_t steps)
{
  BenchConfig c;
  c.warmup = 5;
  c.steps = steps;
  return c;
}

}  // namespace

TEST_CASE("relative difference of vector arrays")
{
  CHECK(relative_difference({{1, 2, 3}}, {{1, 2, 3}}) == 0.0);
  CHECK(relative_difference({}, {}) == 0.0);
  CHECK(relative_difference({{1, 0, 0}, {0, -4, 0}}, {{1, 0, 0}, {0, -4, 1}}) == doctest::Approx(0.25));
  CHECK(std::isinf(relative_difference({{1, 0, 0}}, {})));
}

TEST_CASE("power-law fit recovers exact exponents")
{
  std::vector<double> x{1e3, 3e3, 1e4, 3e4, 1e5}, y;
  for (double v : x)
    y.push_back(2.5 * std::pow(v, 1.3));
  CHECK(fit_power_law(x, y) == doctest::Approx(1.3).epsilon(1e-12));
  for (double& v : y)
    v = 7.0;
  CHECK(fit_power_law(x, y) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(fit_power_law({1.0}, {1.0}), Error);
  CHECK_THROWS_AS(fit_power_law({1.0, 2.0}, {1.0, -1.0}), Error);
  CHECK_THROWS_AS(fit_power_law({1.0, 2.0}, {1.0}), Error);
}

TEST_CASE("log spacing hits both ends")
{
  CHECK(log_spaced(1000, 100000, 5) == std::vector<size_t>{1000, 3162, 10000, 31623, 100000});
  CHECK(log_spaced(7, 7, 3) == std::vector<size_t>{7, 7, 7});
  CHECK(log_spaced(10, 1000, 1) == std::vector<size_t>{10});
  CHECK_THROWS_AS(log_spaced(0, 10, 3), Error);
  CHECK_THROWS_AS(log_spaced(10, 5, 3), Error);
}

TEST_CASE("bench rows: speedup times wall time is simulated time")
{
  const BenchResult r = run_bench(pile(200), quick(20), "tag");
  CHECK(r.label == "tag");
  CHECK(r.n_particles == 200);
  CHECK(r.steps == 20);
  CHECK(r.simulated_time == doctest::Approx(0.02));
  CHECK(r.wall_time > 0.0);
  CHECK(r.speedup * r.wall_time == doctest::Approx(r.simulated_time));
  CHECK(r.step_wall_sum <= r.wall_time * 1.0001);
  CHECK(r.hashmap_size == default_table_size(200));
  CHECK(r.hit_rate >= 0.0);
  CHECK(r.hit_rate <= 1.0);
  CHECK_THROWS_AS(run_bench(pile(10), [] {
                    BenchConfig c;
                    c.repeats = 0;
                    return c;
                  }()),
                  Error);
}

TEST_CASE("hash-size sweep keeps order and labels")
{
  const auto rows = sweep_hashsize(pile(150), {64, 1, 4096}, quick(5));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].label == "n_h=64");
  CHECK(rows[1].hashmap_size == 1);
  CHECK(rows[2].hashmap_size == 4096);
  CHECK(rows[0].mean_contacts == rows[2].mean_contacts);
  CHECK(rows[1].mean_candidates >= rows[2].mean_candidates);
  CHECK_THROWS_AS(sweep_hashsize(pile(10), {}, quick(1)), Error);
  CHECK_THROWS_AS(sweep_hashsize(pile(10), {0}, quick(1)), Error);
}

TEST_CASE("pipeline comparison reports equivalence")
{
  const PipelineComparison c = compare_pipelines(pile(200), 30, quick(5));
  CHECK(c.equivalent);
  CHECK_FALSE(c.first_divergent_step.has_value());
  CHECK(c.max_relative_difference == 0.0);
  CHECK(c.timings.size() == 3);
  CHECK(c.hit_rate > 0.0);

  const PipelineComparison empty = compare_pipelines(Scene{}, 5, quick(1));
  CHECK(empty.equivalent);
  CHECK(empty.hit_rate == 0.0);
}

TEST_CASE("scaling rows carry the requested counts")
{
  const auto rows = scale_particles({200, 400}, 1, 3, quick(3));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].label == "n_p=200");
  CHECK(rows[1].n_particles == 400);
  const auto bodies = scale_bodies({0, 2}, 200, 3, quick(3));
  CHECK(bodies[0].label == "n_b=0");
  CHECK(bodies[1].n_bodies > bodies[0].n_bodies);
}

TEST_CASE("CSV output has a header and one line per row")
{
  BenchResult r;
  r.label = "x";
  r.n_particles = 3;
  r.speedup = 0.5;
  std::ostringstream out;
  write_bench_csv(out, {r, r});
  const std::string s = out.str();
  CHECK(s.rfind(bench_csv_header() + "\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 3);
  CHECK(s.find("\nx,3,0,0,two-loops-split,1,0,0,0,0.5,0,0,0,0\n") != std::string::npos);
  size_t commas = 0;
  for (char ch : bench_csv_header())
    commas += ch == ',';
  CHECK(commas == 13);
}
