#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "granular/scene.hpp"
#include "granular/stepper.hpp"

namespace granular {

struct BenchConfig
{
  uint64_t warmup = 50;
  uint64_t steps = 1000;
  PipelineMode mode = PipelineMode::TwoLoopsSplit;
  size_t workers = 1;
  size_t hashmap_size = 0;  ///< 0 keeps the scene's setting
  int repeats = 1;          ///< best (shortest) timed run is reported
};

struct BenchResult
{
  std::string label;
  size_t n_particles = 0;
  size_t n_bodies = 0;
  size_t hashmap_size = 0;
  PipelineMode mode = PipelineMode::TwoLoopsSplit;
  size_t workers = 1;
  uint64_t steps = 0;
  double wall_time = 0.0;       ///< s, timed steps only
  double step_wall_sum = 0.0;   ///< s, sum of per-step report timings
  double simulated_time = 0.0;  ///< steps * dt
  double speedup = 0.0;         ///< simulated / wall
  double mean_contacts = 0.0;
  double mean_candidates = 0.0;
  double hit_rate = 0.0;
  double max_penetration = 0.0;
};

/// Runs warm-up steps (untimed), then the timed steps, on a copy of the scene.
BenchResult run_bench(const Scene& scene, const BenchConfig& config, const std::string& label = "");

/// One row per table size, in the given order.
std::vector<BenchResult> sweep_hashsize(const Scene& scene, const std::vector<size_t>& sizes,
                                        const BenchConfig& config);

struct PipelineComparison
{
  std::vector<BenchResult> timings;  ///< one per mode
  bool equivalent = true;
  std::optional<uint64_t> first_divergent_step;
  std::string divergence;            ///< description of the first mismatch
  double max_relative_difference = 0.0;
  double hit_rate = 0.0;             ///< mean over steps, from the split run
};

/// Steps all three pipeline modes in lockstep from the same scene, checking
/// per-step contact counts and states, then times each mode.
PipelineComparison compare_pipelines(const Scene& scene, uint64_t steps, const BenchConfig& timing);

/// Relative difference max|a-b| / max(max|a|, max|b|), 0 for equal arrays.
double relative_difference(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// Gear-tower rows over particle counts (fixed body count) or body counts
/// (fixed particle count).
std::vector<BenchResult> scale_particles(const std::vector<size_t>& counts, size_t n_bodies, uint64_t seed,
                                         const BenchConfig& config);
std::vector<BenchResult> scale_bodies(const std::vector<size_t>& counts, size_t n_particles, uint64_t seed,
                                      const BenchConfig& config);

/// Least-squares slope of log(y) against log(x).
double fit_power_law(const std::vector<double>& x, const std::vector<double>& y);

/// n values log-spaced between lo and hi inclusive.
std::vector<size_t> log_spaced(size_t lo, size_t hi, size_t n);

void write_bench_csv(std::ostream& out, const std::vector<BenchResult>& rows);
std::string bench_csv_header();

}  // namespace granular
