#include "granular/bench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "granular/error.hpp"
#include "granular/scenes.hpp"

namespace granular {

BenchResult run_bench(const Scene& scene, const BenchConfig& config, const std::string& label)
{
  if (config.repeats < 1)
    fail(ErrorKind::InvalidArgument, "bench repeats must be >= 1");
  BenchResult best;
  for (int rep = 0; rep < config.repeats; ++rep) {
    Scene copy = scene;
    if (config.hashmap_size)
      copy.hashmap_size = config.hashmap_size;
    SimulatorOptions opts;
    opts.mode = config.mode;
    opts.workers = config.workers;
    Simulator sim(std::move(copy), opts);
    for (uint64_t k = 0; k < config.warmup; ++k)
      sim.step();

    BenchResult r;
    r.label = label;
    r.n_particles = sim.scene().particles.size();
    r.n_bodies = sim.scene().bodies.size();
    r.hashmap_size = sim.scene().hashmap_size ? sim.scene().hashmap_size : default_table_size(r.n_particles);
    r.mode = config.mode;
    r.workers = config.workers;
    r.steps = config.steps;
    double contacts = 0.0, candidates = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    for (uint64_t k = 0; k < config.steps; ++k) {
      const StepReport s = sim.step();
      r.step_wall_sum += s.wall_time;
      contacts += static_cast<double>(s.n_contacts);
      candidates += static_cast<double>(s.n_candidates);
      r.max_penetration = std::fmax(r.max_penetration, s.max_penetration);
    }
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.simulated_time = static_cast<double>(config.steps) * sim.scene().params.timestep;
    r.speedup = r.wall_time > 0.0 ? r.simulated_time / r.wall_time : 0.0;
    if (config.steps > 0) {
      r.mean_contacts = contacts / static_cast<double>(config.steps);
      r.mean_candidates = candidates / static_cast<double>(config.steps);
    }
    r.hit_rate = contacts / std::max(candidates, 1.0);
    if (rep == 0 || r.wall_time < best.wall_time)
      best = r;
  }
  return best;
}

std::vector<BenchResult> sweep_hashsize(const Scene& scene, const std::vector<size_t>& sizes,
                                        const BenchConfig& config)
{
  if (sizes.empty())
    fail(ErrorKind::InvalidArgument, "hash size sweep needs at least one size");
  std::vector<BenchResult> rows;
  for (size_t n_h : sizes) {
    if (n_h == 0)
      fail(ErrorKind::InvalidArgument, "hash table size must be >= 1");
    BenchConfig c = config;
    c.hashmap_size = n_h;
    rows.push_back(run_bench(scene, c, "n_h=" + std::to_string(n_h)));
  }
  return rows;
}

double relative_difference(const std::vector<Vec3>& a, const std::vector<Vec3>& b)
{
  if (a.size() != b.size())
    return std::numeric_limits<double>::infinity();
  double diff = 0.0, scale = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t k = 0; k < 3; ++k) {
      diff = std::fmax(diff, std::fabs(a[i][k] - b[i][k]));
      scale = std::fmax(scale, std::fmax(std::fabs(a[i][k]), std::fabs(b[i][k])));
    }
  return diff == 0.0 ? 0.0 : diff / scale;
}

PipelineComparison compare_pipelines(const Scene& scene, uint64_t steps, const BenchConfig& timing)
{
  constexpr PipelineMode modes[3] = {PipelineMode::OneLoop, PipelineMode::TwoLoopsFused,
                                     PipelineMode::TwoLoopsSplit};
  PipelineComparison out;
  std::vector<std::unique_ptr<Simulator>> sims;
  for (PipelineMode m : modes) {
    SimulatorOptions o;
    o.mode = m;
    o.workers = timing.workers;
    sims.push_back(std::make_unique<Simulator>(scene, o));
  }

  double contacts = 0.0, candidates = 0.0;
  for (uint64_t k = 0; k < steps; ++k) {
    StepReport reports[3];
    for (size_t m = 0; m < 3; ++m)
      reports[m] = sims[m]->step();
    contacts += static_cast<double>(reports[2].n_contacts);
    candidates += static_cast<double>(reports[2].n_candidates);
    for (size_t m = 0; m < 2; ++m) {
      const StepReport& a = reports[m];
      const StepReport& b = reports[2];
      std::string why;
      if (a.n_contacts != b.n_contacts || a.n_body_contacts != b.n_body_contacts)
        why = std::string(to_string(modes[m])) + " found " + std::to_string(a.n_contacts) + "+" +
              std::to_string(a.n_body_contacts) + " contacts, two-loops-split " + std::to_string(b.n_contacts) + "+" +
              std::to_string(b.n_body_contacts);
      const double dx = relative_difference(sims[m]->scene().particles.positions, sims[2]->scene().particles.positions);
      const double dv =
          relative_difference(sims[m]->scene().particles.velocities, sims[2]->scene().particles.velocities);
      out.max_relative_difference = std::fmax(out.max_relative_difference, std::fmax(dx, dv));
      if (why.empty() && std::fmax(dx, dv) > 1e-12)
        why = std::string(to_string(modes[m])) + " state differs from two-loops-split by " + std::to_string(dx) +
              " (positions) / " + std::to_string(dv) + " (velocities) relative";
      if (!why.empty() && out.equivalent) {
        out.equivalent = false;
        out.first_divergent_step = k + 1;
        out.divergence = "step " + std::to_string(k + 1) + ": " + why;
      }
    }
  }
  out.hit_rate = contacts / std::max(candidates, 1.0);

  for (PipelineMode m : modes) {
    BenchConfig c = timing;
    c.mode = m;
    out.timings.push_back(run_bench(scene, c, to_string(m)));
  }
  return out;
}

std::vector<BenchResult> scale_particles(const std::vector<size_t>& counts, size_t n_bodies, uint64_t seed,
                                         const BenchConfig& config)
{
  std::vector<BenchResult> rows;
  for (size_t n : counts) {
    GearTowerConfig g;
    g.n_bodies = n_bodies;
    g.n_particles = n;
    g.seed = seed;
    rows.push_back(run_bench(make_gear_tower_scene(g), config, "n_p=" + std::to_string(n)));
  }
  return rows;
}

std::vector<BenchResult> scale_bodies(const std::vector<size_t>& counts, size_t n_particles, uint64_t seed,
                                      const BenchConfig& config)
{
  std::vector<BenchResult> rows;
  for (size_t b : counts) {
    GearTowerConfig g;
    g.n_bodies = b;
    g.n_particles = n_particles;
    g.seed = seed;
    rows.push_back(run_bench(make_gear_tower_scene(g), config, "n_b=" + std::to_string(b)));
  }
  return rows;
}

double fit_power_law(const std::vector<double>& x, const std::vector<double>& y)
{
  if (x.size() != y.size() || x.size() < 2)
    fail(ErrorKind::InvalidArgument, "power-law fit needs at least two (x, y) pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0))
      fail(ErrorKind::InvalidArgument, "power-law fit needs positive values");
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0)
    fail(ErrorKind::InvalidArgument, "power-law fit needs distinct x values");
  return (n * sxy - sx * sy) / den;
}

std::vector<size_t> log_spaced(size_t lo, size_t hi, size_t n)
{
  if (lo == 0 || hi < lo || n == 0)
    fail(ErrorKind::InvalidArgument, "log_spaced needs 0 < lo <= hi and n >= 1");
  std::vector<size_t> out;
  if (n == 1)
    return {lo};
  const double a = std::log(static_cast<double>(lo)), b = std::log(static_cast<double>(hi));
  for (size_t k = 0; k < n; ++k)
    out.push_back(static_cast<size_t>(std::llround(std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1)))));
  return out;
}

std::string bench_csv_header()
{
  return "label,n_particles,n_bodies,hashmap_size,mode,workers,steps,wall_time_s,simulated_time_s,speedup,"
         "mean_contacts,mean_candidates,hit_rate,max_penetration_m";
}

void write_bench_csv(std::ostream& out, const std::vector<BenchResult>& rows)
{
  out << bench_csv_header() << '\n';
  for (const BenchResult& r : rows) {
    std::ostringstream line;
    line.precision(9);
    line << r.label << ',' << r.n_particles << ',' << r.n_bodies << ',' << r.hashmap_size << ',' << to_string(r.mode)
         << ',' << r.workers << ',' << r.steps << ',' << r.wall_time << ',' << r.simulated_time << ',' << r.speedup
         << ',' << r.mean_contacts << ',' << r.mean_candidates << ',' << r.hit_rate << ',' << r.max_penetration;
    out << line.str() << '\n';
  }
}

}  // namespace granular
