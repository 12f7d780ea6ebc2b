#include "granular/stepper.hpp"

#include <atomic>
#include <bit>
#include <chrono>

#include "granular/error.hpp"
#include "granular/trajectory.hpp"

namespace granular {

const char* to_string(PipelineMode mode)
{
  switch (mode) {
  case PipelineMode::OneLoop: return "one-loop";
  case PipelineMode::TwoLoopsFused: return "two-loops-fused";
  case PipelineMode::TwoLoopsSplit: return "two-loops-split";
  }
  return "?";
}

PipelineMode parse_pipeline_mode(const std::string& name)
{
  if (name == "one-loop")
    return PipelineMode::OneLoop;
  if (name == "two-loops-fused")
    return PipelineMode::TwoLoopsFused;
  if (name == "two-loops-split")
    return PipelineMode::TwoLoopsSplit;
  fail(ErrorKind::InvalidArgument,
       "unknown pipeline mode '" + name + "' (expected one-loop, two-loops-fused or two-loops-split)");
}

size_t apply_cyclic_boundary(std::vector<Vec3>& positions, const CyclicBoundary& boundary)
{
  const double height = boundary.z_max - boundary.z_min;
  size_t wrapped = 0;
  for (Vec3& x : positions)
    if (x.z < boundary.z_min) {
      x.z += height;
      ++wrapped;
    }
  return wrapped;
}

double kinetic_energy(const std::vector<Vec3>& velocities, double particle_mass)
{
  double sum = 0.0;
  for (const Vec3& v : velocities)
    sum += norm2(v);
  return 0.5 * particle_mass * sum;
}

Simulator::Simulator(Scene scene, SimulatorOptions options) : scene_(std::move(scene)), options_(options)
{
  validate(scene_);
  if (options_.workers == 0)
    fail(ErrorKind::InvalidArgument, "workers must be >= 1");
  pool_ = std::make_unique<WorkerPool>(options_.workers);
  update_bodies(scene_);
}

void Simulator::set_workers(size_t workers)
{
  if (workers == 0)
    fail(ErrorKind::InvalidArgument, "workers must be >= 1");
  options_.workers = workers;
  pool_ = std::make_unique<WorkerPool>(workers);
}

SolveContext Simulator::solve_context() const
{
  const MaterialParams& p = scene_.params;
  SolveContext ctx;
  ctx.velocities = scene_.particles.velocities;
  ctx.previous = dv_prev_;
  ctx.gravity_dv = p.gravity * p.timestep;
  ctx.mu = p.friction;
  ctx.alpha = p.baumgarte_alpha;
  ctx.dt = p.timestep;
  ctx.gamma = p.gamma;
  return ctx;
}

void Simulator::solve_owner(const Contact* begin, const Contact* end, int sweep, size_t worker, Vec3& dv)
{
  const SolveContext ctx = solve_context();
  for (const Contact* c = begin; c != end; ++c) {
    const Vec3 b = contact_impulse(*c, ctx);
    if (options_.observer)
      options_.observer->on_impulse(*c, b, sweep);
    const Vec3 delta = contact_velocity_change(*c, b, ctx.gamma);
    dv += delta;
    if (c->kind == ContactKind::ParticleBody)
      body_acc_[worker][c->j] += delta * scene_.params.particle_mass;
  }
}

void Simulator::detect_pass(bool solve_first_sweep, DetectionStats& stats)
{
  const size_t n = scene_.particles.size();
  offsets_.assign(n, 0);
  counts_.assign(n, 0);
  if (contacts_.empty())
    contacts_.resize(std::max<size_t>(64, n * options_.contacts_per_particle));

  const DetectContext dctx{scene_.particles.positions, scene_.params.radius, &map_, scene_.bodies};
  std::vector<std::vector<Contact>> scratch(pool_->size());

  for (;;) {
    std::atomic<size_t> cursor{0};
    for (auto& s : worker_stats_)
      s = DetectionStats{};
    if (solve_first_sweep)
      for (auto& acc : body_acc_)
        std::fill(acc.begin(), acc.end(), Vec3{});

    pool_->parallel_for(n, [&](size_t begin, size_t end, size_t worker) {
      std::vector<Contact>& local = scratch[worker];
      DetectionStats& st = worker_stats_[worker];
      for (size_t i = begin; i < end; ++i) {
        local.clear();
        detect_particle_contacts(dctx, i, [&](const Contact& c) { local.push_back(c); }, st);
        const size_t k = local.size();
        const size_t base = cursor.fetch_add(k, std::memory_order_relaxed);
        offsets_[i] = base;
        counts_[i] = static_cast<uint32_t>(k);
        if (base + k <= contacts_.size())
          std::copy(local.begin(), local.end(), contacts_.begin() + static_cast<std::ptrdiff_t>(base));
        if (solve_first_sweep) {
          Vec3 dv = dv_prev_[i];
          solve_owner(local.data(), local.data() + k, 0, worker, dv);
          dv_next_[i] = dv;
        }
      }
    });

    const size_t needed = cursor.load();
    if (needed <= contacts_.size())
      break;
    contacts_.resize(std::bit_ceil(needed));
    ++regrowths_;
  }

  for (const auto& s : worker_stats_)
    stats.merge(s);
}

void Simulator::sweep_stored(int sweep)
{
  const size_t n = scene_.particles.size();
  pool_->parallel_for(n, [&](size_t begin, size_t end, size_t worker) {
    for (size_t i = begin; i < end; ++i) {
      Vec3 dv = dv_prev_[i];
      const Contact* first = contacts_.data() + offsets_[i];
      solve_owner(first, first + counts_[i], sweep, worker, dv);
      dv_next_[i] = dv;
    }
  });
}

void Simulator::sweep_inline(int sweep, DetectionStats* stats)
{
  const size_t n = scene_.particles.size();
  const DetectContext dctx{scene_.particles.positions, scene_.params.radius, &map_, scene_.bodies};
  for (auto& s : worker_stats_)
    s = DetectionStats{};
  pool_->parallel_for(n, [&](size_t begin, size_t end, size_t worker) {
    DetectionStats& st = worker_stats_[worker];
    const SolveContext ctx = solve_context();
    const double mass = scene_.params.particle_mass;
    for (size_t i = begin; i < end; ++i) {
      Vec3 dv = dv_prev_[i];
      detect_particle_contacts(
          dctx, i,
          [&](const Contact& c) {
            const Vec3 b = contact_impulse(c, ctx);
            if (options_.observer)
              options_.observer->on_impulse(c, b, sweep);
            const Vec3 delta = contact_velocity_change(c, b, ctx.gamma);
            dv += delta;
            if (c.kind == ContactKind::ParticleBody)
              body_acc_[worker][c.j] += delta * mass;
          },
          st);
      dv_next_[i] = dv;
    }
  });
  if (stats)
    for (const auto& s : worker_stats_)
      stats->merge(s);
}

StepReport Simulator::step()
{
  const auto t0 = std::chrono::steady_clock::now();
  const MaterialParams& p = scene_.params;
  const size_t n = scene_.particles.size();
  const size_t workers = pool_->size();

  // Kinematic update of every rheonomic body to the end of the step.
  scene_.time += p.timestep;
  for (TrackVehicle& v : scene_.vehicles)
    v.advance(p.timestep);
  for (KinematicChain& c : scene_.chains)
    c.advance(p.timestep);
  update_bodies(scene_);

  const size_t table = scene_.hashmap_size ? scene_.hashmap_size : default_table_size(n);
  map_.build(scene_.particles.positions, p.radius, table, pool_.get());

  dv_prev_.assign(n, Vec3{});
  dv_next_.assign(n, Vec3{});
  worker_stats_.assign(workers, DetectionStats{});
  body_acc_.assign(workers, std::vector<Vec3>(scene_.bodies.size(), Vec3{}));

  DetectionStats stats;
  switch (options_.mode) {
  case PipelineMode::TwoLoopsSplit:
    detect_pass(false, stats);
    for (int s = 0; s < p.solver_iterations; ++s) {
      sweep_stored(s);
      dv_prev_.swap(dv_next_);
    }
    break;
  case PipelineMode::TwoLoopsFused:
    detect_pass(true, stats);
    dv_prev_.swap(dv_next_);
    for (int s = 1; s < p.solver_iterations; ++s) {
      sweep_stored(s);
      dv_prev_.swap(dv_next_);
    }
    break;
  case PipelineMode::OneLoop:
    for (int s = 0; s < p.solver_iterations; ++s) {
      sweep_inline(s, s == 0 ? &stats : nullptr);
      dv_prev_.swap(dv_next_);
    }
    break;
  }

  // dv_prev_ now holds the converged impulses.
  std::vector<Vec3>& x = scene_.particles.positions;
  std::vector<Vec3>& v = scene_.particles.velocities;
  const Vec3 gdt = p.gravity * p.timestep;
  const double dt = p.timestep;
  pool_->parallel_for(n, [&](size_t begin, size_t end, size_t) {
    for (size_t i = begin; i < end; ++i) {
      v[i] = v[i] + gdt + dv_prev_[i];
      x[i] = x[i] + v[i] * dt;
    }
  });
  if (scene_.boundary)
    apply_cyclic_boundary(x, *scene_.boundary);
  ++step_;

  StepReport r;
  r.step = step_;
  r.time = scene_.time;
  r.n_contacts = stats.particle_contacts;
  r.n_body_contacts = stats.body_contacts;
  r.n_candidates = stats.candidates;
  r.candidate_hit_rate =
      static_cast<double>(stats.particle_contacts) / static_cast<double>(std::max<size_t>(stats.candidates, 1));
  r.max_penetration = stats.max_penetration;
  r.kinetic_energy = kinetic_energy(v, p.particle_mass);
  r.skipped_coincident = stats.skipped_coincident;
  r.skipped_degenerate = stats.skipped_degenerate;
  r.body_impulses.assign(scene_.bodies.size(), Vec3{});
  for (const auto& acc : body_acc_)
    for (size_t b = 0; b < acc.size(); ++b)
      r.body_impulses[b] += acc[b];
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<StepReport> Simulator::run(uint64_t n_steps, TrajectoryWriter* writer, uint64_t stride,
                                       bool keep_reports)
{
  if (stride == 0)
    fail(ErrorKind::InvalidArgument, "trajectory stride must be >= 1");
  std::vector<StepReport> reports;
  if (writer && step_ % stride == 0)
    writer->write(step_, scene_.time, scene_.particles);
  for (uint64_t k = 0; k < n_steps; ++k) {
    StepReport r = step();
    if (writer && step_ % stride == 0)
      writer->write(step_, scene_.time, scene_.particles);
    if (keep_reports)
      reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace granular
