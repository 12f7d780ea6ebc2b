#include "granular/granular.h"

#include <chrono>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "granular/bench.hpp"
#include "granular/env.hpp"
#include "granular/error.hpp"
#include "granular/scenes.hpp"
#include "granular/stepper.hpp"
#include "granular/trajectory.hpp"

struct gr_sim
{
  std::unique_ptr<granular::Simulator> sim;
};

struct gr_env
{
  std::unique_ptr<granular::Environment> env;
};

namespace {

using namespace granular;

thread_local std::string g_last_error;

gr_status status_of(ErrorKind kind)
{
  switch (kind) {
  case ErrorKind::InvalidArgument: return GR_ERR_INVALID_ARGUMENT;
  case ErrorKind::Parse: return GR_ERR_PARSE;
  case ErrorKind::Validation: return GR_ERR_VALIDATION;
  case ErrorKind::Io: return GR_ERR_IO;
  case ErrorKind::Numeric: return GR_ERR_NUMERIC;
  case ErrorKind::State: return GR_ERR_STATE;
  }
  return GR_ERR_INTERNAL;
}

template <typename Fn>
gr_status guarded(Fn&& fn)
{
  try {
    fn();
    g_last_error.clear();
    return GR_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return GR_ERR_INTERNAL;
  }
}

template <typename T>
void require(const T* p, const char* what)
{
  if (!p)
    fail(ErrorKind::InvalidArgument, std::string(what) + " must not be null");
}

Simulator& sim_of(gr_sim* s)
{
  require(s, "simulation handle");
  return *s->sim;
}

const Simulator& sim_of(const gr_sim* s)
{
  require(s, "simulation handle");
  return *s->sim;
}

Environment& env_of(gr_env* e)
{
  require(e, "environment handle");
  return *e->env;
}

const Environment& env_of(const gr_env* e)
{
  require(e, "environment handle");
  return *e->env;
}

PipelineMode to_mode(gr_mode m)
{
  switch (m) {
  case GR_MODE_ONE_LOOP: return PipelineMode::OneLoop;
  case GR_MODE_TWO_LOOPS_FUSED: return PipelineMode::TwoLoopsFused;
  case GR_MODE_TWO_LOOPS_SPLIT: return PipelineMode::TwoLoopsSplit;
  }
  fail(ErrorKind::InvalidArgument, "unknown pipeline mode " + std::to_string(static_cast<int>(m)));
}

gr_mode from_mode(PipelineMode m)
{
  switch (m) {
  case PipelineMode::OneLoop: return GR_MODE_ONE_LOOP;
  case PipelineMode::TwoLoopsFused: return GR_MODE_TWO_LOOPS_FUSED;
  case PipelineMode::TwoLoopsSplit: return GR_MODE_TWO_LOOPS_SPLIT;
  }
  return GR_MODE_TWO_LOOPS_SPLIT;
}

void copy_string(char* dst, size_t n, const std::string& src)
{
  const size_t k = std::min(n - 1, src.size());
  std::memcpy(dst, src.data(), k);
  dst[k] = '\0';
}

char* dup_string(const std::string& s)
{
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

BenchConfig to_bench(const gr_bench_config* c)
{
  BenchConfig b;
  if (c) {
    b.warmup = c->warmup;
    b.steps = c->steps;
    b.mode = to_mode(c->mode);
    b.workers = c->workers;
    b.repeats = c->repeats;
  }
  if (b.workers == 0)
    fail(ErrorKind::InvalidArgument, "workers must be >= 1");
  if (b.repeats < 1)
    fail(ErrorKind::InvalidArgument, "repeats must be >= 1");
  return b;
}

gr_bench_row to_row(const BenchResult& r)
{
  gr_bench_row row{};
  copy_string(row.label, sizeof row.label, r.label);
  row.n_particles = r.n_particles;
  row.n_bodies = r.n_bodies;
  row.hashmap_size = r.hashmap_size;
  row.mode = from_mode(r.mode);
  row.workers = r.workers;
  row.steps = r.steps;
  row.wall_time = r.wall_time;
  row.simulated_time = r.simulated_time;
  row.speedup = r.speedup;
  row.mean_contacts = r.mean_contacts;
  row.mean_candidates = r.mean_candidates;
  row.hit_rate = r.hit_rate;
  row.max_penetration = r.max_penetration;
  return row;
}

BenchResult from_row(const gr_bench_row& row)
{
  BenchResult r;
  r.label = row.label;
  r.n_particles = row.n_particles;
  r.n_bodies = row.n_bodies;
  r.hashmap_size = row.hashmap_size;
  r.mode = to_mode(row.mode);
  r.workers = row.workers;
  r.steps = row.steps;
  r.wall_time = row.wall_time;
  r.simulated_time = row.simulated_time;
  r.speedup = row.speedup;
  r.mean_contacts = row.mean_contacts;
  r.mean_candidates = row.mean_candidates;
  r.hit_rate = row.hit_rate;
  r.max_penetration = row.max_penetration;
  return r;
}

void fill_report(gr_step_report* out, const StepReport& r)
{
  out->step = r.step;
  out->time = r.time;
  out->wall_time = r.wall_time;
  out->n_contacts = r.n_contacts;
  out->n_body_contacts = r.n_body_contacts;
  out->n_candidates = r.n_candidates;
  out->hit_rate = r.candidate_hit_rate;
  out->max_penetration = r.max_penetration;
  out->kinetic_energy = r.kinetic_energy;
  out->skipped_coincident = r.skipped_coincident;
  out->skipped_degenerate = r.skipped_degenerate;
}

void copy_vectors(const std::vector<Vec3>& src, double* out, size_t capacity)
{
  require(out, "output buffer");
  if (capacity < 3 * src.size())
    fail(ErrorKind::InvalidArgument, "output buffer holds " + std::to_string(capacity) + " doubles, need " +
                                         std::to_string(3 * src.size()));
  for (size_t i = 0; i < src.size(); ++i) {
    out[3 * i] = src[i].x;
    out[3 * i + 1] = src[i].y;
    out[3 * i + 2] = src[i].z;
  }
}

void fill_grid_info(gr_grid_info* info, const SdfGrid& g)
{
  info->nx = static_cast<size_t>(g.dims[0]);
  info->ny = static_cast<size_t>(g.dims[1]);
  info->nz = static_cast<size_t>(g.dims[2]);
  info->origin[0] = g.origin.x;
  info->origin[1] = g.origin.y;
  info->origin[2] = g.origin.z;
  info->spacing = g.spacing.x;
  info->mesh_hash = g.mesh_hash;
}

void store_sim(gr_sim** out, Scene scene)
{
  require(out, "output handle");
  auto h = std::make_unique<gr_sim>();
  h->sim = std::make_unique<Simulator>(std::move(scene));
  *out = h.release();
}

}  // namespace

extern "C" {

const char* gr_last_error(void) { return g_last_error.c_str(); }

const char* gr_status_name(gr_status status)
{
  switch (status) {
  case GR_OK: return "ok";
  case GR_ERR_INVALID_ARGUMENT: return "invalid argument";
  case GR_ERR_PARSE: return "parse error";
  case GR_ERR_VALIDATION: return "validation error";
  case GR_ERR_IO: return "i/o error";
  case GR_ERR_NUMERIC: return "numeric error";
  case GR_ERR_STATE: return "invalid state";
  case GR_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* gr_version(void) { return "1.0.0"; }

void gr_string_free(char* s) { delete[] s; }

gr_status gr_mode_parse(const char* name, gr_mode* out)
{
  return guarded([&] {
    require(name, "mode name");
    require(out, "output");
    *out = from_mode(parse_pipeline_mode(name));
  });
}

const char* gr_mode_name(gr_mode mode)
{
  switch (mode) {
  case GR_MODE_ONE_LOOP: return "one-loop";
  case GR_MODE_TWO_LOOPS_FUSED: return "two-loops-fused";
  case GR_MODE_TWO_LOOPS_SPLIT: return "two-loops-split";
  }
  return "?";
}

// ---- simulation ----

void gr_builtin_config_default(gr_builtin_config* config)
{
  if (!config)
    return;
  config->n_particles = 2000;
  config->n_bodies = 4;
  config->seed = 1;
  config->friction = -1.0;
}

gr_status gr_sim_load_file(const char* path, gr_sim** out)
{
  return guarded([&] {
    require(path, "path");
    require(out, "output handle");
    store_sim(out, load_scene_file(path));
  });
}

gr_status gr_sim_load_string(const char* json, const char* base_dir, gr_sim** out)
{
  return guarded([&] {
    require(json, "scene text");
    require(out, "output handle");
    store_sim(out, load_scene_string(json, base_dir ? base_dir : ""));
  });
}

gr_status gr_sim_create_builtin(const char* kind, const gr_builtin_config* config, gr_sim** out)
{
  return guarded([&] {
    require(kind, "scene kind");
    require(out, "output handle");
    gr_builtin_config c;
    gr_builtin_config_default(&c);
    if (config)
      c = *config;
    MaterialParams params;
    if (c.friction >= 0.0)
      params.friction = c.friction;
    const std::string k = kind;
    if (k == "column") {
      ColumnConfig cc;
      cc.n_particles = c.n_particles;
      cc.seed = c.seed;
      cc.params = params;
      store_sim(out, make_column_scene(cc));
    } else if (k == "pile") {
      PileConfig pc;
      pc.n_particles = c.n_particles;
      pc.seed = c.seed;
      pc.params = params;
      store_sim(out, make_pile_scene(pc));
    } else if (k == "gear-tower") {
      GearTowerConfig gc;
      gc.n_particles = c.n_particles;
      gc.n_bodies = c.n_bodies;
      gc.seed = c.seed;
      gc.params = params;
      store_sim(out, make_gear_tower_scene(gc));
    } else {
      fail(ErrorKind::InvalidArgument, "unknown built-in scene '" + k + "' (expected column, pile or gear-tower)");
    }
  });
}

void gr_sim_destroy(gr_sim* sim) { delete sim; }

gr_status gr_sim_set_mode(gr_sim* sim, gr_mode mode)
{
  return guarded([&] { sim_of(sim).set_mode(to_mode(mode)); });
}

gr_status gr_sim_set_workers(gr_sim* sim, size_t workers)
{
  return guarded([&] { sim_of(sim).set_workers(workers); });
}

gr_status gr_sim_set_timestep(gr_sim* sim, double dt)
{
  return guarded([&] {
    MaterialParams p = sim_of(sim).scene().params;
    p.timestep = dt;
    validate(p);
    sim_of(sim).scene().params = p;
  });
}

gr_status gr_sim_set_hashmap_size(gr_sim* sim, size_t size)
{
  return guarded([&] { sim_of(sim).scene().hashmap_size = size; });
}

gr_status gr_sim_particle_count(const gr_sim* sim, size_t* out)
{
  return guarded([&] {
    require(out, "output");
    *out = sim_of(sim).scene().particles.size();
  });
}

gr_status gr_sim_body_count(const gr_sim* sim, size_t* out)
{
  return guarded([&] {
    require(out, "output");
    *out = sim_of(sim).scene().bodies.size();
  });
}

gr_status gr_sim_time(const gr_sim* sim, double* out)
{
  return guarded([&] {
    require(out, "output");
    *out = sim_of(sim).scene().time;
  });
}

gr_status gr_sim_timestep(const gr_sim* sim, double* out)
{
  return guarded([&] {
    require(out, "output");
    *out = sim_of(sim).scene().params.timestep;
  });
}

gr_status gr_sim_radius(const gr_sim* sim, double* out)
{
  return guarded([&] {
    require(out, "output");
    *out = sim_of(sim).scene().params.radius;
  });
}

gr_status gr_sim_copy_positions(const gr_sim* sim, double* out, size_t capacity)
{
  return guarded([&] { copy_vectors(sim_of(sim).scene().particles.positions, out, capacity); });
}

gr_status gr_sim_copy_velocities(const gr_sim* sim, double* out, size_t capacity)
{
  return guarded([&] { copy_vectors(sim_of(sim).scene().particles.velocities, out, capacity); });
}

gr_status gr_sim_step(gr_sim* sim, uint64_t n, gr_step_report* report)
{
  return guarded([&] {
    Simulator& s = sim_of(sim);
    StepReport last;
    for (uint64_t k = 0; k < n; ++k)
      last = s.step();
    if (report) {
      *report = gr_step_report{};
      if (n > 0)
        fill_report(report, last);
    }
  });
}

gr_status gr_sim_run(gr_sim* sim, uint64_t n, const char* trajectory_path, uint64_t stride, int write_velocities,
                     gr_run_report* report)
{
  return guarded([&] {
    Simulator& s = sim_of(sim);
    if (stride == 0)
      fail(ErrorKind::InvalidArgument, "trajectory stride must be >= 1");
    std::unique_ptr<TrajectoryWriter> writer;
    if (trajectory_path) {
      TrajectoryHeader h;
      h.has_velocities = write_velocities != 0;
      h.particle_count = s.scene().particles.size();
      h.timestep = s.scene().params.timestep;
      h.stride = stride;
      writer = std::make_unique<TrajectoryWriter>(trajectory_path, h);
    }

    gr_run_report r{};
    double contacts = 0.0, hit = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    if (writer && s.step_index() % stride == 0)
      writer->write(s.step_index(), s.scene().time, s.scene().particles);
    for (uint64_t k = 0; k < n; ++k) {
      const StepReport sr = s.step();
      contacts += static_cast<double>(sr.n_contacts);
      hit += sr.candidate_hit_rate;
      r.max_penetration = std::max(r.max_penetration, sr.max_penetration);
      r.kinetic_energy = sr.kinetic_energy;
      if (writer && s.step_index() % stride == 0)
        writer->write(s.step_index(), s.scene().time, s.scene().particles);
    }
    if (writer)
      writer->flush();
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.steps = n;
    r.simulated_time = static_cast<double>(n) * s.scene().params.timestep;
    r.speedup = r.wall_time > 0.0 ? r.simulated_time / r.wall_time : 0.0;
    if (n > 0) {
      r.mean_contacts = contacts / static_cast<double>(n);
      r.mean_hit_rate = hit / static_cast<double>(n);
    } else {
      r.kinetic_energy = kinetic_energy(s.scene().particles.velocities, s.scene().params.particle_mass);
    }
    r.frames_written = writer ? writer->frames_written() : 0;
    if (report)
      *report = r;
  });
}

gr_status gr_sim_save(const gr_sim* sim, const char* path)
{
  return guarded([&] {
    require(path, "path");
    save_scene(sim_of(sim).scene(), path);
  });
}

gr_status gr_sim_to_json(const gr_sim* sim, char** out)
{
  return guarded([&] {
    require(out, "output");
    *out = dup_string(serialize_scene(sim_of(sim).scene()));
  });
}

// ---- grids ----

gr_status gr_bake_mesh(const char* mesh_path, const char* out_path, double spacing, double margin, size_t workers,
                       gr_grid_info* info)
{
  return guarded([&] {
    require(mesh_path, "mesh path");
    require(out_path, "output path");
    if (workers == 0)
      fail(ErrorKind::InvalidArgument, "workers must be >= 1");
    const TriangleMesh mesh = load_mesh(mesh_path);
    BakeOptions opt;
    opt.spacing = spacing;
    opt.margin = margin;
    WorkerPool pool(workers);
    const SdfGrid grid = bake_mesh_sdf(mesh, opt, &pool);
    save_sdf_grid(grid, out_path);
    if (info)
      fill_grid_info(info, grid);
  });
}

gr_status gr_grid_inspect(const char* grid_path, gr_grid_info* info)
{
  return guarded([&] {
    require(grid_path, "grid path");
    require(info, "output");
    fill_grid_info(info, load_sdf_grid(grid_path));
  });
}

// ---- benchmarks ----

void gr_bench_config_default(gr_bench_config* config)
{
  if (!config)
    return;
  const BenchConfig b;
  config->warmup = b.warmup;
  config->steps = b.steps;
  config->mode = from_mode(b.mode);
  config->workers = b.workers;
  config->repeats = b.repeats;
}

gr_status gr_bench_sweep_hashsize(const gr_sim* sim, const size_t* sizes, size_t n_sizes,
                                  const gr_bench_config* config, gr_bench_row* rows)
{
  return guarded([&] {
    require(sizes, "sizes");
    require(rows, "rows");
    if (n_sizes == 0)
      fail(ErrorKind::InvalidArgument, "hash-size sweep needs at least one size");
    const auto results = sweep_hashsize(sim_of(sim).scene(), std::vector<size_t>(sizes, sizes + n_sizes),
                                        to_bench(config));
    for (size_t k = 0; k < results.size(); ++k)
      rows[k] = to_row(results[k]);
  });
}

gr_status gr_bench_compare_pipelines(const gr_sim* sim, uint64_t steps, const gr_bench_config* config,
                                     gr_pipeline_comparison* out)
{
  return guarded([&] {
    require(out, "output");
    const PipelineComparison c = compare_pipelines(sim_of(sim).scene(), steps, to_bench(config));
    *out = gr_pipeline_comparison{};
    for (size_t k = 0; k < c.timings.size() && k < 3; ++k)
      out->rows[k] = to_row(c.timings[k]);
    out->equivalent = c.equivalent ? 1 : 0;
    out->first_divergent_step =
        c.first_divergent_step ? static_cast<int64_t>(*c.first_divergent_step) : static_cast<int64_t>(-1);
    out->max_relative_difference = c.max_relative_difference;
    out->hit_rate = c.hit_rate;
    copy_string(out->divergence, sizeof out->divergence, c.divergence);
  });
}

gr_status gr_bench_scale_particles(const size_t* counts, size_t n, size_t n_bodies, uint64_t seed,
                                   const gr_bench_config* config, gr_bench_row* rows)
{
  return guarded([&] {
    require(counts, "counts");
    require(rows, "rows");
    const auto results = scale_particles(std::vector<size_t>(counts, counts + n), n_bodies, seed, to_bench(config));
    for (size_t k = 0; k < results.size(); ++k)
      rows[k] = to_row(results[k]);
  });
}

gr_status gr_bench_scale_bodies(const size_t* counts, size_t n, size_t n_particles, uint64_t seed,
                                const gr_bench_config* config, gr_bench_row* rows)
{
  return guarded([&] {
    require(counts, "counts");
    require(rows, "rows");
    const auto results = scale_bodies(std::vector<size_t>(counts, counts + n), n_particles, seed, to_bench(config));
    for (size_t k = 0; k < results.size(); ++k)
      rows[k] = to_row(results[k]);
  });
}

gr_status gr_bench_format_csv(const gr_bench_row* rows, size_t n, char** out)
{
  return guarded([&] {
    require(out, "output");
    if (n > 0)
      require(rows, "rows");
    std::vector<BenchResult> results;
    for (size_t k = 0; k < n; ++k)
      results.push_back(from_row(rows[k]));
    std::ostringstream s;
    write_bench_csv(s, results);
    *out = dup_string(s.str());
  });
}

gr_status gr_fit_power_law(const double* x, const double* y, size_t n, double* exponent)
{
  return guarded([&] {
    require(x, "x");
    require(y, "y");
    require(exponent, "output");
    *exponent = fit_power_law(std::vector<double>(x, x + n), std::vector<double>(y, y + n));
  });
}

gr_status gr_log_spaced(size_t lo, size_t hi, size_t n, size_t* out)
{
  return guarded([&] {
    require(out, "output");
    const auto v = log_spaced(lo, hi, n);
    std::copy(v.begin(), v.end(), out);
  });
}

// ---- environments ----

gr_status gr_env_create(const char* kind, const char* config_json, size_t workers, gr_env** out)
{
  return guarded([&] {
    require(kind, "environment kind");
    require(out, "output handle");
    SimulatorOptions opt;
    opt.workers = workers;
    if (workers == 0)
      fail(ErrorKind::InvalidArgument, "workers must be >= 1");
    auto h = std::make_unique<gr_env>();
    h->env = make_environment(kind, config_json ? config_json : "{}", opt);
    *out = h.release();
  });
}

void gr_env_destroy(gr_env* env) { delete env; }

gr_status gr_env_reset(gr_env* env, uint64_t seed)
{
  return guarded([&] { env_of(env).reset(seed); });
}

gr_status gr_env_step(gr_env* env, const double* action, size_t action_size, gr_env_step_result* out)
{
  return guarded([&] {
    if (action_size > 0)
      require(action, "action");
    const EnvStep s = env_of(env).step(std::span<const double>(action, action_size));
    if (out) {
      out->reward = s.reward;
      out->done = s.done ? 1 : 0;
      out->control_step = s.info.control_step;
      out->time = s.info.time;
      out->particles_in_goal = s.info.particles_in_goal;
      out->n_contacts = s.info.n_contacts;
    }
  });
}

gr_status gr_env_episode_steps(const gr_env* env, uint64_t* out)
{
  return guarded([&] {
    require(out, "output");
    *out = env_of(env).episode_steps();
  });
}

gr_status gr_env_action_dim(const gr_env* env, size_t* out)
{
  return guarded([&] {
    require(out, "output");
    *out = env_of(env).action_space().low.size();
  });
}

gr_status gr_env_action_space(const gr_env* env, double* low, double* high)
{
  return guarded([&] {
    require(low, "low");
    require(high, "high");
    const BoxSpace b = env_of(env).action_space();
    std::copy(b.low.begin(), b.low.end(), low);
    std::copy(b.high.begin(), b.high.end(), high);
  });
}

gr_status gr_env_observation_count(const gr_env* env, size_t* out)
{
  return guarded([&] {
    require(out, "output");
    *out = env_of(env).observation_space().size();
  });
}

gr_status gr_env_observation_field(const gr_env* env, size_t index, gr_obs_field* out)
{
  return guarded([&] {
    require(out, "output");
    const auto fields = env_of(env).observation_space();
    if (index >= fields.size())
      fail(ErrorKind::InvalidArgument, "observation index " + std::to_string(index) + " out of range");
    const ObservationField& f = fields[index];
    *out = gr_obs_field{};
    copy_string(out->name, sizeof out->name, f.name);
    out->image = f.image ? 1 : 0;
    out->width = f.width;
    out->height = f.height;
    out->low = f.low;
    out->high = f.high;
  });
}

gr_status gr_env_image(const gr_env* env, const char* name, const float** data, size_t* width, size_t* height)
{
  return guarded([&] {
    require(name, "name");
    require(data, "data");
    const Environment& e = env_of(env);
    e.scene();
    const EnvObservation& o = e.observation();
    const std::string n = name;
    const DepthImage* img = nullptr;
    if (n == "ego")
      img = &o.ego;
    else if (n == "sky")
      img = &o.sky;
    if (!img || img->depth.empty())
      fail(ErrorKind::InvalidArgument, "environment has no image observation named '" + n + "'");
    *data = img->depth.data();
    if (width)
      *width = static_cast<size_t>(img->width);
    if (height)
      *height = static_cast<size_t>(img->height);
  });
}

gr_status gr_env_vector(const gr_env* env, const char* name, const double** data, size_t* length)
{
  return guarded([&] {
    require(name, "name");
    require(data, "data");
    const Environment& e = env_of(env);
    e.scene();
    const EnvObservation& o = e.observation();
    const std::string n = name;
    bool has_pose = false;
    for (const ObservationField& f : e.observation_space())
      has_pose = has_pose || f.name == "pose";
    if (n == "pose" && has_pose) {
      *data = o.pose.data();
      if (length)
        *length = o.pose.size();
    } else if (n == "joints" && !o.joints.empty()) {
      *data = o.joints.data();
      if (length)
        *length = o.joints.size();
    } else {
      fail(ErrorKind::InvalidArgument, "environment has no vector observation named '" + n + "'");
    }
  });
}

}  // extern "C"
