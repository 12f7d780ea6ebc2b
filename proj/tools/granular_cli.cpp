#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "granular/granular.h"

namespace {

struct CliError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

void check(gr_status s, const std::string& context)
{
  if (s != GR_OK)
    throw CliError(context + ": " + gr_status_name(s) + ": " + gr_last_error());
}

struct SimDeleter
{
  void operator()(gr_sim* s) const { gr_sim_destroy(s); }
};
using SimPtr = std::unique_ptr<gr_sim, SimDeleter>;

struct EnvDeleter
{
  void operator()(gr_env* e) const { gr_env_destroy(e); }
};
using EnvPtr = std::unique_ptr<gr_env, EnvDeleter>;

struct CStr
{
  char* p = nullptr;
  ~CStr() { gr_string_free(p); }
};

/// Options shared by every subcommand that builds a simulation.
struct SceneArgs
{
  std::string scene;
  std::string builtin;
  size_t particles = 0;
  size_t bodies = 4;
  uint64_t seed = 1;
  std::optional<double> friction;
  std::optional<double> dt;
  std::string mode = "two-loops-split";
  size_t hashmap_size = 0;
  std::optional<size_t> workers;
  uint64_t settle = 0;
};

void add_scene_options(CLI::App* cmd, SceneArgs& a, const std::string& default_builtin)
{
  a.builtin = default_builtin;
  cmd->add_option("--scene", a.scene, "Scene JSON file (overrides --builtin)");
  cmd->add_option("--builtin", a.builtin, "Built-in scene: column, pile or gear-tower")->capture_default_str();
  cmd->add_option("--particles", a.particles, "Particle count for built-in scenes");
  cmd->add_option("--bodies", a.bodies, "Gear count for the gear tower")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Seed for built-in scenes")->capture_default_str();
  cmd->add_option("--friction", a.friction, "Friction coefficient for built-in scenes");
  cmd->add_option("--dt", a.dt, "Timestep (s)");
  cmd->add_option("--mode", a.mode, "one-loop, two-loops-fused or two-loops-split")->capture_default_str();
  cmd->add_option("--hashmap-size", a.hashmap_size, "Hash table size (0: twice the particle count)");
  cmd->add_option("--workers", a.workers, "Worker threads (default: GRANULAR_WORKERS or 1)");
  cmd->add_option("--settle", a.settle, "Untimed steps run before the command starts");
}

size_t resolve_workers(const std::optional<size_t>& flag)
{
  if (flag)
    return *flag;
  if (const char* env = std::getenv("GRANULAR_WORKERS")) {
    try {
      size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size() && v > 0)
        return static_cast<size_t>(v);
    } catch (const std::exception&) {
    }
    throw CliError(std::string("GRANULAR_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

gr_mode parse_mode(const std::string& name)
{
  gr_mode m;
  check(gr_mode_parse(name.c_str(), &m), "--mode");
  return m;
}

SimPtr make_sim(const SceneArgs& a)
{
  gr_sim* raw = nullptr;
  if (!a.scene.empty()) {
    check(gr_sim_load_file(a.scene.c_str(), &raw), "loading " + a.scene);
  } else {
    gr_builtin_config c;
    gr_builtin_config_default(&c);
    if (a.particles)
      c.n_particles = a.particles;
    c.n_bodies = a.bodies;
    c.seed = a.seed;
    if (a.friction)
      c.friction = *a.friction;
    check(gr_sim_create_builtin(a.builtin.c_str(), &c, &raw), "building scene " + a.builtin);
  }
  SimPtr sim(raw);
  if (a.dt)
    check(gr_sim_set_timestep(sim.get(), *a.dt), "--dt");
  check(gr_sim_set_mode(sim.get(), parse_mode(a.mode)), "--mode");
  if (a.hashmap_size)
    check(gr_sim_set_hashmap_size(sim.get(), a.hashmap_size), "--hashmap-size");
  check(gr_sim_set_workers(sim.get(), resolve_workers(a.workers)), "--workers");
  if (a.settle)
    check(gr_sim_step(sim.get(), a.settle, nullptr), "settling");
  return sim;
}

gr_bench_config bench_config(const SceneArgs& a, uint64_t steps, uint64_t warmup, int repeats)
{
  gr_bench_config c;
  gr_bench_config_default(&c);
  c.steps = steps;
  c.warmup = warmup;
  c.repeats = repeats;
  c.mode = parse_mode(a.mode);
  c.workers = resolve_workers(a.workers);
  return c;
}

void emit_csv(const std::vector<gr_bench_row>& rows, const std::string& out)
{
  CStr csv;
  check(gr_bench_format_csv(rows.data(), rows.size(), &csv.p), "formatting CSV");
  if (out.empty() || out == "-") {
    std::cout << csv.p;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f)
    throw CliError("cannot open '" + out + "' for writing");
  f << csv.p;
  if (!f)
    throw CliError("failed writing '" + out + "'");
}

void kv(const std::string& key, const std::string& value) { std::cout << key << ": " << value << "\n"; }

void kv(const std::string& key, double value)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  kv(key, std::string(buf));
}

void kv(const std::string& key, uint64_t value) { kv(key, std::to_string(value)); }

size_t particle_count(gr_sim* sim)
{
  size_t n = 0;
  check(gr_sim_particle_count(sim, &n), "particle count");
  return n;
}

// ---- subcommands ----

struct RunArgs
{
  SceneArgs scene;
  uint64_t steps = 1000;
  std::string out;
  uint64_t stride = 1;
  bool velocities = false;
  std::string save_scene;
};

void cmd_run(const RunArgs& a)
{
  SimPtr sim = make_sim(a.scene);
  gr_run_report r;
  check(gr_sim_run(sim.get(), a.steps, a.out.empty() ? nullptr : a.out.c_str(), a.stride, a.velocities, &r),
        "run");
  if (!a.save_scene.empty())
    check(gr_sim_save(sim.get(), a.save_scene.c_str()), "saving " + a.save_scene);
  double dt = 0.0;
  check(gr_sim_timestep(sim.get(), &dt), "timestep");
  kv("command", std::string("run"));
  kv("particles", static_cast<uint64_t>(particle_count(sim.get())));
  kv("mode", a.scene.mode);
  kv("steps", r.steps);
  kv("dt", dt);
  kv("wall_time_s", r.wall_time);
  kv("simulated_time_s", r.simulated_time);
  kv("speedup", r.speedup);
  kv("mean_contacts", r.mean_contacts);
  kv("mean_hit_rate", r.mean_hit_rate);
  kv("max_penetration_m", r.max_penetration);
  kv("kinetic_energy_j", r.kinetic_energy);
  kv("frames_written", r.frames_written);
  if (!a.out.empty())
    kv("trajectory", a.out);
}

struct BakeArgs
{
  std::string mesh;
  std::string out;
  double spacing = 0.0;
  double margin = 0.0;
  std::optional<size_t> workers;
};

void cmd_bake(const BakeArgs& a)
{
  gr_grid_info info;
  check(gr_bake_mesh(a.mesh.c_str(), a.out.c_str(), a.spacing, a.margin, resolve_workers(a.workers), &info),
        "baking " + a.mesh);
  kv("command", std::string("bake"));
  kv("mesh", a.mesh);
  kv("grid", a.out);
  kv("dims", std::to_string(info.nx) + "x" + std::to_string(info.ny) + "x" + std::to_string(info.nz));
  kv("spacing_m", info.spacing);
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(info.mesh_hash));
  kv("mesh_hash", std::string(hash));
}

struct SweepArgs
{
  SceneArgs scene;
  std::vector<size_t> sizes;
  uint64_t steps = 1000;
  uint64_t warmup = 50;
  int repeats = 1;
  std::string out;
};

void cmd_sweep(const SweepArgs& a)
{
  SimPtr sim = make_sim(a.scene);
  std::vector<size_t> sizes = a.sizes;
  if (sizes.empty()) {
    const size_t n = std::max<size_t>(particle_count(sim.get()), 4);
    sizes = {n / 4, n / 2, n, 2 * n, 4 * n, 8 * n};
  }
  const gr_bench_config c = bench_config(a.scene, a.steps, a.warmup, a.repeats);
  std::vector<gr_bench_row> rows(sizes.size());
  check(gr_bench_sweep_hashsize(sim.get(), sizes.data(), sizes.size(), &c, rows.data()), "hash-size sweep");
  emit_csv(rows, a.out);
}

struct CompareArgs
{
  SceneArgs scene;
  uint64_t steps = 100;
  uint64_t warmup = 50;
  std::string out;
};

int cmd_compare(const CompareArgs& a)
{
  SimPtr sim = make_sim(a.scene);
  const gr_bench_config c = bench_config(a.scene, a.steps, a.warmup, 1);
  gr_pipeline_comparison cmp;
  check(gr_bench_compare_pipelines(sim.get(), a.steps, &c, &cmp), "pipeline comparison");
  const std::vector<gr_bench_row> rows(cmp.rows, cmp.rows + 3);
  if (!a.out.empty())
    emit_csv(rows, a.out);
  kv("command", std::string("compare-pipelines"));
  kv("steps", a.steps);
  for (const gr_bench_row& r : rows)
    kv(std::string("speedup_") + gr_mode_name(r.mode), r.speedup);
  kv("hit_rate", cmp.hit_rate);
  kv("max_relative_difference", cmp.max_relative_difference);
  kv("equivalent", std::string(cmp.equivalent ? "yes" : "no"));
  if (!cmp.equivalent) {
    kv("first_divergent_step", static_cast<uint64_t>(cmp.first_divergent_step));
    kv("divergence", std::string(cmp.divergence));
    std::cerr << "error: pipeline modes diverged at step " << cmp.first_divergent_step << ": " << cmp.divergence
              << "\n";
    return 2;
  }
  return 0;
}

struct ScaleArgs
{
  std::vector<size_t> particles;
  std::vector<size_t> bodies;
  std::vector<size_t> log_range;
  size_t fixed_particles = 2000;
  size_t fixed_bodies = 4;
  uint64_t seed = 0;
  uint64_t steps = 100;
  uint64_t warmup = 20;
  std::string mode = "two-loops-split";
  std::optional<size_t> workers;
  std::string out;
};

void cmd_scale(const ScaleArgs& a)
{
  SceneArgs s;
  s.mode = a.mode;
  s.workers = a.workers;
  const gr_bench_config c = bench_config(s, a.steps, a.warmup, 1);

  std::vector<size_t> particles = a.particles;
  if (!a.log_range.empty()) {
    if (a.log_range.size() != 3)
      throw CliError("--log takes LO HI COUNT");
    particles.resize(a.log_range[2]);
    check(gr_log_spaced(a.log_range[0], a.log_range[1], a.log_range[2], particles.data()), "--log");
  }
  if (particles.empty() == a.bodies.empty())
    throw CliError("give exactly one of --particles/--log or --bodies");

  std::vector<gr_bench_row> rows;
  if (!particles.empty()) {
    rows.resize(particles.size());
    check(gr_bench_scale_particles(particles.data(), particles.size(), a.fixed_bodies, a.seed, &c, rows.data()),
          "particle scaling");
  } else {
    rows.resize(a.bodies.size());
    check(gr_bench_scale_bodies(a.bodies.data(), a.bodies.size(), a.fixed_particles, a.seed, &c, rows.data()),
          "body scaling");
  }
  emit_csv(rows, a.out);
  if (!particles.empty() && rows.size() >= 2) {
    std::vector<double> x, y;
    for (const gr_bench_row& r : rows) {
      x.push_back(static_cast<double>(r.n_particles));
      y.push_back(r.wall_time / static_cast<double>(r.steps));
    }
    double exponent = 0.0;
    check(gr_fit_power_law(x.data(), y.data(), x.size(), &exponent), "power-law fit");
    std::cerr << "wall_time_per_step_exponent: " << exponent << "\n";
  }
}

struct EnvArgs
{
  std::string env = "bulldozer";
  std::string config;
  uint64_t seed = 0;
  uint64_t steps = 20;
  std::vector<double> action;
  std::optional<size_t> workers;
  std::string out;
};

std::string read_file(const std::string& path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw CliError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void cmd_env(const EnvArgs& a)
{
  const std::string config = a.config.empty() ? std::string() : read_file(a.config);
  gr_env* raw = nullptr;
  check(gr_env_create(a.env.c_str(), config.empty() ? nullptr : config.c_str(), resolve_workers(a.workers), &raw),
        "creating " + a.env);
  EnvPtr env(raw);
  size_t dim = 0;
  check(gr_env_action_dim(env.get(), &dim), "action space");
  std::vector<double> action = a.action;
  if (action.empty())
    action.assign(dim, 0.0);
  if (action.size() != dim)
    throw CliError("--action needs " + std::to_string(dim) + " values for " + a.env);

  check(gr_env_reset(env.get(), a.seed), "reset");
  double total = 0.0;
  gr_env_step_result r{};
  uint64_t taken = 0;
  for (; taken < a.steps; ++taken) {
    check(gr_env_step(env.get(), action.data(), action.size(), &r), "step");
    total += r.reward;
    if (r.done) {
      ++taken;
      break;
    }
  }

  kv("command", std::string("env-demo"));
  kv("env", a.env);
  kv("seed", a.seed);
  kv("control_steps", taken);
  kv("cumulative_reward", total);
  kv("last_reward", r.reward);
  kv("done", std::string(r.done ? "yes" : "no"));
  kv("time_s", r.time);
  kv("particles_in_goal", static_cast<uint64_t>(r.particles_in_goal));

  if (!a.out.empty()) {
    const float* data = nullptr;
    size_t w = 0, h = 0;
    check(gr_env_image(env.get(), "sky", &data, &w, &h), "sky image");
    std::ofstream f(a.out, std::ios::binary);
    if (!f)
      throw CliError("cannot open '" + a.out + "' for writing");
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(w * h * sizeof(float)));
    if (!f)
      throw CliError("failed writing '" + a.out + "'");
    kv("sky_image", a.out + " (" + std::to_string(w) + "x" + std::to_string(h) + " float32 row-major)");
  }
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Granular material simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "Simulate a scene and record a trajectory");
  add_scene_options(c_run, run.scene, "column");
  c_run->add_option("--steps", run.steps, "Steps to simulate")->capture_default_str();
  c_run->add_option("--out", run.out, "Trajectory output path");
  c_run->add_option("--stride", run.stride, "Write every n-th state")->capture_default_str();
  c_run->add_flag("--velocities", run.velocities, "Store velocities in the trajectory");
  c_run->add_option("--save-scene", run.save_scene, "Write the final scene as JSON");

  BakeArgs bake;
  auto* c_bake = app.add_subcommand("bake", "Bake a mesh into a signed distance grid");
  c_bake->add_option("--mesh", bake.mesh, "OBJ or STL mesh")->required();
  c_bake->add_option("--out", bake.out, "Grid output path")->required();
  c_bake->add_option("--spacing", bake.spacing, "Knot spacing (m); 0 = automatic");
  c_bake->add_option("--margin", bake.margin, "Padding around the mesh (m); 0 = automatic");
  c_bake->add_option("--workers", bake.workers, "Worker threads");

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep-hashsize", "Throughput against hash table size");
  add_scene_options(c_sweep, sweep.scene, "column");
  c_sweep->add_option("--sizes", sweep.sizes, "Table sizes (default: n/4 .. 8n)");
  c_sweep->add_option("--steps", sweep.steps, "Timed steps per size")->capture_default_str();
  c_sweep->add_option("--warmup", sweep.warmup, "Untimed steps per size")->capture_default_str();
  c_sweep->add_option("--repeats", sweep.repeats, "Timed repeats (fastest kept)")->capture_default_str();
  c_sweep->add_option("--out", sweep.out, "CSV output (default stdout)");

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare-pipelines", "Check and time the three pipeline modes");
  add_scene_options(c_cmp, cmp.scene, "column");
  c_cmp->add_option("--steps", cmp.steps, "Steps compared and timed")->capture_default_str();
  c_cmp->add_option("--warmup", cmp.warmup, "Untimed steps before timing")->capture_default_str();
  c_cmp->add_option("--out", cmp.out, "CSV output");

  ScaleArgs scale;
  auto* c_scale = app.add_subcommand("scale", "Gear-tower throughput against particle or body count");
  c_scale->add_option("--particles", scale.particles, "Particle counts");
  c_scale->add_option("--log", scale.log_range, "LO HI COUNT log-spaced particle counts")->expected(3);
  c_scale->add_option("--bodies", scale.bodies, "Body counts");
  c_scale->add_option("--fixed-particles", scale.fixed_particles, "Particles when scaling bodies")
      ->capture_default_str();
  c_scale->add_option("--fixed-bodies", scale.fixed_bodies, "Bodies when scaling particles")->capture_default_str();
  c_scale->add_option("--seed", scale.seed, "Scene seed")->capture_default_str();
  c_scale->add_option("--steps", scale.steps, "Timed steps per row")->capture_default_str();
  c_scale->add_option("--warmup", scale.warmup, "Untimed steps per row")->capture_default_str();
  c_scale->add_option("--mode", scale.mode, "Pipeline mode")->capture_default_str();
  c_scale->add_option("--workers", scale.workers, "Worker threads");
  c_scale->add_option("--out", scale.out, "CSV output (default stdout)");

  EnvArgs envd;
  auto* c_env = app.add_subcommand("env-demo", "Roll out a fixed action in a task environment");
  c_env->add_option("--env", envd.env, "bulldozer or excavation")->capture_default_str();
  c_env->add_option("--config", envd.config, "Environment JSON config");
  c_env->add_option("--seed", envd.seed, "Reset seed")->capture_default_str();
  c_env->add_option("--steps", envd.steps, "Control steps")->capture_default_str();
  c_env->add_option("--action", envd.action, "Action held for every step (default zeros)");
  c_env->add_option("--workers", envd.workers, "Worker threads");
  c_env->add_option("--out", envd.out, "Write the final sky depth image (raw float32)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_run)
      cmd_run(run);
    else if (*c_bake)
      cmd_bake(bake);
    else if (*c_sweep)
      cmd_sweep(sweep);
    else if (*c_cmp)
      return cmd_compare(cmp);
    else if (*c_scale)
      cmd_scale(scale);
    else if (*c_env)
      cmd_env(envd);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
