#ifndef GRANULAR_GRANULAR_H
#define GRANULAR_GRANULAR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(GRANULAR_BUILDING)
#    define GR_API __declspec(dllexport)
#  else
#    define GR_API __declspec(dllimport)
#  endif
#else
#  define GR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gr_status
{
  GR_OK = 0,
  GR_ERR_INVALID_ARGUMENT = 1,
  GR_ERR_PARSE = 2,
  GR_ERR_VALIDATION = 3,
  GR_ERR_IO = 4,
  GR_ERR_NUMERIC = 5,
  GR_ERR_STATE = 6,
  GR_ERR_INTERNAL = 7
} gr_status;

typedef enum gr_mode
{
  GR_MODE_ONE_LOOP = 0,
  GR_MODE_TWO_LOOPS_FUSED = 1,
  GR_MODE_TWO_LOOPS_SPLIT = 2
} gr_mode;

/* Message of the last failed call on this thread ("" if none). */
GR_API const char* gr_last_error(void);
GR_API const char* gr_status_name(gr_status status);
GR_API const char* gr_version(void);

/* Strings returned through char** out-parameters are released with this. */
GR_API void gr_string_free(char* s);

GR_API gr_status gr_mode_parse(const char* name, gr_mode* out);
GR_API const char* gr_mode_name(gr_mode mode);

/* ---- simulation -------------------------------------------------------- */

typedef struct gr_sim gr_sim;

typedef struct gr_step_report
{
  uint64_t step;
  double time;
  double wall_time;
  size_t n_contacts;
  size_t n_body_contacts;
  size_t n_candidates;
  double hit_rate;
  double max_penetration;
  double kinetic_energy;
  size_t skipped_coincident;
  size_t skipped_degenerate;
} gr_step_report;

typedef struct gr_run_report
{
  uint64_t steps;
  double wall_time;       /* s, measured around the stepping loop */
  double simulated_time;  /* steps * dt */
  double speedup;         /* simulated / wall, 0 when steps == 0 */
  double mean_contacts;
  double mean_hit_rate;
  double max_penetration;
  double kinetic_energy;  /* after the last step */
  uint64_t frames_written;
} gr_run_report;

/* Built-in scenes: "column", "pile" or "gear-tower". n_bodies only applies
 * to the gear tower. */
typedef struct gr_builtin_config
{
  size_t n_particles;
  size_t n_bodies;
  uint64_t seed;
  double friction;  /* < 0 keeps the scene default */
} gr_builtin_config;

GR_API void gr_builtin_config_default(gr_builtin_config* config);

GR_API gr_status gr_sim_load_file(const char* path, gr_sim** out);
/* base_dir resolves relative mesh paths; may be NULL. */
GR_API gr_status gr_sim_load_string(const char* json, const char* base_dir, gr_sim** out);
GR_API gr_status gr_sim_create_builtin(const char* kind, const gr_builtin_config* config, gr_sim** out);
GR_API void gr_sim_destroy(gr_sim* sim);

GR_API gr_status gr_sim_set_mode(gr_sim* sim, gr_mode mode);
GR_API gr_status gr_sim_set_workers(gr_sim* sim, size_t workers);
GR_API gr_status gr_sim_set_timestep(gr_sim* sim, double dt);
/* 0 selects the default table size. */
GR_API gr_status gr_sim_set_hashmap_size(gr_sim* sim, size_t size);

GR_API gr_status gr_sim_particle_count(const gr_sim* sim, size_t* out);
GR_API gr_status gr_sim_body_count(const gr_sim* sim, size_t* out);
GR_API gr_status gr_sim_time(const gr_sim* sim, double* out);
GR_API gr_status gr_sim_timestep(const gr_sim* sim, double* out);
GR_API gr_status gr_sim_radius(const gr_sim* sim, double* out);

/* Copies 3 * n doubles (x, y, z per particle). capacity counts doubles. */
GR_API gr_status gr_sim_copy_positions(const gr_sim* sim, double* out, size_t capacity);
GR_API gr_status gr_sim_copy_velocities(const gr_sim* sim, double* out, size_t capacity);

/* Advances n steps; report (optional) receives the last step's report. */
GR_API gr_status gr_sim_step(gr_sim* sim, uint64_t n, gr_step_report* report);

/* Advances n steps, writing every stride-th state (including the initial
 * one) to trajectory_path when it is not NULL. */
GR_API gr_status gr_sim_run(gr_sim* sim, uint64_t n, const char* trajectory_path, uint64_t stride,
                            int write_velocities, gr_run_report* report);

GR_API gr_status gr_sim_save(const gr_sim* sim, const char* path);
GR_API gr_status gr_sim_to_json(const gr_sim* sim, char** out);

/* ---- signed distance grids -------------------------------------------- */

typedef struct gr_grid_info
{
  size_t nx, ny, nz;
  double origin[3];
  double spacing;
  uint64_t mesh_hash;
} gr_grid_info;

/* spacing/margin <= 0 select the automatic values. */
GR_API gr_status gr_bake_mesh(const char* mesh_path, const char* out_path, double spacing, double margin,
                              size_t workers, gr_grid_info* info);
GR_API gr_status gr_grid_inspect(const char* grid_path, gr_grid_info* info);

/* ---- benchmarks -------------------------------------------------------- */

typedef struct gr_bench_config
{
  uint64_t warmup;
  uint64_t steps;
  gr_mode mode;
  size_t workers;
  int repeats;
} gr_bench_config;

typedef struct gr_bench_row
{
  char label[64];
  size_t n_particles;
  size_t n_bodies;
  size_t hashmap_size;
  gr_mode mode;
  size_t workers;
  uint64_t steps;
  double wall_time;
  double simulated_time;
  double speedup;
  double mean_contacts;
  double mean_candidates;
  double hit_rate;
  double max_penetration;
} gr_bench_row;

typedef struct gr_pipeline_comparison
{
  gr_bench_row rows[3]; /* one-loop, two-loops-fused, two-loops-split */
  int equivalent;
  int64_t first_divergent_step; /* -1 when equivalent */
  double max_relative_difference;
  double hit_rate;
  char divergence[256];
} gr_pipeline_comparison;

GR_API void gr_bench_config_default(gr_bench_config* config);

/* rows must hold n_sizes entries. */
GR_API gr_status gr_bench_sweep_hashsize(const gr_sim* sim, const size_t* sizes, size_t n_sizes,
                                         const gr_bench_config* config, gr_bench_row* rows);
GR_API gr_status gr_bench_compare_pipelines(const gr_sim* sim, uint64_t steps, const gr_bench_config* config,
                                            gr_pipeline_comparison* out);
GR_API gr_status gr_bench_scale_particles(const size_t* counts, size_t n, size_t n_bodies, uint64_t seed,
                                          const gr_bench_config* config, gr_bench_row* rows);
GR_API gr_status gr_bench_scale_bodies(const size_t* counts, size_t n, size_t n_particles, uint64_t seed,
                                       const gr_bench_config* config, gr_bench_row* rows);
GR_API gr_status gr_bench_format_csv(const gr_bench_row* rows, size_t n, char** out);
GR_API gr_status gr_fit_power_law(const double* x, const double* y, size_t n, double* exponent);
/* out must hold n entries. */
GR_API gr_status gr_log_spaced(size_t lo, size_t hi, size_t n, size_t* out);

/* ---- environments ------------------------------------------------------ */

typedef struct gr_env gr_env;

typedef struct gr_env_step_result
{
  double reward;
  int done;
  uint64_t control_step;
  double time;
  size_t particles_in_goal;
  size_t n_contacts;
} gr_env_step_result;

typedef struct gr_obs_field
{
  char name[32];
  int image;     /* 1: float32 depth image, 0: float64 vector */
  size_t width;  /* vector length for vectors */
  size_t height; /* 1 for vectors */
  double low;
  double high;
} gr_obs_field;

/* kind is "bulldozer" or "excavation"; config_json may be NULL. */
GR_API gr_status gr_env_create(const char* kind, const char* config_json, size_t workers, gr_env** out);
GR_API void gr_env_destroy(gr_env* env);

GR_API gr_status gr_env_reset(gr_env* env, uint64_t seed);
GR_API gr_status gr_env_step(gr_env* env, const double* action, size_t action_size, gr_env_step_result* out);
GR_API gr_status gr_env_episode_steps(const gr_env* env, uint64_t* out);

GR_API gr_status gr_env_action_dim(const gr_env* env, size_t* out);
/* low/high must hold action_dim entries. */
GR_API gr_status gr_env_action_space(const gr_env* env, double* low, double* high);

GR_API gr_status gr_env_observation_count(const gr_env* env, size_t* out);
GR_API gr_status gr_env_observation_field(const gr_env* env, size_t index, gr_obs_field* out);

/* Row-major float32 depth in meters, valid until the next reset, step or
 * destroy. Requires a reset. */
GR_API gr_status gr_env_image(const gr_env* env, const char* name, const float** data, size_t* width,
                              size_t* height);
GR_API gr_status gr_env_vector(const gr_env* env, const char* name, const double** data, size_t* length);

#ifdef __cplusplus
}
#endif

#endif
