#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "granular/broadphase.hpp"
#include "granular/contact.hpp"
#include "granular/parallel.hpp"
#include "granular/scene.hpp"

namespace granular {

/// How detection and solving are scheduled. All three produce the same
/// arithmetic in the same order, so serial results are bitwise identical.
enum class PipelineMode
{
  OneLoop,        ///< re-detect inline in every sweep, nothing stored
  TwoLoopsFused,  ///< detection pass also performs the first sweep
  TwoLoopsSplit,  ///< materialize all contacts, then sweep
};

const char* to_string(PipelineMode mode);
PipelineMode parse_pipeline_mode(const std::string& name);

struct StepReport
{
  uint64_t step = 0;
  double time = 0.0;
  double wall_time = 0.0;         ///< seconds spent in step()
  size_t n_contacts = 0;          ///< owner-side particle-particle contacts
  size_t n_body_contacts = 0;
  size_t n_candidates = 0;        ///< particle-particle broadphase candidates
  double candidate_hit_rate = 0.0;
  double max_penetration = 0.0;
  double kinetic_energy = 0.0;    ///< after integration
  size_t skipped_coincident = 0;
  size_t skipped_degenerate = 0;
  std::vector<Vec3> body_impulses;  ///< impulse applied by each body to the particles (N s)
};

struct SimulatorOptions
{
  PipelineMode mode = PipelineMode::TwoLoopsSplit;
  size_t workers = 1;
  ImpulseObserver* observer = nullptr;
  /// Initial contact-list capacity per particle in the split/fused modes.
  size_t contacts_per_particle = 8;
};

class TrajectoryWriter;

class Simulator
{
public:
  explicit Simulator(Scene scene, SimulatorOptions options = {});

  Scene& scene() noexcept { return scene_; }
  const Scene& scene() const noexcept { return scene_; }
  const SimulatorOptions& options() const noexcept { return options_; }
  uint64_t step_index() const noexcept { return step_; }

  void set_mode(PipelineMode mode) { options_.mode = mode; }
  void set_workers(size_t workers);
  void set_observer(ImpulseObserver* observer) { options_.observer = observer; }

  /// Advances the scene by one timestep.
  StepReport step();

  /// Runs n steps, handing every stride-th state (including the initial one)
  /// to the writer. Stops early and rethrows if a step fails.
  std::vector<StepReport> run(uint64_t n_steps, TrajectoryWriter* writer = nullptr, uint64_t stride = 1,
                              bool keep_reports = false);

  const SpatialHashmap& hashmap() const noexcept { return map_; }
  /// Contact-list capacity after the last step (split/fused modes).
  size_t contact_capacity() const noexcept { return contacts_.size(); }
  size_t contact_regrowths() const noexcept { return regrowths_; }

private:
  void detect_pass(bool solve_first_sweep, DetectionStats& stats);
  void sweep_stored(int sweep);
  void sweep_inline(int sweep, DetectionStats* stats);
  void solve_owner(const Contact* begin, const Contact* end, int sweep, size_t worker, Vec3& dv);
  SolveContext solve_context() const;

  Scene scene_;
  SimulatorOptions options_;
  std::unique_ptr<WorkerPool> pool_;
  SpatialHashmap map_;
  uint64_t step_ = 0;

  std::vector<Vec3> dv_prev_;
  std::vector<Vec3> dv_next_;
  std::vector<Contact> contacts_;
  std::vector<size_t> offsets_;
  std::vector<uint32_t> counts_;
  std::vector<std::vector<Vec3>> body_acc_;
  std::vector<DetectionStats> worker_stats_;
  size_t regrowths_ = 0;
};

/// Wraps particles that fell below z_min to the top: z += z_max - z_min.
/// Returns the number of wrapped particles.
size_t apply_cyclic_boundary(std::vector<Vec3>& positions, const CyclicBoundary& boundary);

double kinetic_energy(const std::vector<Vec3>& velocities, double particle_mass);

}  // namespace granular
