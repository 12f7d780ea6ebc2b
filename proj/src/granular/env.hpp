#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "granular/render.hpp"
#include "granular/scene.hpp"
#include "granular/stepper.hpp"

namespace granular {

struct GoalBox
{
  Vec3 min{};
  Vec3 max{};
};

/// Euclidean distance from p to the closest point of the box (0 inside).
double distance_to_box(const GoalBox& box, const Vec3& p);

/// Sum over particles of +100/n inside the box (boundary inclusive) and
/// -distance/n outside.
double bulldozer_reward(const ParticleSet& particles, const GoalBox& goal);

struct EnvObservation
{
  DepthImage ego;                 ///< empty for environments without an ego camera
  DepthImage sky;
  std::array<double, 3> pose{};   ///< vehicle x, y, yaw (bulldozer)
  std::vector<double> joints;     ///< joint positions (excavation)
};

struct EnvInfo
{
  uint64_t control_step = 0;
  double time = 0.0;
  size_t particles_in_goal = 0;
  size_t n_contacts = 0;
};

struct EnvStep
{
  double reward = 0.0;
  bool done = false;
  EnvInfo info;
};

struct BoxSpace
{
  std::vector<double> low;
  std::vector<double> high;
};

/// One named observation entry: a depth image (width x height, meters) or a
/// vector (width x 1).
struct ObservationField
{
  std::string name;
  bool image = false;
  size_t width = 0;
  size_t height = 1;
  double low = 0.0;
  double high = 0.0;
};

/// Gym-style task: reset(seed) then step(action) until done.
class Environment
{
public:
  virtual ~Environment() = default;

  virtual const EnvObservation& reset(uint64_t seed) = 0;
  virtual EnvStep step(std::span<const double> action) = 0;

  virtual BoxSpace action_space() const = 0;
  virtual std::vector<ObservationField> observation_space() const = 0;
  virtual const EnvObservation& observation() const = 0;
  virtual const Scene& scene() const = 0;
  virtual uint64_t episode_steps() const = 0;
};

struct BulldozerConfig
{
  size_t n_particles = 300;
  Vec3 pile_min{0.05, -0.1, 0.0};
  Vec3 pile_max{0.25, 0.1, 0.07};
  GoalBox goal{{0.6, -0.3, -0.1}, {1.0, 0.3, 0.3}};
  std::array<double, 3> start{-0.35, 0.0, 0.0};  ///< x, y, yaw
  double speed_scale = 0.5;                       ///< m/s at |action| = 1
  double turn_scale = 1.5;                        ///< rad/s at |action| = 1
  int frame_skip = 10;
  double time_budget = 5.0;  ///< seconds of simulated time per episode
  int settle_steps = 300;
  double jitter = 0.3;
  double sky_extent = 2.0;
  double sky_height = 1.0;
  MaterialParams params;
};

struct ExcavationConfig
{
  size_t n_particles = 400;
  Vec3 bed_min{0.3, -0.15, 0.0};
  Vec3 bed_max{0.7, 0.15, 0.04};
  int frame_skip = 10;
  double time_budget = 5.0;
  int settle_steps = 200;
  double jitter = 0.3;
  double sky_extent = 2.0;
  double sky_height = 1.5;
  MaterialParams params;
};

/// Parses a JSON config (missing keys keep defaults; unknown keys are errors).
BulldozerConfig parse_bulldozer_config(const std::string& json_text);
ExcavationConfig parse_excavation_config(const std::string& json_text);

std::unique_ptr<Environment> make_bulldozer_env(const BulldozerConfig& config, SimulatorOptions options = {});
std::unique_ptr<Environment> make_excavation_env(const ExcavationConfig& config, SimulatorOptions options = {});

/// `kind` is "bulldozer" or "excavation".
std::unique_ptr<Environment> make_environment(const std::string& kind, const std::string& config_json,
                                              SimulatorOptions options = {});

}  // namespace granular
