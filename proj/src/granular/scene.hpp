#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "granular/kinematics.hpp"
#include "granular/mesh.hpp"
#include "granular/sdf.hpp"
#include "granular/vec.hpp"

namespace granular {

/// Shared by every particle: the media are homogeneous, so the mass matrix
/// is particle_mass * I and is never formed explicitly.
struct MaterialParams
{
  double radius = 0.01;
  double particle_mass = 1.0;
  double friction = 0.5;
  double baumgarte_alpha = 0.2;
  double timestep = 1e-3;
  int solver_iterations = 10;
  Vec3 gravity{0.0, 0.0, -9.81};
  /// Weight of the partner velocity in the relative contact velocity.
  double gamma = 1.0;
};

/// Throws a validation error naming the first violated invariant.
void validate(const MaterialParams& params);

struct ParticleSet
{
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;

  size_t size() const noexcept { return positions.size(); }
  void append(const ParticleSet& other);
};

struct CyclicBoundary
{
  double z_min = 0.0;
  double z_max = 1.0;
};

/// Where a body's collision geometry came from; kept so scenes serialize back
/// to the same declarative description.
struct MeshSource
{
  std::string path;
  BakeOptions bake;
  std::string cache;  ///< optional grid cache path
};

struct GearSource
{
  GearParams params;
  BakeOptions bake;
};

struct GridFileSource
{
  std::string path;
};

using GeometrySource = std::variant<std::monostate, MeshSource, GearSource, GridFileSource>;

struct RigidBody
{
  std::string name;
  SdfGeometry geometry;
  GeometrySource source;
  MotionDriver driver;
  /// Pose at t = 0 for static/scripted drivers; attachment offset relative to
  /// the vehicle or chain link otherwise.
  SE3 reference;

  // Evaluated state at the scene time.
  SE3 pose;
  Twist twist;
};

struct Scene
{
  ParticleSet particles;
  std::vector<RigidBody> bodies;
  std::vector<TrackVehicle> vehicles;
  std::vector<KinematicChain> chains;
  MaterialParams params;
  std::optional<CyclicBoundary> boundary;
  double time = 0.0;
  uint64_t seed = 0;
  /// Broadphase table size; 0 selects the default (2 n_p rounded up to a power of two).
  size_t hashmap_size = 0;
};

/// Re-evaluates every body's pose and twist from its driver at scene.time.
void update_bodies(Scene& scene);

/// Throws a validation error naming the violated invariant.
void validate(const Scene& scene);

// --- particle seeding ----------------------------------------------------------

struct BoxRegion
{
  Vec3 min{};
  Vec3 max{};
};

/// Vertical cylinder standing on `base` (center of the bottom disk).
struct CylinderRegion
{
  Vec3 base{};
  double radius = 1.0;
  double height = 1.0;
};

using SeedRegion = std::variant<BoxRegion, CylinderRegion>;

bool region_contains(const SeedRegion& region, const Vec3& p);

struct SeedOptions
{
  double jitter = 0.0;  ///< in [0, 1]; per-axis displacement bounded by jitter * r / 2
  size_t max_count = std::numeric_limits<size_t>::max();
  Vec3 velocity{};
  std::function<bool(const Vec3&)> accept;  ///< optional extra filter on lattice sites
};

/// Simple cubic lattice of pitch 2r, centered in the region, every sphere
/// fully inside it, filled bottom-up (z, then y, then x).
ParticleSet seed_particles_grid(const SeedRegion& region, double r, const SeedOptions& options = {},
                                std::mt19937_64* rng = nullptr);

// --- scene documents --------------------------------------------------------------

/// Parses a scene document. Relative mesh paths resolve against base_dir.
Scene load_scene_string(const std::string& text, const std::filesystem::path& base_dir = {});
Scene load_scene_file(const std::filesystem::path& path);

/// Serializes the realized state (explicit particle arrays, no seed regions).
std::string serialize_scene(const Scene& scene);
void save_scene(const Scene& scene, const std::filesystem::path& path);

/// Bakes (or loads from cache) the grid for a mesh or gear geometry source.
std::shared_ptr<const SdfGrid> realize_grid(const GeometrySource& source, const std::filesystem::path& base_dir);

}  // namespace granular
