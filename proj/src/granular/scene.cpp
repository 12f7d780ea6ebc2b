#include "granular/scene.hpp"

#include <algorithm>
#include <sstream>

#include "granular/error.hpp"

namespace granular {

namespace {

std::string num(double v)
{
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

void require(bool ok, const std::string& what)
{
  if (!ok)
    fail(ErrorKind::Validation, what);
}

}  // namespace

void validate(const MaterialParams& p)
{
  require(std::isfinite(p.radius) && p.radius > 0.0, "params.radius must be > 0 (got " + num(p.radius) + ")");
  require(std::isfinite(p.particle_mass) && p.particle_mass > 0.0,
          "params.particle_mass must be > 0 (got " + num(p.particle_mass) + ")");
  require(std::isfinite(p.friction) && p.friction >= 0.0, "params.friction must be >= 0 (got " + num(p.friction) + ")");
  require(std::isfinite(p.baumgarte_alpha) && p.baumgarte_alpha >= 0.0 && p.baumgarte_alpha <= 1.0,
          "params.baumgarte_alpha must lie in [0, 1] (got " + num(p.baumgarte_alpha) + ")");
  require(std::isfinite(p.timestep) && p.timestep > 0.0, "params.timestep must be > 0 (got " + num(p.timestep) + ")");
  require(p.solver_iterations >= 1,
          "params.solver_iterations must be >= 1 (got " + std::to_string(p.solver_iterations) + ")");
  require(is_finite(p.gravity), "params.gravity must be finite");
  require(std::isfinite(p.gamma) && p.gamma >= 0.0 && p.gamma <= 1.0,
          "params.gamma must lie in [0, 1] (got " + num(p.gamma) + ")");
}

void ParticleSet::append(const ParticleSet& other)
{
  positions.insert(positions.end(), other.positions.begin(), other.positions.end());
  velocities.insert(velocities.end(), other.velocities.begin(), other.velocities.end());
}

void update_bodies(Scene& scene)
{
  for (RigidBody& b : scene.bodies) {
    const DrivenState s = evaluate_driver(b.driver, b.reference, scene.time, scene.vehicles, scene.chains);
    b.pose = s.pose;
    b.twist = s.twist;
  }
}

void validate(const Scene& scene)
{
  validate(scene.params);
  require(scene.particles.positions.size() == scene.particles.velocities.size(),
          "particles.positions and particles.velocities must have the same length");
  for (size_t i = 0; i < scene.particles.size(); ++i) {
    require(is_finite(scene.particles.positions[i]), "particle " + std::to_string(i) + " has a non-finite position");
    require(is_finite(scene.particles.velocities[i]), "particle " + std::to_string(i) + " has a non-finite velocity");
  }
  require(std::isfinite(scene.time) && scene.time >= 0.0, "time must be finite and >= 0");
  if (scene.boundary)
    require(std::isfinite(scene.boundary->z_min) && std::isfinite(scene.boundary->z_max) &&
                scene.boundary->z_min < scene.boundary->z_max,
            "boundary.z_min must be < boundary.z_max");
  for (size_t i = 0; i < scene.bodies.size(); ++i) {
    const RigidBody& b = scene.bodies[i];
    const std::string who = "body " + std::to_string(i) + (b.name.empty() ? "" : " ('" + b.name + "')");
    require(orthonormality_residual(b.reference.rotation) <= 1e-9, who + ": pose rotation must be orthonormal with det +1");
    require(is_finite(b.reference.translation), who + ": pose translation must be finite");
    if (const auto* d = std::get_if<TrackSteeringDriver>(&b.driver))
      require(d->vehicle < scene.vehicles.size(), who + ": driver refers to vehicle " + std::to_string(d->vehicle) + " which does not exist");
    if (const auto* d = std::get_if<ChainLinkDriver>(&b.driver))
      require(d->chain < scene.chains.size() && d->link < scene.chains[d->chain].size(),
              who + ": driver refers to a chain link which does not exist");
    if (const auto* g = std::get_if<std::shared_ptr<const SdfGrid>>(&b.geometry.shape))
      require(*g != nullptr, who + ": grid geometry is missing");
  }
  for (size_t i = 0; i < scene.vehicles.size(); ++i) {
    const TrackVehicle& v = scene.vehicles[i];
    require(std::isfinite(v.state.x) && std::isfinite(v.state.y) && std::isfinite(v.state.theta) && std::isfinite(v.z),
            "vehicle " + std::to_string(i) + " state must be finite");
    require(v.scale_v >= 0.0 && v.scale_omega >= 0.0, "vehicle " + std::to_string(i) + " scales must be >= 0");
  }
}

bool region_contains(const SeedRegion& region, const Vec3& p)
{
  return std::visit(
      [&](const auto& r) {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, BoxRegion>) {
          return p.x >= r.min.x && p.x <= r.max.x && p.y >= r.min.y && p.y <= r.max.y && p.z >= r.min.z &&
                 p.z <= r.max.z;
        } else {
          const double dx = p.x - r.base.x, dy = p.y - r.base.y;
          return dx * dx + dy * dy <= r.radius * r.radius && p.z >= r.base.z && p.z <= r.base.z + r.height;
        }
      },
      region);
}

ParticleSet seed_particles_grid(const SeedRegion& region, double r, const SeedOptions& options, std::mt19937_64* rng)
{
  if (!(r > 0.0))
    fail(ErrorKind::InvalidArgument, "particle radius must be positive");
  if (!(options.jitter >= 0.0 && options.jitter <= 1.0))
    fail(ErrorKind::InvalidArgument, "jitter must lie in [0, 1]");

  Vec3 lo, hi;
  double inner_radius = 0.0;
  const CylinderRegion* cyl = std::get_if<CylinderRegion>(&region);
  if (const auto* box = std::get_if<BoxRegion>(&region)) {
    lo = box->min;
    hi = box->max;
  } else {
    lo = {cyl->base.x - cyl->radius, cyl->base.y - cyl->radius, cyl->base.z};
    hi = {cyl->base.x + cyl->radius, cyl->base.y + cyl->radius, cyl->base.z + cyl->height};
    inner_radius = cyl->radius - r;
  }

  const double pitch = 2.0 * r;
  int n[3];
  double start[3];
  for (int a = 0; a < 3; ++a) {
    const double len = hi[a] - lo[a];
    n[a] = len >= pitch ? static_cast<int>(std::floor(len / pitch + 1e-9)) : 0;
    start[a] = lo[a] + 0.5 * (len - n[a] * pitch) + r;
  }

  ParticleSet out;
  std::uniform_real_distribution<double> jitter(-0.5 * options.jitter * r, 0.5 * options.jitter * r);
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) {
        if (out.size() >= options.max_count)
          return out;
        Vec3 p{start[0] + i * pitch, start[1] + j * pitch, start[2] + k * pitch};
        if (cyl) {
          const double dx = p.x - cyl->base.x, dy = p.y - cyl->base.y;
          if (inner_radius < 0.0 || dx * dx + dy * dy > inner_radius * inner_radius)
            continue;
        }
        if (options.accept && !options.accept(p))
          continue;
        if (options.jitter > 0.0 && rng)
          p += Vec3{jitter(*rng), jitter(*rng), jitter(*rng)};
        out.positions.push_back(p);
        out.velocities.push_back(options.velocity);
      }

  if (out.size() == 0)
    fail(ErrorKind::Validation, "seed region is too small to hold a particle of radius " + num(r));
  if (options.max_count != std::numeric_limits<size_t>::max() && out.size() < options.max_count)
    fail(ErrorKind::Validation, "seed region is too small: holds " + std::to_string(out.size()) + " of " +
                                    std::to_string(options.max_count) + " requested particles");
  return out;
}

}  // namespace granular
