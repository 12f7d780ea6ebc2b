#include "granular/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "granular/error.hpp"

namespace granular {
namespace {

RigidBody make_body(std::string name, Primitive shape, const SE3& pose, bool inverted = false)
{
  RigidBody b;
  b.name = std::move(name);
  b.geometry.shape = std::move(shape);
  b.geometry.inverted = inverted;
  b.reference = pose;
  b.pose = pose;
  return b;
}

SE3 translation(const Vec3& t)
{
  SE3 p;
  p.translation = t;
  return p;
}

bool clear_of_bodies(const std::vector<RigidBody>& bodies, const Vec3& p, double clearance)
{
  for (const RigidBody& b : bodies)
    if (b.geometry.eval(b.pose.inverse_apply(p)) < clearance)
      return false;
  return true;
}

}  // namespace

Scene make_column_scene(const ColumnConfig& c)
{
  validate(c.params);
  const double r = c.params.radius;
  double radius = c.column_radius;
  if (radius <= 0.0) {
    if (!(c.layers > 0.0))
      fail(ErrorKind::InvalidArgument, "column layers must be > 0");
    radius = r + 2.0 * r * std::sqrt(static_cast<double>(c.n_particles) / (std::numbers::pi * c.layers)) + 2.0 * r;
  }
  if (radius < 2.0 * r)
    fail(ErrorKind::InvalidArgument, "column radius must be at least 2r");

  Scene s;
  s.params = c.params;
  s.seed = c.seed;

  // Enough height for the lattice, then twice that for the container.
  CylinderRegion region{{0, 0, 0}, radius, 0.0};
  {
    SeedOptions probe;
    region.height = 2.0 * r;
    const size_t per_layer = seed_particles_grid(region, r, probe).size();
    const size_t layers = (c.n_particles + per_layer - 1) / per_layer;
    region.height = 2.0 * r * static_cast<double>(std::max<size_t>(layers, 1));
  }
  // Separate floor and wall: a capped cylinder alone would only report the
  // nearer of the two surfaces to particles sitting in the corner.
  const double wall_height = 2.0 * region.height + 4.0 * r;
  s.bodies.push_back(make_body("ground", HalfSpacePrimitive{{0, 0, 1}, 0.0}, SE3{}));
  s.bodies.push_back(make_body("wall", CylinderPrimitive{radius, wall_height}, translation({0, 0, 0}), true));

  std::mt19937_64 rng(c.seed);
  SeedOptions opts;
  opts.jitter = c.jitter;
  opts.max_count = c.n_particles;
  s.particles = seed_particles_grid(region, r, opts, &rng);
  update_bodies(s);
  return s;
}

Scene make_pile_scene(const PileConfig& c)
{
  validate(c.params);
  const double r = c.params.radius;
  Scene s;
  s.params = c.params;
  s.seed = c.seed;
  s.bodies.push_back(make_body("ground", HalfSpacePrimitive{{0, 0, 1}, 0.0}, SE3{}));

  const double half = 0.5 * c.footprint;
  const size_t per_axis = static_cast<size_t>(std::floor(c.footprint / (2.0 * r) + 1e-9));
  if (per_axis == 0)
    fail(ErrorKind::InvalidArgument, "pile footprint must be at least 2r");
  const size_t per_layer = per_axis * per_axis;
  const double height = 2.0 * r * static_cast<double>((c.n_particles + per_layer - 1) / per_layer);
  std::mt19937_64 rng(c.seed);
  SeedOptions opts;
  opts.jitter = c.jitter;
  opts.max_count = c.n_particles;
  s.particles = seed_particles_grid(BoxRegion{{-half, -half, 0.0}, {half, half, height}}, r, opts, &rng);
  update_bodies(s);
  return s;
}

double pile_peak_height(const ParticleSet& particles, double radius)
{
  if (particles.size() == 0)
    return 0.0;
  double top = -std::numeric_limits<double>::infinity();
  for (const Vec3& x : particles.positions)
    top = std::max(top, x.z);
  return top + radius;
}

Scene make_gear_tower_scene(const GearTowerConfig& c)
{
  validate(c.params);
  const double r = c.params.radius;
  const double H = c.height;
  Scene s;
  s.params = c.params;
  s.seed = c.seed;
  s.boundary = CyclicBoundary{0.0, H};

  // Cross-section grows with the particle count so the fill height stays put.
  const double R = 0.15 * std::max(1.0, std::sqrt(static_cast<double>(c.n_particles) / 2000.0));

  // Walls only: the caps lie far outside the periodic band.
  s.bodies.push_back(make_body("wall", CylinderPrimitive{R, 2.0 * H}, translation({0, 0, 0.5 * H}), true));
  s.bodies.push_back(make_body("orifice", AnnulusPrimitive{0.35 * R, R + 4.0 * r, 2.0 * r},
                               translation({0, 0, 0.12 * H})));

  std::mt19937_64 rng(c.seed);
  if (c.n_bodies > 0) {
    GearParams gp;
    gp.module = 0.01;
    gp.face_width = 0.04;
    GearSource src{gp, {}};
    const auto grid = realize_grid(src, {});
    const double tip = gp.module * (static_cast<double>(gp.teeth) / 2.0 + 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (size_t k = 0; k < c.n_bodies; ++k) {
      const double heading = 2.0 * std::numbers::pi * unit(rng);
      const double place = 2.0 * std::numbers::pi * unit(rng);
      const double reach = std::max(0.0, R - tip - 2.0 * r) * std::sqrt(unit(rng));
      const double z = H * (0.2 + 0.25 * (static_cast<double>(k) + unit(rng)) / static_cast<double>(c.n_bodies));
      const double omega = -3.0 + 6.0 * unit(rng);
      SE3 pose;
      // Gear axis (body z) turned horizontal, pointing along `heading`.
      pose.rotation = axis_angle({0, 0, 1}, heading) * axis_angle({0, 1, 0}, std::numbers::pi / 2);
      pose.translation = {reach * std::cos(place), reach * std::sin(place), z};
      RigidBody gear;
      gear.name = "gear" + std::to_string(k);
      gear.geometry.shape = grid;
      gear.source = src;
      gear.driver = ScriptedDriver{Twist{{0, 0, omega}, {0, 0, 0}}};
      gear.reference = pose;
      gear.pose = pose;
      s.bodies.push_back(std::move(gear));
    }
  }
  update_bodies(s);

  SeedOptions opts;
  opts.jitter = 0.3;
  opts.max_count = c.n_particles;
  const std::vector<RigidBody>& bodies = s.bodies;
  opts.accept = [&bodies, r](const Vec3& p) { return clear_of_bodies(bodies, p, 1.5 * r); };
  s.particles = seed_particles_grid(CylinderRegion{{0, 0, 0.5 * H}, R, 0.5 * H - r}, r, opts, &rng);
  return s;
}

}  // namespace granular
