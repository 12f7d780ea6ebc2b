#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "granular/error.hpp"
#include "granular/scene.hpp"

using namespace granular;

namespace {

ErrorKind kind_of(const std::function<void()>& fn)
{
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::State;
}

double min_pair_distance(const std::vector<Vec3>& x)
{
  double best = INFINITY;
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = i + 1; j < x.size(); ++j)
      best = std::fmin(best, norm(x[i] - x[j]));
  return best;
}

std::filesystem::path temp_dir()
{
  auto d = std::filesystem::temp_directory_path() / "granular_test_scene";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("material parameters reject out-of-range values")
{
  MaterialParams p;
  CHECK_NOTHROW(validate(p));

  auto bad = [](auto mutate) {
    MaterialParams q;
    mutate(q);
    return kind_of([&] { validate(q); });
  };
  CHECK(bad([](MaterialParams& q) { q.radius = 0.0; }) == ErrorKind::Validation);
  CHECK(bad([](MaterialParams& q) { q.radius = NAN; }) == ErrorKind::Validation);
  CHECK(bad([](MaterialParams& q) { q.particle_mass = -1.0; }) == ErrorKind::Validation);
  CHECK(bad([](MaterialParams& q) { q.friction = -0.1; }) == ErrorKind::Validation);
  CHECK(bad([](MaterialParams& q) { q.baumgarte_alpha = 1.5; }) == ErrorKind::Validation);
  CHECK(bad([](MaterialParams& q) { q.timestep = 0.0; }) == ErrorKind::Validation);
  CHECK(bad([](MaterialParams& q) { q.solver_iterations = 0; }) == ErrorKind::Validation);
  CHECK(bad([](MaterialParams& q) { q.gravity = {0, 0, INFINITY}; }) == ErrorKind::Validation);
  CHECK(bad([](MaterialParams& q) { q.gamma = 1.5; }) == ErrorKind::Validation);
  CHECK(bad([](MaterialParams& q) { q.gamma = -0.5; }) == ErrorKind::Validation);
}

TEST_CASE("scene validation names the offending particle")
{
  Scene s;
  s.particles.positions = {{0, 0, 0}, {1, 0, 0}};
  s.particles.velocities = {{0, 0, 0}};
  CHECK(kind_of([&] { validate(s); }) == ErrorKind::Validation);

  s.particles.velocities = {{0, 0, 0}, {0, NAN, 0}};
  try {
    validate(s);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("particle 1") != std::string::npos);
  }

  s.particles.velocities[1] = {};
  CHECK_NOTHROW(validate(s));
  s.boundary = CyclicBoundary{1.0, 1.0};
  CHECK(kind_of([&] { validate(s); }) == ErrorKind::Validation);
}

TEST_CASE("bodies with dangling driver references are rejected")
{
  Scene s;
  RigidBody b;
  b.geometry.shape = Primitive{SpherePrimitive{0.1}};
  b.driver = TrackSteeringDriver{0};
  s.bodies.push_back(b);
  CHECK(kind_of([&] { validate(s); }) == ErrorKind::Validation);

  s.bodies[0].driver = StaticDriver{};
  s.bodies[0].reference.rotation = Mat3::from_rows({2, 0, 0}, {0, 1, 0}, {0, 0, 1});
  CHECK(kind_of([&] { validate(s); }) == ErrorKind::Validation);
}

TEST_CASE("box lattice fills floor(L / 2r) sites per axis without overlap")
{
  const double r = 0.01;
  const ParticleSet p = seed_particles_grid(BoxRegion{{0, 0, 0}, {0.1, 0.07, 0.045}}, r);
  // 0.1 / 0.02 = 5, 0.07 / 0.02 = 3.5 -> 3, 0.045 / 0.02 = 2.25 -> 2
  CHECK(p.size() == 5 * 3 * 2);
  for (const Vec3& x : p.positions) {
    CHECK(x.x - r >= -1e-12);
    CHECK(x.x + r <= 0.1 + 1e-12);
    CHECK(x.y - r >= -1e-12);
    CHECK(x.y + r <= 0.07 + 1e-12);
    CHECK(x.z - r >= -1e-12);
    CHECK(x.z + r <= 0.045 + 1e-12);
  }
  CHECK(min_pair_distance(p.positions) == doctest::Approx(2 * r).epsilon(1e-12));
  CHECK(p.positions.front().z <= p.positions.back().z);
}

TEST_CASE("cylinder lattice keeps every sphere inside the wall")
{
  const double r = 0.01;
  const CylinderRegion c{{0.5, -0.2, 0.1}, 0.1, 0.1};
  const ParticleSet p = seed_particles_grid(c, r);
  REQUIRE(p.size() > 0);
  for (const Vec3& x : p.positions) {
    CHECK(std::hypot(x.x - 0.5, x.y + 0.2) + r <= 0.1 + 1e-12);
    CHECK(region_contains(c, x));
  }
}

TEST_CASE("jitter bounds displacement by jitter * r / 2 per axis and is seed-deterministic")
{
  const double r = 0.01;
  const BoxRegion box{{0, 0, 0}, {0.1, 0.1, 0.1}};
  const ParticleSet base = seed_particles_grid(box, r);
  SeedOptions o;
  o.jitter = 1.0;
  std::mt19937_64 a(7), b(7), c(8);
  const ParticleSet ja = seed_particles_grid(box, r, o, &a);
  const ParticleSet jb = seed_particles_grid(box, r, o, &b);
  const ParticleSet jc = seed_particles_grid(box, r, o, &c);
  REQUIRE(ja.size() == base.size());
  CHECK(ja.positions == jb.positions);
  CHECK(ja.positions != jc.positions);
  for (size_t i = 0; i < base.size(); ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(std::fabs(ja.positions[i][k] - base.positions[i][k]) <= 0.5 * r + 1e-15);
  CHECK(min_pair_distance(ja.positions) >= r);
}

TEST_CASE("count-limited seeding fills bottom-up and fails when the region is too small")
{
  const double r = 0.01;
  SeedOptions o;
  o.max_count = 30;
  const ParticleSet p = seed_particles_grid(BoxRegion{{0, 0, 0}, {0.1, 0.1, 0.1}}, r, o);
  CHECK(p.size() == 30);
  for (const Vec3& x : p.positions)
    CHECK(x.z <= 0.03 + 1e-12);

  o.max_count = 1000;
  CHECK(kind_of([&] { seed_particles_grid(BoxRegion{{0, 0, 0}, {0.1, 0.1, 0.1}}, r, o); }) ==
        ErrorKind::Validation);
  CHECK(kind_of([&] { seed_particles_grid(BoxRegion{{0, 0, 0}, {0.01, 0.1, 0.1}}, r); }) == ErrorKind::Validation);
  SeedOptions bad;
  bad.jitter = 2.0;
  CHECK(kind_of([&] { seed_particles_grid(BoxRegion{{0, 0, 0}, {0.1, 0.1, 0.1}}, r, bad); }) ==
        ErrorKind::InvalidArgument);
}

TEST_CASE("scene documents: regions, bodies, drivers")
{
  const char* text = R"({
    "seed": 4,
    "params": {"radius": 0.01, "friction": 0.3},
    "bodies": [
      {"name": "ground", "geometry": {"type": "half_space"}},
      {"name": "paddle", "geometry": {"type": "box", "half_extents": [0.05, 0.05, 0.01]},
       "pose": {"translation": [0, 0, 0.5]}, "driver": {"type": "scripted", "angular": [0, 0, 2]}}
    ],
    "particles": {"regions": [{"shape": "box", "min": [0, 0, 0], "max": [0.1, 0.1, 0.1], "count": 40, "jitter": 0.5}]}
  })";
  const Scene s = load_scene_string(text);
  CHECK(s.particles.size() == 40);
  CHECK(s.params.friction == 0.3);
  REQUIRE(s.bodies.size() == 2);
  CHECK(s.bodies[1].name == "paddle");
  CHECK(s.bodies[1].pose.translation == Vec3{0, 0, 0.5});
  CHECK(s.bodies[1].twist.angular.z == doctest::Approx(2.0));

  const Scene again = load_scene_string(text);
  CHECK(again.particles.positions == s.particles.positions);
}

TEST_CASE("scene documents: avoid_bodies drops lattice sites inside bodies")
{
  const char* text = R"({
    "bodies": [{"geometry": {"type": "sphere", "radius": 0.05}, "pose": {"translation": [0.05, 0.05, 0.05]}}],
    "particles": {"regions": [{"shape": "box", "min": [0, 0, 0], "max": [0.1, 0.1, 0.1]}]}
  })";
  const Scene s = load_scene_string(text);
  CHECK(s.particles.size() < 125);
  for (const Vec3& x : s.particles.positions)
    CHECK(norm(x - Vec3{0.05, 0.05, 0.05}) >= 0.05 + 0.01 - 1e-12);
}

TEST_CASE("scene documents: errors carry kind and location")
{
  try {
    load_scene_string("{\n  \"params\": {\"radius\": 0.01,,}\n}");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(kind_of([] { load_scene_string("[1, 2]"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { load_scene_string(R"({"bodies": [{"geometry": {"type": "torus"}}]})"); }) ==
        ErrorKind::Validation);
  CHECK(kind_of([] { load_scene_string(R"({"params": {"radius": -1}})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { load_scene_string(R"({"params": {"radius": "big"}})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { load_scene_string(R"({"particles": {"positions": [[0, 0]]}})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { load_scene_file("/nonexistent/dir/scene.json"); }) == ErrorKind::Io);
  CHECK(kind_of([] {
          load_scene_string(R"({"bodies": [{"geometry": {"type": "mesh", "path": "missing.obj"}}]})");
        }) == ErrorKind::Io);
}

TEST_CASE("serialized scenes reload to the same state")
{
  Scene s = load_scene_string(R"({
    "seed": 9,
    "hashmap_size": 512,
    "boundary": {"z_min": -0.5, "z_max": 1.5},
    "vehicles": [{"x": 0.1, "y": 0.2, "theta": 0.3, "action": [0.5, -0.5]}],
    "chains": [{"links": [{"axis": [0, 1, 0], "q": 0.25, "velocity_limit": 2}]}],
    "bodies": [
      {"geometry": {"type": "annulus", "inner_radius": 0.1, "outer_radius": 0.2, "half_thickness": 0.01}},
      {"geometry": {"type": "cylinder", "radius": 0.3, "half_height": 1, "inverted": true}},
      {"geometry": {"type": "box", "half_extents": [0.1, 0.1, 0.1]}, "driver": {"type": "track_steering"}},
      {"geometry": {"type": "sphere", "radius": 0.05}, "driver": {"type": "chain_link", "link": 0}}
    ],
    "particles": {"regions": [{"shape": "cylinder", "base": [0, 0, 0.3], "radius": 0.1, "height": 0.1, "jitter": 0.7}]}
  })");
  s.particles.velocities[0] = {0.1, -0.2, 1.0 / 3.0};
  s.time = 0.125;

  const std::string a = serialize_scene(s);
  const Scene t = load_scene_string(a);
  CHECK(t.particles.positions == s.particles.positions);
  CHECK(t.particles.velocities == s.particles.velocities);
  CHECK(t.time == s.time);
  CHECK(t.hashmap_size == 512);
  REQUIRE(t.boundary.has_value());
  CHECK(t.boundary->z_max == 1.5);
  REQUIRE(t.bodies.size() == 4);
  CHECK(t.bodies[1].geometry.inverted);
  CHECK(t.vehicles[0].action[1] == -0.5);
  CHECK(t.chains[0].positions()[0] == 0.25);
  CHECK(serialize_scene(t) == a);

  const auto path = temp_dir() / "roundtrip.json";
  save_scene(s, path);
  const Scene u = load_scene_file(path);
  CHECK(u.particles.positions == s.particles.positions);
}

TEST_CASE("relative mesh paths resolve against the scene file directory")
{
  const auto dir = temp_dir() / "with_mesh";
  std::filesystem::create_directories(dir / "meshes");
  save_obj(make_box_mesh({0.05, 0.05, 0.05}), dir / "meshes" / "cube.obj");
  {
    std::ofstream f(dir / "scene.json");
    f << R"({"bodies": [{"geometry": {"type": "mesh", "path": "meshes/cube.obj", "spacing": 0.01}}]})";
  }
  const Scene s = load_scene_file(dir / "scene.json");
  REQUIRE(s.bodies.size() == 1);
  CHECK(s.bodies[0].geometry.eval({0, 0, 0}) == doctest::Approx(-0.05).epsilon(0.05));
  CHECK(s.bodies[0].geometry.eval({0.2, 0, 0}) > 0.1);
}
