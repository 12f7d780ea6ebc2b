#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <mutex>
#include <random>
#include <set>
#include <tuple>

#include "granular/error.hpp"
#include "granular/kinematics.hpp"
#include "granular/scenes.hpp"
#include "granular/stepper.hpp"
#include "granular/trajectory.hpp"

using namespace granular;
namespace fs = std::filesystem;

namespace {

RigidBody ground()
{
  RigidBody g;
  g.name = "ground";
  g.geometry.shape = Primitive{HalfSpacePrimitive{{0, 0, 1}, 0.0}};
  return g;
}

Scene single_particle(Vec3 x, Vec3 v, bool with_ground)
{
  Scene s;
  s.particles.positions = {x};
  s.particles.velocities = {v};
  if (with_ground)
    s.bodies.push_back(ground());
  return s;
}

Scene small_pile(uint64_t seed, size_t n = 300)
{
  PileConfig cfg;
  cfg.n_particles = n;
  cfg.footprint = 0.05;
  cfg.seed = seed;
  return make_pile_scene(cfg);
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path temp_path(const std::string& name)
{
  return fs::temp_directory_path() / ("granular_test_" + name);
}

struct ContactSetRecorder : ImpulseObserver
{
  std::mutex m;
  std::set<std::tuple<int, uint32_t, uint32_t, int>> keys;
  void on_impulse(const Contact& c, const Vec3& b, int sweep) override
  {
    std::lock_guard<std::mutex> lock(m);
    if (sweep == 0)
      keys.emplace(static_cast<int>(c.kind), c.i, c.j, 0);
    (void)b;
  }
};

double max_rel_diff(const std::vector<Vec3>& a, const std::vector<Vec3>& b)
{
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::fmax(worst, norm(a[i] - b[i]) / std::fmax(1.0, norm(a[i])));
  return worst;
}

}  // namespace

TEST_CASE("free flight follows the exact semi-implicit recurrence")
{
  Simulator sim(single_particle({0.1, -0.2, 5.0}, {0.3, 0.0, 1.0}, false));
  const double dt = 1e-3, g = 9.81;
  for (int k = 1; k <= 1000; ++k)
    sim.step();
  const double n = 1000;
  const Vec3& x = sim.scene().particles.positions[0];
  const Vec3& v = sim.scene().particles.velocities[0];
  CHECK(std::fabs(v.z - (1.0 - n * g * dt)) <= 1e-12);
  CHECK(std::fabs(x.z - (5.0 + n * dt * 1.0 - g * dt * dt * n * (n + 1) / 2)) <= 1e-12);
  CHECK(std::fabs(x.x - (0.1 + n * dt * 0.3)) <= 1e-12);
  CHECK(sim.scene().time == doctest::Approx(1.0));
}

TEST_CASE("zero gravity keeps uniform motion exactly")
{
  Scene s = single_particle({0, 0, 0}, {0.25, -0.5, 0.125}, false);
  s.params.gravity = {0, 0, 0};
  Simulator sim(std::move(s));
  for (int k = 0; k < 64; ++k)
    sim.step();
  CHECK(sim.scene().particles.velocities[0] == Vec3{0.25, -0.5, 0.125});
  CHECK(norm(sim.scene().particles.positions[0] - Vec3{0.016, -0.032, 0.008}) <= 1e-15);
}

TEST_CASE("a dropped particle settles on the floor")
{
  Simulator sim(single_particle({0, 0, 0.05}, {0, 0, 0}, true));
  for (int k = 0; k < 200; ++k)
    sim.step();
  const double r = sim.scene().params.radius;
  const double z = sim.scene().particles.positions[0].z;
  CHECK(std::fabs(r - z) <= 0.1 * r);
  CHECK(std::fabs(sim.scene().particles.velocities[0].z) <= 1e-3);
}

TEST_CASE("cyclic boundary wraps with the same velocity")
{
  const CyclicBoundary b{0.0, 1.0};
  std::vector<Vec3> x{{0, 0, -0.01}, {0, 0, 0.5}, {0, 0, 0.0}};
  CHECK(apply_cyclic_boundary(x, b) == 1);
  CHECK(x[0].z == doctest::Approx(0.99));
  CHECK(x[1].z == 0.5);
  CHECK(x[2].z == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 1.0);
  std::vector<Vec3> cloud(1000);
  for (Vec3& p : cloud)
    p = {u(rng), u(rng), u(rng)};
  const size_t below = static_cast<size_t>(std::count_if(cloud.begin(), cloud.end(), [](const Vec3& p) { return p.z < 0; }));
  CHECK(apply_cyclic_boundary(cloud, b) == below);
  CHECK(cloud.size() == 1000);

  Scene s = single_particle({0, 0, 0.0005}, {0, 0, -1.0}, false);
  s.boundary = CyclicBoundary{0.0, 2.0};
  Simulator sim(std::move(s));
  sim.step();
  CHECK(sim.scene().particles.positions[0].z == doctest::Approx(0.0005 - 1.00981e-3 + 2.0));
  CHECK(sim.scene().particles.velocities[0].z == doctest::Approx(-1.00981));
}

TEST_CASE("empty scenes and zero-step runs")
{
  Simulator sim(Scene{});
  const auto reports = sim.run(100, nullptr, 1, true);
  REQUIRE(reports.size() == 100);
  for (const StepReport& r : reports)
    CHECK(r.n_contacts + r.n_body_contacts == 0);

  Scene pile = small_pile(1, 50);
  const auto before = pile.particles.positions;
  Simulator idle(std::move(pile));
  CHECK(idle.run(0).empty());
  CHECK(idle.scene().particles.positions == before);
}

TEST_CASE("pipeline modes agree bitwise in serial")
{
  std::vector<Scene> out;
  std::vector<std::vector<size_t>> counts;
  for (PipelineMode mode : {PipelineMode::TwoLoopsSplit, PipelineMode::TwoLoopsFused, PipelineMode::OneLoop}) {
    SimulatorOptions o;
    o.mode = mode;
    Simulator sim(small_pile(2), o);
    std::vector<size_t> c;
    for (int k = 0; k < 150; ++k) {
      const StepReport r = sim.step();
      c.push_back(r.n_contacts * 1000003 + r.n_body_contacts);
    }
    out.push_back(sim.scene());
    counts.push_back(c);
  }
  for (size_t m = 1; m < out.size(); ++m) {
    CHECK(out[m].particles.positions == out[0].particles.positions);
    CHECK(out[m].particles.velocities == out[0].particles.velocities);
    CHECK(counts[m] == counts[0]);
  }
}

TEST_CASE("modes see the same contact set")
{
  std::vector<std::set<std::tuple<int, uint32_t, uint32_t, int>>> sets;
  for (PipelineMode mode : {PipelineMode::TwoLoopsSplit, PipelineMode::TwoLoopsFused, PipelineMode::OneLoop}) {
    Scene s = small_pile(3);
    Simulator warm(std::move(s));
    warm.run(60);
    ContactSetRecorder rec;
    SimulatorOptions o;
    o.mode = mode;
    o.observer = &rec;
    Simulator sim(warm.scene(), o);
    sim.step();
    sets.push_back(rec.keys);
  }
  CHECK(!sets[0].empty());
  CHECK(sets[1] == sets[0]);
  CHECK(sets[2] == sets[0]);
}

TEST_CASE("parallel workers reproduce the contact set and stay close to serial")
{
  Simulator warm(small_pile(4, 600));
  warm.run(80);
  ContactSetRecorder serial_rec, parallel_rec;
  SimulatorOptions so;
  so.observer = &serial_rec;
  Simulator serial(warm.scene(), so);
  SimulatorOptions po;
  po.workers = 4;
  po.observer = &parallel_rec;
  Simulator parallel(warm.scene(), po);
  const StepReport a = serial.step();
  const StepReport b = parallel.step();
  CHECK(serial_rec.keys == parallel_rec.keys);
  CHECK(a.n_contacts == b.n_contacts);
  CHECK(a.n_candidates == b.n_candidates);
  CHECK(max_rel_diff(serial.scene().particles.velocities, parallel.scene().particles.velocities) <= 1e-12);
}

TEST_CASE("contact list regrows when the initial capacity is too small")
{
  SimulatorOptions o;
  o.contacts_per_particle = 0;
  Simulator sim(small_pile(5, 400), o);
  sim.run(120);
  CHECK(sim.contact_regrowths() >= 1);

  SimulatorOptions roomy;
  Simulator ref(small_pile(5, 400), roomy);
  ref.run(120);
  CHECK(ref.scene().particles.positions == sim.scene().particles.positions);
  CHECK(sim.contact_capacity() >= 64);
}

TEST_CASE("rotating the scene rotates the velocity changes")
{
  Simulator warm(small_pile(6, 300));
  warm.run(100);
  Scene base = warm.scene();
  base.bodies.clear();
  base.params.gravity = {0, 0, 0};
  const SE3 rot{axis_angle({0.3, -0.5, 0.8}, 0.7), {0, 0, 0}};

  auto delta = [](Scene s) {
    const auto v0 = s.particles.velocities;
    Simulator sim(std::move(s));
    sim.step();
    std::vector<Vec3> d(v0.size());
    for (size_t i = 0; i < d.size(); ++i)
      d[i] = sim.scene().particles.velocities[i] - v0[i];
    return d;
  };
  Scene turned = base;
  for (Vec3& p : turned.particles.positions)
    p = rot.rotation * p;
  for (Vec3& v : turned.particles.velocities)
    v = rot.rotation * v;
  const auto d0 = delta(base);
  const auto d1 = delta(turned);
  double scale = 0.0, worst = 0.0;
  for (size_t i = 0; i < d0.size(); ++i) {
    scale = std::fmax(scale, norm(d0[i]));
    worst = std::fmax(worst, norm(rot.rotation * d0[i] - d1[i]));
  }
  CHECK(scale > 0.0);
  CHECK(worst <= 1e-6 * scale);
}

TEST_CASE("trajectory files roundtrip and respect the stride")
{
  const fs::path path = temp_path("traj.bin");
  Scene s = small_pile(7, 40);
  const double dt = s.params.timestep;
  Simulator sim(std::move(s));
  {
    TrajectoryWriter w(path, TrajectoryHeader{1, true, 40, dt, 5});
    sim.run(12, &w, 5);
    CHECK(w.frames_written() == 3);
  }
  CHECK(fs::file_size(path) == 8 + 4 + 4 + 8 + 8 + 8 + 3 * (8 + 8 + 2 * 3 * 40 * 4));
  TrajectoryReader r(path);
  CHECK(r.header().particle_count == 40);
  CHECK(r.header().has_velocities);
  CHECK(r.header().stride == 5);
  CHECK(r.header().timestep == dt);
  std::vector<uint64_t> steps;
  std::optional<TrajectoryFrame> last;
  while (auto f = r.next()) {
    steps.push_back(f->step);
    CHECK(f->positions.size() == 120);
    CHECK(f->velocities.size() == 120);
    last = std::move(f);
  }
  CHECK(steps == std::vector<uint64_t>{0, 5, 10});
  CHECK(last->time == doctest::Approx(10 * dt));
  fs::remove(path);

  std::ofstream(path, std::ios::binary) << "NOTATRAJ";
  CHECK_THROWS_AS(TrajectoryReader{path}, Error);
  fs::remove(path);
}

TEST_CASE("serial runs write byte-identical trajectories")
{
  std::string bytes[2];
  for (int k = 0; k < 2; ++k) {
    const fs::path path = temp_path("det" + std::to_string(k) + ".bin");
    Scene s = small_pile(8, 200);
    const double dt = s.params.timestep;
    Simulator sim(std::move(s));
    {
      TrajectoryWriter w(path, TrajectoryHeader{1, true, 200, dt, 10});
      sim.run(100, &w, 10);
    }
    bytes[k] = slurp(path);
    fs::remove(path);
  }
  CHECK(bytes[0].size() > 0);
  CHECK(bytes[0] == bytes[1]);
}

TEST_CASE("numeric failures abort the step")
{
  Scene s;
  s.particles.positions = {{0, 0, 0}, {0.015, 0, 0}};
  s.particles.velocities = {{0, 0, 0}, {0, 0, 0}};
  CHECK_THROWS_AS(Simulator([&] {
                    Scene bad = s;
                    bad.particles.velocities[0].x = NAN;
                    return bad;
                  }()),
                  Error);
  Simulator sim(std::move(s));
  sim.scene().particles.velocities[0].x = NAN;
  try {
    sim.step();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
  }
}

TEST_CASE("mode names parse and print")
{
  for (PipelineMode m : {PipelineMode::OneLoop, PipelineMode::TwoLoopsFused, PipelineMode::TwoLoopsSplit})
    CHECK(parse_pipeline_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_pipeline_mode("warp"), Error);
}

TEST_CASE("kinetic energy and reported step fields")
{
  CHECK(kinetic_energy({{1, 0, 0}, {0, 2, 0}}, 2.0) == doctest::Approx(5.0));
  Simulator sim(small_pile(9, 100));
  sim.run(50);
  const StepReport r = sim.step();
  CHECK(r.step == 51);
  CHECK(r.kinetic_energy == doctest::Approx(kinetic_energy(sim.scene().particles.velocities, 1.0)));
  CHECK(r.candidate_hit_rate >= 0.0);
  CHECK(r.candidate_hit_rate <= 1.0);
  CHECK(r.body_impulses.size() == sim.scene().bodies.size());
}
