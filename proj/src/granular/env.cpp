#include "granular/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <json.hpp>

#include "granular/error.hpp"

namespace granular {

double distance_to_box(const GoalBox& box, const Vec3& p)
{
  const Vec3 q = cwise_min(cwise_max(p, box.min), box.max);
  return norm(p - q);
}

double bulldozer_reward(const ParticleSet& particles, const GoalBox& goal)
{
  const size_t n = particles.size();
  if (n == 0)
    fail(ErrorKind::InvalidArgument, "reward needs at least one particle");
  double sum = 0.0;
  for (const Vec3& x : particles.positions) {
    const bool inside = x.x >= goal.min.x && x.x <= goal.max.x && x.y >= goal.min.y && x.y <= goal.max.y &&
                        x.z >= goal.min.z && x.z <= goal.max.z;
    sum += inside ? 100.0 : -distance_to_box(goal, x);
  }
  return sum / static_cast<double>(n);
}

namespace {

using nlohmann::json;

size_t count_inside(const ParticleSet& particles, const GoalBox& goal)
{
  size_t k = 0;
  for (const Vec3& x : particles.positions)
    k += distance_to_box(goal, x) == 0.0;
  return k;
}

// --- config parsing -------------------------------------------------------------

class ConfigReader
{
public:
  explicit ConfigReader(const std::string& text)
  {
    if (text.empty())
      return;
    try {
      doc_ = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::Parse, std::string("environment config: ") + e.what());
    }
    if (!doc_.is_object())
      fail(ErrorKind::Parse, "environment config must be a JSON object");
  }

  template <typename T>
  void number(const char* key, T& out)
  {
    if (auto* v = find(key)) {
      if (!v->is_number())
        fail(ErrorKind::Validation, std::string("environment config: ") + key + " must be a number");
      out = v->get<T>();
    }
  }

  void vec3(const char* key, Vec3& out)
  {
    if (auto* v = find(key)) {
      if (!v->is_array() || v->size() != 3)
        fail(ErrorKind::Validation, std::string("environment config: ") + key + " must be an array of 3 numbers");
      for (size_t k = 0; k < 3; ++k)
        out[k] = (*v)[k].get<double>();
    }
  }

  void params(MaterialParams& p)
  {
    if (auto* v = find("params")) {
      ConfigReader sub;
      sub.doc_ = *v;
      sub.number("radius", p.radius);
      sub.number("particle_mass", p.particle_mass);
      sub.number("friction", p.friction);
      sub.number("baumgarte_alpha", p.baumgarte_alpha);
      sub.number("timestep", p.timestep);
      sub.number("solver_iterations", p.solver_iterations);
      sub.vec3("gravity", p.gravity);
      sub.number("gamma", p.gamma);
      sub.finish("params.");
    }
    validate(p);
  }

  void finish(const std::string& prefix = "")
  {
    for (auto it = doc_.begin(); doc_.is_object() && it != doc_.end(); ++it)
      if (!used_.count(it.key()))
        fail(ErrorKind::Validation, "environment config: unknown key '" + prefix + it.key() + "'");
  }

private:
  ConfigReader() = default;

  const json* find(const char* key)
  {
    used_.insert(key);
    if (!doc_.is_object())
      return nullptr;
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  json doc_ = json::object();
  std::set<std::string> used_;
};

void check_common(int frame_skip, double budget, int settle, double jitter, size_t n)
{
  if (frame_skip < 1)
    fail(ErrorKind::Validation, "environment config: frame_skip must be >= 1");
  if (!(budget > 0.0))
    fail(ErrorKind::Validation, "environment config: time_budget must be > 0");
  if (settle < 0)
    fail(ErrorKind::Validation, "environment config: settle_steps must be >= 0");
  if (!(jitter >= 0.0 && jitter <= 1.0))
    fail(ErrorKind::Validation, "environment config: jitter must lie in [0, 1]");
  if (n == 0)
    fail(ErrorKind::Validation, "environment config: n_particles must be >= 1");
}

uint64_t episode_length(double budget, int frame_skip, double dt)
{
  return std::max<uint64_t>(1, static_cast<uint64_t>(std::llround(budget / (frame_skip * dt))));
}

RigidBody attached_box(std::string name, const Vec3& half, const SE3& offset, MotionDriver driver)
{
  RigidBody b;
  b.name = std::move(name);
  b.geometry.shape = Primitive{BoxPrimitive{half}};
  b.driver = driver;
  b.reference = offset;
  return b;
}

SE3 at(const Vec3& t, const Mat3& R = Mat3::identity())
{
  SE3 p;
  p.rotation = R;
  p.translation = t;
  return p;
}

// Camera looking straight down, image right = world +x.
SE3 downward_camera(const Vec3& position)
{
  return at(position, Mat3::from_rows({1, 0, 0}, {0, -1, 0}, {0, 0, -1}));
}

ParticleSet seed_avoiding(const Scene& scene, const BoxRegion& region, size_t n, double jitter, std::mt19937_64& rng)
{
  SeedOptions opts;
  opts.jitter = jitter;
  opts.max_count = n;
  const double r = scene.params.radius;
  opts.accept = [&scene, r](const Vec3& p) {
    for (const RigidBody& b : scene.bodies)
      if (b.geometry.eval(b.pose.inverse_apply(p)) < 1.5 * r)
        if (!std::holds_alternative<HalfSpacePrimitive>(std::get<Primitive>(b.geometry.shape)))
          return false;
    return true;
  };
  return seed_particles_grid(region, r, opts, &rng);
}

void check_action(std::span<const double> action, size_t dims)
{
  if (action.size() != dims)
    fail(ErrorKind::InvalidArgument,
         "action must have " + std::to_string(dims) + " components (got " + std::to_string(action.size()) + ")");
  for (double a : action)
    if (!std::isfinite(a))
      fail(ErrorKind::InvalidArgument, "action components must be finite");
}

ObservationField image_field(const std::string& name, const DepthCamera& cam)
{
  return {name, true, static_cast<size_t>(cam.width), static_cast<size_t>(cam.height), 0.0, cam.far};
}

ObservationField vector_field(const std::string& name, size_t n)
{
  const double inf = std::numeric_limits<double>::infinity();
  return {name, false, n, 1, -inf, inf};
}

// --- bulldozer ---------------------------------------------------------------------

class BulldozerEnv final : public Environment
{
public:
  BulldozerEnv(const BulldozerConfig& config, SimulatorOptions options) : config_(config), options_(options)
  {
    check_common(config_.frame_skip, config_.time_budget, config_.settle_steps, config_.jitter, config_.n_particles);
    validate(config_.params);
    for (int k = 0; k < 3; ++k)
      if (!(config_.goal.min[k] < config_.goal.max[k]))
        fail(ErrorKind::Validation, "environment config: goal_min must be below goal_max componentwise");

    ego_.kind = CameraKind::Perspective;
    ego_.width = 36;
    ego_.height = 36;
    ego_.fov_y = 1.2;
    ego_.far = 3.0;
    ego_.attached_body = 1;
    // Forward along the chassis x axis, pitched down.
    const Mat3 forward = Mat3::from_rows({0, 0, 1}, {-1, 0, 0}, {0, -1, 0});
    ego_.pose = at({0.08, 0.0, 0.09}, forward * axis_angle({1, 0, 0}, -0.45));

    sky_.kind = CameraKind::Orthographic;
    sky_.width = 72;
    sky_.height = 36;
    sky_.extent = config_.sky_extent;
    sky_.far = config_.sky_height + 0.5;
    sky_.pose = downward_camera({0.3, 0.0, config_.sky_height});
  }

  const EnvObservation& reset(uint64_t seed) override
  {
    Scene s;
    s.params = config_.params;
    s.seed = seed;
    TrackVehicle v;
    v.state = {config_.start[0], config_.start[1], config_.start[2]};
    v.scale_v = config_.speed_scale;
    v.scale_omega = config_.turn_scale;
    s.vehicles.push_back(v);

    RigidBody ground;
    ground.name = "ground";
    ground.geometry.shape = Primitive{HalfSpacePrimitive{{0, 0, 1}, 0.0}};
    s.bodies.push_back(ground);
    s.bodies.push_back(attached_box("chassis", {0.12, 0.09, 0.05}, at({0, 0, 0.065}), TrackSteeringDriver{0}));
    s.bodies.push_back(attached_box("blade", {0.01, 0.16, 0.04}, at({0.15, 0, 0.045}), TrackSteeringDriver{0}));
    update_bodies(s);

    std::mt19937_64 rng(seed);
    s.particles = seed_avoiding(s, {config_.pile_min, config_.pile_max}, config_.n_particles, config_.jitter, rng);

    sim_ = std::make_unique<Simulator>(std::move(s), options_);
    for (int k = 0; k < config_.settle_steps; ++k)
      sim_->step();
    control_step_ = 0;
    done_ = false;
    last_contacts_ = 0;
    observe();
    return obs_;
  }

  EnvStep step(std::span<const double> action) override
  {
    if (!sim_)
      fail(ErrorKind::State, "step called before reset");
    if (done_)
      fail(ErrorKind::State, "episode finished; call reset");
    check_action(action, 2);
    TrackVehicle& v = sim_->scene().vehicles[0];
    v.action = {std::clamp(action[0], -1.0, 1.0), std::clamp(action[1], -1.0, 1.0)};
    for (int k = 0; k < config_.frame_skip; ++k)
      last_contacts_ = sim_->step().n_contacts;
    ++control_step_;
    done_ = control_step_ >= episode_steps();
    observe();

    EnvStep out;
    out.reward = bulldozer_reward(sim_->scene().particles, config_.goal);
    out.done = done_;
    out.info = info();
    return out;
  }

  BoxSpace action_space() const override { return {{-1.0, -1.0}, {1.0, 1.0}}; }
  std::vector<ObservationField> observation_space() const override
  {
    return {image_field("ego", ego_), image_field("sky", sky_), vector_field("pose", 3)};
  }
  const EnvObservation& observation() const override { return obs_; }
  const Scene& scene() const override
  {
    if (!sim_)
      fail(ErrorKind::State, "environment has not been reset");
    return sim_->scene();
  }
  uint64_t episode_steps() const override
  {
    return episode_length(config_.time_budget, config_.frame_skip, config_.params.timestep);
  }

private:
  void observe()
  {
    const Scene& s = sim_->scene();
    obs_.ego = render_depth(s, ego_);
    obs_.sky = render_depth(s, sky_);
    const TrackState& st = s.vehicles[0].state;
    obs_.pose = {st.x, st.y, st.theta};
  }

  EnvInfo info() const
  {
    EnvInfo i;
    i.control_step = control_step_;
    i.time = sim_->scene().time;
    i.particles_in_goal = count_inside(sim_->scene().particles, config_.goal);
    i.n_contacts = last_contacts_;
    return i;
  }

  BulldozerConfig config_;
  SimulatorOptions options_;
  DepthCamera ego_;
  DepthCamera sky_;
  std::unique_ptr<Simulator> sim_;
  EnvObservation obs_;
  uint64_t control_step_ = 0;
  bool done_ = false;
  size_t last_contacts_ = 0;
};

// --- excavation --------------------------------------------------------------------

KinematicChain make_excavator_arm()
{
  auto link = [](int parent, const Vec3& offset, const Vec3& axis, double limit) {
    ChainLink l;
    l.parent = parent;
    l.origin = at(offset);
    l.type = JointType::Revolute;
    l.axis = axis;
    l.velocity_limit = limit;
    return l;
  };
  std::vector<ChainLink> links{
      link(-1, {0, 0, 0.12}, {0, 0, 1}, 0.8),  // swing
      link(0, {0, 0, 0.08}, {0, 1, 0}, 0.8),   // shoulder
      link(1, {0.3, 0, 0}, {0, 1, 0}, 1.0),    // elbow
      link(2, {0.25, 0, 0}, {1, 0, 0}, 1.2),   // forearm roll
      link(3, {0.06, 0, 0}, {0, 1, 0}, 1.2),   // wrist pitch
      link(4, {0.04, 0, 0}, {0, 0, 1}, 1.2),   // wrist yaw
      link(5, {0.04, 0, 0}, {0, 1, 0}, 1.5),   // scoop curl
  };
  return KinematicChain(SE3{}, std::move(links));
}

class ExcavationEnv final : public Environment
{
public:
  ExcavationEnv(const ExcavationConfig& config, SimulatorOptions options) : config_(config), options_(options)
  {
    check_common(config_.frame_skip, config_.time_budget, config_.settle_steps, config_.jitter, config_.n_particles);
    validate(config_.params);
    sky_.kind = CameraKind::Orthographic;
    sky_.width = 72;
    sky_.height = 36;
    sky_.extent = config_.sky_extent;
    sky_.far = config_.sky_height + 0.5;
    sky_.pose = downward_camera({0.4, 0.0, config_.sky_height});
  }

  const EnvObservation& reset(uint64_t seed) override
  {
    Scene s;
    s.params = config_.params;
    s.seed = seed;
    KinematicChain arm = make_excavator_arm();
    const double rest[7] = {0.0, -0.5, 0.9, 0.0, 0.3, 0.0, 0.0};
    arm.set_positions(rest);
    s.chains.push_back(std::move(arm));

    RigidBody ground;
    ground.name = "ground";
    ground.geometry.shape = Primitive{HalfSpacePrimitive{{0, 0, 1}, 0.0}};
    s.bodies.push_back(ground);
    s.bodies.push_back(attached_box("scoop", {0.05, 0.06, 0.012}, at({0.06, 0, 0}), ChainLinkDriver{0, 6}));
    update_bodies(s);

    std::mt19937_64 rng(seed);
    s.particles = seed_avoiding(s, {config_.bed_min, config_.bed_max}, config_.n_particles, config_.jitter, rng);
    sim_ = std::make_unique<Simulator>(std::move(s), options_);
    for (int k = 0; k < config_.settle_steps; ++k)
      sim_->step();
    control_step_ = 0;
    done_ = false;
    observe();
    return obs_;
  }

  EnvStep step(std::span<const double> action) override
  {
    if (!sim_)
      fail(ErrorKind::State, "step called before reset");
    if (done_)
      fail(ErrorKind::State, "episode finished; call reset");
    check_action(action, 7);
    KinematicChain& arm = sim_->scene().chains[0];
    std::vector<double> qdot(7);
    for (size_t k = 0; k < 7; ++k)
      qdot[k] = std::clamp(action[k], -1.0, 1.0) * arm.links()[k].velocity_limit;
    arm.set_velocity_command(qdot);
    size_t contacts = 0;
    for (int k = 0; k < config_.frame_skip; ++k)
      contacts = sim_->step().n_contacts;
    ++control_step_;
    done_ = control_step_ >= episode_steps();
    observe();
    EnvStep out;
    out.reward = 0.0;
    out.done = done_;
    out.info.control_step = control_step_;
    out.info.time = sim_->scene().time;
    out.info.n_contacts = contacts;
    return out;
  }

  BoxSpace action_space() const override { return {std::vector<double>(7, -1.0), std::vector<double>(7, 1.0)}; }
  std::vector<ObservationField> observation_space() const override
  {
    return {image_field("sky", sky_), vector_field("joints", 7)};
  }
  const EnvObservation& observation() const override { return obs_; }
  const Scene& scene() const override
  {
    if (!sim_)
      fail(ErrorKind::State, "environment has not been reset");
    return sim_->scene();
  }
  uint64_t episode_steps() const override
  {
    return episode_length(config_.time_budget, config_.frame_skip, config_.params.timestep);
  }

private:
  void observe()
  {
    const Scene& s = sim_->scene();
    obs_.sky = render_depth(s, sky_);
    const auto q = s.chains[0].positions();
    obs_.joints.assign(q.begin(), q.end());
  }

  ExcavationConfig config_;
  SimulatorOptions options_;
  DepthCamera sky_;
  std::unique_ptr<Simulator> sim_;
  EnvObservation obs_;
  uint64_t control_step_ = 0;
  bool done_ = false;
};

}  // namespace

BulldozerConfig parse_bulldozer_config(const std::string& text)
{
  BulldozerConfig c;
  ConfigReader r(text);
  r.number("n_particles", c.n_particles);
  r.vec3("pile_min", c.pile_min);
  r.vec3("pile_max", c.pile_max);
  r.vec3("goal_min", c.goal.min);
  r.vec3("goal_max", c.goal.max);
  Vec3 start{c.start[0], c.start[1], c.start[2]};
  r.vec3("start", start);
  c.start = {start.x, start.y, start.z};
  r.number("speed_scale", c.speed_scale);
  r.number("turn_scale", c.turn_scale);
  r.number("frame_skip", c.frame_skip);
  r.number("time_budget", c.time_budget);
  r.number("settle_steps", c.settle_steps);
  r.number("jitter", c.jitter);
  r.number("sky_extent", c.sky_extent);
  r.number("sky_height", c.sky_height);
  r.params(c.params);
  r.finish();
  return c;
}

ExcavationConfig parse_excavation_config(const std::string& text)
{
  ExcavationConfig c;
  ConfigReader r(text);
  r.number("n_particles", c.n_particles);
  r.vec3("bed_min", c.bed_min);
  r.vec3("bed_max", c.bed_max);
  r.number("frame_skip", c.frame_skip);
  r.number("time_budget", c.time_budget);
  r.number("settle_steps", c.settle_steps);
  r.number("jitter", c.jitter);
  r.number("sky_extent", c.sky_extent);
  r.number("sky_height", c.sky_height);
  r.params(c.params);
  r.finish();
  return c;
}

std::unique_ptr<Environment> make_bulldozer_env(const BulldozerConfig& config, SimulatorOptions options)
{
  return std::make_unique<BulldozerEnv>(config, options);
}

std::unique_ptr<Environment> make_excavation_env(const ExcavationConfig& config, SimulatorOptions options)
{
  return std::make_unique<ExcavationEnv>(config, options);
}

std::unique_ptr<Environment> make_environment(const std::string& kind, const std::string& config_json,
                                              SimulatorOptions options)
{
  if (kind == "bulldozer")
    return make_bulldozer_env(parse_bulldozer_config(config_json), options);
  if (kind == "excavation")
    return make_excavation_env(parse_excavation_config(config_json), options);
  fail(ErrorKind::InvalidArgument, "unknown environment kind '" + kind + "' (expected bulldozer or excavation)");
}

}  // namespace granular
