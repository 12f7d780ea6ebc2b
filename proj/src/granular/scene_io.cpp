#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "json.hpp"

#include "granular/error.hpp"
#include "granular/scene.hpp"

namespace granular {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

[[noreturn]] void invalid(const std::string& where, const std::string& what)
{
  fail(ErrorKind::Validation, where + ": " + what);
}

const json& member(const json& obj, const char* key, const std::string& where)
{
  if (!obj.is_object() || !obj.contains(key))
    invalid(where, std::string("missing required field '") + key + "'");
  return obj.at(key);
}

double get_number(const json& j, const std::string& where)
{
  if (!j.is_number())
    invalid(where, "expected a number");
  return j.get<double>();
}

double number_or(const json& obj, const char* key, double fallback, const std::string& where)
{
  if (!obj.contains(key))
    return fallback;
  return get_number(obj.at(key), where + "." + key);
}

Vec3 get_vec3(const json& j, const std::string& where)
{
  if (!j.is_array() || j.size() != 3)
    invalid(where, "expected an array of 3 numbers");
  return {get_number(j[0], where + "[0]"), get_number(j[1], where + "[1]"), get_number(j[2], where + "[2]")};
}

Vec3 vec3_or(const json& obj, const char* key, Vec3 fallback, const std::string& where)
{
  if (!obj.contains(key))
    return fallback;
  return get_vec3(obj.at(key), where + "." + key);
}

json to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

SE3 get_pose(const json& j, const std::string& where)
{
  SE3 pose;
  if (j.is_null())
    return pose;
  if (!j.is_object())
    invalid(where, "expected an object with 'translation' and 'rotation' or 'axis_angle'");
  pose.translation = vec3_or(j, "translation", {}, where);
  if (j.contains("rotation")) {
    const json& r = j.at("rotation");
    if (!r.is_array() || r.size() != 3)
      invalid(where + ".rotation", "expected a 3x3 array of rows");
    pose.rotation = Mat3::from_rows(get_vec3(r[0], where + ".rotation[0]"), get_vec3(r[1], where + ".rotation[1]"),
                                    get_vec3(r[2], where + ".rotation[2]"));
  } else if (j.contains("axis_angle")) {
    const json& aa = j.at("axis_angle");
    if (!aa.is_array() || aa.size() != 4)
      invalid(where + ".axis_angle", "expected [ax, ay, az, angle]");
    const Vec3 axis{get_number(aa[0], where), get_number(aa[1], where), get_number(aa[2], where)};
    if (norm(axis) == 0.0)
      invalid(where + ".axis_angle", "axis must be nonzero");
    pose.rotation = axis_angle(axis, get_number(aa[3], where));
  }
  if (orthonormality_residual(pose.rotation) > 1e-9)
    invalid(where + ".rotation", "rotation must be orthonormal with determinant +1");
  return pose;
}

json pose_to_json(const SE3& pose)
{
  json rows = json::array();
  for (int r = 0; r < 3; ++r)
    rows.push_back(to_json(pose.rotation.row(r)));
  return {{"translation", to_json(pose.translation)}, {"rotation", rows}};
}

BakeOptions get_bake(const json& g, const std::string& where)
{
  BakeOptions b;
  b.spacing = number_or(g, "spacing", 0.0, where);
  b.margin = number_or(g, "margin", 0.0, where);
  return b;
}

struct GeometryBuild
{
  SdfGeometry geometry;
  GeometrySource source;
};

GeometryBuild get_geometry(const json& g, const std::filesystem::path& base_dir, const std::string& where)
{
  const std::string type = member(g, "type", where).get<std::string>();
  GeometryBuild out;
  out.geometry.inverted = g.value("inverted", false);
  if (type == "sphere") {
    out.geometry.shape = Primitive{SpherePrimitive{number_or(g, "radius", 1.0, where)}};
  } else if (type == "box") {
    out.geometry.shape = Primitive{BoxPrimitive{get_vec3(member(g, "half_extents", where), where + ".half_extents")}};
  } else if (type == "cylinder") {
    out.geometry.shape =
        Primitive{CylinderPrimitive{number_or(g, "radius", 1.0, where), number_or(g, "half_height", 1.0, where)}};
  } else if (type == "half_space") {
    HalfSpacePrimitive h{vec3_or(g, "normal", {0, 0, 1}, where), number_or(g, "offset", 0.0, where)};
    if (norm(h.normal) == 0.0)
      invalid(where + ".normal", "normal must be nonzero");
    out.geometry.shape = Primitive{h};
  } else if (type == "annulus") {
    AnnulusPrimitive a{number_or(g, "inner_radius", 0.5, where), number_or(g, "outer_radius", 1.0, where),
                       number_or(g, "half_thickness", 0.05, where)};
    if (!(a.inner_radius >= 0.0 && a.outer_radius > a.inner_radius && a.half_thickness > 0.0))
      invalid(where, "annulus requires 0 <= inner_radius < outer_radius and half_thickness > 0");
    out.geometry.shape = Primitive{a};
  } else if (type == "mesh") {
    MeshSource m{member(g, "path", where).get<std::string>(), get_bake(g, where), g.value("cache", std::string{})};
    out.source = m;
    out.geometry.shape = realize_grid(out.source, base_dir);
  } else if (type == "gear") {
    GearSource s;
    s.params.teeth = g.value("teeth", s.params.teeth);
    s.params.module = number_or(g, "module", s.params.module, where);
    s.params.face_width = number_or(g, "face_width", s.params.face_width, where);
    s.params.helix_angle = number_or(g, "helix_angle", s.params.helix_angle, where);
    s.params.pressure_angle = number_or(g, "pressure_angle", s.params.pressure_angle, where);
    s.params.flank_samples = g.value("flank_samples", s.params.flank_samples);
    s.params.layers = g.value("layers", s.params.layers);
    s.bake = get_bake(g, where);
    out.source = s;
    out.geometry.shape = realize_grid(out.source, base_dir);
  } else if (type == "grid") {
    out.source = GridFileSource{member(g, "path", where).get<std::string>()};
    out.geometry.shape = realize_grid(out.source, base_dir);
  } else {
    invalid(where + ".type", "unknown geometry type '" + type + "'");
  }
  return out;
}

json geometry_to_json(const RigidBody& b)
{
  json g;
  std::visit(
      [&](const auto& src) {
        using S = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<S, MeshSource>) {
          g = {{"type", "mesh"}, {"path", src.path}};
          if (src.bake.spacing > 0.0)
            g["spacing"] = src.bake.spacing;
          if (src.bake.margin > 0.0)
            g["margin"] = src.bake.margin;
          if (!src.cache.empty())
            g["cache"] = src.cache;
        } else if constexpr (std::is_same_v<S, GearSource>) {
          g = {{"type", "gear"},
               {"teeth", src.params.teeth},
               {"module", src.params.module},
               {"face_width", src.params.face_width},
               {"helix_angle", src.params.helix_angle},
               {"pressure_angle", src.params.pressure_angle},
               {"flank_samples", src.params.flank_samples},
               {"layers", src.params.layers}};
          if (src.bake.spacing > 0.0)
            g["spacing"] = src.bake.spacing;
          if (src.bake.margin > 0.0)
            g["margin"] = src.bake.margin;
        } else if constexpr (std::is_same_v<S, GridFileSource>) {
          g = {{"type", "grid"}, {"path", src.path}};
        } else {
          const auto* prim = std::get_if<Primitive>(&b.geometry.shape);
          if (!prim)
            fail(ErrorKind::State, "body '" + b.name + "' has a grid geometry without a recorded source");
          std::visit(
              [&](const auto& p) {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, SpherePrimitive>)
                  g = {{"type", "sphere"}, {"radius", p.radius}};
                else if constexpr (std::is_same_v<P, BoxPrimitive>)
                  g = {{"type", "box"}, {"half_extents", to_json(p.half_extents)}};
                else if constexpr (std::is_same_v<P, CylinderPrimitive>)
                  g = {{"type", "cylinder"}, {"radius", p.radius}, {"half_height", p.half_height}};
                else if constexpr (std::is_same_v<P, HalfSpacePrimitive>)
                  g = {{"type", "half_space"}, {"normal", to_json(p.normal)}, {"offset", p.offset}};
                else
                  g = {{"type", "annulus"},
                       {"inner_radius", p.inner_radius},
                       {"outer_radius", p.outer_radius},
                       {"half_thickness", p.half_thickness}};
              },
              *prim);
        }
      },
      b.source);
  if (b.geometry.inverted)
    g["inverted"] = true;
  return g;
}

MotionDriver get_driver(const json& d, const std::string& where)
{
  if (d.is_null())
    return StaticDriver{};
  const std::string type = member(d, "type", where).get<std::string>();
  if (type == "static")
    return StaticDriver{};
  if (type == "scripted")
    return ScriptedDriver{{vec3_or(d, "angular", {}, where), vec3_or(d, "linear", {}, where)}};
  if (type == "track_steering")
    return TrackSteeringDriver{d.value("vehicle", size_t{0})};
  if (type == "chain_link")
    return ChainLinkDriver{d.value("chain", size_t{0}), member(d, "link", where).get<size_t>()};
  invalid(where + ".type", "unknown driver type '" + type + "'");
}

json driver_to_json(const MotionDriver& driver)
{
  return std::visit(
      [](const auto& d) -> json {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, StaticDriver>)
          return {{"type", "static"}};
        else if constexpr (std::is_same_v<D, ScriptedDriver>)
          return {{"type", "scripted"}, {"angular", to_json(d.body_rate.angular)}, {"linear", to_json(d.body_rate.linear)}};
        else if constexpr (std::is_same_v<D, TrackSteeringDriver>)
          return {{"type", "track_steering"}, {"vehicle", d.vehicle}};
        else
          return {{"type", "chain_link"}, {"chain", d.chain}, {"link", d.link}};
      },
      driver);
}

MaterialParams get_params(const json& p)
{
  MaterialParams m;
  if (p.is_null())
    return m;
  const std::string w = "params";
  m.radius = number_or(p, "radius", m.radius, w);
  m.particle_mass = number_or(p, "particle_mass", m.particle_mass, w);
  m.friction = number_or(p, "friction", m.friction, w);
  m.baumgarte_alpha = number_or(p, "baumgarte_alpha", m.baumgarte_alpha, w);
  m.timestep = number_or(p, "timestep", m.timestep, w);
  if (p.contains("solver_iterations")) {
    if (!p.at("solver_iterations").is_number_integer())
      invalid("params.solver_iterations", "expected an integer");
    m.solver_iterations = p.at("solver_iterations").get<int>();
  }
  m.gravity = vec3_or(p, "gravity", m.gravity, w);
  m.gamma = number_or(p, "gamma", m.gamma, w);
  return m;
}

std::vector<Vec3> get_vec3_list(const json& j, const std::string& where)
{
  if (!j.is_array())
    invalid(where, "expected an array of 3-vectors");
  std::vector<Vec3> out;
  out.reserve(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    out.push_back(get_vec3(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::string line_info(const std::string& text, size_t byte)
{
  size_t line = 1, col = 1;
  for (size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

std::shared_ptr<const SdfGrid> realize_grid(const GeometrySource& source, const std::filesystem::path& base_dir)
{
  // Grids are immutable once baked, so identical sources share one instance.
  static std::mutex mutex;
  static std::map<std::string, std::weak_ptr<const SdfGrid>> cache;

  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  std::string key;
  if (const auto* m = std::get_if<MeshSource>(&source)) {
    key = "mesh|" + resolve(m->path).string() + "|" + std::to_string(m->bake.spacing) + "|" + std::to_string(m->bake.margin);
  } else if (const auto* g = std::get_if<GearSource>(&source)) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "gear|" << g->params.teeth << '|' << g->params.module << '|' << g->params.face_width << '|'
       << g->params.helix_angle << '|' << g->params.pressure_angle << '|' << g->params.flank_samples << '|'
       << g->params.layers << '|' << g->bake.spacing << '|' << g->bake.margin;
    key = ss.str();
  } else if (const auto* f = std::get_if<GridFileSource>(&source)) {
    key = "grid|" + resolve(f->path).string();
  } else {
    fail(ErrorKind::InvalidArgument, "primitive geometry has no grid");
  }

  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end())
      if (auto existing = it->second.lock())
        return existing;
  }

  std::shared_ptr<const SdfGrid> grid;
  if (const auto* m = std::get_if<MeshSource>(&source)) {
    const std::filesystem::path mesh_path = resolve(m->path);
    if (!std::filesystem::exists(mesh_path))
      fail(ErrorKind::Io, "mesh file '" + mesh_path.string() + "' does not exist");
    const TriangleMesh mesh = load_mesh(mesh_path);
    const uint64_t hash = content_hash(mesh);
    if (!m->cache.empty() && std::filesystem::exists(resolve(m->cache))) {
      SdfGrid cached = load_sdf_grid(resolve(m->cache));
      const double expected = m->bake.spacing > 0.0 ? m->bake.spacing : cached.spacing.x;
      if (cached.mesh_hash == hash && cached.spacing.x == expected)
        grid = std::make_shared<const SdfGrid>(std::move(cached));
    }
    if (!grid) {
      SdfGrid baked = bake_mesh_sdf(mesh, m->bake);
      if (!m->cache.empty())
        save_sdf_grid(baked, resolve(m->cache));
      grid = std::make_shared<const SdfGrid>(std::move(baked));
    }
  } else if (const auto* g = std::get_if<GearSource>(&source)) {
    grid = std::make_shared<const SdfGrid>(bake_mesh_sdf(make_gear_mesh(g->params), g->bake));
  } else {
    grid = std::make_shared<const SdfGrid>(load_sdf_grid(resolve(std::get<GridFileSource>(source).path)));
  }

  std::lock_guard lock(mutex);
  cache[key] = grid;
  return grid;
}

Scene load_scene_string(const std::string& text, const std::filesystem::path& base_dir)
{
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, "scene parse error at " + line_info(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
  }
  if (!doc.is_object())
    fail(ErrorKind::Parse, "scene document must be a JSON object");

  Scene scene;
  try {
    if (doc.contains("version") && doc.at("version").get<int>() != kSchemaVersion)
      invalid("version", "unsupported scene schema version");
    scene.seed = doc.value("seed", uint64_t{0});
    scene.time = number_or(doc, "time", 0.0, "scene");
    scene.hashmap_size = doc.value("hashmap_size", size_t{0});
    scene.params = get_params(doc.value("params", json()));
    validate(scene.params);

    if (doc.contains("boundary")) {
      const json& b = doc.at("boundary");
      scene.boundary = CyclicBoundary{get_number(member(b, "z_min", "boundary"), "boundary.z_min"),
                                      get_number(member(b, "z_max", "boundary"), "boundary.z_max")};
    }

    if (doc.contains("vehicles")) {
      for (size_t i = 0; i < doc.at("vehicles").size(); ++i) {
        const json& v = doc.at("vehicles")[i];
        const std::string w = "vehicles[" + std::to_string(i) + "]";
        TrackVehicle veh;
        veh.state = {number_or(v, "x", 0.0, w), number_or(v, "y", 0.0, w), number_or(v, "theta", 0.0, w)};
        veh.z = number_or(v, "z", 0.0, w);
        veh.scale_v = number_or(v, "scale_v", 1.0, w);
        veh.scale_omega = number_or(v, "scale_omega", 1.0, w);
        if (v.contains("action")) {
          const json& a = v.at("action");
          if (!a.is_array() || a.size() != 2)
            invalid(w + ".action", "expected [linear, yaw]");
          veh.action = {get_number(a[0], w), get_number(a[1], w)};
        }
        scene.vehicles.push_back(veh);
      }
    }

    if (doc.contains("chains")) {
      for (size_t c = 0; c < doc.at("chains").size(); ++c) {
        const json& cj = doc.at("chains")[c];
        const std::string w = "chains[" + std::to_string(c) + "]";
        std::vector<ChainLink> links;
        std::vector<double> q, qdot;
        const json& lj = member(cj, "links", w);
        for (size_t i = 0; i < lj.size(); ++i) {
          const std::string lw = w + ".links[" + std::to_string(i) + "]";
          ChainLink l;
          l.parent = lj[i].value("parent", static_cast<int>(i) - 1);
          l.origin = get_pose(lj[i].value("origin", json()), lw + ".origin");
          const std::string joint = lj[i].value("joint", std::string("revolute"));
          if (joint == "revolute")
            l.type = JointType::Revolute;
          else if (joint == "prismatic")
            l.type = JointType::Prismatic;
          else
            invalid(lw + ".joint", "expected 'revolute' or 'prismatic'");
          const Vec3 axis = vec3_or(lj[i], "axis", {0, 0, 1}, lw);
          if (norm(axis) == 0.0)
            invalid(lw + ".axis", "axis must be nonzero");
          l.axis = normalized(axis);
          l.velocity_limit = number_or(lj[i], "velocity_limit", 1.0, lw);
          links.push_back(l);
          q.push_back(number_or(lj[i], "q", 0.0, lw));
          qdot.push_back(number_or(lj[i], "qdot", 0.0, lw));
        }
        KinematicChain chain(get_pose(cj.value("base", json()), w + ".base"), std::move(links));
        chain.set_positions(q);
        chain.set_velocity_command(qdot);
        scene.chains.push_back(std::move(chain));
      }
    }

    if (doc.contains("bodies")) {
      for (size_t i = 0; i < doc.at("bodies").size(); ++i) {
        const json& bj = doc.at("bodies")[i];
        const std::string w = "bodies[" + std::to_string(i) + "]";
        RigidBody body;
        body.name = bj.value("name", std::string{});
        GeometryBuild g = get_geometry(member(bj, "geometry", w), base_dir, w + ".geometry");
        body.geometry = std::move(g.geometry);
        body.source = std::move(g.source);
        body.reference = get_pose(bj.value("pose", json()), w + ".pose");
        body.driver = get_driver(bj.value("driver", json()), w + ".driver");
        scene.bodies.push_back(std::move(body));
      }
    }

    update_bodies(scene);

    if (doc.contains("particles")) {
      const json& pj = doc.at("particles");
      if (pj.contains("positions")) {
        scene.particles.positions = get_vec3_list(pj.at("positions"), "particles.positions");
        if (pj.contains("velocities"))
          scene.particles.velocities = get_vec3_list(pj.at("velocities"), "particles.velocities");
        else
          scene.particles.velocities.assign(scene.particles.positions.size(), Vec3{});
      }
      std::mt19937_64 rng(scene.seed);
      if (pj.contains("regions")) {
        for (size_t i = 0; i < pj.at("regions").size(); ++i) {
          const json& rj = pj.at("regions")[i];
          const std::string w = "particles.regions[" + std::to_string(i) + "]";
          const std::string shape = member(rj, "shape", w).get<std::string>();
          SeedRegion region;
          if (shape == "box")
            region = BoxRegion{get_vec3(member(rj, "min", w), w + ".min"), get_vec3(member(rj, "max", w), w + ".max")};
          else if (shape == "cylinder")
            region = CylinderRegion{get_vec3(member(rj, "base", w), w + ".base"),
                                    get_number(member(rj, "radius", w), w + ".radius"),
                                    get_number(member(rj, "height", w), w + ".height")};
          else
            invalid(w + ".shape", "expected 'box' or 'cylinder'");

          SeedOptions opts;
          opts.jitter = number_or(rj, "jitter", 0.0, w);
          if (rj.contains("count"))
            opts.max_count = rj.at("count").get<size_t>();
          opts.velocity = vec3_or(rj, "velocity", {}, w);
          if (rj.value("avoid_bodies", true) && !scene.bodies.empty()) {
            const double r = scene.params.radius;
            opts.accept = [&scene, r](const Vec3& p) {
              for (const RigidBody& b : scene.bodies)
                if (b.geometry.eval(b.pose.inverse_apply(p)) < r)
                  return false;
              return true;
            };
          }
          scene.particles.append(seed_particles_grid(region, scene.params.radius, opts, &rng));
        }
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Validation, std::string("scene document has an invalid field: ") + e.what());
  }

  validate(scene);
  return scene;
}

Scene load_scene_file(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::Io, "cannot open scene file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return load_scene_string(ss.str(), path.parent_path());
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

std::string serialize_scene(const Scene& scene)
{
  json doc;
  doc["version"] = kSchemaVersion;
  doc["seed"] = scene.seed;
  doc["time"] = scene.time;
  doc["hashmap_size"] = scene.hashmap_size;
  const MaterialParams& p = scene.params;
  doc["params"] = {{"radius", p.radius},
                   {"particle_mass", p.particle_mass},
                   {"friction", p.friction},
                   {"baumgarte_alpha", p.baumgarte_alpha},
                   {"timestep", p.timestep},
                   {"solver_iterations", p.solver_iterations},
                   {"gravity", to_json(p.gravity)},
                   {"gamma", p.gamma}};
  if (scene.boundary)
    doc["boundary"] = {{"z_min", scene.boundary->z_min}, {"z_max", scene.boundary->z_max}};

  json vehicles = json::array();
  for (const TrackVehicle& v : scene.vehicles)
    vehicles.push_back({{"x", v.state.x},
                        {"y", v.state.y},
                        {"theta", v.state.theta},
                        {"z", v.z},
                        {"scale_v", v.scale_v},
                        {"scale_omega", v.scale_omega},
                        {"action", {v.action[0], v.action[1]}}});
  doc["vehicles"] = vehicles;

  json chains = json::array();
  for (const KinematicChain& c : scene.chains) {
    json links = json::array();
    for (size_t i = 0; i < c.size(); ++i) {
      const ChainLink& l = c.links()[i];
      links.push_back({{"parent", l.parent},
                       {"origin", pose_to_json(l.origin)},
                       {"joint", l.type == JointType::Revolute ? "revolute" : "prismatic"},
                       {"axis", to_json(l.axis)},
                       {"velocity_limit", l.velocity_limit},
                       {"q", c.positions()[i]},
                       {"qdot", c.velocity_command()[i]}});
    }
    chains.push_back({{"base", pose_to_json(c.base())}, {"links", links}});
  }
  doc["chains"] = chains;

  json bodies = json::array();
  for (const RigidBody& b : scene.bodies)
    bodies.push_back({{"name", b.name},
                      {"geometry", geometry_to_json(b)},
                      {"pose", pose_to_json(b.reference)},
                      {"driver", driver_to_json(b.driver)}});
  doc["bodies"] = bodies;

  json positions = json::array(), velocities = json::array();
  for (size_t i = 0; i < scene.particles.size(); ++i) {
    positions.push_back(to_json(scene.particles.positions[i]));
    velocities.push_back(to_json(scene.particles.velocities[i]));
  }
  doc["particles"] = {{"positions", positions}, {"velocities", velocities}};
  return doc.dump(1);
}

void save_scene(const Scene& scene, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::Io, "cannot write scene file '" + path.string() + "'");
  out << serialize_scene(scene) << '\n';
}

}  // namespace granular
