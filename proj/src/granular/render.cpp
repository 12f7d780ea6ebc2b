#include "granular/render.hpp"

#include <cmath>

#include "granular/error.hpp"
#include "granular/parallel.hpp"

namespace granular {
namespace {

constexpr double kHitTolerance = 1e-5;
constexpr int kMaxMarchSteps = 256;

std::optional<double> trace_body(const RigidBody& body, const Ray& ray, double far)
{
  auto f = [&](double t) { return body.geometry.eval(body.pose.inverse_apply(ray.origin + ray.direction * t)); };
  double t = 0.0;
  double d = f(t);
  if (d <= 0.0)
    return std::nullopt;
  for (int k = 0; k < kMaxMarchSteps && t <= far; ++k) {
    if (d < kHitTolerance)
      return t;
    t += 0.9 * d;
    d = f(t);
  }
  return std::nullopt;
}

}  // namespace

void validate(const DepthCamera& c)
{
  if (c.width < 1 || c.height < 1)
    fail(ErrorKind::Validation, "camera width and height must be >= 1");
  if (!(c.far > 0.0) || !std::isfinite(c.far))
    fail(ErrorKind::Validation, "camera far must be > 0");
  if (c.kind == CameraKind::Perspective && !(c.fov_y > 0.0 && c.fov_y < 3.14159))
    fail(ErrorKind::Validation, "camera fov_y must lie in (0, pi)");
  if (c.kind == CameraKind::Orthographic && !(c.extent > 0.0))
    fail(ErrorKind::Validation, "camera extent must be > 0");
}

SE3 camera_world_pose(const DepthCamera& camera, const Scene& scene)
{
  if (!camera.attached_body)
    return camera.pose;
  if (*camera.attached_body >= scene.bodies.size())
    fail(ErrorKind::InvalidArgument, "camera attached to a missing body");
  return scene.bodies[*camera.attached_body].pose * camera.pose;
}

Ray pixel_ray(const DepthCamera& c, const SE3& pose, int u, int v)
{
  const double sx = 2.0 * (u + 0.5) / c.width - 1.0;
  const double sy = 2.0 * (v + 0.5) / c.height - 1.0;
  const double aspect = static_cast<double>(c.width) / c.height;
  if (c.kind == CameraKind::Perspective) {
    const double t = std::tan(0.5 * c.fov_y);
    const Vec3 d = normalized(Vec3{sx * t * aspect, sy * t, 1.0});
    return {pose.translation, pose.rotation * d};
  }
  const double half_w = 0.5 * c.extent;
  const double half_h = half_w / aspect;
  return {pose.apply({sx * half_w, sy * half_h, 0.0}), pose.rotation * Vec3{0, 0, 1}};
}

std::optional<double> ray_sphere(const Ray& ray, const Vec3& center, double radius)
{
  const Vec3 oc = ray.origin - center;
  const double b = dot(oc, ray.direction);
  const double c = norm2(oc) - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0)
    return std::nullopt;
  const double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= 0.0)
    t = -b + s;
  if (t <= 0.0)
    return std::nullopt;
  return t;
}

DepthImage render_depth(const Scene& scene, const DepthCamera& camera, WorkerPool* pool)
{
  validate(camera);
  const SE3 pose = camera_world_pose(camera, scene);
  DepthImage img;
  img.width = camera.width;
  img.height = camera.height;
  img.depth.assign(static_cast<size_t>(camera.width) * static_cast<size_t>(camera.height),
                   static_cast<float>(camera.far));
  const double r = scene.params.radius;
  const auto& xs = scene.particles.positions;

  auto shade = [&](size_t begin, size_t end, size_t) {
    for (size_t p = begin; p < end; ++p) {
      const int u = static_cast<int>(p % static_cast<size_t>(camera.width));
      const int v = static_cast<int>(p / static_cast<size_t>(camera.width));
      const Ray ray = pixel_ray(camera, pose, u, v);
      double best = camera.far;
      for (const Vec3& x : xs)
        if (auto t = ray_sphere(ray, x, r); t && *t < best)
          best = *t;
      for (const RigidBody& b : scene.bodies)
        if (auto t = trace_body(b, ray, best); t && *t < best)
          best = *t;
      img.depth[p] = static_cast<float>(best);
    }
  };
  const size_t n = img.depth.size();
  if (pool)
    pool->parallel_for(n, shade);
  else
    shade(0, n, 0);
  return img;
}

}  // namespace granular
