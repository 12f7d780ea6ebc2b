#pragma once

#include <optional>
#include <vector>

#include "granular/kinematics.hpp"
#include "granular/scene.hpp"

namespace granular {

class WorkerPool;

enum class CameraKind
{
  Perspective,
  Orthographic,
};

/// Camera frame: +z looks forward, +x is image right, +y is image down.
/// Depth is the distance along the pixel ray to the first hit.
struct DepthCamera
{
  CameraKind kind = CameraKind::Perspective;
  SE3 pose;  ///< camera to world, or camera to body when attached
  std::optional<size_t> attached_body;
  int width = 36;
  int height = 36;
  double fov_y = 1.2;   ///< perspective, radians
  double extent = 1.0;  ///< orthographic, image width in meters
  double far = 5.0;
};

struct DepthImage
{
  int width = 0;
  int height = 0;
  std::vector<float> depth;  ///< row-major, meters

  float at(int u, int v) const { return depth[static_cast<size_t>(v) * static_cast<size_t>(width) + static_cast<size_t>(u)]; }
};

struct Ray
{
  Vec3 origin;
  Vec3 direction;  ///< unit
};

void validate(const DepthCamera& camera);

/// World pose of the camera, following its attachment.
SE3 camera_world_pose(const DepthCamera& camera, const Scene& scene);

/// Ray through the center of pixel (u, v) for a camera at world pose `pose`.
Ray pixel_ray(const DepthCamera& camera, const SE3& pose, int u, int v);

/// Distance along the ray to a sphere, or nullopt if missed or behind.
std::optional<double> ray_sphere(const Ray& ray, const Vec3& center, double radius);

/// Nearest hit among particles (exact) and bodies (sphere tracing); misses
/// read `far`. Bodies whose solid contains the ray origin are ignored.
DepthImage render_depth(const Scene& scene, const DepthCamera& camera, WorkerPool* pool = nullptr);

}  // namespace granular
