#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <variant>
#include <vector>

#include "granular/kinematics.hpp"
#include "granular/mesh.hpp"
#include "granular/vec.hpp"

namespace granular {

class WorkerPool;

// Closed-form shapes in body coordinates. Distances are negative inside.

struct SpherePrimitive
{
  double radius = 1.0;
};

struct BoxPrimitive
{
  Vec3 half_extents{0.5, 0.5, 0.5};
};

/// Capped cylinder along the body z axis.
struct CylinderPrimitive
{
  double radius = 1.0;
  double half_height = 1.0;
};

/// Solid below the plane dot(normal, x) = offset.
struct HalfSpacePrimitive
{
  Vec3 normal{0, 0, 1};
  double offset = 0.0;
};

/// Flat ring plate in the body xy plane (a disk with a centered hole).
struct AnnulusPrimitive
{
  double inner_radius = 0.5;
  double outer_radius = 1.0;
  double half_thickness = 0.05;
};

using Primitive =
    std::variant<SpherePrimitive, BoxPrimitive, CylinderPrimitive, HalfSpacePrimitive, AnnulusPrimitive>;

double sdf_primitive(const Primitive& shape, const Vec3& p);
/// Analytic gradient; may be zero on medial sets (e.g. the axis of a cylinder).
Vec3 sdf_primitive_gradient(const Primitive& shape, const Vec3& p);

/// Signed distances sampled on a regular axis-aligned lattice. Knot (i,j,k)
/// sits at origin + (i*sx, j*sy, k*sz); values are stored x-fastest.
struct SdfGrid
{
  Vec3 origin{};
  Vec3 spacing{1, 1, 1};
  std::array<int, 3> dims{2, 2, 2};
  std::vector<float> values;
  uint64_t mesh_hash = 0;

  size_t index(int i, int j, int k) const
  {
    return static_cast<size_t>(i) + static_cast<size_t>(dims[0]) * (static_cast<size_t>(j) + static_cast<size_t>(dims[1]) * static_cast<size_t>(k));
  }
  Vec3 knot(int i, int j, int k) const
  {
    return {origin.x + i * spacing.x, origin.y + j * spacing.y, origin.z + k * spacing.z};
  }
  Vec3 upper() const { return knot(dims[0] - 1, dims[1] - 1, dims[2] - 1); }
  double min_spacing() const { return std::fmin(spacing.x, std::fmin(spacing.y, spacing.z)); }
  double max_spacing() const { return std::fmax(spacing.x, std::fmax(spacing.y, spacing.z)); }
};

/// Trilinear interpolation of the 8 surrounding knots. Points outside the
/// grid box are clamped onto it and the Euclidean distance to the box is added.
double sdf_query(const SdfGrid& grid, const Vec3& p);

struct BakeOptions
{
  double spacing = 0.0;  ///< <= 0 selects max bounding-box extent / 64
  double margin = 0.0;   ///< <= 0 selects 2 * spacing; must be >= 2 * spacing
};

/// Bakes a closed, consistently oriented triangle mesh into a grid. Each knot
/// holds the distance to the nearest triangle, signed by the angle-weighted
/// pseudonormal of the nearest feature.
SdfGrid bake_mesh_sdf(const TriangleMesh& mesh, const BakeOptions& options = {}, WorkerPool* pool = nullptr);

/// Exact signed distance to a mesh (same rule as the baker, no grid).
class MeshDistance
{
public:
  explicit MeshDistance(const TriangleMesh& mesh);
  ~MeshDistance();
  MeshDistance(MeshDistance&&) noexcept;
  MeshDistance& operator=(MeshDistance&&) noexcept;

  double signed_distance(const Vec3& p) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

void save_sdf_grid(const SdfGrid& grid, const std::filesystem::path& path);
SdfGrid load_sdf_grid(const std::filesystem::path& path);

/// Collision geometry of a rigid body: a primitive or a baked grid, optionally
/// inverted (so the solid is the complement, e.g. a container wall).
struct SdfGeometry
{
  std::variant<Primitive, std::shared_ptr<const SdfGrid>> shape;
  bool inverted = false;

  double eval(const Vec3& body_point) const;
  /// Analytic for primitives, central differences with step min-spacing / 2
  /// for grids.
  Vec3 gradient(const Vec3& body_point) const;
};

struct Penetration
{
  bool contact = false;
  bool degenerate = false;  ///< penetrating, but the gradient vanished
  double depth = 0.0;       ///< max(0, r - f) >= 0
  double distance = 0.0;    ///< f at the particle center
  Vec3 normal{};            ///< world frame, pointing out of the body
};

/// Sphere of radius r centered at a world point against a posed geometry.
/// `pose` maps body coordinates to world coordinates.
Penetration penetration_depth(const SdfGeometry& geom, const SE3& pose, const Vec3& world_point, double r);

}  // namespace granular
