#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "granular/vec.hpp"

namespace granular {

struct TriangleMesh
{
  std::vector<Vec3> vertices;
  std::vector<std::array<uint32_t, 3>> triangles;

  bool empty() const noexcept { return triangles.empty(); }
};

struct Aabb
{
  Vec3 min{};
  Vec3 max{};

  Vec3 extent() const { return max - min; }
};

Aabb bounds(const TriangleMesh& mesh);

/// Loads STL (binary or ASCII) or Wavefront OBJ, chosen by extension.
/// Coincident STL vertices are welded so topology checks see shared edges.
TriangleMesh load_mesh(const std::filesystem::path& path);
TriangleMesh load_stl(const std::filesystem::path& path);
TriangleMesh load_obj(const std::filesystem::path& path);
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Number of undirected edges not shared by exactly two oppositely oriented
/// triangles. Zero for a closed, consistently oriented surface.
size_t count_open_edges(const TriangleMesh& mesh);

double signed_volume(const TriangleMesh& mesh);

/// FNV-1a over vertex coordinates and triangle indices.
uint64_t content_hash(const TriangleMesh& mesh);

TriangleMesh make_box_mesh(const Vec3& half_extents);
TriangleMesh make_icosphere(double radius, int subdivisions);

/// Involute helical gear, axis along +z, centered at the origin.
///
/// The tooth flank is the involute of the base circle (pressure angle
/// `pressure_angle`) sampled between the base (or root) circle and the tip
/// circle; the helix is realized by twisting stacked profile layers by
/// z * tan(helix_angle) / pitch_radius. Caps are triangle fans, valid because
/// the profile is star-shaped about the axis.
struct GearParams
{
  int teeth = 12;
  double module = 0.02;          ///< pitch diameter / teeth (m)
  double face_width = 0.08;      ///< extent along the axis (m)
  double helix_angle = 0.35;     ///< rad
  double pressure_angle = 0.349; ///< rad (20 degrees)
  int flank_samples = 4;
  int layers = 8;
};

TriangleMesh make_gear_mesh(const GearParams& params);

}  // namespace granular
