#include "granular/sdf.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "granular/error.hpp"
#include "granular/parallel.hpp"

namespace granular {

namespace {

// --- primitive helpers -------------------------------------------------------

// Signed distance to an axis-aligned 2D box of half extents h, with gradient.
double box2d(double px, double py, double hx, double hy, double& gx, double& gy)
{
  const double ax = std::fabs(px), ay = std::fabs(py);
  const double dx = ax - hx, dy = ay - hy;
  const double sx = px < 0 ? -1.0 : 1.0, sy = py < 0 ? -1.0 : 1.0;
  if (dx > 0 || dy > 0) {
    const double ox = std::fmax(dx, 0.0), oy = std::fmax(dy, 0.0);
    const double len = std::hypot(ox, oy);
    gx = sx * ox / len;
    gy = sy * oy / len;
    return len;
  }
  if (dx > dy) {
    gx = sx;
    gy = 0;
    return dx;
  }
  gx = 0;
  gy = sy;
  return dy;
}

// Revolved 2D box: radial coordinate rho about z, centered at rho = center.
double revolved(const Vec3& p, double center, double half_radial, double half_height, Vec3* grad)
{
  const double rho = std::hypot(p.x, p.y);
  double gr, gz;
  const double d = box2d(rho - center, p.z, half_radial, half_height, gr, gz);
  if (grad) {
    if (rho > 0.0)
      *grad = {gr * p.x / rho, gr * p.y / rho, gz};
    else
      *grad = {0, 0, gz};
  }
  return d;
}

double cylinder_sdf(const CylinderPrimitive& c, const Vec3& p, Vec3* grad)
{
  const double rho = std::hypot(p.x, p.y);
  const double dx = rho - c.radius;
  const double dy = std::fabs(p.z) - c.half_height;
  const double sz = p.z < 0 ? -1.0 : 1.0;
  double gr, gz;
  double d;
  if (dx > 0 || dy > 0) {
    const double ox = std::fmax(dx, 0.0), oy = std::fmax(dy, 0.0);
    d = std::hypot(ox, oy);
    gr = ox / d;
    gz = sz * oy / d;
  } else if (dx > dy) {
    d = dx;
    gr = 1;
    gz = 0;
  } else {
    d = dy;
    gr = 0;
    gz = sz;
  }
  if (grad) {
    if (rho > 0.0)
      *grad = {gr * p.x / rho, gr * p.y / rho, gz};
    else
      *grad = {0, 0, gz};
  }
  return d;
}

double box_sdf(const BoxPrimitive& b, const Vec3& p, Vec3* grad)
{
  const Vec3 h = b.half_extents;
  const Vec3 q{std::fabs(p.x) - h.x, std::fabs(p.y) - h.y, std::fabs(p.z) - h.z};
  const Vec3 s{p.x < 0 ? -1.0 : 1.0, p.y < 0 ? -1.0 : 1.0, p.z < 0 ? -1.0 : 1.0};
  if (q.x > 0 || q.y > 0 || q.z > 0) {
    const Vec3 o{std::fmax(q.x, 0.0), std::fmax(q.y, 0.0), std::fmax(q.z, 0.0)};
    const double len = norm(o);
    if (grad)
      *grad = Vec3{s.x * o.x, s.y * o.y, s.z * o.z} / len;
    return len;
  }
  int axis = 0;
  if (q.y > q[axis])
    axis = 1;
  if (q.z > q[axis])
    axis = 2;
  if (grad) {
    *grad = {};
    (*grad)[axis] = s[axis];
  }
  return q[axis];
}

double primitive_eval(const Primitive& shape, const Vec3& p, Vec3* grad)
{
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, SpherePrimitive>) {
          const double n = norm(p);
          if (grad)
            *grad = n > 0.0 ? p / n : Vec3{};
          return n - s.radius;
        } else if constexpr (std::is_same_v<S, BoxPrimitive>) {
          return box_sdf(s, p, grad);
        } else if constexpr (std::is_same_v<S, CylinderPrimitive>) {
          return cylinder_sdf(s, p, grad);
        } else if constexpr (std::is_same_v<S, HalfSpacePrimitive>) {
          const Vec3 n = normalized(s.normal);
          if (grad)
            *grad = n;
          return dot(n, p) - s.offset;
        } else {
          const double center = 0.5 * (s.inner_radius + s.outer_radius);
          const double half = 0.5 * (s.outer_radius - s.inner_radius);
          return revolved(p, center, half, s.half_thickness, grad);
        }
      },
      shape);
}

// --- mesh distance -----------------------------------------------------------

enum class Feature : uint8_t
{
  Vertex0,
  Vertex1,
  Vertex2,
  Edge01,
  Edge12,
  Edge20,
  Face,
};

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, Feature& f)
{
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) {
    f = Feature::Vertex0;
    return a;
  }
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) {
    f = Feature::Vertex1;
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    f = Feature::Edge01;
    return a + ab * (d1 / (d1 - d3));
  }
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) {
    f = Feature::Vertex2;
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    f = Feature::Edge20;
    return a + ac * (d2 / (d2 - d6));
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    f = Feature::Edge12;
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }
  const double denom = 1.0 / (va + vb + vc);
  f = Feature::Face;
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double box_distance2(const Aabb& box, const Vec3& p)
{
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double v = p[a] < box.min[a] ? box.min[a] - p[a] : (p[a] > box.max[a] ? p[a] - box.max[a] : 0.0);
    d2 += v * v;
  }
  return d2;
}

}  // namespace

struct MeshDistance::Impl
{
  struct Node
  {
    Aabb box;
    int left = -1;
    int right = -1;
    uint32_t first = 0;
    uint32_t count = 0;
  };

  std::vector<Vec3> vertices;
  std::vector<std::array<uint32_t, 3>> triangles;
  std::vector<Vec3> face_normals;
  std::vector<Vec3> vertex_normals;
  std::vector<std::array<Vec3, 3>> edge_normals;  // per triangle, edge k = (t[k], t[k+1])
  std::vector<uint32_t> order;
  std::vector<Node> nodes;

  explicit Impl(const TriangleMesh& mesh) : vertices(mesh.vertices), triangles(mesh.triangles)
  {
    const size_t nt = triangles.size();
    face_normals.resize(nt);
    vertex_normals.assign(vertices.size(), Vec3{});
    edge_normals.resize(nt);
    std::unordered_map<uint64_t, Vec3> edge_sum;
    auto ekey = [](uint32_t a, uint32_t b) {
      return (static_cast<uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
    };

    for (size_t t = 0; t < nt; ++t) {
      const auto& tri = triangles[t];
      const Vec3 n = normalized(cross(vertices[tri[1]] - vertices[tri[0]], vertices[tri[2]] - vertices[tri[0]]));
      face_normals[t] = n;
      for (int k = 0; k < 3; ++k) {
        const Vec3& v = vertices[tri[k]];
        const Vec3 e1 = normalized(vertices[tri[(k + 1) % 3]] - v);
        const Vec3 e2 = normalized(vertices[tri[(k + 2) % 3]] - v);
        const double angle = std::acos(std::clamp(dot(e1, e2), -1.0, 1.0));
        vertex_normals[tri[k]] += n * angle;
        edge_sum[ekey(tri[k], tri[(k + 1) % 3])] += n;
      }
    }
    for (size_t t = 0; t < nt; ++t)
      for (int k = 0; k < 3; ++k)
        edge_normals[t][k] = edge_sum[ekey(triangles[t][k], triangles[t][(k + 1) % 3])];

    order.resize(nt);
    for (uint32_t i = 0; i < nt; ++i)
      order[i] = i;
    if (nt > 0)
      build(0, static_cast<uint32_t>(nt));
  }

  Aabb tri_box(uint32_t t) const
  {
    const auto& tri = triangles[t];
    Aabb b{vertices[tri[0]], vertices[tri[0]]};
    for (int k = 1; k < 3; ++k) {
      b.min = cwise_min(b.min, vertices[tri[k]]);
      b.max = cwise_max(b.max, vertices[tri[k]]);
    }
    return b;
  }

  int build(uint32_t first, uint32_t count)
  {
    Node node;
    node.box = tri_box(order[first]);
    Aabb centroids{};
    bool init = false;
    for (uint32_t i = first; i < first + count; ++i) {
      const Aabb b = tri_box(order[i]);
      node.box.min = cwise_min(node.box.min, b.min);
      node.box.max = cwise_max(node.box.max, b.max);
      const Vec3 c = (b.min + b.max) * 0.5;
      if (!init) {
        centroids = {c, c};
        init = true;
      }
      centroids.min = cwise_min(centroids.min, c);
      centroids.max = cwise_max(centroids.max, c);
    }
    const int index = static_cast<int>(nodes.size());
    nodes.push_back(node);
    if (count <= 4) {
      nodes[static_cast<size_t>(index)].first = first;
      nodes[static_cast<size_t>(index)].count = count;
      return index;
    }
    const Vec3 ext = centroids.extent();
    const int axis = ext.x > ext.y ? (ext.x > ext.z ? 0 : 2) : (ext.y > ext.z ? 1 : 2);
    const uint32_t mid = first + count / 2;
    std::nth_element(order.begin() + first, order.begin() + mid, order.begin() + first + count,
                     [&](uint32_t a, uint32_t b) {
                       const Aabb ba = tri_box(a), bb = tri_box(b);
                       return ba.min[axis] + ba.max[axis] < bb.min[axis] + bb.max[axis];
                     });
    const int left = build(first, mid - first);
    const int right = build(mid, first + count - mid);
    nodes[static_cast<size_t>(index)].left = left;
    nodes[static_cast<size_t>(index)].right = right;
    return index;
  }

  double signed_distance(const Vec3& p) const
  {
    double best = std::numeric_limits<double>::infinity();
    Vec3 best_point{};
    Vec3 best_normal{};

    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& n = nodes[static_cast<size_t>(stack[--top])];
      if (box_distance2(n.box, p) >= best)
        continue;
      if (n.left < 0) {
        for (uint32_t i = n.first; i < n.first + n.count; ++i) {
          const uint32_t t = order[i];
          const auto& tri = triangles[t];
          Feature f;
          const Vec3 q = closest_on_triangle(p, vertices[tri[0]], vertices[tri[1]], vertices[tri[2]], f);
          const double d2 = norm2(p - q);
          if (d2 < best) {
            best = d2;
            best_point = q;
            switch (f) {
              case Feature::Vertex0: best_normal = vertex_normals[tri[0]]; break;
              case Feature::Vertex1: best_normal = vertex_normals[tri[1]]; break;
              case Feature::Vertex2: best_normal = vertex_normals[tri[2]]; break;
              case Feature::Edge01: best_normal = edge_normals[t][0]; break;
              case Feature::Edge12: best_normal = edge_normals[t][1]; break;
              case Feature::Edge20: best_normal = edge_normals[t][2]; break;
              case Feature::Face: best_normal = face_normals[t]; break;
            }
          }
        }
        continue;
      }
      const Node& l = nodes[static_cast<size_t>(n.left)];
      const Node& r = nodes[static_cast<size_t>(n.right)];
      const double dl = box_distance2(l.box, p), dr = box_distance2(r.box, p);
      // Push the farther child first so the nearer one is visited next.
      if (dl < dr) {
        stack[top++] = n.right;
        stack[top++] = n.left;
      } else {
        stack[top++] = n.left;
        stack[top++] = n.right;
      }
    }
    const double d = std::sqrt(best);
    return dot(p - best_point, best_normal) < 0.0 ? -d : d;
  }
};

MeshDistance::MeshDistance(const TriangleMesh& mesh)
{
  if (mesh.empty())
    fail(ErrorKind::InvalidArgument, "mesh has no triangles");
  impl_ = std::make_unique<Impl>(mesh);
}
MeshDistance::~MeshDistance() = default;
MeshDistance::MeshDistance(MeshDistance&&) noexcept = default;
MeshDistance& MeshDistance::operator=(MeshDistance&&) noexcept = default;

double MeshDistance::signed_distance(const Vec3& p) const { return impl_->signed_distance(p); }

double sdf_primitive(const Primitive& shape, const Vec3& p) { return primitive_eval(shape, p, nullptr); }

Vec3 sdf_primitive_gradient(const Primitive& shape, const Vec3& p)
{
  Vec3 g;
  primitive_eval(shape, p, &g);
  return g;
}

double sdf_query(const SdfGrid& grid, const Vec3& p)
{
  const Vec3 hi = grid.upper();
  const Vec3 c{std::clamp(p.x, grid.origin.x, hi.x), std::clamp(p.y, grid.origin.y, hi.y),
               std::clamp(p.z, grid.origin.z, hi.z)};
  const double outside = norm(p - c);

  int idx[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (c[a] - grid.origin[a]) / grid.spacing[a];
    int i = static_cast<int>(std::floor(u));
    i = std::clamp(i, 0, grid.dims[static_cast<size_t>(a)] - 2);
    idx[a] = i;
    frac[a] = std::clamp(u - i, 0.0, 1.0);
  }

  const auto v = [&](int di, int dj, int dk) {
    return static_cast<double>(grid.values[grid.index(idx[0] + di, idx[1] + dj, idx[2] + dk)]);
  };
  const double fx = frac[0], fy = frac[1], fz = frac[2];
  const double c00 = v(0, 0, 0) + (v(1, 0, 0) - v(0, 0, 0)) * fx;
  const double c10 = v(0, 1, 0) + (v(1, 1, 0) - v(0, 1, 0)) * fx;
  const double c01 = v(0, 0, 1) + (v(1, 0, 1) - v(0, 0, 1)) * fx;
  const double c11 = v(0, 1, 1) + (v(1, 1, 1) - v(0, 1, 1)) * fx;
  const double c0 = c00 + (c10 - c00) * fy;
  const double c1 = c01 + (c11 - c01) * fy;
  return c0 + (c1 - c0) * fz + outside;
}

SdfGrid bake_mesh_sdf(const TriangleMesh& mesh, const BakeOptions& options, WorkerPool* pool)
{
  if (mesh.empty())
    fail(ErrorKind::InvalidArgument, "cannot bake an SDF for a mesh with no triangles");
  const size_t open = count_open_edges(mesh);
  if (open != 0)
    fail(ErrorKind::Validation, "mesh is not watertight: " + std::to_string(open) + " open edge(s)");

  const Aabb box = bounds(mesh);
  const Vec3 ext = box.extent();
  const double max_extent = std::fmax(ext.x, std::fmax(ext.y, ext.z));
  const double h = options.spacing > 0.0 ? options.spacing : max_extent / 64.0;
  if (!(h > 0.0))
    fail(ErrorKind::InvalidArgument, "mesh has zero extent");
  const double margin = options.margin > 0.0 ? options.margin : 2.0 * h;
  if (margin < 2.0 * h * (1.0 - 1e-12))
    fail(ErrorKind::InvalidArgument, "grid margin must be at least two grid spacings");

  SdfGrid grid;
  grid.spacing = {h, h, h};
  grid.origin = box.min - Vec3{margin, margin, margin};
  for (int a = 0; a < 3; ++a)
    grid.dims[static_cast<size_t>(a)] = static_cast<int>(std::ceil((ext[a] + 2.0 * margin) / h - 1e-9)) + 1;
  grid.values.resize(static_cast<size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2]);
  grid.mesh_hash = content_hash(mesh);

  const MeshDistance dist(mesh);
  auto slab = [&](size_t begin, size_t end, size_t) {
    for (size_t k = begin; k < end; ++k)
      for (int j = 0; j < grid.dims[1]; ++j)
        for (int i = 0; i < grid.dims[0]; ++i) {
          const int kk = static_cast<int>(k);
          grid.values[grid.index(i, j, kk)] = static_cast<float>(dist.signed_distance(grid.knot(i, j, kk)));
        }
  };
  if (pool)
    pool->parallel_for(static_cast<size_t>(grid.dims[2]), slab);
  else
    slab(0, static_cast<size_t>(grid.dims[2]), 0);
  return grid;
}

// --- grid cache file ---------------------------------------------------------
//
// Layout (little-endian):
//   char[8]  magic "GGSDF\0\0\1"
//   u32      version (1)
//   u32[3]   dims
//   f64[3]   origin
//   f64[3]   spacing
//   u64      mesh content hash
//   f32[...] knot values, x fastest

namespace {

constexpr char kSdfMagic[8] = {'G', 'G', 'S', 'D', 'F', '\0', '\0', '\1'};

template <typename T>
void put_le(std::ostream& out, T value)
{
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  U bits = std::bit_cast<U>(value);
  if constexpr (std::endian::native == std::endian::big)
    bits = sizeof(T) == 8 ? static_cast<U>(__builtin_bswap64(bits)) : static_cast<U>(__builtin_bswap32(static_cast<uint32_t>(bits)));
  out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

template <typename T>
T get_le(std::istream& in)
{
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  U bits{};
  in.read(reinterpret_cast<char*>(&bits), sizeof bits);
  if constexpr (std::endian::native == std::endian::big)
    bits = sizeof(T) == 8 ? static_cast<U>(__builtin_bswap64(bits)) : static_cast<U>(__builtin_bswap32(static_cast<uint32_t>(bits)));
  return std::bit_cast<T>(bits);
}

}  // namespace

void save_sdf_grid(const SdfGrid& grid, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorKind::Io, "cannot write SDF grid '" + path.string() + "'");
  out.write(kSdfMagic, sizeof kSdfMagic);
  put_le<uint32_t>(out, 1);
  for (int d : grid.dims)
    put_le<uint32_t>(out, static_cast<uint32_t>(d));
  for (int a = 0; a < 3; ++a)
    put_le<double>(out, grid.origin[a]);
  for (int a = 0; a < 3; ++a)
    put_le<double>(out, grid.spacing[a]);
  put_le<uint64_t>(out, grid.mesh_hash);
  for (float v : grid.values)
    put_le<float>(out, v);
  if (!out)
    fail(ErrorKind::Io, "error while writing SDF grid '" + path.string() + "'");
}

SdfGrid load_sdf_grid(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorKind::Io, "cannot open SDF grid '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kSdfMagic, sizeof magic) != 0)
    fail(ErrorKind::Parse, "'" + path.string() + "' is not an SDF grid file");
  if (get_le<uint32_t>(in) != 1)
    fail(ErrorKind::Parse, "'" + path.string() + "': unsupported SDF grid version");
  SdfGrid grid;
  for (int& d : grid.dims)
    d = static_cast<int>(get_le<uint32_t>(in));
  for (int a = 0; a < 3; ++a)
    grid.origin[a] = get_le<double>(in);
  for (int a = 0; a < 3; ++a)
    grid.spacing[a] = get_le<double>(in);
  grid.mesh_hash = get_le<uint64_t>(in);
  if (!in || grid.dims[0] < 2 || grid.dims[1] < 2 || grid.dims[2] < 2)
    fail(ErrorKind::Parse, "'" + path.string() + "': corrupt SDF grid header");
  grid.values.resize(static_cast<size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2]);
  for (float& v : grid.values)
    v = get_le<float>(in);
  if (!in)
    fail(ErrorKind::Parse, "'" + path.string() + "': truncated SDF grid");
  return grid;
}

// --- geometry ------------------------------------------------------------------

double SdfGeometry::eval(const Vec3& p) const
{
  const double d = std::visit(
      [&](const auto& s) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, Primitive>)
          return sdf_primitive(s, p);
        else
          return sdf_query(*s, p);
      },
      shape);
  return inverted ? -d : d;
}

Vec3 SdfGeometry::gradient(const Vec3& p) const
{
  const Vec3 g = std::visit(
      [&](const auto& s) -> Vec3 {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, Primitive>) {
          return sdf_primitive_gradient(s, p);
        } else {
          const double h = 0.5 * s->min_spacing();
          Vec3 out;
          for (int a = 0; a < 3; ++a) {
            Vec3 lo = p, hi = p;
            lo[a] -= h;
            hi[a] += h;
            out[a] = (sdf_query(*s, hi) - sdf_query(*s, lo)) / (2.0 * h);
          }
          return out;
        }
      },
      shape);
  return inverted ? -g : g;
}

Penetration penetration_depth(const SdfGeometry& geom, const SE3& pose, const Vec3& world_point, double r)
{
  Penetration out;
  const Vec3 local = pose.inverse_apply(world_point);
  out.distance = geom.eval(local);
  if (out.distance - r >= 0.0)
    return out;
  const Vec3 g = geom.gradient(local);
  const double gn = norm(g);
  if (gn < 1e-9) {
    out.degenerate = true;
    return out;
  }
  out.contact = true;
  out.depth = r - out.distance;
  out.normal = pose.rotate(g / gn);
  return out;
}

}  // namespace granular
