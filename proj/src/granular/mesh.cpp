#include "granular/mesh.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "granular/error.hpp"

namespace granular {

namespace {

std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorKind::Io, "cannot open mesh file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class VertexWelder
{
public:
  explicit VertexWelder(TriangleMesh& mesh) : mesh_(mesh) {}

  uint32_t add(const Vec3& p)
  {
    const auto key = std::make_tuple(p.x, p.y, p.z);
    auto [it, inserted] = index_.try_emplace(key, static_cast<uint32_t>(mesh_.vertices.size()));
    if (inserted)
      mesh_.vertices.push_back(p);
    return it->second;
  }

private:
  TriangleMesh& mesh_;
  std::map<std::tuple<double, double, double>, uint32_t> index_;
};

float read_f32_le(const char* p)
{
  uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big)
    bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

uint32_t read_u32_le(const char* p)
{
  uint32_t v;
  std::memcpy(&v, p, 4);
  if constexpr (std::endian::native == std::endian::big)
    v = __builtin_bswap32(v);
  return v;
}

void add_triangle(TriangleMesh& mesh, uint32_t a, uint32_t b, uint32_t c)
{
  // Welding can collapse sliver triangles; drop them rather than emit
  // repeated indices.
  if (a == b || b == c || a == c)
    return;
  mesh.triangles.push_back({a, b, c});
}

}  // namespace

Aabb bounds(const TriangleMesh& mesh)
{
  Aabb box;
  if (mesh.vertices.empty())
    return box;
  box.min = box.max = mesh.vertices.front();
  for (const Vec3& v : mesh.vertices) {
    box.min = cwise_min(box.min, v);
    box.max = cwise_max(box.max, v);
  }
  return box;
}

TriangleMesh load_mesh(const std::filesystem::path& path)
{
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".stl")
    return load_stl(path);
  if (ext == ".obj")
    return load_obj(path);
  fail(ErrorKind::InvalidArgument, "unsupported mesh format '" + ext + "' (expected .stl or .obj)");
}

TriangleMesh load_stl(const std::filesystem::path& path)
{
  const std::string data = read_file(path);
  TriangleMesh mesh;
  VertexWelder weld(mesh);

  bool binary = false;
  if (data.size() >= 84) {
    const uint32_t count = read_u32_le(data.data() + 80);
    binary = data.size() == 84 + static_cast<size_t>(count) * 50;
  }

  if (binary) {
    const uint32_t count = read_u32_le(data.data() + 80);
    for (uint32_t t = 0; t < count; ++t) {
      const char* rec = data.data() + 84 + static_cast<size_t>(t) * 50 + 12;
      uint32_t idx[3];
      for (int k = 0; k < 3; ++k) {
        const char* v = rec + 12 * k;
        idx[k] = weld.add({read_f32_le(v), read_f32_le(v + 4), read_f32_le(v + 8)});
      }
      add_triangle(mesh, idx[0], idx[1], idx[2]);
    }
    return mesh;
  }

  if (data.rfind("solid", 0) != 0)
    fail(ErrorKind::Parse, "'" + path.string() + "' is neither binary STL nor ASCII STL");

  std::istringstream in(data);
  std::string line;
  std::vector<uint32_t> facet;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "vertex") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z))
        fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
      facet.push_back(weld.add(p));
    } else if (word == "endloop") {
      if (facet.size() < 3)
        fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": facet with fewer than 3 vertices");
      for (size_t k = 1; k + 1 < facet.size(); ++k)
        add_triangle(mesh, facet[0], facet[k], facet[k + 1]);
      facet.clear();
    }
  }
  return mesh;
}

TriangleMesh load_obj(const std::filesystem::path& path)
{
  const std::string data = read_file(path);
  TriangleMesh mesh;
  std::istringstream in(data);
  std::string line;
  size_t line_no = 0;
  std::vector<uint32_t> face;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "v") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z))
        fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
      mesh.vertices.push_back(p);
    } else if (word == "f") {
      face.clear();
      std::string tok;
      while (ls >> tok) {
        long idx = 0;
        try {
          idx = std::stol(tok.substr(0, tok.find('/')));
        } catch (...) {
          fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": malformed face index '" + tok + "'");
        }
        const long n = static_cast<long>(mesh.vertices.size());
        const long resolved = idx < 0 ? n + idx : idx - 1;
        if (resolved < 0 || resolved >= n)
          fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": face index out of range");
        face.push_back(static_cast<uint32_t>(resolved));
      }
      if (face.size() < 3)
        fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": face with fewer than 3 vertices");
      for (size_t k = 1; k + 1 < face.size(); ++k)
        add_triangle(mesh, face[0], face[k], face[k + 1]);
    }
  }
  return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.precision(17);
  for (const Vec3& v : mesh.vertices)
    out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

size_t count_open_edges(const TriangleMesh& mesh)
{
  std::unordered_map<uint64_t, int> directed;
  auto key = [](uint32_t a, uint32_t b) { return (static_cast<uint64_t>(a) << 32) | b; };
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k)
      ++directed[key(t[k], t[(k + 1) % 3])];

  size_t open = 0;
  for (const auto& [k, count] : directed) {
    const uint32_t a = static_cast<uint32_t>(k >> 32);
    const uint32_t b = static_cast<uint32_t>(k & 0xffffffffu);
    const auto rev = directed.find(key(b, a));
    const int back = rev == directed.end() ? 0 : rev->second;
    if (count == 1 && back == 1)
      continue;
    // Count each bad undirected edge once: from its smaller endpoint, or from
    // the only direction present.
    if (a < b || back == 0)
      ++open;
  }
  return open;
}

double signed_volume(const TriangleMesh& mesh)
{
  double v = 0.0;
  for (const auto& t : mesh.triangles)
    v += dot(mesh.vertices[t[0]], cross(mesh.vertices[t[1]], mesh.vertices[t[2]]));
  return v / 6.0;
}

uint64_t content_hash(const TriangleMesh& mesh)
{
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const Vec3& v : mesh.vertices) {
    const double c[3] = {v.x, v.y, v.z};
    mix(c, sizeof c);
  }
  for (const auto& t : mesh.triangles)
    mix(t.data(), sizeof(uint32_t) * 3);
  return h;
}

TriangleMesh make_box_mesh(const Vec3& h)
{
  TriangleMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({(i & 1) ? h.x : -h.x, (i & 2) ? h.y : -h.y, (i & 4) ? h.z : -h.z});
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

TriangleMesh make_icosphere(double radius, int subdivisions)
{
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (Vec3& v : m.vertices)
    v = normalized(v);

  for (int s = 0; s < subdivisions; ++s) {
    std::unordered_map<uint64_t, uint32_t> midpoint;
    auto mid = [&](uint32_t a, uint32_t b) {
      const uint64_t k = (static_cast<uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
      auto it = midpoint.find(k);
      if (it != midpoint.end())
        return it->second;
      const uint32_t idx = static_cast<uint32_t>(m.vertices.size());
      m.vertices.push_back(normalized(m.vertices[a] + m.vertices[b]));
      midpoint.emplace(k, idx);
      return idx;
    };
    std::vector<std::array<uint32_t, 3>> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& tri : m.triangles) {
      const uint32_t a = mid(tri[0], tri[1]);
      const uint32_t b = mid(tri[1], tri[2]);
      const uint32_t c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    m.triangles = std::move(next);
  }
  for (Vec3& v : m.vertices)
    v *= radius;
  return m;
}

TriangleMesh make_gear_mesh(const GearParams& p)
{
  if (p.teeth < 3 || p.module <= 0.0 || p.face_width <= 0.0 || p.layers < 1 || p.flank_samples < 1)
    fail(ErrorKind::InvalidArgument, "invalid gear parameters");

  const double pitch_r = p.module * p.teeth / 2.0;
  const double tip_r = pitch_r + p.module;
  const double root_r = pitch_r - 1.25 * p.module;
  const double base_r = pitch_r * std::cos(p.pressure_angle);
  auto involute = [](double phi) { return std::tan(phi) - phi; };
  const double half_pitch_thickness = std::numbers::pi / (2.0 * p.teeth);
  // Angular half-width of the tooth at radius rho.
  auto half_width = [&](double rho) {
    const double phi = std::acos(std::min(1.0, base_r / rho));
    return half_pitch_thickness + involute(p.pressure_angle) - involute(phi);
  };

  const double flank_start = std::max(base_r, root_r);
  std::vector<std::pair<double, double>> polar;  // (radius, angle)
  for (int k = 0; k < p.teeth; ++k) {
    const double c = 2.0 * std::numbers::pi * k / p.teeth;
    if (base_r > root_r)
      polar.emplace_back(root_r, c - half_width(flank_start));
    for (int s = 0; s <= p.flank_samples; ++s) {
      const double rho = flank_start + (tip_r - flank_start) * s / p.flank_samples;
      polar.emplace_back(rho, c - half_width(rho));
    }
    for (int s = p.flank_samples; s >= 0; --s) {
      const double rho = flank_start + (tip_r - flank_start) * s / p.flank_samples;
      polar.emplace_back(rho, c + half_width(rho));
    }
    if (base_r > root_r)
      polar.emplace_back(root_r, c + half_width(flank_start));
  }

  TriangleMesh m;
  const size_t ring = polar.size();
  const double tan_helix = std::tan(p.helix_angle);
  for (int layer = 0; layer <= p.layers; ++layer) {
    const double z = -0.5 * p.face_width + p.face_width * layer / p.layers;
    const double twist = z * tan_helix / pitch_r;
    for (const auto& [rho, ang] : polar)
      m.vertices.push_back({rho * std::cos(ang + twist), rho * std::sin(ang + twist), z});
  }
  const uint32_t bottom_center = static_cast<uint32_t>(m.vertices.size());
  m.vertices.push_back({0, 0, -0.5 * p.face_width});
  const uint32_t top_center = bottom_center + 1;
  m.vertices.push_back({0, 0, 0.5 * p.face_width});

  auto vid = [ring](int layer, size_t i) { return static_cast<uint32_t>(layer * ring + i % ring); };
  for (int layer = 0; layer < p.layers; ++layer) {
    for (size_t i = 0; i < ring; ++i) {
      const uint32_t a = vid(layer, i), b = vid(layer, i + 1);
      const uint32_t c = vid(layer + 1, i + 1), d = vid(layer + 1, i);
      m.triangles.push_back({a, b, c});
      m.triangles.push_back({a, c, d});
    }
  }
  for (size_t i = 0; i < ring; ++i) {
    m.triangles.push_back({bottom_center, vid(0, i + 1), vid(0, i)});
    m.triangles.push_back({top_center, vid(p.layers, i), vid(p.layers, i + 1)});
  }

  if (signed_volume(m) < 0.0)
    for (auto& t : m.triangles)
      std::swap(t[1], t[2]);
  return m;
}

}  // namespace granular
