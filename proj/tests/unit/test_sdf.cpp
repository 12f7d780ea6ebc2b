#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "granular/error.hpp"
#include "granular/mesh.hpp"
#include "granular/parallel.hpp"
#include "granular/sdf.hpp"

using namespace granular;

namespace {

std::filesystem::path temp_dir()
{
  auto d = std::filesystem::temp_directory_path() / "granular_test_sdf";
  std::filesystem::create_directories(d);
  return d;
}

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

Vec3 fd_gradient(const Primitive& s, const Vec3& p)
{
  const double h = 1e-6;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = p, hi = p;
    lo[a] -= h;
    hi[a] += h;
    g[a] = (sdf_primitive(s, hi) - sdf_primitive(s, lo)) / (2 * h);
  }
  return g;
}

double box_oracle(const Vec3& h, const Vec3& p)
{
  const Vec3 q{std::fabs(p.x) - h.x, std::fabs(p.y) - h.y, std::fabs(p.z) - h.z};
  const Vec3 outside = cwise_max(q, Vec3{});
  return norm(outside) + std::fmin(std::fmax(q.x, std::fmax(q.y, q.z)), 0.0);
}

}  // namespace

TEST_CASE("primitive distances match closed forms")
{
  CHECK(sdf_primitive(SpherePrimitive{0.5}, {0.3, 0.4, 1.2}) == doctest::Approx(0.8));
  CHECK(sdf_primitive(SpherePrimitive{0.5}, {0, 0, 0}) == doctest::Approx(-0.5));

  const Vec3 h{0.1, 0.2, 0.3};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int k = 0; k < 500; ++k) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    CHECK(sdf_primitive(BoxPrimitive{h}, p) == doctest::Approx(box_oracle(h, p)).epsilon(1e-12));
  }

  const CylinderPrimitive c{0.2, 0.5};
  CHECK(sdf_primitive(c, {0.5, 0, 0}) == doctest::Approx(0.3));
  CHECK(sdf_primitive(c, {0, 0, 0.7}) == doctest::Approx(0.2));
  CHECK(sdf_primitive(c, {0.3, 0.4, 0.5 + 0.4}) == doctest::Approx(std::hypot(0.3, 0.4)));
  CHECK(sdf_primitive(c, {0.05, 0, 0}) == doctest::Approx(-0.15));

  CHECK(sdf_primitive(HalfSpacePrimitive{{0, 0, 2}, 0.5}, {7, -3, 1.0}) == doctest::Approx(0.5));
  CHECK(sdf_primitive(HalfSpacePrimitive{{0, 0, 1}, 0.0}, {0, 0, -0.25}) == doctest::Approx(-0.25));

  const AnnulusPrimitive a{0.1, 0.3, 0.02};
  CHECK(sdf_primitive(a, {0.2, 0, 0}) == doctest::Approx(-0.02));
  CHECK(sdf_primitive(a, {0, 0, 0}) == doctest::Approx(0.1));
  CHECK(sdf_primitive(a, {0, 0.2, 0.5}) == doctest::Approx(0.48));
  CHECK(sdf_primitive(a, {0.35, 0, 0}) == doctest::Approx(0.05));
}

TEST_CASE("primitive gradients match finite differences away from medial sets")
{
  const std::vector<Primitive> shapes{SpherePrimitive{0.3}, BoxPrimitive{{0.1, 0.2, 0.3}}, CylinderPrimitive{0.2, 0.4},
                                      HalfSpacePrimitive{{1, 2, 2}, 0.1}, AnnulusPrimitive{0.1, 0.3, 0.05}};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (const Primitive& s : shapes) {
    int checked = 0;
    for (int k = 0; k < 400; ++k) {
      const Vec3 p{u(rng), u(rng), u(rng)};
      const Vec3 g = sdf_primitive_gradient(s, p);
      const Vec3 fd = fd_gradient(s, p);
      if (std::fabs(norm(fd) - 1.0) > 1e-4)
        continue;  // kink within the stencil
      CHECK(norm(g - fd) < 1e-5);
      ++checked;
    }
    CHECK(checked > 300);
  }
}

TEST_CASE("mesh generators are closed and enclose the expected volume")
{
  const TriangleMesh box = make_box_mesh({0.1, 0.2, 0.3});
  CHECK(count_open_edges(box) == 0);
  CHECK(signed_volume(box) == doctest::Approx(8 * 0.1 * 0.2 * 0.3));

  const TriangleMesh ico = make_icosphere(0.5, 3);
  CHECK(count_open_edges(ico) == 0);
  CHECK(signed_volume(ico) == doctest::Approx(4.0 / 3.0 * M_PI * 0.125).epsilon(0.02));
  for (const Vec3& v : ico.vertices)
    CHECK(norm(v) == doctest::Approx(0.5).epsilon(1e-12));

  GearParams gp;
  const TriangleMesh gear = make_gear_mesh(gp);
  CHECK(count_open_edges(gear) == 0);
  CHECK(signed_volume(gear) > 0.0);
  const Aabb b = bounds(gear);
  CHECK(b.max.z - b.min.z == doctest::Approx(gp.face_width));
  const double tip = 0.5 * gp.module * gp.teeth + gp.module;
  CHECK(std::fmax(b.max.x, b.max.y) <= tip + 1e-12);
  gp.teeth = 2;
  CHECK_THROWS_AS(make_gear_mesh(gp), Error);
}

TEST_CASE("open meshes are detected")
{
  TriangleMesh box = make_box_mesh({1, 1, 1});
  box.triangles.pop_back();
  CHECK(count_open_edges(box) == 3);
  CHECK(kind_of([&] { bake_mesh_sdf(box); }) == ErrorKind::Validation);
  CHECK(kind_of([&] { bake_mesh_sdf(TriangleMesh{}); }) == ErrorKind::InvalidArgument);
  BakeOptions o;
  o.spacing = 0.1;
  o.margin = 0.1;
  CHECK(kind_of([&] { bake_mesh_sdf(make_box_mesh({1, 1, 1}), o); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("content hash identifies geometry")
{
  const TriangleMesh a = make_box_mesh({0.1, 0.1, 0.1});
  TriangleMesh b = a;
  CHECK(content_hash(a) == content_hash(b));
  b.vertices[0].x += 1e-9;
  CHECK(content_hash(a) != content_hash(b));
}

TEST_CASE("OBJ and STL files load to the same surface")
{
  const auto dir = temp_dir();
  const TriangleMesh box = make_box_mesh({0.1, 0.2, 0.3});
  save_obj(box, dir / "box.obj");
  const TriangleMesh obj = load_mesh(dir / "box.obj");
  CHECK(obj.triangles.size() == box.triangles.size());
  CHECK(signed_volume(obj) == doctest::Approx(signed_volume(box)));

  {
    std::ofstream f(dir / "box.stl");
    f << "solid box\n";
    for (const auto& t : box.triangles) {
      f << " facet normal 0 0 0\n  outer loop\n";
      for (uint32_t k : t) {
        const Vec3& v = box.vertices[k];
        f << "   vertex " << v.x << ' ' << v.y << ' ' << v.z << "\n";
      }
      f << "  endloop\n endfacet\n";
    }
    f << "endsolid box\n";
  }
  const TriangleMesh ascii = load_mesh(dir / "box.stl");
  CHECK(count_open_edges(ascii) == 0);
  CHECK(ascii.vertices.size() == 8);
  CHECK(signed_volume(ascii) == doctest::Approx(signed_volume(box)));

  {
    std::ofstream f(dir / "bin.stl", std::ios::binary);
    char header[80] = {};
    f.write(header, 80);
    const uint32_t n = static_cast<uint32_t>(box.triangles.size());
    f.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& t : box.triangles) {
      float rec[12] = {};
      for (int k = 0; k < 3; ++k) {
        const Vec3& v = box.vertices[t[static_cast<size_t>(k)]];
        rec[3 + 3 * k] = static_cast<float>(v.x);
        rec[4 + 3 * k] = static_cast<float>(v.y);
        rec[5 + 3 * k] = static_cast<float>(v.z);
      }
      f.write(reinterpret_cast<const char*>(rec), sizeof rec);
      const uint16_t attr = 0;
      f.write(reinterpret_cast<const char*>(&attr), 2);
    }
  }
  const TriangleMesh bin = load_mesh(dir / "bin.stl");
  CHECK(count_open_edges(bin) == 0);
  CHECK(signed_volume(bin) == doctest::Approx(signed_volume(box)).epsilon(1e-6));

  {
    std::ofstream f(dir / "bad.obj");
    f << "v 0 0 0\nv 1 0 0\nf 1 2 9\n";
  }
  CHECK(kind_of([&] { load_mesh(dir / "bad.obj"); }) == ErrorKind::Parse);
  CHECK(kind_of([&] { load_mesh(dir / "missing.obj"); }) == ErrorKind::Io);
  CHECK(kind_of([&] { load_mesh(dir / "box.ply"); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("exact mesh distance equals the box distance")
{
  const Vec3 h{0.1, 0.2, 0.3};
  const MeshDistance d(make_box_mesh(h));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int k = 0; k < 500; ++k) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    CHECK(d.signed_distance(p) == doctest::Approx(box_oracle(h, p)).epsilon(1e-9));
  }
}

TEST_CASE("baked knots hold the exact distance and trilinear queries interpolate them")
{
  const TriangleMesh mesh = make_box_mesh({0.1, 0.1, 0.2});
  BakeOptions o;
  o.spacing = 0.02;
  WorkerPool pool(3);
  const SdfGrid g = bake_mesh_sdf(mesh, o, &pool);
  const SdfGrid serial = bake_mesh_sdf(mesh, o);
  CHECK(g.values == serial.values);
  CHECK(g.mesh_hash == content_hash(mesh));
  CHECK(g.spacing.x == doctest::Approx(0.02));
  CHECK(g.origin.x <= -0.1 - 2 * 0.02 + 1e-12);

  const MeshDistance exact(mesh);
  for (int k = 0; k < g.dims[2]; k += 3)
    for (int j = 0; j < g.dims[1]; j += 2)
      for (int i = 0; i < g.dims[0]; i += 2) {
        const Vec3 p = g.knot(i, j, k);
        CHECK(g.values[g.index(i, j, k)] == static_cast<float>(exact.signed_distance(p)));
        CHECK(sdf_query(g, p) == doctest::Approx(exact.signed_distance(p)).epsilon(1e-6));
      }
}

TEST_CASE("trilinear interpolation is exact for linear fields and extrapolates outside")
{
  SdfGrid g;
  g.origin = {-1, -1, -1};
  g.spacing = {0.5, 0.25, 1.0};
  g.dims = {5, 9, 3};
  auto field = [](const Vec3& p) { return 0.25 + 0.5 * p.x - 0.75 * p.y + 0.125 * p.z; };
  g.values.resize(static_cast<size_t>(5 * 9 * 3));
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 9; ++j)
      for (int i = 0; i < 5; ++i)
        g.values[g.index(i, j, k)] = static_cast<float>(field(g.knot(i, j, k)));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int n = 0; n < 200; ++n) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    CHECK(sdf_query(g, p) == doctest::Approx(field(p)).epsilon(1e-6));
  }
  const Vec3 out{1.5, 2.0, -1.0};
  const Vec3 clamped{1.0, 1.0, -1.0};
  CHECK(sdf_query(g, out) == doctest::Approx(field(clamped) + norm(out - clamped)).epsilon(1e-6));
}

TEST_CASE("grid cache files round-trip and reject corruption")
{
  const auto dir = temp_dir();
  BakeOptions o;
  o.spacing = 0.05;
  const SdfGrid g = bake_mesh_sdf(make_icosphere(0.3, 2), o);
  save_sdf_grid(g, dir / "ico.sdf");
  const SdfGrid h = load_sdf_grid(dir / "ico.sdf");
  CHECK(h.values == g.values);
  CHECK(h.dims == g.dims);
  CHECK(h.origin == g.origin);
  CHECK(h.spacing == g.spacing);
  CHECK(h.mesh_hash == g.mesh_hash);
  CHECK(std::filesystem::file_size(dir / "ico.sdf") == 8 + 4 + 12 + 24 + 24 + 8 + 4 * g.values.size());

  std::filesystem::resize_file(dir / "ico.sdf", std::filesystem::file_size(dir / "ico.sdf") - 10);
  CHECK(kind_of([&] { load_sdf_grid(dir / "ico.sdf"); }) == ErrorKind::Parse);
  {
    std::ofstream f(dir / "junk.sdf");
    f << "not a grid at all, definitely";
  }
  CHECK(kind_of([&] { load_sdf_grid(dir / "junk.sdf"); }) == ErrorKind::Parse);
  CHECK(kind_of([&] { load_sdf_grid(dir / "nope.sdf"); }) == ErrorKind::Io);
}

TEST_CASE("penetration depth: contact, normal, inversion, degeneracy")
{
  SdfGeometry sphere;
  sphere.shape = Primitive{SpherePrimitive{0.1}};
  const SE3 pose{axis_angle({0, 1, 0}, 0.3), {1, 2, 3}};
  const double r = 0.01;

  const Penetration far = penetration_depth(sphere, pose, pose.apply({0.2, 0, 0}), r);
  CHECK_FALSE(far.contact);
  CHECK(far.depth == 0.0);

  const Penetration hit = penetration_depth(sphere, pose, pose.apply({0, 0.105, 0}), r);
  CHECK(hit.contact);
  CHECK(hit.depth == doctest::Approx(0.005));
  CHECK(norm(hit.normal - pose.rotate({0, 1, 0})) < 1e-12);

  SdfGeometry shell = sphere;
  shell.inverted = true;
  const Penetration in = penetration_depth(shell, pose, pose.apply({0, 0, 0.095}), r);
  CHECK(in.contact);
  CHECK(in.depth == doctest::Approx(0.005));
  CHECK(norm(in.normal - pose.rotate({0, 0, -1})) < 1e-12);

  SdfGeometry tiny;
  tiny.shape = Primitive{SpherePrimitive{0.005}};
  const Penetration deg = penetration_depth(tiny, SE3{}, {0, 0, 0}, r);
  CHECK(deg.degenerate);
  CHECK_FALSE(deg.contact);
}

TEST_CASE("penetration depth is invariant under rigid motion of body and point")
{
  BakeOptions o;
  o.spacing = 0.01;
  SdfGeometry gear;
  gear.shape = std::make_shared<const SdfGrid>(bake_mesh_sdf(make_gear_mesh({}), o));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int k = 0; k < 200; ++k) {
    const Vec3 local{u(rng), u(rng), u(rng) * 0.3};
    const SE3 a{axis_angle({u(rng), u(rng), 1}, u(rng) * 10), {u(rng), u(rng), u(rng)}};
    const SE3 b{axis_angle({1, u(rng), u(rng)}, u(rng) * 10), {u(rng) * 5, u(rng) * 5, u(rng) * 5}};
    const Penetration pa = penetration_depth(gear, a, a.apply(local), 0.01);
    const Penetration pb = penetration_depth(gear, b, b.apply(local), 0.01);
    CHECK(pa.contact == pb.contact);
    CHECK(std::fabs(pa.depth - pb.depth) <= 1e-9);
    if (pa.contact)
      CHECK(norm(a.rotation.transpose_mul(pa.normal) - b.rotation.transpose_mul(pb.normal)) < 1e-9);
  }
}
