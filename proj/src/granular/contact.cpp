#include "granular/contact.hpp"

#include <algorithm>
#include <string>

#include "granular/error.hpp"
#include "granular/parallel.hpp"

namespace granular {

std::pair<Vec3, Vec3> make_contact_frame(const Vec3& n)
{
  const double len = norm(n);
  if (!(len > 0.0) || !std::isfinite(len))
    fail(ErrorKind::InvalidArgument, "contact normal must be a nonzero finite vector");
  const double ax = std::fabs(n.x), ay = std::fabs(n.y), az = std::fabs(n.z);
  Vec3 axis;
  if (ax <= ay && ax <= az)
    axis = {1, 0, 0};
  else if (ay <= az)
    axis = {0, 1, 0};
  else
    axis = {0, 0, 1};
  const Vec3 e2 = normalized(cross(n, axis));
  const Vec3 e3 = cross(n, e2);
  return {e2, e3};
}

Vec3 project_friction_cone(Vec3 b, double mu, double psi, double alpha, double dt)
{
  b.x = std::fmax(b.x + alpha * psi / dt, 0.0);
  const double tangent = std::sqrt(b.y * b.y + b.z * b.z);
  const double limit = mu * b.x;
  if (tangent > limit) {
    const double s = limit / tangent;
    b.y *= s;
    b.z *= s;
  }
  return b;
}

void DetectionStats::merge(const DetectionStats& o)
{
  candidates += o.candidates;
  particle_contacts += o.particle_contacts;
  body_contacts += o.body_contacts;
  skipped_coincident += o.skipped_coincident;
  skipped_degenerate += o.skipped_degenerate;
  max_penetration = std::fmax(max_penetration, o.max_penetration);
}

std::vector<Contact> detect_contacts(std::span<const Vec3> positions, double radius, const SpatialHashmap& map,
                                     std::span<const RigidBody> bodies, DetectionStats* stats)
{
  DetectContext ctx{positions, radius, &map, bodies};
  DetectionStats local;
  std::vector<Contact> out;
  for (size_t i = 0; i < positions.size(); ++i)
    detect_particle_contacts(ctx, i, [&](const Contact& c) { out.push_back(c); }, local);
  if (stats)
    *stats = local;
  return out;
}

Vec3 contact_impulse(const Contact& c, const SolveContext& ctx)
{
  const Vec3 vi = ctx.velocities[c.i] + ctx.gravity_dv + ctx.previous[c.i];
  Vec3 rel;
  if (c.kind == ContactKind::ParticleParticle)
    rel = vi - ctx.gamma * (ctx.velocities[c.j] + ctx.gravity_dv + ctx.previous[c.j]);
  else
    rel = vi - c.surface_velocity;
  const Vec3 candidate{-dot(c.e1, rel), -dot(c.e2, rel), -dot(c.e3, rel)};
  const Vec3 b = project_friction_cone(candidate, ctx.mu, c.psi, ctx.alpha, ctx.dt);
  if (!is_finite(b))
    fail(ErrorKind::Numeric, std::string("non-finite contact impulse at ") +
                                 (c.kind == ContactKind::ParticleParticle ? "particle pair (" : "particle-body pair (") +
                                 std::to_string(c.i) + ", " + std::to_string(c.j) + ")");
  return b;
}

ImpulseBuffer solve_contacts_pja(std::span<const Contact> contacts, std::span<const Vec3> velocities,
                                 const MaterialParams& params, const SolveOptions& options)
{
  const size_t n = velocities.size();
  ImpulseBuffer out;
  out.delta_v.assign(n, Vec3{});
  if (contacts.empty() || n == 0)
    return out;

  // Group by owner, keeping the given order within each owner.
  std::vector<size_t> offsets(n + 1, 0);
  for (const Contact& c : contacts) {
    if (c.i >= n || (c.kind == ContactKind::ParticleParticle && c.j >= n))
      fail(ErrorKind::InvalidArgument, "contact refers to a particle outside the velocity array");
    ++offsets[c.i + 1];
  }
  for (size_t i = 0; i < n; ++i)
    offsets[i + 1] += offsets[i];
  std::vector<const Contact*> grouped(contacts.size());
  {
    std::vector<size_t> cursor(offsets.begin(), offsets.end() - 1);
    for (const Contact& c : contacts)
      grouped[cursor[c.i]++] = &c;
  }

  std::vector<Vec3> previous(n, Vec3{});
  std::vector<Vec3>& current = out.delta_v;
  SolveContext ctx;
  ctx.velocities = velocities;
  ctx.gravity_dv = params.gravity * params.timestep;
  ctx.mu = params.friction;
  ctx.alpha = params.baumgarte_alpha;
  ctx.dt = params.timestep;
  ctx.gamma = params.gamma;

  const size_t workers = options.pool ? options.pool->size() : 1;
  std::vector<std::vector<Vec3>> body_acc;
  if (options.body_impulses)
    body_acc.assign(workers, std::vector<Vec3>(options.body_impulses->size(), Vec3{}));

  for (int sweep = 0; sweep < params.solver_iterations; ++sweep) {
    previous.swap(current);
    ctx.previous = previous;
    auto body = [&](size_t begin, size_t end, size_t worker) {
      for (size_t i = begin; i < end; ++i) {
        Vec3 dv = previous[i];
        for (size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
          const Contact& c = *grouped[k];
          const Vec3 b = contact_impulse(c, ctx);
          if (options.observer)
            options.observer->on_impulse(c, b, sweep);
          const Vec3 delta = contact_velocity_change(c, b, ctx.gamma);
          dv += delta;
          if (options.body_impulses && c.kind == ContactKind::ParticleBody && c.j < body_acc[worker].size())
            body_acc[worker][c.j] += delta * params.particle_mass;
        }
        current[i] = dv;
      }
    };
    if (options.pool)
      options.pool->parallel_for(n, body);
    else
      body(0, n, 0);
  }

  if (options.body_impulses)
    for (const auto& acc : body_acc)
      for (size_t b = 0; b < acc.size(); ++b)
        (*options.body_impulses)[b] += acc[b];
  return out;
}

}  // namespace granular
