#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "granular/broadphase.hpp"
#include "granular/scene.hpp"
#include "granular/vec.hpp"

namespace granular {

class WorkerPool;

enum class ContactKind : uint8_t
{
  ParticleParticle,
  ParticleBody,
};

/// One contact as seen by its owning particle i. The normal e1 points from
/// the partner (particle or body) toward i; (e1, e2, e3) is right-handed.
struct Contact
{
  ContactKind kind = ContactKind::ParticleParticle;
  uint32_t i = 0;
  uint32_t j = 0;  ///< partner particle or body index
  Vec3 e1{};
  Vec3 e2{};
  Vec3 e3{};
  double psi = 0.0;           ///< penetration depth, >= 0
  Vec3 surface_velocity{};    ///< body contacts: velocity of the body at the contact point

  /// Rotation taking world vectors into contact-frame coordinates.
  Mat3 frame() const { return Mat3::from_rows(e1, e2, e3); }
};

/// Tangent basis for a unit normal: cross with the coordinate axis along
/// which the normal has the smallest magnitude, then complete right-handed.
std::pair<Vec3, Vec3> make_contact_frame(const Vec3& normal);

/// Clamps the normal component of b (after adding the stabilization bias
/// alpha * psi / dt) at zero, then scales the tangent part back onto the
/// Coulomb cone ||b[1:2]|| <= mu * b[0].
Vec3 project_friction_cone(Vec3 b, double mu, double psi, double alpha, double dt);

struct DetectionStats
{
  size_t candidates = 0;          ///< particle-particle candidates visited
  size_t particle_contacts = 0;   ///< owner-side particle-particle contacts
  size_t body_contacts = 0;
  size_t skipped_coincident = 0;  ///< centers closer than 1e-12
  size_t skipped_degenerate = 0;  ///< body contacts with a vanishing SDF gradient
  double max_penetration = 0.0;

  void merge(const DetectionStats& o);
};

struct DetectContext
{
  std::span<const Vec3> positions;
  double radius = 0.0;
  const SpatialHashmap* map = nullptr;
  std::span<const RigidBody> bodies;
};

/// Narrowphase for one owner particle: particle contacts in candidate order,
/// then body contacts in body order. Particles touch iff their centers are
/// closer than 2r.
template <typename Emit>
void detect_particle_contacts(const DetectContext& ctx, size_t i, Emit&& emit, DetectionStats& stats);

/// Every contact of every particle, in owner order. Each touching pair
/// therefore appears twice, once per owner, with opposite normals.
std::vector<Contact> detect_contacts(std::span<const Vec3> positions, double radius, const SpatialHashmap& map,
                                     std::span<const RigidBody> bodies, DetectionStats* stats = nullptr);

/// Receives every projected contact-frame impulse (for auditing). Must be
/// thread-safe when the solver runs on more than one worker.
class ImpulseObserver
{
public:
  virtual ~ImpulseObserver() = default;
  virtual void on_impulse(const Contact& contact, const Vec3& projected, int sweep) = 0;
};

/// Immutable per-solve inputs shared by every contact update.
struct SolveContext
{
  std::span<const Vec3> velocities;
  std::span<const Vec3> previous;  ///< impulse buffer as of the previous sweep
  Vec3 gravity_dv{};               ///< dt * F_ext / m
  double mu = 0.0;
  double alpha = 0.0;
  double dt = 1.0;
  double gamma = 1.0;
};

/// Projected impulse of one contact, in contact-frame coordinates, from the
/// velocities plus the previous sweep's impulses of both sides. The owner's
/// velocity change is contact_weight(c, gamma) * frame()^T * result, so the
/// two owners of a particle pair receive exactly opposite changes.
Vec3 contact_impulse(const Contact& c, const SolveContext& ctx);

/// Share of a contact impulse applied to its owner: 1/(1+gamma) between
/// particles, 1 against a rheonomic body.
inline double contact_weight(const Contact& c, double gamma)
{
  return c.kind == ContactKind::ParticleParticle ? 1.0 / (1.0 + gamma) : 1.0;
}

/// World-frame velocity change of the owner for projected impulse b.
inline Vec3 contact_velocity_change(const Contact& c, const Vec3& b, double gamma)
{
  return (c.e1 * b.x + c.e2 * b.y + c.e3 * b.z) * contact_weight(c, gamma);
}

struct ImpulseBuffer
{
  std::vector<Vec3> delta_v;
};

struct SolveOptions
{
  WorkerPool* pool = nullptr;
  ImpulseObserver* observer = nullptr;
  /// Optional per-body accumulation of impulses (N s) applied to particles.
  std::vector<Vec3>* body_impulses = nullptr;
};

/// Projected Jacobi solve over an arbitrary contact list (grouped by owner
/// internally). Runs params.solver_iterations sweeps; within a sweep every
/// contact reads impulses from the previous sweep only.
ImpulseBuffer solve_contacts_pja(std::span<const Contact> contacts, std::span<const Vec3> velocities,
                                 const MaterialParams& params, const SolveOptions& options = {});

// --- implementation ------------------------------------------------------------

template <typename Emit>
void detect_particle_contacts(const DetectContext& ctx, size_t i, Emit&& emit, DetectionStats& stats)
{
  const Vec3 xi = ctx.positions[i];
  const double r = ctx.radius;
  const double touch2 = 4.0 * r * r;
  stats.candidates += ctx.map->for_each_candidate(ctx.positions, i, [&](size_t j) {
    const Vec3 d = xi - ctx.positions[j];
    const double dist2 = norm2(d);
    if (dist2 >= touch2)
      return;
    const double dist = std::sqrt(dist2);
    if (dist < 1e-12) {
      ++stats.skipped_coincident;
      return;
    }
    Contact c;
    c.kind = ContactKind::ParticleParticle;
    c.i = static_cast<uint32_t>(i);
    c.j = static_cast<uint32_t>(j);
    c.e1 = d / dist;
    std::tie(c.e2, c.e3) = make_contact_frame(c.e1);
    c.psi = 2.0 * r - dist;
    ++stats.particle_contacts;
    stats.max_penetration = std::fmax(stats.max_penetration, c.psi);
    emit(c);
  });

  for (size_t b = 0; b < ctx.bodies.size(); ++b) {
    const RigidBody& body = ctx.bodies[b];
    const Penetration p = penetration_depth(body.geometry, body.pose, xi, r);
    if (p.degenerate)
      ++stats.skipped_degenerate;
    if (!p.contact)
      continue;
    Contact c;
    c.kind = ContactKind::ParticleBody;
    c.i = static_cast<uint32_t>(i);
    c.j = static_cast<uint32_t>(b);
    c.e1 = p.normal;
    std::tie(c.e2, c.e3) = make_contact_frame(c.e1);
    c.psi = p.depth;
    c.surface_velocity = point_velocity(body.pose, body.twist, xi - p.normal * p.distance);
    ++stats.body_contacts;
    stats.max_penetration = std::fmax(stats.max_penetration, c.psi);
    emit(c);
  }
}

}  // namespace granular
