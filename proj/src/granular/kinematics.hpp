#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "granular/vec.hpp"

namespace granular {

/// Rigid transform mapping body coordinates into world coordinates.
struct SE3
{
  Mat3 rotation = Mat3::identity();
  Vec3 translation{};

  static SE3 identity() { return {}; }
  static SE3 from_translation(const Vec3& t) { return {Mat3::identity(), t}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }
  /// Inverse transform applied to a point: world -> body.
  Vec3 inverse_apply(const Vec3& p) const { return rotation.transpose_mul(p - translation); }
  SE3 inverse() const;

  bool operator==(const SE3&) const = default;
};

SE3 se3_compose(const SE3& a, const SE3& b);
inline SE3 operator*(const SE3& a, const SE3& b) { return se3_compose(a, b); }

/// Rigid velocity: angular velocity and the velocity of the frame origin.
/// Used in the world frame for body state, and in the body frame as the
/// argument of se3_exp.
struct Twist
{
  Vec3 angular{};
  Vec3 linear{};

  bool operator==(const Twist&) const = default;
};

/// Group exponential of dt * twist, with the twist expressed in body
/// coordinates (so pose(t + dt) = pose(t) * se3_exp(twist, dt) for a constant
/// body-frame twist).
SE3 se3_exp(const Twist& body_twist, double dt);

/// Velocity of the material point of a body currently at `world_point`.
inline Vec3 point_velocity(const SE3& pose, const Twist& world_twist, const Vec3& world_point)
{
  return cross(world_twist.angular, world_point - pose.translation) + world_twist.linear;
}

/// Projects the rotation block back onto SO(3) (Gram-Schmidt on the rows).
SE3 reorthonormalized(const SE3& t);

// --- Track steering vehicle -----------------------------------------------

struct TrackState
{
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

/// Semi-implicit track steering update: heading first, then position along
/// the new heading. The action is clamped to [-1, 1]^2.
TrackState track_steering_advance(const TrackState& state, std::array<double, 2> action, double dt,
                                  double scale_v, double scale_omega);

struct TrackVehicle
{
  TrackState state;
  double z = 0.0;
  double scale_v = 1.0;
  double scale_omega = 1.0;
  std::array<double, 2> action{0.0, 0.0};

  void advance(double dt) { state = track_steering_advance(state, action, dt, scale_v, scale_omega); }
  SE3 pose() const;
  /// World twist of the vehicle frame under the current command.
  Twist twist() const;
};

// --- Kinematic chains --------------------------------------------------------

enum class JointType
{
  Revolute,
  Prismatic,
};

struct ChainLink
{
  int parent = -1;         ///< -1 attaches to the chain base
  SE3 origin;              ///< fixed parent-to-joint transform
  JointType type = JointType::Revolute;
  Vec3 axis{0, 0, 1};      ///< joint axis in the joint frame, unit length
  double velocity_limit = 1.0;
};

/// Tree of velocity-driven joints. Parents must precede children.
class KinematicChain
{
public:
  KinematicChain() = default;
  KinematicChain(SE3 base, std::vector<ChainLink> links);

  const SE3& base() const noexcept { return base_; }
  const std::vector<ChainLink>& links() const noexcept { return links_; }
  size_t size() const noexcept { return links_.size(); }

  std::span<const double> positions() const noexcept { return q_; }
  std::span<const double> velocity_command() const noexcept { return qdot_; }

  void set_positions(std::span<const double> q);
  /// Stores the command clamped to each joint's velocity limit.
  void set_velocity_command(std::span<const double> qdot);

  /// Link poses in the world frame for joint positions q.
  std::vector<SE3> forward(std::span<const double> q) const;
  std::vector<SE3> forward() const { return forward(q_); }

  /// World twists of every link frame at the current q and command.
  std::vector<Twist> link_twists() const;

  /// q <- q + dt * clamp(qdot_cmd).
  void advance(double dt);

private:
  SE3 base_;
  std::vector<ChainLink> links_;
  std::vector<double> q_;
  std::vector<double> qdot_;
};

// --- Motion drivers ----------------------------------------------------------

struct StaticDriver
{
};

/// Constant body-frame twist from the body's reference pose at t = 0.
struct ScriptedDriver
{
  Twist body_rate;
};

struct TrackSteeringDriver
{
  size_t vehicle = 0;
};

struct ChainLinkDriver
{
  size_t chain = 0;
  size_t link = 0;
};

using MotionDriver = std::variant<StaticDriver, ScriptedDriver, TrackSteeringDriver, ChainLinkDriver>;

struct DrivenState
{
  SE3 pose;
  Twist twist;
};

/// Evaluates a driver at time t. `reference` is the body's fixed pose for
/// static/scripted drivers and the attachment offset for vehicle/chain drivers.
DrivenState evaluate_driver(const MotionDriver& driver, const SE3& reference, double t,
                            std::span<const TrackVehicle> vehicles,
                            std::span<const KinematicChain> chains);

}  // namespace granular
