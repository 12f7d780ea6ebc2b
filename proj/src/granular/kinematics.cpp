#include "granular/kinematics.hpp"

#include <algorithm>
#include <string>

#include "granular/error.hpp"

namespace granular {

namespace {

Mat3 skew(const Vec3& w)
{
  return Mat3{{0, -w.z, w.y, w.z, 0, -w.x, -w.y, w.x, 0}};
}

Mat3 add(const Mat3& a, const Mat3& b, double sb)
{
  Mat3 r = a;
  for (size_t i = 0; i < 9; ++i)
    r.m[i] += sb * b.m[i];
  return r;
}

DrivenState attach(const SE3& frame, const Twist& frame_twist, const SE3& offset)
{
  DrivenState s;
  s.pose = frame * offset;
  s.twist.angular = frame_twist.angular;
  s.twist.linear = frame_twist.linear + cross(frame_twist.angular, s.pose.translation - frame.translation);
  return s;
}

}  // namespace

SE3 SE3::inverse() const
{
  SE3 r;
  r.rotation = rotation.transposed();
  r.translation = -(r.rotation * translation);
  return r;
}

SE3 se3_compose(const SE3& a, const SE3& b)
{
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

SE3 se3_exp(const Twist& body_twist, double dt)
{
  const Vec3 w = body_twist.angular * dt;
  const Vec3 v = body_twist.linear * dt;
  const double theta2 = norm2(w);
  const double theta = std::sqrt(theta2);
  const Mat3 k = skew(w);
  const Mat3 k2 = k * k;

  double a, b, c;  // sin(t)/t, (1-cos t)/t^2, (t - sin t)/t^3
  if (theta < 1e-6) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }

  SE3 out;
  out.rotation = add(add(Mat3::identity(), k, a), k2, b);
  const Mat3 vmat = add(add(Mat3::identity(), k, b), k2, c);
  out.translation = vmat * v;
  return out;
}

SE3 reorthonormalized(const SE3& t)
{
  Vec3 r0 = normalized(t.rotation.row(0));
  Vec3 r1 = t.rotation.row(1);
  r1 = normalized(r1 - r0 * dot(r0, r1));
  const Vec3 r2 = cross(r0, r1);
  return {Mat3::from_rows(r0, r1, r2), t.translation};
}

TrackState track_steering_advance(const TrackState& state, std::array<double, 2> action, double dt,
                                  double scale_v, double scale_omega)
{
  const double a_lin = std::clamp(action[0], -1.0, 1.0);
  const double a_yaw = std::clamp(action[1], -1.0, 1.0);
  TrackState next = state;
  next.theta = state.theta + dt * scale_omega * a_yaw;
  const double speed = scale_v * a_lin;
  next.x = state.x + dt * speed * std::cos(next.theta);
  next.y = state.y + dt * speed * std::sin(next.theta);
  return next;
}

SE3 TrackVehicle::pose() const
{
  return {axis_angle({0, 0, 1}, state.theta), {state.x, state.y, z}};
}

Twist TrackVehicle::twist() const
{
  const double speed = scale_v * std::clamp(action[0], -1.0, 1.0);
  const double yaw_rate = scale_omega * std::clamp(action[1], -1.0, 1.0);
  return {{0, 0, yaw_rate}, {speed * std::cos(state.theta), speed * std::sin(state.theta), 0}};
}

KinematicChain::KinematicChain(SE3 base, std::vector<ChainLink> links)
    : base_(base), links_(std::move(links)), q_(links_.size(), 0.0), qdot_(links_.size(), 0.0)
{
  for (size_t i = 0; i < links_.size(); ++i) {
    const ChainLink& l = links_[i];
    if (l.parent < -1 || l.parent >= static_cast<int>(i))
      fail(ErrorKind::Validation, "chain link " + std::to_string(i) + ": parent index " +
                                      std::to_string(l.parent) + " must refer to an earlier link or -1");
    if (std::fabs(norm(l.axis) - 1.0) > 1e-6)
      fail(ErrorKind::Validation, "chain link " + std::to_string(i) + ": joint axis must be unit length");
    if (!(l.velocity_limit > 0.0))
      fail(ErrorKind::Validation, "chain link " + std::to_string(i) + ": velocity_limit must be positive");
    if (orthonormality_residual(l.origin.rotation) > 1e-9)
      fail(ErrorKind::Validation, "chain link " + std::to_string(i) + ": origin rotation is not orthonormal");
  }
}

void KinematicChain::set_positions(std::span<const double> q)
{
  if (q.size() != q_.size())
    fail(ErrorKind::InvalidArgument, "joint position vector has wrong length");
  std::copy(q.begin(), q.end(), q_.begin());
}

void KinematicChain::set_velocity_command(std::span<const double> qdot)
{
  if (qdot.size() != qdot_.size())
    fail(ErrorKind::InvalidArgument, "joint velocity vector has wrong length");
  for (size_t i = 0; i < qdot.size(); ++i) {
    if (!std::isfinite(qdot[i]))
      fail(ErrorKind::InvalidArgument, "joint velocity command is not finite");
    const double lim = links_[i].velocity_limit;
    qdot_[i] = std::clamp(qdot[i], -lim, lim);
  }
}

std::vector<SE3> KinematicChain::forward(std::span<const double> q) const
{
  if (q.size() != links_.size())
    fail(ErrorKind::InvalidArgument, "joint position vector has wrong length");
  std::vector<SE3> poses(links_.size());
  for (size_t i = 0; i < links_.size(); ++i) {
    const ChainLink& l = links_[i];
    const SE3& parent = l.parent < 0 ? base_ : poses[static_cast<size_t>(l.parent)];
    SE3 joint;
    if (l.type == JointType::Revolute)
      joint.rotation = axis_angle(l.axis, q[i]);
    else
      joint.translation = l.axis * q[i];
    poses[i] = parent * l.origin * joint;
  }
  return poses;
}

std::vector<Twist> KinematicChain::link_twists() const
{
  const std::vector<SE3> poses = forward(q_);
  std::vector<Twist> twists(links_.size());
  for (size_t i = 0; i < links_.size(); ++i) {
    const ChainLink& l = links_[i];
    const SE3& parent_pose = l.parent < 0 ? base_ : poses[static_cast<size_t>(l.parent)];
    const Twist parent_twist = l.parent < 0 ? Twist{} : twists[static_cast<size_t>(l.parent)];
    const Vec3 axis_world = (parent_pose.rotation * l.origin.rotation) * l.axis;

    Twist& t = twists[i];
    t.angular = parent_twist.angular;
    t.linear = parent_twist.linear +
               cross(parent_twist.angular, poses[i].translation - parent_pose.translation);
    if (l.type == JointType::Revolute)
      t.angular += axis_world * qdot_[i];
    else
      t.linear += axis_world * qdot_[i];
  }
  return twists;
}

void KinematicChain::advance(double dt)
{
  for (size_t i = 0; i < q_.size(); ++i)
    q_[i] += dt * qdot_[i];
}

DrivenState evaluate_driver(const MotionDriver& driver, const SE3& reference, double t,
                            std::span<const TrackVehicle> vehicles,
                            std::span<const KinematicChain> chains)
{
  return std::visit(
      [&](const auto& d) -> DrivenState {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, StaticDriver>) {
          return {reference, {}};
        } else if constexpr (std::is_same_v<D, ScriptedDriver>) {
          DrivenState s;
          s.pose = reference * se3_exp(d.body_rate, t);
          s.twist.angular = s.pose.rotation * d.body_rate.angular;
          s.twist.linear = s.pose.rotation * d.body_rate.linear;
          return s;
        } else if constexpr (std::is_same_v<D, TrackSteeringDriver>) {
          if (d.vehicle >= vehicles.size())
            fail(ErrorKind::Validation, "track steering driver refers to a missing vehicle");
          const TrackVehicle& v = vehicles[d.vehicle];
          return attach(v.pose(), v.twist(), reference);
        } else {
          if (d.chain >= chains.size() || d.link >= chains[d.chain].size())
            fail(ErrorKind::Validation, "chain driver refers to a missing chain link");
          const KinematicChain& c = chains[d.chain];
          const SE3 link_pose = c.forward()[d.link];
          const Twist link_twist = c.link_twists()[d.link];
          return attach(link_pose, link_twist, reference);
        }
      },
      driver);
}

}  // namespace granular
