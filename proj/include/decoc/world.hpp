#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace decoc {

using AgentId = std::size_t;

/// Straight multi-lane road. Lane 0 is the rightmost lane; indices grow to the left.
struct RoadGeometry {
  int lane_count = 3;
  double lane_width = 3.5;
  double length = 1000.0;

  bool operator==(const RoadGeometry&) const = default;
};

/// Tunable constants of the kinematic model.
struct DynamicsParams {
  double step_length = 2.0;    // seconds per primitive action
  double velocity_step = 2.0;  // dv applied by Accelerate / Decelerate
  double sub_step = 0.1;       // sampling resolution for collision checks
  double max_speed = 40.0;

  int samples_per_step() const {
    return std::max(1, static_cast<int>(std::lround(step_length / sub_step)));
  }

  bool operator==(const DynamicsParams&) const = default;
};

enum class Primitive : std::uint8_t {
  Accelerate = 0,
  Decelerate = 1,
  DoNothing = 2,
  LaneChangeLeft = 3,
  LaneChangeRight = 4,
};

inline constexpr std::size_t kPrimitiveCount = 5;
inline constexpr std::array<Primitive, kPrimitiveCount> kAllPrimitives = {
    Primitive::Accelerate, Primitive::Decelerate, Primitive::DoNothing,
    Primitive::LaneChangeLeft, Primitive::LaneChangeRight};

/// Short notation used in plan printouts: + - 0 L R.
inline constexpr char primitive_symbol(Primitive p) {
  switch (p) {
    case Primitive::Accelerate: return '+';
    case Primitive::Decelerate: return '-';
    case Primitive::DoNothing: return '0';
    case Primitive::LaneChangeLeft: return 'L';
    case Primitive::LaneChangeRight: return 'R';
  }
  return '?';
}

inline constexpr std::string_view primitive_name(Primitive p) {
  switch (p) {
    case Primitive::Accelerate: return "accelerate";
    case Primitive::Decelerate: return "decelerate";
    case Primitive::DoNothing: return "do_nothing";
    case Primitive::LaneChangeLeft: return "lane_change_left";
    case Primitive::LaneChangeRight: return "lane_change_right";
  }
  return "unknown";
}

/// Bit set over the five primitives.
class PrimitiveSet {
 public:
  constexpr PrimitiveSet() = default;
  constexpr PrimitiveSet(std::initializer_list<Primitive> ps) {
    for (auto p : ps) insert(p);
  }
  static constexpr PrimitiveSet all() {
    PrimitiveSet s;
    s.bits_ = (1u << kPrimitiveCount) - 1;
    return s;
  }

  constexpr void insert(Primitive p) { bits_ |= bit(p); }
  constexpr void erase(Primitive p) { bits_ &= static_cast<std::uint8_t>(~bit(p)); }
  constexpr bool contains(Primitive p) const { return (bits_ & bit(p)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  constexpr PrimitiveSet operator&(PrimitiveSet o) const {
    PrimitiveSet s;
    s.bits_ = bits_ & o.bits_;
    return s;
  }
  constexpr PrimitiveSet operator|(PrimitiveSet o) const {
    PrimitiveSet s;
    s.bits_ = bits_ | o.bits_;
    return s;
  }
  constexpr bool operator==(const PrimitiveSet&) const = default;

  /// Members in ascending index order.
  std::vector<Primitive> to_vector() const {
    std::vector<Primitive> out;
    for (auto p : kAllPrimitives)
      if (contains(p)) out.push_back(p);
    return out;
  }

  /// The k-th member in index order; k < size().
  constexpr Primitive nth(std::size_t k) const {
    for (auto p : kAllPrimitives) {
      if (!contains(p)) continue;
      if (k == 0) return p;
      --k;
    }
    return Primitive::DoNothing;
  }

 private:
  static constexpr std::uint8_t bit(Primitive p) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(p));
  }
  std::uint8_t bits_ = 0;
};

struct VehicleState {
  AgentId id = 0;
  double x = 0.0;  // rear-axle midpoint, longitudinal
  double y = 0.0;  // rear-axle midpoint, lateral
  double v = 0.0;  // signed; oncoming traffic drives with v < 0
  double length = 4.5;
  double width = 2.0;
  bool oncoming = false;

  /// +1 for forward traffic, -1 for oncoming.
  double direction() const { return oncoming ? -1.0 : 1.0; }
  double speed() const { return std::abs(v); }
  int lane(double lane_width) const { return static_cast<int>(std::lround(y / lane_width)); }

  bool operator==(const VehicleState&) const = default;
};

struct WorldState {
  int epoch = 0;
  double time = 0.0;
  std::vector<VehicleState> vehicles;

  const VehicleState& vehicle(AgentId id) const {
    for (const auto& v : vehicles)
      if (v.id == id) return v;
    throw std::out_of_range("unknown vehicle id " + std::to_string(id));
  }
  std::size_t index_of(AgentId id) const {
    for (std::size_t i = 0; i < vehicles.size(); ++i)
      if (vehicles[i].id == id) return i;
    throw std::out_of_range("unknown vehicle id " + std::to_string(id));
  }

  bool operator==(const WorldState&) const = default;
};

struct Pose {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;

  bool operator==(const Pose&) const = default;
};

struct TrajectorySegment {
  AgentId agent = 0;
  int start_epoch = 0;
  double length = 4.5;
  double width = 2.0;
  bool oncoming = false;
  std::vector<Pose> poses;
};

/// Minimum-jerk quintic: 10u^3 - 15u^4 + 6u^5, scaled by delta.
inline double quintic_profile(double delta, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("quintic_profile: u outside [0,1]");
  const double u3 = u * u * u;
  return delta * (u3 * (10.0 + u * (-15.0 + 6.0 * u)));
}

/// Integral of the unit quintic profile from 0 to u: 2.5u^4 - 3u^5 + u^6.
inline double quintic_profile_integral(double u) {
  const double u4 = u * u * u * u;
  return u4 * (2.5 + u * (-3.0 + u));
}

namespace detail {

inline double velocity_delta(const VehicleState& s, Primitive a, double dv) {
  switch (a) {
    case Primitive::Accelerate: return s.direction() * dv;
    case Primitive::Decelerate: return -s.direction() * dv;
    default: return 0.0;
  }
}

inline double lateral_delta(Primitive a, double lane_width) {
  switch (a) {
    case Primitive::LaneChangeLeft: return lane_width;
    case Primitive::LaneChangeRight: return -lane_width;
    default: return 0.0;
  }
}

}  // namespace detail

/// Pose of a vehicle at fraction u of a step while executing a primitive.
inline Pose pose_at(const VehicleState& s, Primitive a, double u, const RoadGeometry& road,
                    const DynamicsParams& dyn) {
  const double T = dyn.step_length;
  const double dvel = detail::velocity_delta(s, a, dyn.velocity_step);
  const double dlat = detail::lateral_delta(a, road.lane_width);
  Pose p;
  p.t = u * T;
  p.v = s.v + quintic_profile(dvel, u);
  p.x = s.x + s.v * u * T + dvel * T * quintic_profile_integral(u);
  p.y = s.y + quintic_profile(dlat, u);
  return p;
}

/// Successor of a single vehicle after one primitive.
inline VehicleState advance(const VehicleState& s, Primitive a, const RoadGeometry& road,
                            const DynamicsParams& dyn) {
  VehicleState next = s;
  const double T = dyn.step_length;
  const double dvel = detail::velocity_delta(s, a, dyn.velocity_step);
  next.v = s.v + dvel;
  next.x = s.x + s.v * T + dvel * T * 0.5;
  next.y = s.y + detail::lateral_delta(a, road.lane_width);
  return next;
}

/// Primitives that keep the vehicle on the road and inside [0, max_speed].
inline PrimitiveSet feasible_primitives(const VehicleState& s, const RoadGeometry& road,
                                        const DynamicsParams& dyn) {
  PrimitiveSet set = PrimitiveSet::all();
  const int lane = s.lane(road.lane_width);
  if (lane >= road.lane_count - 1) set.erase(Primitive::LaneChangeLeft);
  if (lane <= 0) set.erase(Primitive::LaneChangeRight);
  if (s.speed() - dyn.velocity_step < -1e-9) set.erase(Primitive::Decelerate);
  if (s.speed() + dyn.velocity_step > dyn.max_speed + 1e-9) set.erase(Primitive::Accelerate);
  return set;
}

inline PrimitiveSet feasible_primitives(const WorldState& world, AgentId agent,
                                        const RoadGeometry& road, const DynamicsParams& dyn) {
  return feasible_primitives(world.vehicle(agent), road, dyn);
}

/// Axis-aligned footprint overlap. The rear axle sits at the back of the box, so the box
/// extends `length` in the direction of travel.
inline bool footprints_overlap(double xa, double ya, double la, double wa, bool oncoming_a,
                               double xb, double yb, double lb, double wb, bool oncoming_b) {
  const double a_lo = oncoming_a ? xa - la : xa;
  const double a_hi = oncoming_a ? xa : xa + la;
  const double b_lo = oncoming_b ? xb - lb : xb;
  const double b_hi = oncoming_b ? xb : xb + lb;
  if (a_hi <= b_lo || b_hi <= a_lo) return false;
  const double half = 0.5 * (wa + wb);
  return std::abs(ya - yb) < half;
}

/// True iff any two footprints overlap at a common sample.
inline bool collision_check(std::span<const TrajectorySegment> segments) {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    for (std::size_t j = i + 1; j < segments.size(); ++j) {
      const auto& a = segments[i];
      const auto& b = segments[j];
      const std::size_t n = std::min(a.poses.size(), b.poses.size());
      for (std::size_t k = 0; k < n; ++k) {
        if (footprints_overlap(a.poses[k].x, a.poses[k].y, a.length, a.width, a.oncoming,
                               b.poses[k].x, b.poses[k].y, b.length, b.width, b.oncoming))
          return true;
      }
    }
  }
  return false;
}

struct StepResult {
  WorldState next;
  std::vector<TrajectorySegment> segments;
};

inline void check_joint_action(const WorldState& world, std::span<const Primitive> joint,
                               const RoadGeometry& road, const DynamicsParams& dyn) {
  if (joint.size() != world.vehicles.size())
    throw std::invalid_argument("step: joint action size does not match vehicle count");
  for (std::size_t i = 0; i < joint.size(); ++i) {
    if (!feasible_primitives(world.vehicles[i], road, dyn).contains(joint[i]))
      throw std::invalid_argument("step: infeasible primitive for vehicle " +
                                  std::to_string(world.vehicles[i].id));
  }
}

/// Joint transition. joint[i] is the primitive of world.vehicles[i].
inline StepResult step(const WorldState& world, std::span<const Primitive> joint,
                       const RoadGeometry& road, const DynamicsParams& dyn) {
  check_joint_action(world, joint, road, dyn);
  StepResult out;
  out.next.epoch = world.epoch + 1;
  out.next.time = out.next.epoch * dyn.step_length;
  out.next.vehicles.reserve(world.vehicles.size());
  out.segments.reserve(world.vehicles.size());
  const int n = dyn.samples_per_step();
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const auto& s = world.vehicles[i];
    TrajectorySegment seg{s.id, world.epoch, s.length, s.width, s.oncoming, {}};
    seg.poses.reserve(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) {
      Pose p = pose_at(s, joint[i], static_cast<double>(k) / n, road, dyn);
      p.t += world.time;
      seg.poses.push_back(p);
    }
    out.next.vehicles.push_back(advance(s, joint[i], road, dyn));
    out.segments.push_back(std::move(seg));
  }
  return out;
}

/// Allocation-free joint transition with collision flags, used inside the search.
/// `collided[i]` is set for every vehicle involved in an overlap.
inline bool step_in_place(std::span<const VehicleState> from, std::span<const Primitive> joint,
                          std::span<VehicleState> to, std::span<std::uint8_t> collided,
                          const RoadGeometry& road, const DynamicsParams& dyn) {
  const std::size_t count = from.size();
  for (std::size_t i = 0; i < count; ++i) {
    to[i] = advance(from[i], joint[i], road, dyn);
    collided[i] = 0;
  }
  bool any = false;
  const int n = dyn.samples_per_step();
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      const auto& a0 = from[i];
      const auto& b0 = from[j];
      // Swept boxes; x and y are monotone within a step.
      const double a_xlo = std::min(a0.x, to[i].x) - a0.length;
      const double a_xhi = std::max(a0.x, to[i].x) + a0.length;
      const double b_xlo = std::min(b0.x, to[j].x) - b0.length;
      const double b_xhi = std::max(b0.x, to[j].x) + b0.length;
      if (a_xhi <= b_xlo || b_xhi <= a_xlo) continue;
      const double a_ylo = std::min(a0.y, to[i].y), a_yhi = std::max(a0.y, to[i].y);
      const double b_ylo = std::min(b0.y, to[j].y), b_yhi = std::max(b0.y, to[j].y);
      const double half = 0.5 * (a0.width + b0.width);
      if (a_yhi + half <= b_ylo || b_yhi + half <= a_ylo) continue;
      for (int k = 0; k <= n; ++k) {
        const double u = static_cast<double>(k) / n;
        const Pose pa = pose_at(a0, joint[i], u, road, dyn);
        const Pose pb = pose_at(b0, joint[j], u, road, dyn);
        if (footprints_overlap(pa.x, pa.y, a0.length, a0.width, a0.oncoming, pb.x, pb.y,
                               b0.length, b0.width, b0.oncoming)) {
          collided[i] = collided[j] = 1;
          any = true;
          break;
        }
      }
    }
  }
  return any;
}

/// True iff any two vehicles overlap in the given snapshot.
inline bool has_overlap(const WorldState& world) {
  const auto& vs = world.vehicles;
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t j = i + 1; j < vs.size(); ++j)
      if (footprints_overlap(vs[i].x, vs[i].y, vs[i].length, vs[i].width, vs[i].oncoming,
                             vs[j].x, vs[j].y, vs[j].length, vs[j].width, vs[j].oncoming))
        return true;
  return false;
}

}  // namespace decoc
