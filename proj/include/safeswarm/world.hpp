#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "safeswarm/vec3.hpp"

namespace safeswarm {

struct DroneParams {
    int id = 0;
    double gain_k = 4.0;       // velocity-tracking gain [1/s]
    double v_max = 1.0;        // per-axis command bound [m/s]
    double body_radius = 0.06; // [m]
};

enum class DroneStatus { Flying, Landed, Crashed };

const char* drone_status_name(DroneStatus s);

struct DroneState {
    Vec3 pos;
    Vec3 vel;
    DroneStatus status = DroneStatus::Flying;
};

// Vertical cylinder; height is kept for scene description but clearance
// treats the cylinder as full-height.
struct ObstacleSpec {
    double center_x = 0.0;
    double center_y = 0.0;
    double radius = 0.15;
    double height = 1.5;
};

enum class PadMotionKind { Static, LinearBounce };

struct PadSpec {
    Vec3 center;          // top-surface center
    double radius = 0.15;
    PadMotionKind motion = PadMotionKind::Static;
    double vel_x = 0.0;   // used by LinearBounce
    double vel_y = 0.0;
};

struct ArenaSpec {
    double half_extent_xy = 2.0;
    double z_max = 3.0;
};

struct WorldConfig {
    std::vector<DroneParams> drones;
    std::vector<ObstacleSpec> obstacles;
    std::vector<PadSpec> pads; // pads[i] is drone i's target
    ArenaSpec arena;
    double dt = 0.02;
};

// Throws std::invalid_argument when an invariant is violated.
void validate(const DroneParams& p);
void validate(const ObstacleSpec& o);
void validate(const PadSpec& p, double pad_speed_max);
void validate(const ArenaSpec& a);
void validate(const WorldConfig& w);

// First-order velocity tracking integrated with semi-implicit Euler:
//   v+ = v + gain_k * (cmd - v) * dt
//   p+ = p + v+ * dt
// Requires a Flying drone and a finite command within [-v_max, v_max]
// per axis; throws std::invalid_argument otherwise.
DroneState step_drone_dynamics(const DroneState& state, const DroneParams& params,
                               const Vec3& cmd, double dt);

// Static pads are unchanged. LinearBounce pads advance by vel*dt and
// reflect (position mirrored, velocity negated) at +-half_extent_xy.
PadSpec step_pad(const PadSpec& pad, const ArenaSpec& arena, double dt);

// Horizontal distance from p to the cylinder axis minus its radius.
// Negative inside the obstacle.
double obstacle_clearance(const Vec3& p, const ObstacleSpec& obs);

// Index and clearance of the obstacle with minimum clearance; ties go to
// the lowest index. Empty list yields {-1, +inf}.
std::pair<int, double> nearest_obstacle(const Vec3& p,
                                        const std::vector<ObstacleSpec>& obstacles);

inline constexpr double kInfiniteClearance = std::numeric_limits<double>::infinity();

}  // namespace safeswarm
