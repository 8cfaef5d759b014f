#include "safeswarm/world.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace safeswarm {

const char* drone_status_name(DroneStatus s) {
    switch (s) {
        case DroneStatus::Flying: return "Flying";
        case DroneStatus::Landed: return "Landed";
        case DroneStatus::Crashed: return "Crashed";
    }
    return "Unknown";
}

void validate(const DroneParams& p) {
    if (!(p.gain_k > 0.0) || !std::isfinite(p.gain_k))
        throw std::invalid_argument("DroneParams: gain_k must be positive");
    if (!(p.v_max > 0.0) || !std::isfinite(p.v_max))
        throw std::invalid_argument("DroneParams: v_max must be positive");
    if (!(p.body_radius > 0.0) || !std::isfinite(p.body_radius))
        throw std::invalid_argument("DroneParams: body_radius must be positive");
}

void validate(const ObstacleSpec& o) {
    if (!std::isfinite(o.center_x) || !std::isfinite(o.center_y))
        throw std::invalid_argument("ObstacleSpec: center must be finite");
    if (!(o.radius > 0.0) || !std::isfinite(o.radius))
        throw std::invalid_argument("ObstacleSpec: radius must be positive");
    if (!(o.height > 0.0) || !std::isfinite(o.height))
        throw std::invalid_argument("ObstacleSpec: height must be positive");
}

void validate(const PadSpec& p, double pad_speed_max) {
    if (!p.center.is_finite())
        throw std::invalid_argument("PadSpec: center must be finite");
    if (!(p.radius > 0.0) || !std::isfinite(p.radius))
        throw std::invalid_argument("PadSpec: radius must be positive");
    if (p.motion == PadMotionKind::LinearBounce) {
        const double speed = std::sqrt(p.vel_x * p.vel_x + p.vel_y * p.vel_y);
        if (!std::isfinite(speed) || speed > pad_speed_max)
            throw std::invalid_argument("PadSpec: LinearBounce speed exceeds pad_speed_max");
    }
}

void validate(const ArenaSpec& a) {
    if (!(a.half_extent_xy > 0.0) || !std::isfinite(a.half_extent_xy))
        throw std::invalid_argument("ArenaSpec: half_extent_xy must be positive");
    if (!(a.z_max > 0.0) || !std::isfinite(a.z_max))
        throw std::invalid_argument("ArenaSpec: z_max must be positive");
}

void validate(const WorldConfig& w) {
    validate(w.arena);
    if (w.drones.empty()) throw std::invalid_argument("WorldConfig: at least one drone required");
    if (w.pads.size() != w.drones.size())
        throw std::invalid_argument("WorldConfig: one pad per drone required");
    if (!(w.dt > 0.0) || w.dt > 0.1)
        throw std::invalid_argument("WorldConfig: dt must be in (0, 0.1]");
    for (const auto& d : w.drones) validate(d);
    for (const auto& o : w.obstacles) validate(o);
    // Pad speed cap: a pad may never outrun the slowest drone.
    double pad_speed_max = w.drones.front().v_max;
    for (const auto& d : w.drones) pad_speed_max = std::min(pad_speed_max, d.v_max);
    for (const auto& p : w.pads) validate(p, pad_speed_max);
}

DroneState step_drone_dynamics(const DroneState& state, const DroneParams& params,
                               const Vec3& cmd, double dt) {
    if (state.status != DroneStatus::Flying)
        throw std::invalid_argument("step_drone_dynamics: drone is not Flying");
    if (!cmd.is_finite() || !state.pos.is_finite() || !state.vel.is_finite())
        throw std::invalid_argument("step_drone_dynamics: non-finite input");
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw std::invalid_argument("step_drone_dynamics: dt must be positive");
    const double bound = params.v_max * (1.0 + 1e-12);
    if (std::fabs(cmd.x) > bound || std::fabs(cmd.y) > bound || std::fabs(cmd.z) > bound)
        throw std::invalid_argument("step_drone_dynamics: command exceeds v_max");

    DroneState next = state;
    next.vel = state.vel + (cmd - state.vel) * (params.gain_k * dt);
    next.pos = state.pos + next.vel * dt;
    return next;
}

namespace {

// Reflect a 1-D position into [-half, half], negating velocity once per bounce.
void reflect_axis(double& x, double& v, double half) {
    // bounded loop; each pass strictly reduces the overshoot
    for (int guard = 0; guard < 64 && (x > half || x < -half); ++guard) {
        if (x > half) {
            x = 2.0 * half - x;
            v = -v;
        } else {
            x = -2.0 * half - x;
            v = -v;
        }
    }
}

}  // namespace

PadSpec step_pad(const PadSpec& pad, const ArenaSpec& arena, double dt) {
    if (pad.motion == PadMotionKind::Static) return pad;
    PadSpec next = pad;
    next.center.x += pad.vel_x * dt;
    next.center.y += pad.vel_y * dt;
    reflect_axis(next.center.x, next.vel_x, arena.half_extent_xy);
    reflect_axis(next.center.y, next.vel_y, arena.half_extent_xy);
    return next;
}

double obstacle_clearance(const Vec3& p, const ObstacleSpec& obs) {
    const double dx = p.x - obs.center_x;
    const double dy = p.y - obs.center_y;
    return std::sqrt(dx * dx + dy * dy) - obs.radius;
}

std::pair<int, double> nearest_obstacle(const Vec3& p,
                                        const std::vector<ObstacleSpec>& obstacles) {
    int best = -1;
    double best_clearance = kInfiniteClearance;
    for (int i = 0; i < static_cast<int>(obstacles.size()); ++i) {
        const double c = obstacle_clearance(p, obstacles[i]);
        if (c < best_clearance) {
            best_clearance = c;
            best = i;
        }
    }
    return {best, best_clearance};
}

}  // namespace safeswarm
