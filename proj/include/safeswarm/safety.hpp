#pragma once

#include <utility>
#include <vector>

#include "safeswarm/vec3.hpp"
#include "safeswarm/world.hpp"

namespace safeswarm {

struct SafetyConfig {
    double eta = 0.2;           // barrier decay rate per step, in (0, 1]
    double responsibility = 0.5; // inter-agent share of the decay budget, in (0, 1]
    double margin = 0.05;       // added to geometric radii when building safety radii [m]
    double cull_radius = 2.0;   // constraints emitted only for hazards this close [m]
    double v_max = 1.0;         // command box used when no per-drone bound is supplied [m/s]

    // safety radius around an obstacle: its radius + drone body + margin
    double r_safe_obstacle(double obstacle_radius, double body_radius) const {
        return obstacle_radius + body_radius + margin;
    }
    // safety radius between two drones: both bodies + margin
    double r_safe_agent(double body_radius_i, double body_radius_j) const {
        return body_radius_i + body_radius_j + margin;
    }
};

void validate(const SafetyConfig& cfg);

struct ConstraintSource {
    enum class Kind { Obstacle, Agent, Arena };
    Kind kind = Kind::Obstacle;
    int id = 0; // obstacle index, agent index, or arena face 0..5 (+x,-x,+y,-y,+z,-z)
};

// Linear half-space constraint on a velocity command: normal . u >= offset.
struct BarrierConstraint {
    Vec3 normal;
    double offset = 0.0;
    ConstraintSource source;
};

struct FilterReport {
    Vec3 nominal;
    Vec3 filtered;
    std::vector<ConstraintSource> active_constraints;
    bool fallback_used = false;
    int qp_iterations = 0;
};

// Minimal view of the scene the filter needs; the environment adapts its
// state into this form so the safety layer stays independent of it.
struct SafetyAgentView {
    Vec3 pos;
    Vec3 vel;
    double body_radius = 0.06;
    bool flying = true;
};

struct SafetyScene {
    std::vector<SafetyAgentView> agents;
    const std::vector<ObstacleSpec>* obstacles = nullptr;
    ArenaSpec arena;
    double dt = 0.02;
};

// h = |p - c|^2 - r_safe^2: positive strictly outside the safety ball,
// zero on the boundary, negative inside. Cylinder obstacles evaluate it
// on XY components only.
double barrier_value(const Vec3& p, const Vec3& center, double r_safe);

// Discrete-time decay condition h(p + u*dt) >= (1 - eta) h(p), linearized:
//   2*dt*(p - c) . u >= -eta * h(p)
// restricted to XY for the cylinder. A drone already inside the safety
// radius (h < 0) still gets a constraint; it then demands outward motion.
BarrierConstraint obstacle_constraint(const Vec3& p, const ObstacleSpec& obstacle,
                                      double body_radius, const SafetyConfig& cfg,
                                      double dt, int obstacle_id = 0);

// Relative barrier against a moving peer, with a responsibility share of
// the decay budget and the peer treated as holding its current velocity:
//   a = 2*dt*(p_i - p_j),  b = -responsibility*eta*h_ij + 2*dt*(p_i - p_j) . v_j
BarrierConstraint interagent_constraint(const Vec3& p_i, const Vec3& p_j, const Vec3& v_j,
                                        double r_safe, const SafetyConfig& cfg, double dt,
                                        int peer_id = 0);

// One constraint per obstacle within the cull radius, per Flying peer
// within the cull radius, plus the six arena faces, in that fixed order
// (obstacles by index, agents by index, faces +x,-x,+y,-y,+z,-z).
std::vector<BarrierConstraint> assemble_constraints(int agent_index, const SafetyScene& scene,
                                                    const SafetyConfig& cfg);

// argmin |u - u_nom|^2 subject to every constraint normal.u >= offset and
// the box |u_i| <= v_max, solved by Hildreth's dual coordinate ascent.
// Falls back to u = 0 (fallback_used = true) when no feasible command is
// found within the sweep cap.
std::pair<Vec3, FilterReport> solve_filter_qp(const Vec3& u_nom,
                                              const std::vector<BarrierConstraint>& constraints,
                                              double v_max);

// Box-clamps the nominal command, assembles constraints for the agent and
// solves the minimum-deviation QP.
std::pair<Vec3, FilterReport> filter_action(int agent_index, const SafetyScene& scene,
                                            const Vec3& u_nom, double v_max,
                                            const SafetyConfig& cfg);

}  // namespace safeswarm
