#pragma once

#include <cstdint>
#include <vector>

#include "safeswarm/safety.hpp"
#include "safeswarm/vec3.hpp"
#include "safeswarm/world.hpp"

namespace safeswarm {

struct RewardConfig {
    double lambda = 10.0;      // encouragement scale, > 0
    double eps = 0.1;          // stabilizer, > 0
    double gamma_vel = -0.5;   // velocity-penalty scale, <= 0
    double c_collision = -50.0;
    double c_edge = -10.0;
    double edge_margin = 0.05; // [m]
};

void validate(const RewardConfig& cfg);

struct RewardTerms {
    double encourage = 0.0;
    double penalty = 0.0;
    double edge = 0.0;
    double velocity = 0.0;
    double total = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double v_normed = 0.0;
};

// lambda / (|rel_pad|^2 + eps)
double reward_encourage(const Vec3& rel_pad, const RewardConfig& cfg);
// max over obstacles of 1 / (|rel|^2 + eps); empty list -> 0
double alpha_coefficient(const std::vector<Vec3>& rel_obstacles, const RewardConfig& cfg);
// 1 / (|rel_pad|^2 + eps)
double beta_coefficient(const Vec3& rel_pad, const RewardConfig& cfg);
// gamma_vel * |vel|^2 * (alpha + beta)
double reward_velocity(const Vec3& vel, double alpha, double beta, const RewardConfig& cfg);
// c_edge when below the pad top (plus margin) while horizontally off the pad
double reward_edge(const Vec3& drone_pos, const PadSpec& pad, const RewardConfig& cfg);
double reward_collision(bool in_collision, const RewardConfig& cfg);
// total = encourage + penalty + edge + velocity, components stored
RewardTerms total_reward(double encourage, double penalty, double edge, double velocity);

inline const Vec3 kObstacleSentinel{100.0, 100.0, 100.0};

// Per-agent decentralized view. rel_pad is pad center minus drone
// position; rel_obstacles holds K nearest-first slots (sentinel-padded,
// z component zero since obstacles are full-height cylinders);
// rel_drones holds the other drones' offsets nearest-first. dyn, when
// enabled, appends the drone's (gain_k, v_max).
struct AgentObservation {
    Vec3 own_vel;
    Vec3 rel_pad;
    std::vector<Vec3> rel_obstacles;
    std::vector<Vec3> rel_drones;
    std::vector<double> dyn;

    std::vector<double> flatten() const;
};

struct LandingThresholds {
    double z_tol = 0.02;  // |z - pad top| tolerance [m]
    double v_land = 0.1;  // max speed at touchdown [m/s]
};

struct SpawnConfig {
    double z_min = 0.8;
    double z_max = 1.6;
    double margin_xy = 0.3;              // kept away from the arena walls
    double min_separation = 0.5;         // between spawned drones [m]
    double min_obstacle_clearance = 0.4; // from obstacle surfaces [m]
    std::vector<Vec3> fixed_starts;      // when set, used verbatim (one per drone)
};

struct EnvConfig {
    WorldConfig world;
    RewardConfig reward;
    SafetyConfig safety;
    LandingThresholds land;
    SpawnConfig spawn;
    int horizon = 600;
    int obstacle_slots = -1;         // -1: one slot per configured obstacle
    bool append_dynamics_obs = false; // appends (gain_k, v_max) per agent

    int resolved_obstacle_slots() const {
        return obstacle_slots >= 0 ? obstacle_slots
                                   : static_cast<int>(world.obstacles.size());
    }
};

void validate(const EnvConfig& cfg);

struct EnvState {
    std::vector<DroneState> drones;
    std::vector<PadSpec> pads;
    int step_count = 0;
    double time_s = 0.0;
};

struct AgentStepInfo {
    DroneStatus status = DroneStatus::Flying;
    bool acted = false;
    FilterReport filter;
};

struct StepResult {
    std::vector<AgentObservation> observations;
    std::vector<RewardTerms> rewards; // zeroed for agents that did not act
    bool done = false;
    std::vector<AgentStepInfo> info;
};

struct DroneOutcome {
    bool success = false;
    double precision_m = 0.0;    // horizontal landing error, valid iff success
    double land_time_s = 0.0;    // valid iff success
    double min_obstacle_clearance_m = kInfiniteClearance; // surface-to-body-surface
    double min_interagent_distance_m = kInfiniteClearance; // center-to-center
    double min_agent_clearance_m = kInfiniteClearance;     // surface-to-surface
};

struct EpisodeOutcome {
    std::vector<DroneOutcome> drones;
    int steps = 0;
    int collision_count = 0;
    int fallback_count = 0;
    std::uint64_t seed = 0;
};

// true iff within the pad disc, within z tolerance of the pad top, and slow
bool check_landed(const DroneState& drone, const PadSpec& pad, const LandingThresholds& th);

// true iff penetrating an obstacle, touching another Flying drone, or
// outside the arena box ([-h, h] x [-h, h] x [0, z_max])
bool check_collision(int drone_index, const std::vector<DroneState>& drones,
                     const std::vector<DroneParams>& params,
                     const std::vector<ObstacleSpec>& obstacles, const ArenaSpec& arena);

// Multi-agent episodic landing environment. Drone i targets pad i.
class LandingEnv {
public:
    explicit LandingEnv(EnvConfig cfg);

    // Places drones (fixed starts or rejection sampling) and returns the
    // initial observations. Deterministic given the seed.
    std::vector<AgentObservation> reset(std::uint64_t seed);

    // Advances one step: optionally filters each Flying drone's command,
    // integrates dynamics and pads, updates statuses, and evaluates
    // rewards on the post-step state. actions.size() must equal the agent
    // count; entries for non-Flying drones are ignored.
    StepResult step(const std::vector<Vec3>& actions, bool use_filter);

    AgentObservation build_observation(int agent_index) const;
    std::vector<double> global_state() const;

    bool done() const { return done_; }
    int num_agents() const { return static_cast<int>(cfg_.world.drones.size()); }
    int obs_dim() const;
    int global_dim() const;
    const EnvState& state() const { return st_; }
    const EnvConfig& config() const { return cfg_; }
    const EpisodeOutcome& outcome() const { return outcome_; }

private:
    SafetyScene make_scene() const;
    void record_clearances();

    EnvConfig cfg_;
    EnvState st_;
    EpisodeOutcome outcome_;
    bool done_ = false;
    bool started_ = false;
};

}  // namespace safeswarm
