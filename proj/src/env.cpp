#include "safeswarm/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "safeswarm/rng.hpp"

namespace safeswarm {

namespace {
constexpr std::uint64_t kStreamPlacement = 0x706c6163ULL; // per-episode placement stream
constexpr int kPlacementAttempts = 1000;
}  // namespace

void validate(const RewardConfig& cfg) {
    if (!(cfg.lambda > 0.0)) throw std::invalid_argument("RewardConfig: lambda must be > 0");
    if (!(cfg.eps > 0.0)) throw std::invalid_argument("RewardConfig: eps must be > 0");
    if (cfg.gamma_vel > 0.0) throw std::invalid_argument("RewardConfig: gamma_vel must be <= 0");
    if (cfg.c_collision > 0.0)
        throw std::invalid_argument("RewardConfig: c_collision must be <= 0");
    if (cfg.c_edge > 0.0) throw std::invalid_argument("RewardConfig: c_edge must be <= 0");
    if (cfg.edge_margin < 0.0)
        throw std::invalid_argument("RewardConfig: edge_margin must be >= 0");
}

double reward_encourage(const Vec3& rel_pad, const RewardConfig& cfg) {
    return cfg.lambda / (rel_pad.norm2() + cfg.eps);
}

double alpha_coefficient(const std::vector<Vec3>& rel_obstacles, const RewardConfig& cfg) {
    double best = 0.0;
    for (const auto& rel : rel_obstacles)
        best = std::max(best, 1.0 / (rel.norm2() + cfg.eps));
    return best;
}

double beta_coefficient(const Vec3& rel_pad, const RewardConfig& cfg) {
    return 1.0 / (rel_pad.norm2() + cfg.eps);
}

double reward_velocity(const Vec3& vel, double alpha, double beta, const RewardConfig& cfg) {
    return cfg.gamma_vel * vel.norm2() * (alpha + beta);
}

double reward_edge(const Vec3& drone_pos, const PadSpec& pad, const RewardConfig& cfg) {
    const bool below = drone_pos.z < pad.center.z + cfg.edge_margin;
    const bool off_pad = distance_xy(drone_pos, pad.center) > pad.radius;
    return (below && off_pad) ? cfg.c_edge : 0.0;
}

double reward_collision(bool in_collision, const RewardConfig& cfg) {
    return in_collision ? cfg.c_collision : 0.0;
}

RewardTerms total_reward(double encourage, double penalty, double edge, double velocity) {
    RewardTerms t;
    t.encourage = encourage;
    t.penalty = penalty;
    t.edge = edge;
    t.velocity = velocity;
    t.total = encourage + penalty + edge + velocity;
    return t;
}

std::vector<double> AgentObservation::flatten() const {
    std::vector<double> out;
    out.reserve(6 + 3 * (rel_obstacles.size() + rel_drones.size()) + dyn.size());
    const auto push = [&out](const Vec3& v) {
        out.push_back(v.x);
        out.push_back(v.y);
        out.push_back(v.z);
    };
    push(own_vel);
    push(rel_pad);
    for (const auto& v : rel_obstacles) push(v);
    for (const auto& v : rel_drones) push(v);
    out.insert(out.end(), dyn.begin(), dyn.end());
    return out;
}

void validate(const EnvConfig& cfg) {
    validate(cfg.world);
    validate(cfg.reward);
    validate(cfg.safety);
    if (cfg.horizon <= 0) throw std::invalid_argument("EnvConfig: horizon must be positive");
    if (!(cfg.land.z_tol > 0.0) || !(cfg.land.v_land > 0.0))
        throw std::invalid_argument("EnvConfig: landing thresholds must be positive");
    if (!cfg.spawn.fixed_starts.empty() &&
        cfg.spawn.fixed_starts.size() != cfg.world.drones.size())
        throw std::invalid_argument("EnvConfig: fixed_starts must list one position per drone");
    if (!(cfg.spawn.z_min > 0.0) || cfg.spawn.z_max < cfg.spawn.z_min ||
        cfg.spawn.z_max > cfg.world.arena.z_max)
        throw std::invalid_argument("EnvConfig: spawn z range invalid");
}

bool check_landed(const DroneState& drone, const PadSpec& pad, const LandingThresholds& th) {
    if (distance_xy(drone.pos, pad.center) > pad.radius) return false;
    if (std::fabs(drone.pos.z - pad.center.z) > th.z_tol) return false;
    return drone.vel.norm() <= th.v_land;
}

bool check_collision(int drone_index, const std::vector<DroneState>& drones,
                     const std::vector<DroneParams>& params,
                     const std::vector<ObstacleSpec>& obstacles, const ArenaSpec& arena) {
    const auto i = static_cast<std::size_t>(drone_index);
    const DroneState& d = drones.at(i);
    const double body = params.at(i).body_radius;

    for (const auto& obs : obstacles)
        if (obstacle_clearance(d.pos, obs) < body) return true;

    for (std::size_t j = 0; j < drones.size(); ++j) {
        if (j == i || drones[j].status != DroneStatus::Flying) continue;
        if (distance(d.pos, drones[j].pos) < body + params[j].body_radius) return true;
    }

    const double h = arena.half_extent_xy;
    if (std::fabs(d.pos.x) > h || std::fabs(d.pos.y) > h) return true;
    if (d.pos.z < 0.0 || d.pos.z > arena.z_max) return true;
    return false;
}

LandingEnv::LandingEnv(EnvConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }

std::vector<AgentObservation> LandingEnv::reset(std::uint64_t seed) {
    const int n = num_agents();
    st_ = EnvState{};
    st_.pads = cfg_.world.pads;
    st_.drones.assign(static_cast<std::size_t>(n), DroneState{});
    outcome_ = EpisodeOutcome{};
    outcome_.seed = seed;
    outcome_.drones.assign(static_cast<std::size_t>(n), DroneOutcome{});
    done_ = false;
    started_ = true;

    if (!cfg_.spawn.fixed_starts.empty()) {
        for (int i = 0; i < n; ++i) {
            const Vec3& p = cfg_.spawn.fixed_starts[static_cast<std::size_t>(i)];
            if (!p.is_finite()) throw std::invalid_argument("reset: non-finite fixed start");
            st_.drones[static_cast<std::size_t>(i)].pos = p;
        }
    } else {
        Rng rng = Rng(seed).child(kStreamPlacement);
        const double half = cfg_.world.arena.half_extent_xy - cfg_.spawn.margin_xy;
        if (half <= 0.0) throw std::runtime_error("reset: spawn margin leaves no room");
        for (int i = 0; i < n; ++i) {
            const double body = cfg_.world.drones[static_cast<std::size_t>(i)].body_radius;
            const double min_sep = std::max(cfg_.spawn.min_separation, 4.0 * body);
            const double min_obs = std::max(cfg_.spawn.min_obstacle_clearance, 2.0 * body);
            bool placed = false;
            for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
                Vec3 p{rng.uniform(-half, half), rng.uniform(-half, half),
                       rng.uniform(cfg_.spawn.z_min, cfg_.spawn.z_max)};
                bool ok = true;
                for (const auto& obs : cfg_.world.obstacles)
                    if (obstacle_clearance(p, obs) < min_obs) ok = false;
                for (int j = 0; j < i && ok; ++j)
                    if (distance(p, st_.drones[static_cast<std::size_t>(j)].pos) < min_sep)
                        ok = false;
                if (ok) {
                    st_.drones[static_cast<std::size_t>(i)].pos = p;
                    placed = true;
                }
            }
            if (!placed)
                throw std::runtime_error(
                    "reset: could not place drone " + std::to_string(i) + " after " +
                    std::to_string(kPlacementAttempts) + " attempts (scene too dense)");
        }
    }

    record_clearances();

    std::vector<AgentObservation> obs;
    obs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) obs.push_back(build_observation(i));
    return obs;
}

SafetyScene LandingEnv::make_scene() const {
    SafetyScene scene;
    scene.agents.reserve(st_.drones.size());
    for (std::size_t i = 0; i < st_.drones.size(); ++i) {
        const auto& d = st_.drones[i];
        scene.agents.push_back({d.pos, d.vel, cfg_.world.drones[i].body_radius,
                                d.status == DroneStatus::Flying});
    }
    scene.obstacles = &cfg_.world.obstacles;
    scene.arena = cfg_.world.arena;
    scene.dt = cfg_.world.dt;
    return scene;
}

void LandingEnv::record_clearances() {
    const auto n = st_.drones.size();
    for (std::size_t i = 0; i < n; ++i) {
        auto& rec = outcome_.drones[i];
        const auto& d = st_.drones[i];
        const double body_i = cfg_.world.drones[i].body_radius;
        for (const auto& obs : cfg_.world.obstacles)
            rec.min_obstacle_clearance_m =
                std::min(rec.min_obstacle_clearance_m, obstacle_clearance(d.pos, obs) - body_i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dist = distance(d.pos, st_.drones[j].pos);
            rec.min_interagent_distance_m = std::min(rec.min_interagent_distance_m, dist);
            rec.min_agent_clearance_m = std::min(
                rec.min_agent_clearance_m,
                dist - body_i - cfg_.world.drones[j].body_radius);
        }
    }
}

StepResult LandingEnv::step(const std::vector<Vec3>& actions, bool use_filter) {
    if (!started_) throw std::logic_error("step: reset() must be called first");
    if (done_) throw std::logic_error("step: episode already done");
    const int n = num_agents();
    if (static_cast<int>(actions.size()) != n)
        throw std::invalid_argument("step: one action per drone required");

    std::vector<bool> acted(static_cast<std::size_t>(n), false);
    std::vector<Vec3> commands(static_cast<std::size_t>(n));
    std::vector<FilterReport> reports(static_cast<std::size_t>(n));

    // Filtering reads a frozen pre-step snapshot for every agent.
    const SafetyScene scene = make_scene();
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (st_.drones[idx].status != DroneStatus::Flying) continue;
        const Vec3& a = actions[idx];
        if (!a.is_finite()) throw std::invalid_argument("step: non-finite action");
        acted[idx] = true;
        if (use_filter) {
            auto [u, rep] =
                filter_action(i, scene, a, cfg_.world.drones[idx].v_max, cfg_.safety);
            commands[idx] = u;
            reports[idx] = rep;
            if (rep.fallback_used) ++outcome_.fallback_count;
        } else {
            commands[idx] = a;
            reports[idx].nominal = a;
            reports[idx].filtered = a;
        }
    }

    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (!acted[idx]) continue;
        st_.drones[idx] = step_drone_dynamics(st_.drones[idx], cfg_.world.drones[idx],
                                              commands[idx], cfg_.world.dt);
    }
    for (auto& pad : st_.pads) pad = step_pad(pad, cfg_.world.arena, cfg_.world.dt);

    ++st_.step_count;
    st_.time_s = st_.step_count * cfg_.world.dt;

    // Landing first, then collisions evaluated simultaneously on the
    // post-landing snapshot.
    std::vector<bool> crashed(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (!acted[idx]) continue;
        if (check_landed(st_.drones[idx], st_.pads[idx], cfg_.land)) {
            st_.drones[idx].status = DroneStatus::Landed;
            auto& rec = outcome_.drones[idx];
            rec.success = true;
            rec.precision_m = distance_xy(st_.drones[idx].pos, st_.pads[idx].center);
            rec.land_time_s = st_.time_s;
        }
    }
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (!acted[idx] || st_.drones[idx].status != DroneStatus::Flying) continue;
        crashed[idx] = check_collision(i, st_.drones, cfg_.world.drones,
                                       cfg_.world.obstacles, cfg_.world.arena);
    }
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (crashed[idx]) {
            st_.drones[idx].status = DroneStatus::Crashed;
            ++outcome_.collision_count;
        }
    }

    record_clearances();

    // Rewards from the post-step state, for every agent that acted.
    StepResult result;
    result.rewards.assign(static_cast<std::size_t>(n), RewardTerms{});
    result.info.assign(static_cast<std::size_t>(n), AgentStepInfo{});
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        result.info[idx].status = st_.drones[idx].status;
        result.info[idx].acted = acted[idx];
        result.info[idx].filter = reports[idx];
        if (!acted[idx]) continue;

        const DroneState& d = st_.drones[idx];
        const Vec3 rel_pad = st_.pads[idx].center - d.pos;
        std::vector<Vec3> rel_obstacles;
        rel_obstacles.reserve(cfg_.world.obstacles.size());
        for (const auto& obs : cfg_.world.obstacles)
            rel_obstacles.push_back({obs.center_x - d.pos.x, obs.center_y - d.pos.y, 0.0});

        const double alpha = alpha_coefficient(rel_obstacles, cfg_.reward);
        const double beta = beta_coefficient(rel_pad, cfg_.reward);
        RewardTerms t = total_reward(
            reward_encourage(rel_pad, cfg_.reward), reward_collision(crashed[idx], cfg_.reward),
            reward_edge(d.pos, st_.pads[idx], cfg_.reward),
            reward_velocity(d.vel, alpha, beta, cfg_.reward));
        t.alpha = alpha;
        t.beta = beta;
        t.v_normed = d.vel.norm2();
        result.rewards[idx] = t;
    }

    bool all_inactive = true;
    for (const auto& d : st_.drones)
        if (d.status == DroneStatus::Flying) all_inactive = false;
    done_ = all_inactive || st_.step_count >= cfg_.horizon;
    outcome_.steps = st_.step_count;

    result.done = done_;
    result.observations.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) result.observations.push_back(build_observation(i));
    return result;
}

AgentObservation LandingEnv::build_observation(int agent_index) const {
    const auto idx = static_cast<std::size_t>(agent_index);
    const DroneState& d = st_.drones.at(idx);
    AgentObservation obs;
    obs.own_vel = d.vel;
    obs.rel_pad = st_.pads[idx].center - d.pos;

    // nearest-first with ties broken by index
    const auto sort_rel = [](std::vector<std::pair<double, int>>& order) {
        std::sort(order.begin(), order.end());
    };

    const int slots = cfg_.resolved_obstacle_slots();
    std::vector<std::pair<double, int>> obs_order;
    obs_order.reserve(cfg_.world.obstacles.size());
    for (int k = 0; k < static_cast<int>(cfg_.world.obstacles.size()); ++k) {
        const auto& o = cfg_.world.obstacles[static_cast<std::size_t>(k)];
        const Vec3 rel{o.center_x - d.pos.x, o.center_y - d.pos.y, 0.0};
        obs_order.push_back({rel.norm(), k});
    }
    sort_rel(obs_order);
    obs.rel_obstacles.assign(static_cast<std::size_t>(slots), kObstacleSentinel);
    for (int s = 0; s < slots && s < static_cast<int>(obs_order.size()); ++s) {
        const auto& o = cfg_.world.obstacles[static_cast<std::size_t>(obs_order[s].second)];
        obs.rel_obstacles[static_cast<std::size_t>(s)] =
            Vec3{o.center_x - d.pos.x, o.center_y - d.pos.y, 0.0};
    }

    std::vector<std::pair<double, int>> peer_order;
    peer_order.reserve(st_.drones.size() - 1);
    for (int j = 0; j < static_cast<int>(st_.drones.size()); ++j) {
        if (j == agent_index) continue;
        peer_order.push_back({distance(st_.drones[static_cast<std::size_t>(j)].pos, d.pos), j});
    }
    sort_rel(peer_order);
    obs.rel_drones.reserve(peer_order.size());
    for (const auto& [dist, j] : peer_order)
        obs.rel_drones.push_back(st_.drones[static_cast<std::size_t>(j)].pos - d.pos);

    if (cfg_.append_dynamics_obs) {
        const auto& params = cfg_.world.drones[idx];
        obs.dyn = {params.gain_k, params.v_max};
    }
    return obs;
}

std::vector<double> LandingEnv::global_state() const {
    std::vector<double> g;
    g.reserve(st_.drones.size() * 7 + st_.pads.size() * 5 +
              cfg_.world.obstacles.size() * 3);
    for (const auto& d : st_.drones) {
        g.push_back(d.pos.x);
        g.push_back(d.pos.y);
        g.push_back(d.pos.z);
        g.push_back(d.vel.x);
        g.push_back(d.vel.y);
        g.push_back(d.vel.z);
        g.push_back(static_cast<double>(d.status));
    }
    for (const auto& p : st_.pads) {
        g.push_back(p.center.x);
        g.push_back(p.center.y);
        g.push_back(p.center.z);
        g.push_back(p.vel_x);
        g.push_back(p.vel_y);
    }
    for (const auto& o : cfg_.world.obstacles) {
        g.push_back(o.center_x);
        g.push_back(o.center_y);
        g.push_back(o.radius);
    }
    return g;
}

int LandingEnv::obs_dim() const {
    const int n = num_agents();
    return 6 + 3 * cfg_.resolved_obstacle_slots() + 3 * (n - 1) +
           (cfg_.append_dynamics_obs ? 2 : 0);
}

int LandingEnv::global_dim() const {
    return 7 * num_agents() + 5 * static_cast<int>(st_.pads.empty() ? cfg_.world.pads.size()
                                                                    : st_.pads.size()) +
           3 * static_cast<int>(cfg_.world.obstacles.size());
}

}  // namespace safeswarm
