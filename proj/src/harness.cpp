#include "safeswarm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "safeswarm/nn.hpp"

namespace safeswarm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr std::uint64_t kStreamScenario = 0x7363656eULL;
constexpr std::uint64_t kStreamEval = 0x6576616cULL;
constexpr std::uint64_t kStreamEvalAction = 0x65766163ULL;
constexpr double kPi = 3.14159265358979323846;

constexpr double kObstacleRadius = 0.15;
constexpr double kObstacleHeight = 1.5;
constexpr double kPadObstacleBuffer = 0.35;  // surface gap kept between pads and obstacles
constexpr double kObstacleGap = 0.15;        // surface gap between obstacles
constexpr int kPlaceAttempts = 1000;

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) throw std::invalid_argument("config: unknown key '" + ctx + it.key() + "'");
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

double num_or_inf(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return kInfiniteClearance;
    return j.at(key).get<double>();
}

std::string fmt_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}
}  // namespace

const char* scenario_name(Scenario s) {
    return s == Scenario::StaticPad ? "static_pad" : "moving_pad";
}

Scenario parse_scenario(const std::string& name) {
    if (name == "static_pad") return Scenario::StaticPad;
    if (name == "moving_pad") return Scenario::MovingPad;
    throw std::invalid_argument("config: unknown scenario '" + name +
                                "' (expected static_pad or moving_pad)");
}

void validate(const RunConfig& cfg) {
    if (cfg.drones < 1) throw std::invalid_argument("config: drones must be >= 1");
    if (cfg.obstacles < 0 || cfg.obstacles > 10)
        throw std::invalid_argument("config: obstacles must be in [0, 10]");
    if (cfg.eval_episodes < 1)
        throw std::invalid_argument("config: eval_episodes must be >= 1");
    if (cfg.out_dir.empty()) throw std::invalid_argument("config: out_dir must be non-empty");
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("config: dt must be positive");
    if (!(cfg.pad_radius > 0.0) || !(cfg.pad_z > 0.0))
        throw std::invalid_argument("config: pad geometry must be positive");
    if (cfg.pad_speed < 0.0) throw std::invalid_argument("config: pad_speed must be >= 0");
    if (!(cfg.pad_ring_radius > 0.0))
        throw std::invalid_argument("config: pad_ring_radius must be positive");
    if (cfg.horizon <= 0) throw std::invalid_argument("config: horizon must be positive");
    validate(cfg.train);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file: " + path);
    json j = json::parse(is);  // throws json::parse_error on malformed input
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

    check_keys(j, "", {"scenario", "drones", "obstacles", "seed", "eval_episodes", "out_dir",
                       "world", "reward", "safety", "landing", "spawn", "horizon", "train"});

    RunConfig cfg;
    if (j.contains("scenario")) cfg.scenario = parse_scenario(j.at("scenario").get<std::string>());
    read_opt(j, "drones", cfg.drones);
    read_opt(j, "obstacles", cfg.obstacles);
    read_opt(j, "eval_episodes", cfg.eval_episodes);
    read_opt(j, "out_dir", cfg.out_dir);
    read_opt(j, "horizon", cfg.horizon);
    if (j.contains("seed")) cfg.config_seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("world")) {
        const json& w = j.at("world");
        check_keys(w, "world.", {"dt", "arena_half_extent", "arena_z_max", "drone", "pad_radius",
                                 "pad_z", "pad_speed", "pad_ring_radius"});
        read_opt(w, "dt", cfg.dt);
        read_opt(w, "arena_half_extent", cfg.arena_half_extent);
        read_opt(w, "arena_z_max", cfg.arena_z_max);
        read_opt(w, "pad_radius", cfg.pad_radius);
        read_opt(w, "pad_z", cfg.pad_z);
        read_opt(w, "pad_speed", cfg.pad_speed);
        read_opt(w, "pad_ring_radius", cfg.pad_ring_radius);
        if (w.contains("drone")) {
            const json& d = w.at("drone");
            check_keys(d, "world.drone.", {"gain_k", "v_max", "body_radius"});
            read_opt(d, "gain_k", cfg.drone_proto.gain_k);
            read_opt(d, "v_max", cfg.drone_proto.v_max);
            read_opt(d, "body_radius", cfg.drone_proto.body_radius);
        }
    }
    if (j.contains("reward")) {
        const json& r = j.at("reward");
        check_keys(r, "reward.",
                   {"lambda", "eps", "gamma_vel", "c_collision", "c_edge", "edge_margin"});
        read_opt(r, "lambda", cfg.reward.lambda);
        read_opt(r, "eps", cfg.reward.eps);
        read_opt(r, "gamma_vel", cfg.reward.gamma_vel);
        read_opt(r, "c_collision", cfg.reward.c_collision);
        read_opt(r, "c_edge", cfg.reward.c_edge);
        read_opt(r, "edge_margin", cfg.reward.edge_margin);
    }
    if (j.contains("safety")) {
        const json& s = j.at("safety");
        check_keys(s, "safety.", {"eta", "responsibility", "margin", "cull_radius"});
        read_opt(s, "eta", cfg.safety.eta);
        read_opt(s, "responsibility", cfg.safety.responsibility);
        read_opt(s, "margin", cfg.safety.margin);
        read_opt(s, "cull_radius", cfg.safety.cull_radius);
    }
    if (j.contains("landing")) {
        const json& l = j.at("landing");
        check_keys(l, "landing.", {"z_tol", "v_land"});
        read_opt(l, "z_tol", cfg.land.z_tol);
        read_opt(l, "v_land", cfg.land.v_land);
    }
    if (j.contains("spawn")) {
        const json& s = j.at("spawn");
        check_keys(s, "spawn.",
                   {"z_min", "z_max", "margin_xy", "min_separation", "min_obstacle_clearance"});
        read_opt(s, "z_min", cfg.spawn.z_min);
        read_opt(s, "z_max", cfg.spawn.z_max);
        read_opt(s, "margin_xy", cfg.spawn.margin_xy);
        read_opt(s, "min_separation", cfg.spawn.min_separation);
        read_opt(s, "min_obstacle_clearance", cfg.spawn.min_obstacle_clearance);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t, "train.",
                   {"gamma", "gae_lambda", "clip_eps", "epochs", "minibatches", "entropy_coef",
                    "value_coef", "lr", "rollout_steps", "iterations", "use_filter",
                    "normalize_advantages", "reward_scale", "max_grad_norm", "hidden",
                    "log_std_init", "checkpoint_every"});
        read_opt(t, "gamma", cfg.train.gamma_d);
        read_opt(t, "gae_lambda", cfg.train.gae_lambda);
        read_opt(t, "clip_eps", cfg.train.clip_eps);
        read_opt(t, "epochs", cfg.train.epochs);
        read_opt(t, "minibatches", cfg.train.minibatches);
        read_opt(t, "entropy_coef", cfg.train.entropy_coef);
        read_opt(t, "value_coef", cfg.train.value_coef);
        read_opt(t, "lr", cfg.train.lr);
        read_opt(t, "rollout_steps", cfg.train.rollout_steps);
        read_opt(t, "iterations", cfg.train.iterations);
        read_opt(t, "use_filter", cfg.train.use_filter);
        read_opt(t, "normalize_advantages", cfg.train.normalize_advantages);
        read_opt(t, "reward_scale", cfg.train.reward_scale);
        read_opt(t, "max_grad_norm", cfg.train.max_grad_norm);
        read_opt(t, "hidden", cfg.train.hidden);
        read_opt(t, "log_std_init", cfg.train.log_std_init);
        read_opt(t, "checkpoint_every", cfg.train.checkpoint_every);
    }
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["scenario"] = scenario_name(cfg.scenario);
    j["drones"] = cfg.drones;
    j["obstacles"] = cfg.obstacles;
    j["eval_episodes"] = cfg.eval_episodes;
    j["out_dir"] = cfg.out_dir;
    j["seed"] = cfg.seed;
    j["horizon"] = cfg.horizon;
    j["world"] = {{"dt", cfg.dt},
                  {"arena_half_extent", cfg.arena_half_extent},
                  {"arena_z_max", cfg.arena_z_max},
                  {"drone",
                   {{"gain_k", cfg.drone_proto.gain_k},
                    {"v_max", cfg.drone_proto.v_max},
                    {"body_radius", cfg.drone_proto.body_radius}}},
                  {"pad_radius", cfg.pad_radius},
                  {"pad_z", cfg.pad_z},
                  {"pad_speed", cfg.pad_speed},
                  {"pad_ring_radius", cfg.pad_ring_radius}};
    j["reward"] = {{"lambda", cfg.reward.lambda},
                   {"eps", cfg.reward.eps},
                   {"gamma_vel", cfg.reward.gamma_vel},
                   {"c_collision", cfg.reward.c_collision},
                   {"c_edge", cfg.reward.c_edge},
                   {"edge_margin", cfg.reward.edge_margin}};
    j["safety"] = {{"eta", cfg.safety.eta},
                   {"responsibility", cfg.safety.responsibility},
                   {"margin", cfg.safety.margin},
                   {"cull_radius", cfg.safety.cull_radius}};
    j["landing"] = {{"z_tol", cfg.land.z_tol}, {"v_land", cfg.land.v_land}};
    j["spawn"] = {{"z_min", cfg.spawn.z_min},
                  {"z_max", cfg.spawn.z_max},
                  {"margin_xy", cfg.spawn.margin_xy},
                  {"min_separation", cfg.spawn.min_separation},
                  {"min_obstacle_clearance", cfg.spawn.min_obstacle_clearance}};
    j["train"] = {{"gamma", cfg.train.gamma_d},
                  {"gae_lambda", cfg.train.gae_lambda},
                  {"clip_eps", cfg.train.clip_eps},
                  {"epochs", cfg.train.epochs},
                  {"minibatches", cfg.train.minibatches},
                  {"entropy_coef", cfg.train.entropy_coef},
                  {"value_coef", cfg.train.value_coef},
                  {"lr", cfg.train.lr},
                  {"rollout_steps", cfg.train.rollout_steps},
                  {"iterations", cfg.train.iterations},
                  {"use_filter", cfg.train.use_filter},
                  {"normalize_advantages", cfg.train.normalize_advantages},
                  {"reward_scale", cfg.train.reward_scale},
                  {"max_grad_norm", cfg.train.max_grad_norm},
                  {"hidden", cfg.train.hidden},
                  {"log_std_init", cfg.train.log_std_init},
                  {"checkpoint_every", cfg.train.checkpoint_every}};
    return j.dump(2) + "\n";
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& cli_seed,
                           const std::optional<std::uint64_t>& config_seed) {
    if (cli_seed) return *cli_seed;
    if (config_seed) return *config_seed;
    if (const char* env = std::getenv("SAFESWARM_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw std::invalid_argument("SAFESWARM_SEED is not an unsigned integer: " +
                                        std::string(env));
        return static_cast<std::uint64_t>(v);
    }
    return 1;
}

EnvConfig make_env_config(const RunConfig& cfg) {
    validate(cfg);
    EnvConfig env;
    env.world.dt = cfg.dt;
    env.world.arena.half_extent_xy = cfg.arena_half_extent;
    env.world.arena.z_max = cfg.arena_z_max;

    env.world.drones.reserve(static_cast<std::size_t>(cfg.drones));
    for (int i = 0; i < cfg.drones; ++i) {
        DroneParams d = cfg.drone_proto;
        d.id = i;
        env.world.drones.push_back(d);
    }

    env.world.pads.reserve(static_cast<std::size_t>(cfg.drones));
    for (int i = 0; i < cfg.drones; ++i) {
        PadSpec pad;
        pad.radius = cfg.pad_radius;
        if (cfg.drones == 1) {
            pad.center = Vec3{0.0, 0.0, cfg.pad_z};
        } else {
            const double angle = 2.0 * kPi * i / cfg.drones;
            pad.center = Vec3{cfg.pad_ring_radius * std::cos(angle),
                              cfg.pad_ring_radius * std::sin(angle), cfg.pad_z};
        }
        if (cfg.scenario == Scenario::MovingPad && cfg.pad_speed > 0.0) {
            pad.motion = PadMotionKind::LinearBounce;
            pad.vel_x = (i % 2 == 0 ? 1.0 : -1.0) * cfg.pad_speed;
            pad.vel_y = 0.0;
        }
        env.world.pads.push_back(pad);
    }

    if (cfg.obstacles > 0) {
        const double lim = cfg.arena_half_extent - 0.5;
        if (lim <= 0.0)
            throw std::invalid_argument("config: arena too small for obstacle placement");
        Rng rng(mix_seed(cfg.seed, kStreamScenario));
        for (int k = 0; k < cfg.obstacles; ++k) {
            bool placed = false;
            for (int attempt = 0; attempt < kPlaceAttempts && !placed; ++attempt) {
                ObstacleSpec obs;
                obs.center_x = rng.uniform(-lim, lim);
                obs.center_y = rng.uniform(-lim, lim);
                obs.radius = kObstacleRadius;
                obs.height = kObstacleHeight;
                bool ok = true;
                for (const auto& pad : env.world.pads) {
                    const double gap = std::hypot(obs.center_x - pad.center.x,
                                                  obs.center_y - pad.center.y) -
                                       obs.radius - pad.radius;
                    if (gap < kPadObstacleBuffer) ok = false;
                }
                for (const auto& other : env.world.obstacles) {
                    const double gap = std::hypot(obs.center_x - other.center_x,
                                                  obs.center_y - other.center_y) -
                                       obs.radius - other.radius;
                    if (gap < kObstacleGap) ok = false;
                }
                if (ok) {
                    env.world.obstacles.push_back(obs);
                    placed = true;
                }
            }
            if (!placed)
                throw std::runtime_error("scenario: could not place obstacle " +
                                         std::to_string(k) + " clear of pads");
        }
    }

    env.reward = cfg.reward;
    env.safety = cfg.safety;
    env.safety.v_max = cfg.drone_proto.v_max;
    env.land = cfg.land;
    env.spawn = cfg.spawn;
    env.horizon = cfg.horizon;
    validate(env);
    return env;
}

std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// --- metrics ---

MetricsReport compute_metrics(const std::vector<EpisodeOutcome>& outcomes) {
    MetricsReport r;
    r.episodes = static_cast<int>(outcomes.size());
    double precision_acc = 0.0, time_acc = 0.0;
    for (const auto& oc : outcomes) {
        r.collision_count += oc.collision_count;
        r.fallback_count += oc.fallback_count;
        for (const auto& d : oc.drones) {
            ++r.agent_episodes;
            if (d.success) {
                ++r.successes;
                precision_acc += d.precision_m;
                time_acc += d.land_time_s;
            }
            r.min_obstacle_clearance_m =
                std::min(r.min_obstacle_clearance_m, d.min_obstacle_clearance_m);
            r.min_interagent_distance_m =
                std::min(r.min_interagent_distance_m, d.min_interagent_distance_m);
            r.min_agent_clearance_m = std::min(r.min_agent_clearance_m, d.min_agent_clearance_m);
        }
    }
    if (r.agent_episodes > 0)
        r.success_rate_pct = 100.0 * r.successes / r.agent_episodes;
    if (r.successes > 0) {
        r.mean_precision_cm = 100.0 * precision_acc / r.successes;
        r.mean_time_s = time_acc / r.successes;
    }
    r.outcomes = outcomes;
    return r;
}

std::string metrics_to_json(const MetricsReport& r) {
    json j;
    j["episodes"] = r.episodes;
    j["agent_episodes"] = r.agent_episodes;
    j["successes"] = r.successes;
    j["success_rate_pct"] = r.success_rate_pct;
    j["mean_precision_cm"] = r.mean_precision_cm ? json(*r.mean_precision_cm) : json();
    j["mean_time_s"] = r.mean_time_s ? json(*r.mean_time_s) : json();
    j["min_obstacle_clearance_m"] = num_or_null(r.min_obstacle_clearance_m);
    j["min_interagent_distance_m"] = num_or_null(r.min_interagent_distance_m);
    j["min_agent_clearance_m"] = num_or_null(r.min_agent_clearance_m);
    j["collision_count"] = r.collision_count;
    j["fallback_count"] = r.fallback_count;
    j["filter_on"] = r.filter_on;
    json eps = json::array();
    for (const auto& oc : r.outcomes) {
        json je;
        je["seed"] = oc.seed;
        je["steps"] = oc.steps;
        je["collision_count"] = oc.collision_count;
        je["fallback_count"] = oc.fallback_count;
        json drones = json::array();
        for (const auto& d : oc.drones) {
            json jd;
            jd["success"] = d.success;
            jd["precision_m"] = d.success ? json(d.precision_m) : json();
            jd["land_time_s"] = d.success ? json(d.land_time_s) : json();
            jd["min_obstacle_clearance_m"] = num_or_null(d.min_obstacle_clearance_m);
            jd["min_interagent_distance_m"] = num_or_null(d.min_interagent_distance_m);
            jd["min_agent_clearance_m"] = num_or_null(d.min_agent_clearance_m);
            drones.push_back(jd);
        }
        je["drones"] = drones;
        eps.push_back(je);
    }
    j["episode_outcomes"] = eps;
    return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
    const json j = json::parse(text);
    MetricsReport r;
    r.episodes = j.at("episodes").get<int>();
    r.agent_episodes = j.at("agent_episodes").get<int>();
    r.successes = j.at("successes").get<int>();
    r.success_rate_pct = j.at("success_rate_pct").get<double>();
    if (!j.at("mean_precision_cm").is_null())
        r.mean_precision_cm = j.at("mean_precision_cm").get<double>();
    if (!j.at("mean_time_s").is_null()) r.mean_time_s = j.at("mean_time_s").get<double>();
    r.min_obstacle_clearance_m = num_or_inf(j, "min_obstacle_clearance_m");
    r.min_interagent_distance_m = num_or_inf(j, "min_interagent_distance_m");
    r.min_agent_clearance_m = num_or_inf(j, "min_agent_clearance_m");
    r.collision_count = j.at("collision_count").get<long long>();
    r.fallback_count = j.at("fallback_count").get<long long>();
    r.filter_on = j.at("filter_on").get<bool>();
    for (const auto& je : j.at("episode_outcomes")) {
        EpisodeOutcome oc;
        oc.seed = je.at("seed").get<std::uint64_t>();
        oc.steps = je.at("steps").get<int>();
        oc.collision_count = je.at("collision_count").get<long long>();
        oc.fallback_count = je.at("fallback_count").get<long long>();
        for (const auto& jd : je.at("drones")) {
            DroneOutcome d;
            d.success = jd.at("success").get<bool>();
            if (!jd.at("precision_m").is_null()) d.precision_m = jd.at("precision_m").get<double>();
            if (!jd.at("land_time_s").is_null())
                d.land_time_s = jd.at("land_time_s").get<double>();
            d.min_obstacle_clearance_m = num_or_inf(jd, "min_obstacle_clearance_m");
            d.min_interagent_distance_m = num_or_inf(jd, "min_interagent_distance_m");
            d.min_agent_clearance_m = num_or_inf(jd, "min_agent_clearance_m");
            oc.drones.push_back(d);
        }
        r.outcomes.push_back(std::move(oc));
    }
    return r;
}

// --- evaluation ---

std::uint64_t eval_episode_seed(std::uint64_t seed, int episode_index) {
    return mix_seed(mix_seed(seed, kStreamEval), static_cast<std::uint64_t>(episode_index));
}

MetricsReport run_eval(const EnvConfig& env_cfg, const GaussianPolicy* policy,
                       const EvalOptions& opt, std::vector<TrajectoryLog>* logs) {
    if (opt.episodes <= 0) throw std::invalid_argument("run_eval: episodes must be positive");
    if (!opt.random_policy && policy == nullptr)
        throw std::invalid_argument("run_eval: policy required unless random_policy is set");
    LandingEnv env(env_cfg);
    const int n = env.num_agents();
    if (!opt.random_policy && policy->mean_net.input_dim() != env.obs_dim())
        throw std::invalid_argument("run_eval: checkpoint dims do not match environment");

    std::vector<EpisodeOutcome> outcomes;
    outcomes.reserve(static_cast<std::size_t>(opt.episodes));
    for (int e = 0; e < opt.episodes; ++e) {
        const int episode_index = opt.first_episode + e;
        const std::uint64_t ep_seed = eval_episode_seed(opt.seed, episode_index);
        auto obs = env.reset(ep_seed);

        TrajectoryLog log;
        log.episode = episode_index;
        log.seed = ep_seed;

        std::vector<Rng> noise;
        noise.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            noise.emplace_back(mix_seed(mix_seed(ep_seed, kStreamEvalAction),
                                        static_cast<std::uint64_t>(i)));

        while (!env.done()) {
            std::vector<Vec3> cmds(static_cast<std::size_t>(n));
            std::vector<bool> flying(static_cast<std::size_t>(n), false);
            for (int i = 0; i < n; ++i) {
                const auto idx = static_cast<std::size_t>(i);
                if (env.state().drones[idx].status != DroneStatus::Flying) continue;
                flying[idx] = true;
                const double vmax = env_cfg.world.drones[idx].v_max;
                if (opt.random_policy) {
                    cmds[idx] = Vec3{noise[idx].uniform(-vmax, vmax),
                                     noise[idx].uniform(-vmax, vmax),
                                     noise[idx].uniform(-vmax, vmax)};
                } else {
                    const auto mean = mlp_forward(policy->mean_net, obs[idx].flatten());
                    std::vector<double> raw =
                        opt.deterministic ? mean
                                          : gaussian_sample(mean, policy->log_std, noise[idx]);
                    cmds[idx] = Vec3{vmax * std::tanh(raw[0]), vmax * std::tanh(raw[1]),
                                     vmax * std::tanh(raw[2])};
                }
            }
            const StepResult res = env.step(cmds, opt.use_filter);
            if (logs) {
                for (int i = 0; i < n; ++i) {
                    const auto idx = static_cast<std::size_t>(i);
                    if (!flying[idx]) continue;
                    TrajectoryRow row;
                    row.t = env.state().time_s;
                    row.drone_id = i;
                    row.pos = env.state().drones[idx].pos;
                    row.vel = env.state().drones[idx].vel;
                    row.a_nom = res.info[idx].filter.nominal;
                    row.a_filtered = res.info[idx].filter.filtered;
                    row.reward = res.rewards[idx];
                    row.status = res.info[idx].status;
                    log.rows.push_back(row);
                }
            }
            obs = res.observations;
        }
        outcomes.push_back(env.outcome());
        if (logs) logs->push_back(std::move(log));
    }

    MetricsReport rep = compute_metrics(outcomes);
    rep.filter_on = opt.use_filter;
    return rep;
}

// --- output files ---

const char* const kTrajectoryCsvHeader =
    "t,drone_id,px,py,pz,vx,vy,vz,ax_nom,ay_nom,az_nom,ax_f,ay_f,az_f,"
    "r_enc,r_pen,r_edge,r_vel,r_total,status";

void write_text_file(const std::string& path, const std::string& content) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << content;
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path);
}

void write_trajectory_csv(const TrajectoryLog& log, const std::string& path) {
    std::ostringstream os;
    os << kTrajectoryCsvHeader << '\n';
    for (const auto& r : log.rows) {
        os << format_double(r.t) << ',' << r.drone_id << ',' << format_double(r.pos.x) << ','
           << format_double(r.pos.y) << ',' << format_double(r.pos.z) << ','
           << format_double(r.vel.x) << ',' << format_double(r.vel.y) << ','
           << format_double(r.vel.z) << ',' << format_double(r.a_nom.x) << ','
           << format_double(r.a_nom.y) << ',' << format_double(r.a_nom.z) << ','
           << format_double(r.a_filtered.x) << ',' << format_double(r.a_filtered.y) << ','
           << format_double(r.a_filtered.z) << ',' << format_double(r.reward.encourage) << ','
           << format_double(r.reward.penalty) << ',' << format_double(r.reward.edge) << ','
           << format_double(r.reward.velocity) << ',' << format_double(r.reward.total) << ','
           << drone_status_name(r.status) << '\n';
    }
    write_text_file(path, os.str());
}

void write_stats_csv(const std::vector<TrainStats>& stats, const std::string& path) {
    std::ostringstream os;
    os << "iteration,mean_episode_reward,value_loss,policy_loss,entropy,clip_fraction,"
          "success_rate,fallback_count,env_steps,episodes\n";
    for (const auto& s : stats) {
        os << s.iteration << ',' << format_double(s.mean_episode_reward) << ','
           << format_double(s.value_loss) << ',' << format_double(s.policy_loss) << ','
           << format_double(s.entropy) << ',' << format_double(s.clip_fraction) << ','
           << format_double(s.success_rate) << ',' << s.fallback_count << ',' << s.env_steps
           << ',' << s.episodes << '\n';
    }
    write_text_file(path, os.str());
}

void write_reward_curve(const std::vector<TrainStats>& stats, const std::string& path) {
    std::ostringstream os;
    os << "iteration,mean_episode_reward\n";
    for (const auto& s : stats)
        os << s.iteration << ',' << format_double(s.mean_episode_reward) << '\n';
    write_text_file(path, os.str());
}

void write_value_loss_curve(const std::vector<TrainStats>& stats, const std::string& path) {
    std::ostringstream os;
    os << "iteration,value_loss\n";
    for (const auto& s : stats) os << s.iteration << ',' << format_double(s.value_loss) << '\n';
    write_text_file(path, os.str());
}

std::string format_comparison(const MetricsReport& a, const MetricsReport& b,
                              const std::string& label_a, const std::string& label_b) {
    const auto opt_cell = [](const std::optional<double>& v, int digits) {
        return v ? fmt_fixed(*v, digits) : std::string("-");
    };
    const auto fin_cell = [](double v, int digits) {
        return std::isfinite(v) ? fmt_fixed(v, digits) : std::string("-");
    };
    const auto delta_opt = [&](const std::optional<double>& x, const std::optional<double>& y,
                               int digits) {
        return (x && y) ? fmt_fixed(*x - *y, digits) : std::string("-");
    };
    const auto delta_fin = [&](double x, double y, int digits) {
        return (std::isfinite(x) && std::isfinite(y)) ? fmt_fixed(x - y, digits)
                                                      : std::string("-");
    };

    std::ostringstream os;
    const int w0 = std::max<int>(
        14, static_cast<int>(std::max(label_a.size(), label_b.size())) + 2);
    const auto row = [&](const std::string& label, const std::string& succ,
                         const std::string& prec, const std::string& time,
                         const std::string& obst, const std::string& inter,
                         const std::string& coll, const std::string& fall) {
        os << std::left << std::setw(w0) << label << std::right << std::setw(18) << succ
           << std::setw(15) << prec << std::setw(10) << time << std::setw(26) << obst
           << std::setw(27) << inter << std::setw(12) << coll << std::setw(11) << fall << '\n';
    };
    row("method", "success_rate_pct", "precision_cm", "time_s", "min_obstacle_clearance_m",
        "min_interagent_distance_m", "collisions", "fallbacks");
    row(label_a, fmt_fixed(a.success_rate_pct, 2), opt_cell(a.mean_precision_cm, 2),
        opt_cell(a.mean_time_s, 2), fin_cell(a.min_obstacle_clearance_m, 3),
        fin_cell(a.min_interagent_distance_m, 3), std::to_string(a.collision_count),
        std::to_string(a.fallback_count));
    row(label_b, fmt_fixed(b.success_rate_pct, 2), opt_cell(b.mean_precision_cm, 2),
        opt_cell(b.mean_time_s, 2), fin_cell(b.min_obstacle_clearance_m, 3),
        fin_cell(b.min_interagent_distance_m, 3), std::to_string(b.collision_count),
        std::to_string(b.fallback_count));
    row("delta", fmt_fixed(a.success_rate_pct - b.success_rate_pct, 2),
        delta_opt(a.mean_precision_cm, b.mean_precision_cm, 2),
        delta_opt(a.mean_time_s, b.mean_time_s, 2),
        delta_fin(a.min_obstacle_clearance_m, b.min_obstacle_clearance_m, 3),
        delta_fin(a.min_interagent_distance_m, b.min_interagent_distance_m, 3),
        std::to_string(a.collision_count - b.collision_count),
        std::to_string(a.fallback_count - b.fallback_count));
    return os.str();
}

// --- CLI entry points ---

namespace {

std::string error_json(const std::string& what) {
    json j;
    j["error"] = what;
    return j.dump();
}

std::string episode_csv_name(int episode_index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "traj_ep%03d.csv", episode_index);
    return buf;
}

std::string write_manifest(const RunConfig& rc) {
    std::ostringstream os;
    os << "safeswarm-manifest v1\n";
    char hash[32];
    std::snprintf(hash, sizeof hash, "0x%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(run_config_to_json(rc))));
    os << "config_hash " << hash << '\n';
    os << "seed " << rc.seed << '\n';
    os << "scenario " << scenario_name(rc.scenario) << '\n';
    os << "drones " << rc.drones << '\n';
    os << "obstacles " << rc.obstacles << '\n';
    os << "iterations " << rc.train.iterations << '\n';
    os << "filter " << (rc.train.use_filter ? "on" : "off") << '\n';
    return os.str();
}

RunConfig load_and_resolve(const CliCommonArgs& common) {
    RunConfig rc = load_run_config(common.config_path);
    if (common.out_dir) rc.out_dir = *common.out_dir;
    rc.seed = resolve_seed(common.seed, rc.config_seed);
    rc.train.seed = rc.seed;
    validate(rc);
    return rc;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        err << error_json(e.what()) << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << error_json(e.what()) << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << error_json(e.what()) << '\n';
        return kExitRuntime;
    }
}

}  // namespace

int cli_train(const CliTrainArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        RunConfig rc = load_and_resolve(args.common);
        if (args.iterations) {
            rc.train.iterations = *args.iterations;
            validate(rc.train);
        }
        const EnvConfig env_cfg = make_env_config(rc);
        fs::create_directories(rc.out_dir);
        write_text_file(rc.out_dir + "/resolved_config.json", run_config_to_json(rc));
        write_text_file(rc.out_dir + "/manifest.txt", write_manifest(rc));

        const IterationCallback cb = [&](const TrainStats& st, const TrainResult& r) {
            out << "iter " << st.iteration << " reward " << format_double(st.mean_episode_reward)
                << " value_loss " << format_double(st.value_loss) << " success "
                << format_double(st.success_rate) << '\n';
            if (rc.train.checkpoint_every > 0 &&
                r.iterations_done % rc.train.checkpoint_every == 0) {
                char name[64];
                std::snprintf(name, sizeof name, "/checkpoint_iter_%06d.txt", r.iterations_done);
                save_checkpoint_file(rc.out_dir + name, r);
            }
        };
        const TrainResult result = train(env_cfg, rc.train, cb);

        save_checkpoint_file(rc.out_dir + "/checkpoint.txt", result);
        write_stats_csv(result.stats, rc.out_dir + "/stats.csv");
        write_reward_curve(result.stats, rc.out_dir + "/reward_curve.csv");
        write_value_loss_curve(result.stats, rc.out_dir + "/value_loss_curve.csv");
        out << "trained " << result.iterations_done << " iterations -> " << rc.out_dir << '\n';
        return kExitOk;
    });
}

int cli_eval(const CliEvalArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        RunConfig rc = load_and_resolve(args.common);
        const EnvConfig env_cfg = make_env_config(rc);

        EvalOptions opt;
        opt.episodes = args.episodes ? *args.episodes : rc.eval_episodes;
        opt.use_filter = args.filter_on ? *args.filter_on : rc.train.use_filter;
        opt.deterministic = !args.stochastic;
        opt.random_policy = args.checkpoint.empty();
        opt.seed = rc.seed;

        TrainResult loaded;
        const GaussianPolicy* policy = nullptr;
        if (!opt.random_policy) {
            loaded = load_checkpoint_file(args.checkpoint);
            policy = &loaded.policy;
        }

        std::vector<TrajectoryLog> logs;
        const MetricsReport rep = run_eval(env_cfg, policy, opt, &logs);

        fs::create_directories(rc.out_dir);
        write_text_file(rc.out_dir + "/report.json", metrics_to_json(rep));
        for (const auto& log : logs)
            write_trajectory_csv(log, rc.out_dir + "/" + episode_csv_name(log.episode));

        out << "episodes " << rep.episodes << " success_rate_pct "
            << fmt_fixed(rep.success_rate_pct, 2) << " precision_cm "
            << (rep.mean_precision_cm ? fmt_fixed(*rep.mean_precision_cm, 2) : "-") << " time_s "
            << (rep.mean_time_s ? fmt_fixed(*rep.mean_time_s, 2) : "-") << " collisions "
            << rep.collision_count << " fallbacks " << rep.fallback_count << '\n';
        return kExitOk;
    });
}

int cli_compare(const CliCompareArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        std::ifstream fa(args.report_a), fb(args.report_b);
        if (!fa) throw std::invalid_argument("cannot open report: " + args.report_a);
        if (!fb) throw std::invalid_argument("cannot open report: " + args.report_b);
        std::ostringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        const MetricsReport a = metrics_from_json(sa.str());
        const MetricsReport b = metrics_from_json(sb.str());
        const std::string table = format_comparison(a, b, args.label_a, args.label_b);
        out << table;
        if (args.out_path) write_text_file(*args.out_path, table);
        return kExitOk;
    });
}

int cli_replay(const CliReplayArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        if (args.episode_index < 0)
            throw std::invalid_argument("replay: episode index must be >= 0");
        RunConfig rc = load_and_resolve(args.common);
        const EnvConfig env_cfg = make_env_config(rc);

        EvalOptions opt;
        opt.episodes = 1;
        opt.first_episode = args.episode_index;
        opt.use_filter = args.filter_on ? *args.filter_on : rc.train.use_filter;
        opt.random_policy = args.checkpoint.empty();
        opt.seed = rc.seed;

        TrainResult loaded;
        const GaussianPolicy* policy = nullptr;
        if (!opt.random_policy) {
            loaded = load_checkpoint_file(args.checkpoint);
            policy = &loaded.policy;
        }

        std::vector<TrajectoryLog> logs;
        const MetricsReport rep = run_eval(env_cfg, policy, opt, &logs);
        fs::create_directories(rc.out_dir);
        const std::string path = rc.out_dir + "/" + episode_csv_name(args.episode_index);
        write_trajectory_csv(logs.front(), path);
        out << "episode " << args.episode_index << " steps " << rep.outcomes.front().steps
            << " -> " << path << '\n';
        return kExitOk;
    });
}

}  // namespace safeswarm
