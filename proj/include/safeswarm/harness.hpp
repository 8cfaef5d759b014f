#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "safeswarm/env.hpp"
#include "safeswarm/mappo.hpp"

namespace safeswarm {

enum class Scenario { StaticPad, MovingPad };

const char* scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);

// Everything a run needs. Loaded from a JSON config file; every key is
// optional and falls back to the defaults below (see README for the full
// reference). `seed` is the effective seed after precedence resolution:
// --seed flag > config "seed" > SAFESWARM_SEED env var > 1.
struct RunConfig {
    Scenario scenario = Scenario::StaticPad;
    int drones = 1;
    int obstacles = 0;
    int eval_episodes = 30;
    std::string out_dir = "out";
    std::optional<std::uint64_t> config_seed;
    std::uint64_t seed = 1;

    double dt = 0.02;
    double arena_half_extent = 2.0;
    double arena_z_max = 3.0;
    DroneParams drone_proto{};     // id field ignored; copied per drone
    double pad_radius = 0.15;
    double pad_z = 0.1;            // top-surface height
    double pad_speed = 0.1;        // moving-pad scenario speed [m/s]
    double pad_ring_radius = 1.0;  // pad placement circle for multi-drone runs

    RewardConfig reward{};
    SafetyConfig safety{};
    LandingThresholds land{0.05, 0.75};  // run-level defaults favor touchdown detection
    SpawnConfig spawn{};
    int horizon = 600;

    TrainConfig train{};
};

void validate(const RunConfig& cfg);

RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);  // canonical resolved dump

// cli > config > SAFESWARM_SEED > 1
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& cli_seed,
                           const std::optional<std::uint64_t>& config_seed);

// Deterministic scene construction: pads on a ring (single pad at the
// origin), obstacles rejection-sampled clear of pads from the run seed.
EnvConfig make_env_config(const RunConfig& cfg);

std::uint64_t fnv1a_hash(const std::string& s);

// --- evaluation ---

struct TrajectoryRow {
    double t = 0.0;
    int drone_id = 0;
    Vec3 pos, vel, a_nom, a_filtered;
    RewardTerms reward;
    DroneStatus status = DroneStatus::Flying;
};

struct TrajectoryLog {
    int episode = 0;
    std::uint64_t seed = 0;
    std::vector<TrajectoryRow> rows;
};

struct MetricsReport {
    int episodes = 0;
    int agent_episodes = 0;
    int successes = 0;
    double success_rate_pct = 0.0;
    std::optional<double> mean_precision_cm;  // absent when no successes
    std::optional<double> mean_time_s;
    double min_obstacle_clearance_m = kInfiniteClearance;
    double min_interagent_distance_m = kInfiniteClearance;
    double min_agent_clearance_m = kInfiniteClearance;
    long long collision_count = 0;
    long long fallback_count = 0;
    bool filter_on = true;
    std::vector<EpisodeOutcome> outcomes;
};

MetricsReport compute_metrics(const std::vector<EpisodeOutcome>& outcomes);

std::string metrics_to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const std::string& text);

struct EvalOptions {
    int episodes = 30;
    int first_episode = 0;      // episode-seed offset; lets replay hit one eval episode
    bool use_filter = true;
    bool deterministic = true;  // mean action; false samples from the policy
    bool random_policy = false; // uniform commands, ignores `policy`
    std::uint64_t seed = 1;
};

std::uint64_t eval_episode_seed(std::uint64_t seed, int episode_index);

// Runs seeded evaluation episodes; `policy` may be null only with
// random_policy. Appends one TrajectoryLog per episode when `logs` given.
MetricsReport run_eval(const EnvConfig& env_cfg, const GaussianPolicy* policy,
                       const EvalOptions& opt, std::vector<TrajectoryLog>* logs = nullptr);

// --- output files ---

extern const char* const kTrajectoryCsvHeader;

void write_trajectory_csv(const TrajectoryLog& log, const std::string& path);
void write_stats_csv(const std::vector<TrainStats>& stats, const std::string& path);
// (x, y) series for standard plotting tools
void write_reward_curve(const std::vector<TrainStats>& stats, const std::string& path);
void write_value_loss_curve(const std::vector<TrainStats>& stats, const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

std::string format_comparison(const MetricsReport& a, const MetricsReport& b,
                              const std::string& label_a, const std::string& label_b);

// --- CLI entry points (exit codes: 0 ok, 2 config/usage error, 3 runtime) ---

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct CliCommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

struct CliTrainArgs {
    CliCommonArgs common;
    std::optional<int> iterations;
};

struct CliEvalArgs {
    CliCommonArgs common;
    std::string checkpoint;  // empty selects the random policy
    std::optional<int> episodes;
    std::optional<bool> filter_on;
    bool stochastic = false;
};

struct CliCompareArgs {
    std::string report_a;
    std::string report_b;
    std::optional<std::string> out_path;
    std::string label_a = "A";
    std::string label_b = "B";
};

struct CliReplayArgs {
    CliCommonArgs common;
    std::string checkpoint;
    int episode_index = 0;
    std::optional<bool> filter_on;
};

int cli_train(const CliTrainArgs& args, std::ostream& out, std::ostream& err);
int cli_eval(const CliEvalArgs& args, std::ostream& out, std::ostream& err);
int cli_compare(const CliCompareArgs& args, std::ostream& out, std::ostream& err);
int cli_replay(const CliReplayArgs& args, std::ostream& out, std::ostream& err);

}  // namespace safeswarm
