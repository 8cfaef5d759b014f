#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "safeswarm/harness.hpp"

namespace {

struct FlagCapture {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::string filter;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* filter_opt = nullptr;
};

void add_common(CLI::App* cmd, FlagCapture& f, bool with_filter) {
    cmd->add_option("--config", f.config, "run configuration file (JSON)")->required();
    f.seed_opt = cmd->add_option("--seed", f.seed, "seed override (beats config and env var)");
    f.out_opt = cmd->add_option("--out", f.out, "output directory override");
    if (with_filter)
        f.filter_opt = cmd->add_option("--filter", f.filter, "safety filter on/off")
                           ->check(CLI::IsMember({"on", "off"}));
}

safeswarm::CliCommonArgs to_common(const FlagCapture& f) {
    safeswarm::CliCommonArgs c;
    c.config_path = f.config;
    if (f.seed_opt && f.seed_opt->count() > 0) c.seed = f.seed;
    if (f.out_opt && f.out_opt->count() > 0) c.out_dir = f.out;
    return c;
}

std::optional<bool> to_filter(const FlagCapture& f) {
    if (!f.filter_opt || f.filter_opt->count() == 0) return std::nullopt;
    return f.filter == "on";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"decentralized multi-drone landing stack"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "train a policy");
    FlagCapture tf;
    add_common(train, tf, false);
    int t_iterations = 0;
    auto* t_it_opt = train->add_option("--iterations", t_iterations, "iteration count override");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (or the random policy)");
    FlagCapture ef;
    add_common(eval, ef, true);
    std::string e_checkpoint;
    eval->add_option("--checkpoint", e_checkpoint,
                     "checkpoint file; omit to evaluate the random policy");
    int e_episodes = 0;
    auto* e_ep_opt = eval->add_option("--episodes", e_episodes, "episode count override");
    bool e_stochastic = false;
    eval->add_flag("--stochastic", e_stochastic, "sample actions instead of using the mean");

    auto* compare = app.add_subcommand("compare", "compare two report.json files");
    std::string c_a, c_b, c_out, c_la = "A", c_lb = "B";
    compare->add_option("report_a", c_a, "first report.json")->required();
    compare->add_option("report_b", c_b, "second report.json")->required();
    auto* c_out_opt = compare->add_option("--out", c_out, "also write the table to this file");
    compare->add_option("--label-a", c_la, "row label for the first report");
    compare->add_option("--label-b", c_lb, "row label for the second report");

    auto* replay = app.add_subcommand("replay", "re-run one evaluation episode to a CSV");
    FlagCapture rf;
    add_common(replay, rf, true);
    std::string r_checkpoint;
    replay->add_option("--checkpoint", r_checkpoint,
                       "checkpoint file; omit to replay the random policy");
    int r_episode = 0;
    replay->add_option("--episode", r_episode, "evaluation episode index to replay");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : safeswarm::kExitConfig;
    }

    if (train->parsed()) {
        safeswarm::CliTrainArgs args;
        args.common = to_common(tf);
        if (t_it_opt->count() > 0) args.iterations = t_iterations;
        return safeswarm::cli_train(args, std::cout, std::cerr);
    }
    if (eval->parsed()) {
        safeswarm::CliEvalArgs args;
        args.common = to_common(ef);
        args.checkpoint = e_checkpoint;
        if (e_ep_opt->count() > 0) args.episodes = e_episodes;
        args.filter_on = to_filter(ef);
        args.stochastic = e_stochastic;
        return safeswarm::cli_eval(args, std::cout, std::cerr);
    }
    if (compare->parsed()) {
        safeswarm::CliCompareArgs args;
        args.report_a = c_a;
        args.report_b = c_b;
        if (c_out_opt->count() > 0) args.out_path = c_out;
        args.label_a = c_la;
        args.label_b = c_lb;
        return safeswarm::cli_compare(args, std::cout, std::cerr);
    }
    safeswarm::CliReplayArgs args;
    args.common = to_common(rf);
    args.checkpoint = r_checkpoint;
    args.episode_index = r_episode;
    args.filter_on = to_filter(rf);
    return safeswarm::cli_replay(args, std::cout, std::cerr);
}
