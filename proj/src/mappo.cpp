#include "safeswarm/mappo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace safeswarm {

namespace {
constexpr std::uint64_t kStreamRollout = 0x726f6c6cULL;
constexpr std::uint64_t kStreamAction = 0x61637431ULL;
constexpr std::uint64_t kStreamUpdate = 0x75706474ULL;
constexpr std::uint64_t kStreamPolicyInit = 0x706f6c69ULL;
constexpr std::uint64_t kStreamCriticInit = 0x63726974ULL;

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

double critic_value(const MlpParams& critic, const std::vector<double>& gs) {
    return mlp_forward(critic, gs).front();
}

void clip_global_norm(std::vector<double>& g, double max_norm) {
    if (max_norm <= 0.0) return;
    double n2 = 0.0;
    for (double x : g) n2 += x * x;
    const double n = std::sqrt(n2);
    if (n > max_norm) {
        const double s = max_norm / n;
        for (double& x : g) x *= s;
    }
}

void expect_token(std::istream& is, const std::string& want) {
    std::string got;
    if (!(is >> got) || got != want)
        throw std::runtime_error("checkpoint: expected '" + want + "', got '" + got + "'");
}
}  // namespace

void validate(const TrainConfig& cfg) {
    if (!(cfg.gamma_d >= 0.0 && cfg.gamma_d < 1.0))
        throw std::invalid_argument("TrainConfig: gamma_d must be in [0,1)");
    if (!(cfg.gae_lambda >= 0.0 && cfg.gae_lambda < 1.0))
        throw std::invalid_argument("TrainConfig: gae_lambda must be in [0,1)");
    if (!(cfg.clip_eps > 0.0 && cfg.clip_eps < 1.0))
        throw std::invalid_argument("TrainConfig: clip_eps must be in (0,1)");
    if (cfg.epochs <= 0 || cfg.minibatches <= 0)
        throw std::invalid_argument("TrainConfig: epochs and minibatches must be positive");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
    if (cfg.rollout_steps <= 0)
        throw std::invalid_argument("TrainConfig: rollout_steps must be positive");
    if (cfg.iterations <= 0)
        throw std::invalid_argument("TrainConfig: iterations must be positive");
    if (!(cfg.entropy_coef >= 0.0) || !(cfg.value_coef >= 0.0))
        throw std::invalid_argument("TrainConfig: loss coefficients must be non-negative");
    if (!(cfg.reward_scale > 0.0))
        throw std::invalid_argument("TrainConfig: reward_scale must be positive");
    if (cfg.max_grad_norm < 0.0)
        throw std::invalid_argument("TrainConfig: max_grad_norm must be >= 0");
    for (int h : cfg.hidden)
        if (h <= 0) throw std::invalid_argument("TrainConfig: hidden sizes must be positive");
    if (cfg.checkpoint_every < 0)
        throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 0");
}

std::uint64_t episode_seed(std::uint64_t run_seed, int iteration, int episode_index) {
    return mix_seed(mix_seed(mix_seed(run_seed, kStreamRollout),
                             static_cast<std::uint64_t>(iteration)),
                    static_cast<std::uint64_t>(episode_index));
}

std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<std::uint8_t>& dones, double bootstrap_value, double gamma_d,
    double gae_lambda) {
    const std::size_t T = rewards.size();
    if (values.size() != T || dones.size() != T)
        throw std::invalid_argument("compute_gae: length mismatch");
    std::vector<double> adv(T, 0.0), ret(T, 0.0);
    double a_next = 0.0;
    for (std::size_t t = T; t-- > 0;) {
        const double nonterminal = dones[t] ? 0.0 : 1.0;
        const double v_next = (t + 1 < T) ? values[t + 1] : bootstrap_value;
        const double delta = rewards[t] + gamma_d * v_next * nonterminal - values[t];
        a_next = delta + gamma_d * gae_lambda * nonterminal * a_next;
        adv[t] = a_next;
        ret[t] = a_next + values[t];
    }
    return {adv, ret};
}

double ppo_policy_objective(double logprob_new, double logprob_old, double advantage,
                            double clip_eps) {
    const double rho = std::exp(logprob_new - logprob_old);
    return std::min(rho * advantage, clip(rho, 1.0 - clip_eps, 1.0 + clip_eps) * advantage);
}

double value_loss(const std::vector<double>& values_new, const std::vector<double>& returns,
                  const std::vector<double>& values_old, double clip_eps) {
    if (values_new.size() != returns.size() || values_new.size() != values_old.size())
        throw std::invalid_argument("value_loss: length mismatch");
    if (values_new.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < values_new.size(); ++i) {
        const double e1 = values_new[i] - returns[i];
        const double vc = values_old[i] + clip(values_new[i] - values_old[i], -clip_eps, clip_eps);
        const double e2 = vc - returns[i];
        acc += std::max(e1 * e1, e2 * e2);
    }
    return 0.5 * acc / static_cast<double>(values_new.size());
}

RolloutBuffer collect_rollouts(const GaussianPolicy& policy, const MlpParams& critic,
                               const EnvConfig& env_cfg, const TrainConfig& cfg, int iteration) {
    validate(cfg);
    RolloutBuffer buf;
    LandingEnv env(env_cfg);
    const int n = env.num_agents();

    double reward_acc = 0.0;
    int success_acc = 0;
    double partial_acc = 0.0;
    int partial_n = 0;

    int episode_index = 0;
    while (buf.env_steps < cfg.rollout_steps) {
        const std::uint64_t ep_seed = episode_seed(cfg.seed, iteration, episode_index);
        auto obs = env.reset(ep_seed);
        std::vector<Rng> noise;
        noise.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            noise.emplace_back(mix_seed(mix_seed(ep_seed, kStreamAction),
                                        static_cast<std::uint64_t>(i)));

        std::vector<std::vector<Transition>> streams(static_cast<std::size_t>(n));
        std::vector<double> raw_return(static_cast<std::size_t>(n), 0.0);
        // A landed drone sits frozen on the pad collecting its touchdown-step
        // reward rate for the rest of time, so its stream bootstraps with that
        // geometric perpetuity; only crashes are hard terminals. Without this,
        // return maximization prefers hovering just outside the capture box
        // forever to ever touching down.
        std::vector<double> bootstrap_v(static_cast<std::size_t>(n), 0.0);
        std::vector<std::uint8_t> bootstrap_set(static_cast<std::size_t>(n), 0);

        int ep_step = 0;
        while (!env.done() && buf.env_steps < cfg.rollout_steps) {
            const int state_index = static_cast<int>(buf.global_states.size());
            buf.global_states.push_back(env.global_state());
            const double v = critic_value(critic, buf.global_states.back());

            std::vector<std::vector<double>> flat_obs(static_cast<std::size_t>(n));
            std::vector<Vec3> cmds(static_cast<std::size_t>(n));
            std::vector<std::vector<double>> raw_actions(static_cast<std::size_t>(n));
            std::vector<double> lps(static_cast<std::size_t>(n), 0.0);
            std::vector<bool> flying(static_cast<std::size_t>(n), false);
            for (int i = 0; i < n; ++i) {
                const auto idx = static_cast<std::size_t>(i);
                if (env.state().drones[idx].status != DroneStatus::Flying) continue;
                flying[idx] = true;
                flat_obs[idx] = obs[idx].flatten();
                const auto mean = mlp_forward(policy.mean_net, flat_obs[idx]);
                raw_actions[idx] = gaussian_sample(mean, policy.log_std, noise[idx]);
                lps[idx] = gaussian_logprob(mean, policy.log_std, raw_actions[idx]);
                const double vmax = env_cfg.world.drones[idx].v_max;
                cmds[idx] = Vec3{vmax * std::tanh(raw_actions[idx][0]),
                                 vmax * std::tanh(raw_actions[idx][1]),
                                 vmax * std::tanh(raw_actions[idx][2])};
            }
            StepResult res = env.step(cmds, cfg.use_filter);
            ++buf.env_steps;
            ++ep_step;
            for (int i = 0; i < n; ++i) {
                const auto idx = static_cast<std::size_t>(i);
                if (!flying[idx]) continue;
                Transition tr;
                tr.obs = std::move(flat_obs[idx]);
                tr.action = std::move(raw_actions[idx]);
                tr.logprob_old = lps[idx];
                tr.reward = cfg.reward_scale * res.rewards[idx].total;
                tr.value_estimate = v;
                tr.state_index = state_index;
                tr.done = res.info[idx].status == DroneStatus::Crashed;
                if (res.info[idx].status == DroneStatus::Landed) {
                    // value of the frozen next state: the touchdown reward rate
                    // as a geometric series, sum_k gamma^k * r = r / (1 - gamma)
                    bootstrap_v[idx] = tr.reward / (1.0 - cfg.gamma_d);
                    bootstrap_set[idx] = 1;
                    // reported episode reward stays on a fixed-horizon basis:
                    // the frozen drone keeps its touchdown rate to the horizon
                    raw_return[idx] +=
                        (env_cfg.horizon - ep_step) * res.rewards[idx].total;
                }
                streams[idx].push_back(std::move(tr));
                raw_return[idx] += res.rewards[idx].total;
            }
            obs = std::move(res.observations);
        }
        const bool episode_complete = env.done();

        double v_final = 0.0;
        bool need_final = false;
        for (std::size_t idx = 0; idx < streams.size(); ++idx) {
            const auto& s = streams[idx];
            if (!s.empty() && !s.back().done && !bootstrap_set[idx]) need_final = true;
        }
        if (need_final) v_final = critic_value(critic, env.global_state());

        for (std::size_t idx = 0; idx < streams.size(); ++idx) {
            auto& s = streams[idx];
            if (s.empty()) continue;
            std::vector<double> rs(s.size()), vs(s.size());
            std::vector<std::uint8_t> ds(s.size());
            for (std::size_t t = 0; t < s.size(); ++t) {
                rs[t] = s[t].reward;
                vs[t] = s[t].value_estimate;
                ds[t] = s[t].done ? 1 : 0;
            }
            const double bootstrap =
                s.back().done ? 0.0 : (bootstrap_set[idx] ? bootstrap_v[idx] : v_final);
            auto [adv, ret] = compute_gae(rs, vs, ds, bootstrap, cfg.gamma_d, cfg.gae_lambda);
            for (std::size_t t = 0; t < s.size(); ++t) {
                Sample smp;
                smp.obs = std::move(s[t].obs);
                smp.action = std::move(s[t].action);
                smp.logprob_old = s[t].logprob_old;
                smp.advantage = adv[t];
                smp.ret = ret[t];
                smp.value_old = s[t].value_estimate;
                smp.state_index = s[t].state_index;
                buf.samples.push_back(std::move(smp));
            }
        }

        if (episode_complete) {
            ++buf.episodes;
            const auto& oc = env.outcome();
            buf.fallback_count += oc.fallback_count;
            buf.collision_count += oc.collision_count;
            for (int i = 0; i < n; ++i) {
                ++buf.agent_episodes;
                reward_acc += raw_return[static_cast<std::size_t>(i)];
                if (oc.drones[static_cast<std::size_t>(i)].success) ++success_acc;
            }
        } else {
            for (int i = 0; i < n; ++i) {
                if (streams[static_cast<std::size_t>(i)].empty()) continue;
                partial_acc += raw_return[static_cast<std::size_t>(i)];
                ++partial_n;
            }
        }
        ++episode_index;
    }

    buf.mean_episode_reward =
        buf.agent_episodes > 0 ? reward_acc / buf.agent_episodes
                               : (partial_n > 0 ? partial_acc / partial_n : 0.0);
    buf.success_rate =
        buf.agent_episodes > 0 ? static_cast<double>(success_acc) / buf.agent_episodes : 0.0;

    if (cfg.normalize_advantages && buf.samples.size() >= 2) {
        const double inv = 1.0 / static_cast<double>(buf.samples.size());
        double mu = 0.0;
        for (const auto& s : buf.samples) mu += s.advantage;
        mu *= inv;
        double var = 0.0;
        for (const auto& s : buf.samples) var += (s.advantage - mu) * (s.advantage - mu);
        var *= inv;
        const double sd = std::sqrt(var) + 1e-8;
        for (auto& s : buf.samples) s.advantage = (s.advantage - mu) / sd;
    }
    buf.finalized = true;
    return buf;
}

TrainStats ppo_update(GaussianPolicy& policy, MlpParams& critic, const RolloutBuffer& buffer,
                      const TrainConfig& cfg, AdamState& adam_policy, AdamState& adam_critic,
                      int iteration) {
    validate(cfg);
    if (!buffer.finalized || buffer.samples.empty())
        throw std::invalid_argument("ppo_update: buffer must be finalized and non-empty");
    const std::size_t N = buffer.samples.size();
    const auto act_dim = static_cast<std::size_t>(policy.action_dim());

    Rng shuffle_rng(
        mix_seed(mix_seed(cfg.seed, kStreamUpdate), static_cast<std::uint64_t>(iteration)));
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);

    double policy_loss_acc = 0.0, value_loss_acc = 0.0, entropy_acc = 0.0, clip_acc = 0.0;
    int minibatch_count = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        const auto nb = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatches), N);
        std::size_t start = 0;
        for (std::size_t mb = 0; mb < nb; ++mb) {
            const std::size_t count = N / nb + (mb < N % nb ? 1 : 0);
            const double inv_m = 1.0 / static_cast<double>(count);

            MlpGrads gnet = zeros_like(policy.mean_net);
            std::vector<double> glogstd(act_dim, 0.0);
            MlpGrads gcrit = zeros_like(critic);
            double pl = 0.0, vl = 0.0, clipped = 0.0;

            for (std::size_t k = start; k < start + count; ++k) {
                const Sample& s = buffer.samples[order[k]];

                MlpCache cache;
                const auto mean = mlp_forward(policy.mean_net, s.obs, &cache);
                std::vector<double> dmean, dlogstd;
                const double lp =
                    gaussian_logprob_grad(mean, policy.log_std, s.action, dmean, dlogstd);
                const double rho = std::exp(lp - s.logprob_old);
                const double u1 = rho * s.advantage;
                const double u2 = clip(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * s.advantage;
                pl += -std::min(u1, u2) * inv_m;
                if (std::fabs(rho - 1.0) > cfg.clip_eps) clipped += 1.0;
                const double dobj_dlp = (u1 <= u2) ? u1 : 0.0;
                const double coef = -dobj_dlp * inv_m;
                if (coef != 0.0) {
                    std::vector<double> og(mean.size());
                    for (std::size_t d = 0; d < mean.size(); ++d) og[d] = coef * dmean[d];
                    mlp_backward(policy.mean_net, cache, og, gnet);
                    for (std::size_t d = 0; d < act_dim; ++d) glogstd[d] += coef * dlogstd[d];
                }

                MlpCache vcache;
                const double v = mlp_forward(
                    critic, buffer.global_states[static_cast<std::size_t>(s.state_index)],
                    &vcache).front();
                const double e1 = v - s.ret;
                const double vc = s.value_old + clip(v - s.value_old, -cfg.clip_eps, cfg.clip_eps);
                const double e2 = vc - s.ret;
                double dv;
                if (e1 * e1 >= e2 * e2) {
                    vl += 0.5 * e1 * e1 * inv_m;
                    dv = e1;
                } else {
                    vl += 0.5 * e2 * e2 * inv_m;
                    dv = std::fabs(v - s.value_old) < cfg.clip_eps ? e2 : 0.0;
                }
                const double vcoef = cfg.value_coef * dv * inv_m;
                if (vcoef != 0.0) {
                    const std::vector<double> og{vcoef};
                    mlp_backward(critic, vcache, og, gcrit);
                }
            }

            const double entropy = gaussian_entropy(policy.log_std);
            for (std::size_t d = 0; d < act_dim; ++d) glogstd[d] -= cfg.entropy_coef;

            if (!std::isfinite(pl) || !std::isfinite(vl))
                throw std::runtime_error("ppo_update: non-finite loss (iteration " +
                                         std::to_string(iteration) + ", epoch " +
                                         std::to_string(epoch) + ")");

            std::vector<double> pg = flatten(gnet);
            pg.insert(pg.end(), glogstd.begin(), glogstd.end());
            clip_global_norm(pg, cfg.max_grad_norm);
            std::vector<double> pp = flatten(policy);
            adam_step(pp, pg, adam_policy);
            unflatten(policy, pp);
            clamp_log_std(policy.log_std);

            std::vector<double> cg = flatten(gcrit);
            clip_global_norm(cg, cfg.max_grad_norm);
            std::vector<double> cp = flatten(critic);
            adam_step(cp, cg, adam_critic);
            unflatten(critic, cp);

            policy_loss_acc += pl;
            value_loss_acc += vl;
            entropy_acc += entropy;
            clip_acc += clipped * inv_m;
            ++minibatch_count;
            start += count;
        }
    }

    TrainStats st;
    st.iteration = iteration;
    st.mean_episode_reward = buffer.mean_episode_reward;
    st.value_loss = value_loss_acc / minibatch_count;
    st.policy_loss = policy_loss_acc / minibatch_count;
    st.entropy = entropy_acc / minibatch_count;
    st.clip_fraction = clip_acc / minibatch_count;
    st.success_rate = buffer.success_rate;
    st.fallback_count = buffer.fallback_count;
    st.env_steps = buffer.env_steps;
    st.episodes = buffer.episodes;
    return st;
}

TrainResult train(const EnvConfig& env_cfg, const TrainConfig& cfg,
                  const IterationCallback& on_iteration, const TrainResult* resume) {
    validate(cfg);
    validate(env_cfg);
    TrainResult r;
    int start_iter = 0;
    {
        LandingEnv probe(env_cfg);
        const int obs_dim = probe.obs_dim();
        const int global_dim = probe.global_dim();
        if (resume) {
            r = *resume;
            start_iter = resume->iterations_done;
            if (r.policy.mean_net.input_dim() != obs_dim || r.critic.input_dim() != global_dim)
                throw std::invalid_argument("train: checkpoint dims do not match environment");
        } else {
            r.policy = make_policy(obs_dim, cfg.hidden, 3, mix_seed(cfg.seed, kStreamPolicyInit),
                                   cfg.log_std_init);
            std::vector<int> cdims;
            cdims.reserve(cfg.hidden.size() + 2);
            cdims.push_back(global_dim);
            cdims.insert(cdims.end(), cfg.hidden.begin(), cfg.hidden.end());
            cdims.push_back(1);
            r.critic = param_init(cdims, mix_seed(cfg.seed, kStreamCriticInit));
            r.adam_policy = make_adam(flatten(r.policy).size(), cfg.lr);
            r.adam_critic = make_adam(flatten(r.critic).size(), cfg.lr);
        }
    }
    for (int it = start_iter; it < cfg.iterations; ++it) {
        const RolloutBuffer buf = collect_rollouts(r.policy, r.critic, env_cfg, cfg, it);
        TrainStats st =
            ppo_update(r.policy, r.critic, buf, cfg, r.adam_policy, r.adam_critic, it);
        r.stats.push_back(st);
        r.iterations_done = it + 1;
        if (on_iteration) on_iteration(st, r);
    }
    return r;
}

void save_checkpoint(std::ostream& os, const TrainResult& r) {
    os << "safeswarm-checkpoint v1\n";
    os << "iteration " << r.iterations_done << '\n';
    save_policy(os, r.policy);
    os << "critic\n";
    save_mlp(os, r.critic);
    os << "adam_policy\n";
    save_adam(os, r.adam_policy);
    os << "adam_critic\n";
    save_adam(os, r.adam_critic);
    os << "end\n";
}

TrainResult load_checkpoint(std::istream& is) {
    std::string magic, version;
    if (!(is >> magic >> version) || magic != "safeswarm-checkpoint" || version != "v1")
        throw std::runtime_error("checkpoint: unrecognized header");
    TrainResult r;
    expect_token(is, "iteration");
    if (!(is >> r.iterations_done) || r.iterations_done < 0)
        throw std::runtime_error("checkpoint: bad iteration count");
    r.policy = load_policy(is);
    expect_token(is, "critic");
    r.critic = load_mlp(is);
    expect_token(is, "adam_policy");
    r.adam_policy = load_adam(is);
    expect_token(is, "adam_critic");
    r.adam_critic = load_adam(is);
    expect_token(is, "end");
    return r;
}

void save_checkpoint_file(const std::string& path, const TrainResult& r) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    save_checkpoint(os, r);
    os.flush();
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

TrainResult load_checkpoint_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    return load_checkpoint(is);
}

}  // namespace safeswarm
