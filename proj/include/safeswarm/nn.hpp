#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "safeswarm/rng.hpp"

namespace safeswarm {

// Dense layer; weights row-major [out_dim][in_dim].
struct MlpLayer {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<double> w;
    std::vector<double> b;
};

// Affine chain with tanh on hidden layers, identity on the output layer.
struct MlpParams {
    std::vector<MlpLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }
    std::size_t param_count() const;
};

// Gradients share the parameter layout.
using MlpGrads = MlpParams;

struct MlpCache {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l+1] = layer l output
    std::vector<std::vector<double>> pre;   // pre[l] = layer l affine result
};

void validate(const MlpParams& p);

std::vector<double> mlp_forward(const MlpParams& p, const std::vector<double>& input,
                                MlpCache* cache = nullptr);

// Accumulates parameter grads into `grads`; returns the grad w.r.t. the input.
std::vector<double> mlp_backward(const MlpParams& p, const MlpCache& cache,
                                 const std::vector<double>& output_grad, MlpGrads& grads);

MlpParams zeros_like(const MlpParams& p);

// Scaled-uniform init: weights ~ U(±sqrt(6/(fan_in+fan_out))), biases zero.
MlpParams param_init(const std::vector<int>& dims, std::uint64_t seed);

std::vector<double> flatten(const MlpParams& p);
void unflatten(MlpParams& p, const std::vector<double>& flat);

// --- diagonal Gaussian action head ---

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct GaussianPolicy {
    MlpParams mean_net;                // obs -> action-dim mean
    std::vector<double> log_std;       // state-independent, clamped [kLogStdMin, kLogStdMax]

    int action_dim() const { return static_cast<int>(log_std.size()); }
};

GaussianPolicy make_policy(int obs_dim, const std::vector<int>& hidden, int action_dim,
                           std::uint64_t seed, double log_std_init = -0.5);

void clamp_log_std(std::vector<double>& log_std);

double gaussian_logprob(const std::vector<double>& mean, const std::vector<double>& log_std,
                        const std::vector<double>& action);

// Same value, plus d(logprob)/d(mean) and d(logprob)/d(log_std).
double gaussian_logprob_grad(const std::vector<double>& mean, const std::vector<double>& log_std,
                             const std::vector<double>& action, std::vector<double>& dmean,
                             std::vector<double>& dlog_std);

double gaussian_entropy(const std::vector<double>& log_std);

std::vector<double> gaussian_sample(const std::vector<double>& mean,
                                    const std::vector<double>& log_std, Rng& rng);

std::vector<double> flatten(const GaussianPolicy& p);  // mean_net params, then log_std
void unflatten(GaussianPolicy& p, const std::vector<double>& flat);

// --- Adam over flat parameter vectors ---

struct AdamState {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    std::int64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

AdamState make_adam(std::size_t param_count, double lr);

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& st);

// --- exact round-trip text serialization (checkpoint building blocks) ---

std::string format_double(double x);
double parse_double(std::string_view s);

void write_vector(std::ostream& os, const std::string& tag, const std::vector<double>& v);
std::vector<double> read_vector(std::istream& is, const std::string& tag);

void save_mlp(std::ostream& os, const MlpParams& p);
MlpParams load_mlp(std::istream& is);

void save_policy(std::ostream& os, const GaussianPolicy& p);
GaussianPolicy load_policy(std::istream& is);

void save_adam(std::ostream& os, const AdamState& st);
AdamState load_adam(std::istream& is);

}  // namespace safeswarm
