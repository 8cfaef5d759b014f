#include "safeswarm/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace safeswarm {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
constexpr std::uint64_t kStreamInit = 0x6d6c7069ULL;

void expect_token(std::istream& is, const std::string& want) {
    std::string got;
    if (!(is >> got) || got != want)
        throw std::runtime_error("checkpoint: expected '" + want + "', got '" + got + "'");
}
}  // namespace

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
}

void validate(const MlpParams& p) {
    if (p.layers.empty()) throw std::invalid_argument("MlpParams: no layers");
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& l = p.layers[i];
        if (l.in_dim <= 0 || l.out_dim <= 0)
            throw std::invalid_argument("MlpParams: nonpositive layer dim");
        if (l.w.size() != static_cast<std::size_t>(l.in_dim) * static_cast<std::size_t>(l.out_dim))
            throw std::invalid_argument("MlpParams: weight storage mismatch");
        if (l.b.size() != static_cast<std::size_t>(l.out_dim))
            throw std::invalid_argument("MlpParams: bias storage mismatch");
        if (i > 0 && p.layers[i - 1].out_dim != l.in_dim)
            throw std::invalid_argument("MlpParams: consecutive layer dims mismatch");
        for (double x : l.w)
            if (!std::isfinite(x)) throw std::invalid_argument("MlpParams: non-finite weight");
        for (double x : l.b)
            if (!std::isfinite(x)) throw std::invalid_argument("MlpParams: non-finite bias");
    }
}

std::vector<double> mlp_forward(const MlpParams& p, const std::vector<double>& input,
                                MlpCache* cache) {
    if (p.layers.empty()) throw std::invalid_argument("mlp_forward: empty net");
    if (static_cast<int>(input.size()) != p.layers.front().in_dim)
        throw std::invalid_argument("mlp_forward: input dim mismatch");
    std::vector<double> x = input;
    if (cache) {
        cache->acts.clear();
        cache->pre.clear();
        cache->acts.push_back(x);
    }
    const std::size_t L = p.layers.size();
    for (std::size_t l = 0; l < L; ++l) {
        const auto& layer = p.layers[l];
        std::vector<double> y(static_cast<std::size_t>(layer.out_dim));
        for (int o = 0; o < layer.out_dim; ++o) {
            double acc = layer.b[static_cast<std::size_t>(o)];
            const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in_dim;
            for (int i = 0; i < layer.in_dim; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
            y[static_cast<std::size_t>(o)] = acc;
        }
        if (cache) cache->pre.push_back(y);
        if (l + 1 < L)
            for (auto& v : y) v = std::tanh(v);
        x = std::move(y);
        if (cache) cache->acts.push_back(x);
    }
    return x;
}

std::vector<double> mlp_backward(const MlpParams& p, const MlpCache& cache,
                                 const std::vector<double>& output_grad, MlpGrads& grads) {
    const std::size_t L = p.layers.size();
    if (cache.acts.size() != L + 1 || cache.pre.size() != L)
        throw std::invalid_argument("mlp_backward: cache does not match net");
    if (output_grad.size() != static_cast<std::size_t>(p.layers.back().out_dim))
        throw std::invalid_argument("mlp_backward: output grad dim mismatch");
    if (grads.layers.size() != L)
        throw std::invalid_argument("mlp_backward: grads shape mismatch");

    std::vector<double> g = output_grad;
    for (std::size_t l = L; l-- > 0;) {
        const auto& layer = p.layers[l];
        auto& gl = grads.layers[l];
        if (l + 1 < L) {  // undo the tanh applied to this layer's output
            const auto& a = cache.acts[l + 1];
            for (int o = 0; o < layer.out_dim; ++o) {
                const double ao = a[static_cast<std::size_t>(o)];
                g[static_cast<std::size_t>(o)] *= 1.0 - ao * ao;
            }
        }
        const auto& x = cache.acts[l];
        for (int o = 0; o < layer.out_dim; ++o) {
            const double go = g[static_cast<std::size_t>(o)];
            gl.b[static_cast<std::size_t>(o)] += go;
            double* wrow = gl.w.data() + static_cast<std::size_t>(o) * layer.in_dim;
            for (int i = 0; i < layer.in_dim; ++i) wrow[i] += go * x[static_cast<std::size_t>(i)];
        }
        std::vector<double> gin(static_cast<std::size_t>(layer.in_dim), 0.0);
        for (int o = 0; o < layer.out_dim; ++o) {
            const double go = g[static_cast<std::size_t>(o)];
            const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in_dim;
            for (int i = 0; i < layer.in_dim; ++i) gin[static_cast<std::size_t>(i)] += row[i] * go;
        }
        g = std::move(gin);
    }
    return g;
}

MlpParams zeros_like(const MlpParams& p) {
    MlpParams z = p;
    for (auto& l : z.layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    return z;
}

MlpParams param_init(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 2)
        throw std::invalid_argument("param_init: need at least input and output dims");
    for (int d : dims)
        if (d <= 0) throw std::invalid_argument("param_init: dims must be positive");
    Rng rng(mix_seed(seed, kStreamInit));
    MlpParams p;
    p.layers.resize(dims.size() - 1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        auto& layer = p.layers[l];
        layer.in_dim = dims[l];
        layer.out_dim = dims[l + 1];
        const double bound = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
        layer.w.resize(static_cast<std::size_t>(layer.in_dim) * layer.out_dim);
        for (auto& w : layer.w) w = rng.uniform(-bound, bound);
        layer.b.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
    }
    return p;
}

std::vector<double> flatten(const MlpParams& p) {
    std::vector<double> flat;
    flat.reserve(p.param_count());
    for (const auto& l : p.layers) {
        flat.insert(flat.end(), l.w.begin(), l.w.end());
        flat.insert(flat.end(), l.b.begin(), l.b.end());
    }
    return flat;
}

void unflatten(MlpParams& p, const std::vector<double>& flat) {
    if (flat.size() != p.param_count())
        throw std::invalid_argument("unflatten: flat size does not match net shape");
    std::size_t off = 0;
    for (auto& l : p.layers) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), l.w.size(), l.w.begin());
        off += l.w.size();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), l.b.size(), l.b.begin());
        off += l.b.size();
    }
}

GaussianPolicy make_policy(int obs_dim, const std::vector<int>& hidden, int action_dim,
                           std::uint64_t seed, double log_std_init) {
    if (action_dim <= 0) throw std::invalid_argument("make_policy: action_dim must be positive");
    std::vector<int> dims;
    dims.reserve(hidden.size() + 2);
    dims.push_back(obs_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(action_dim);
    GaussianPolicy p;
    p.mean_net = param_init(dims, seed);
    p.log_std.assign(static_cast<std::size_t>(action_dim), log_std_init);
    clamp_log_std(p.log_std);
    return p;
}

void clamp_log_std(std::vector<double>& log_std) {
    for (auto& v : log_std) v = std::clamp(v, kLogStdMin, kLogStdMax);
}

double gaussian_logprob(const std::vector<double>& mean, const std::vector<double>& log_std,
                        const std::vector<double>& action) {
    if (mean.size() != log_std.size() || mean.size() != action.size())
        throw std::invalid_argument("gaussian_logprob: dim mismatch");
    double lp = 0.0;
    for (std::size_t k = 0; k < mean.size(); ++k) {
        const double z = (action[k] - mean[k]) / std::exp(log_std[k]);
        lp += -0.5 * z * z - log_std[k] - 0.5 * kLog2Pi;
    }
    return lp;
}

double gaussian_logprob_grad(const std::vector<double>& mean, const std::vector<double>& log_std,
                             const std::vector<double>& action, std::vector<double>& dmean,
                             std::vector<double>& dlog_std) {
    if (mean.size() != log_std.size() || mean.size() != action.size())
        throw std::invalid_argument("gaussian_logprob_grad: dim mismatch");
    dmean.assign(mean.size(), 0.0);
    dlog_std.assign(mean.size(), 0.0);
    double lp = 0.0;
    for (std::size_t k = 0; k < mean.size(); ++k) {
        const double s = std::exp(log_std[k]);
        const double z = (action[k] - mean[k]) / s;
        lp += -0.5 * z * z - log_std[k] - 0.5 * kLog2Pi;
        dmean[k] = z / s;
        dlog_std[k] = z * z - 1.0;
    }
    return lp;
}

double gaussian_entropy(const std::vector<double>& log_std) {
    double h = 0.0;
    for (double ls : log_std) h += 0.5 * (kLog2Pi + 1.0) + ls;
    return h;
}

std::vector<double> gaussian_sample(const std::vector<double>& mean,
                                    const std::vector<double>& log_std, Rng& rng) {
    if (mean.size() != log_std.size())
        throw std::invalid_argument("gaussian_sample: dim mismatch");
    std::vector<double> a(mean.size());
    for (std::size_t k = 0; k < mean.size(); ++k)
        a[k] = mean[k] + std::exp(log_std[k]) * rng.normal();
    return a;
}

std::vector<double> flatten(const GaussianPolicy& p) {
    std::vector<double> flat = flatten(p.mean_net);
    flat.insert(flat.end(), p.log_std.begin(), p.log_std.end());
    return flat;
}

void unflatten(GaussianPolicy& p, const std::vector<double>& flat) {
    const std::size_t net = p.mean_net.param_count();
    if (flat.size() != net + p.log_std.size())
        throw std::invalid_argument("unflatten: policy flat size mismatch");
    unflatten(p.mean_net, std::vector<double>(flat.begin(),
                                              flat.begin() + static_cast<std::ptrdiff_t>(net)));
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(net), flat.end(), p.log_std.begin());
}

AdamState make_adam(std::size_t param_count, double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("make_adam: lr must be positive");
    AdamState st;
    st.lr = lr;
    st.m.assign(param_count, 0.0);
    st.v.assign(param_count, 0.0);
    return st;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& st) {
    if (params.size() != grads.size() || params.size() != st.m.size() ||
        params.size() != st.v.size())
        throw std::invalid_argument("adam_step: size mismatch");
    ++st.step;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
        params[i] -= st.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + st.eps_adam);
    }
}

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    if (res.ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
    double x = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error("parse_double: bad token '" + std::string(s) + "'");
    return x;
}

void write_vector(std::ostream& os, const std::string& tag, const std::vector<double>& v) {
    os << tag << ' ' << v.size();
    for (double x : v) os << ' ' << format_double(x);
    os << '\n';
}

std::vector<double> read_vector(std::istream& is, const std::string& tag) {
    expect_token(is, tag);
    std::size_t n = 0;
    if (!(is >> n)) throw std::runtime_error("checkpoint: missing count after '" + tag + "'");
    std::vector<double> v(n);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated vector '" + tag + "'");
        v[i] = parse_double(tok);
    }
    return v;
}

void save_mlp(std::ostream& os, const MlpParams& p) {
    os << "mlp " << p.layers.size() << '\n' << "dims";
    if (!p.layers.empty()) {
        os << ' ' << p.layers.front().in_dim;
        for (const auto& l : p.layers) os << ' ' << l.out_dim;
    }
    os << '\n';
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        write_vector(os, "w" + std::to_string(l), p.layers[l].w);
        write_vector(os, "b" + std::to_string(l), p.layers[l].b);
    }
}

MlpParams load_mlp(std::istream& is) {
    expect_token(is, "mlp");
    std::size_t L = 0;
    if (!(is >> L) || L == 0) throw std::runtime_error("checkpoint: bad layer count");
    expect_token(is, "dims");
    std::vector<int> dims(L + 1);
    for (auto& d : dims)
        if (!(is >> d) || d <= 0) throw std::runtime_error("checkpoint: bad dims");
    MlpParams p;
    p.layers.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        auto& layer = p.layers[l];
        layer.in_dim = dims[l];
        layer.out_dim = dims[l + 1];
        layer.w = read_vector(is, "w" + std::to_string(l));
        layer.b = read_vector(is, "b" + std::to_string(l));
    }
    validate(p);
    return p;
}

void save_policy(std::ostream& os, const GaussianPolicy& p) {
    os << "policy\n";
    save_mlp(os, p.mean_net);
    write_vector(os, "log_std", p.log_std);
}

GaussianPolicy load_policy(std::istream& is) {
    expect_token(is, "policy");
    GaussianPolicy p;
    p.mean_net = load_mlp(is);
    p.log_std = read_vector(is, "log_std");
    if (static_cast<int>(p.log_std.size()) != p.mean_net.output_dim())
        throw std::runtime_error("checkpoint: log_std dim does not match net output");
    return p;
}

void save_adam(std::ostream& os, const AdamState& st) {
    os << "adam " << st.step << ' ' << format_double(st.lr) << ' ' << format_double(st.beta1)
       << ' ' << format_double(st.beta2) << ' ' << format_double(st.eps_adam) << '\n';
    write_vector(os, "m", st.m);
    write_vector(os, "v", st.v);
}

AdamState load_adam(std::istream& is) {
    expect_token(is, "adam");
    AdamState st;
    std::string lr, b1, b2, eps;
    if (!(is >> st.step >> lr >> b1 >> b2 >> eps))
        throw std::runtime_error("checkpoint: truncated adam header");
    st.lr = parse_double(lr);
    st.beta1 = parse_double(b1);
    st.beta2 = parse_double(b2);
    st.eps_adam = parse_double(eps);
    st.m = read_vector(is, "m");
    st.v = read_vector(is, "v");
    if (st.m.size() != st.v.size()) throw std::runtime_error("checkpoint: adam moment mismatch");
    return st;
}

}  // namespace safeswarm
