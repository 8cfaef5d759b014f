#include "safeswarm/safety.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safeswarm {

namespace {
constexpr double kSweepTol = 1e-10;     // per-sweep command change below this => converged
constexpr double kFeasibilityTol = 1e-6; // final acceptance tolerance on each constraint
constexpr int kMaxSweeps = 500;
constexpr double kZeroNormal2 = 1e-18;
constexpr double kActiveLambda = 1e-12;
// multipliers this large mean the ascent is diverging on an infeasible set
// (legitimate ones top out near box_extent / min_normal ~ 2e9)
constexpr double kLambdaCap = 1e12;

Vec3 clamp_to_box(const Vec3& u, double m) {
    return {std::clamp(u.x, -m, m), std::clamp(u.y, -m, m), std::clamp(u.z, -m, m)};
}

// Exact 1-D dual update: smallest t >= 0 with a . clamp(base + t a) >= b.
// phi(t) = a . clamp(base + t a) is piecewise linear and nondecreasing, with
// breakpoints where a component enters or leaves saturation, so the crossing
// is found by walking the sorted breakpoints and interpolating one segment.
double coordinate_solve(const Vec3& base, const Vec3& a, double b, double m) {
    const auto phi = [&](double t) { return a.dot(clamp_to_box(base + a * t, m)); };
    double f_lo = phi(0.0);
    if (f_lo >= b) return 0.0;

    double ts[6];
    int nt = 0;
    const double ad[3] = {a.x, a.y, a.z};
    const double bd[3] = {base.x, base.y, base.z};
    for (int d = 0; d < 3; ++d) {
        if (ad[d] == 0.0) continue;
        for (const double target : {-m, m}) {
            const double t = (target - bd[d]) / ad[d];
            if (t > 0.0) ts[nt++] = t;
        }
    }
    std::sort(ts, ts + nt);

    double t_lo = 0.0;
    for (int k = 0; k < nt; ++k) {
        const double f_hi = phi(ts[k]);
        if (f_hi >= b) return t_lo + (b - f_lo) * (ts[k] - t_lo) / (f_hi - f_lo);
        t_lo = ts[k];
        f_lo = f_hi;
    }
    // phi is constant past the last breakpoint; reachable b was checked by
    // the caller, so landing here is a rounding artifact of that bound.
    return t_lo;
}
}  // namespace

void validate(const SafetyConfig& cfg) {
    if (!(cfg.eta > 0.0) || cfg.eta > 1.0)
        throw std::invalid_argument("SafetyConfig: eta must be in (0, 1]");
    if (!(cfg.responsibility > 0.0) || cfg.responsibility > 1.0)
        throw std::invalid_argument("SafetyConfig: responsibility must be in (0, 1]");
    if (!(cfg.margin > 0.0)) throw std::invalid_argument("SafetyConfig: margin must be positive");
    if (!(cfg.cull_radius > 0.0))
        throw std::invalid_argument("SafetyConfig: cull_radius must be positive");
    if (!(cfg.v_max > 0.0)) throw std::invalid_argument("SafetyConfig: v_max must be positive");
}

double barrier_value(const Vec3& p, const Vec3& center, double r_safe) {
    return (p - center).norm2() - r_safe * r_safe;
}

BarrierConstraint obstacle_constraint(const Vec3& p, const ObstacleSpec& obstacle,
                                      double body_radius, const SafetyConfig& cfg,
                                      double dt, int obstacle_id) {
    const double r_safe = cfg.r_safe_obstacle(obstacle.radius, body_radius);
    const Vec3 d{p.x - obstacle.center_x, p.y - obstacle.center_y, 0.0};
    const double h = d.norm2() - r_safe * r_safe;
    BarrierConstraint c;
    c.normal = d * (2.0 * dt);
    c.offset = -cfg.eta * h;
    c.source = {ConstraintSource::Kind::Obstacle, obstacle_id};
    return c;
}

BarrierConstraint interagent_constraint(const Vec3& p_i, const Vec3& p_j, const Vec3& v_j,
                                        double r_safe, const SafetyConfig& cfg, double dt,
                                        int peer_id) {
    const Vec3 d = p_i - p_j;
    const double h = d.norm2() - r_safe * r_safe;
    BarrierConstraint c;
    c.normal = d * (2.0 * dt);
    c.offset = -cfg.responsibility * cfg.eta * h + 2.0 * dt * d.dot(v_j);
    c.source = {ConstraintSource::Kind::Agent, peer_id};
    return c;
}

std::vector<BarrierConstraint> assemble_constraints(int agent_index, const SafetyScene& scene,
                                                    const SafetyConfig& cfg) {
    const SafetyAgentView& self = scene.agents.at(static_cast<std::size_t>(agent_index));
    const double dt = scene.dt;
    std::vector<BarrierConstraint> out;

    if (scene.obstacles != nullptr) {
        for (int k = 0; k < static_cast<int>(scene.obstacles->size()); ++k) {
            const ObstacleSpec& obs = (*scene.obstacles)[static_cast<std::size_t>(k)];
            if (obstacle_clearance(self.pos, obs) > cfg.cull_radius) continue;
            out.push_back(obstacle_constraint(self.pos, obs, self.body_radius, cfg, dt, k));
        }
    }

    for (int j = 0; j < static_cast<int>(scene.agents.size()); ++j) {
        if (j == agent_index) continue;
        const SafetyAgentView& peer = scene.agents[static_cast<std::size_t>(j)];
        if (!peer.flying) continue;
        if (distance(self.pos, peer.pos) > cfg.cull_radius) continue;
        const double r_safe = cfg.r_safe_agent(self.body_radius, peer.body_radius);
        out.push_back(interagent_constraint(self.pos, peer.pos, peer.vel, r_safe, cfg, dt, j));
    }

    // Arena faces, fixed order +x,-x,+y,-y,+z,-z. Each is a linear barrier
    // h(p) = signed distance to the face, same decay condition as above.
    const double hx = scene.arena.half_extent_xy;
    const double zmax = scene.arena.z_max;
    const Vec3 p = self.pos;
    const struct {
        Vec3 a;
        double h;
    } faces[6] = {
        {{-dt, 0.0, 0.0}, hx - p.x},  {{dt, 0.0, 0.0}, p.x + hx},
        {{0.0, -dt, 0.0}, hx - p.y},  {{0.0, dt, 0.0}, p.y + hx},
        {{0.0, 0.0, -dt}, zmax - p.z}, {{0.0, 0.0, dt}, p.z},
    };
    for (int f = 0; f < 6; ++f) {
        BarrierConstraint c;
        c.normal = faces[f].a;
        c.offset = -cfg.eta * faces[f].h;
        c.source = {ConstraintSource::Kind::Arena, f};
        out.push_back(c);
    }
    return out;
}

std::pair<Vec3, FilterReport> solve_filter_qp(const Vec3& u_nom,
                                              const std::vector<BarrierConstraint>& constraints,
                                              double v_max) {
    if (!u_nom.is_finite()) throw std::invalid_argument("solve_filter_qp: non-finite nominal");
    if (!(v_max > 0.0) || !std::isfinite(v_max))
        throw std::invalid_argument("solve_filter_qp: v_max must be positive");
    for (const auto& c : constraints)
        if (!c.normal.is_finite() || !std::isfinite(c.offset))
            throw std::invalid_argument("solve_filter_qp: non-finite constraint");

    FilterReport report;
    report.nominal = u_nom;

    // Dual coordinate ascent over the barrier rows only. The box is kept
    // exact inside the primal reconstruction u(lambda) = clamp(w), so box
    // geometry never degrades the dual conditioning; each coordinate update
    // is the exact 1-D maximizer of the box-aware dual.
    struct Row {
        Vec3 a;
        double b;
        double norm;
        int index;
    };
    std::vector<Row> rows;
    rows.reserve(constraints.size());
    bool degenerate_infeasible = false;
    for (int i = 0; i < static_cast<int>(constraints.size()); ++i) {
        const auto& c = constraints[static_cast<std::size_t>(i)];
        const double gg = c.normal.norm2();
        if (gg < kZeroNormal2) {
            // zero normal: either vacuous (b <= 0) or unsatisfiable
            if (c.offset > kFeasibilityTol) degenerate_infeasible = true;
            continue;
        }
        // the box caps a . u at v_max * |a|_1; beyond that the row is hopeless
        const double reach =
            v_max * (std::fabs(c.normal.x) + std::fabs(c.normal.y) + std::fabs(c.normal.z));
        if (c.offset > reach) {
            degenerate_infeasible = true;
            continue;
        }
        rows.push_back({c.normal, c.offset, std::sqrt(gg), i});
    }

    Vec3 w = u_nom;  // pre-clamp point u_nom + sum lambda_j a_j
    std::vector<double> lambda(rows.size(), 0.0);
    int sweeps = 0;
    bool diverged = false;
    if (!degenerate_infeasible && !rows.empty()) {
        for (; sweeps < kMaxSweeps && !diverged; ++sweeps) {
            double max_move = 0.0;
            for (std::size_t j = 0; j < rows.size(); ++j) {
                const Row& r = rows[j];
                const Vec3 base = w - r.a * lambda[j];
                const double lam_new = coordinate_solve(base, r.a, r.b, v_max);
                if (lam_new > kLambdaCap) {
                    diverged = true;
                    break;
                }
                if (lam_new != lambda[j]) {
                    max_move = std::max(max_move, std::fabs(lam_new - lambda[j]) * r.norm);
                    lambda[j] = lam_new;
                    w = base + r.a * lam_new;
                }
            }
            if (!diverged && max_move <= kSweepTol) {
                ++sweeps;
                break;
            }
        }
    }
    if (diverged) degenerate_infeasible = true;
    report.qp_iterations = sweeps;

    const Vec3 u = clamp_to_box(w, v_max);

    bool feasible = !degenerate_infeasible;
    for (const auto& c : constraints) {
        if (c.normal.norm2() < kZeroNormal2) continue;
        if (c.normal.dot(u) < c.offset - kFeasibilityTol) {
            feasible = false;
            break;
        }
    }

    if (!feasible) {
        report.fallback_used = true;
        report.filtered = Vec3{0.0, 0.0, 0.0};
        return {report.filtered, report};
    }

    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (lambda[j] > kActiveLambda)
            report.active_constraints.push_back(
                constraints[static_cast<std::size_t>(rows[j].index)].source);
    }
    report.filtered = u;
    return {u, report};
}

std::pair<Vec3, FilterReport> filter_action(int agent_index, const SafetyScene& scene,
                                            const Vec3& u_nom, double v_max,
                                            const SafetyConfig& cfg) {
    if (agent_index < 0 || agent_index >= static_cast<int>(scene.agents.size()))
        throw std::invalid_argument("filter_action: agent index out of range");
    if (!scene.agents[static_cast<std::size_t>(agent_index)].flying)
        throw std::invalid_argument("filter_action: agent is not Flying");
    Vec3 clamped = u_nom;
    clamped.x = std::clamp(clamped.x, -v_max, v_max);
    clamped.y = std::clamp(clamped.y, -v_max, v_max);
    clamped.z = std::clamp(clamped.z, -v_max, v_max);
    const auto constraints = assemble_constraints(agent_index, scene, cfg);
    auto [u, report] = solve_filter_qp(clamped, constraints, v_max);
    report.nominal = u_nom;
    return {u, report};
}

}  // namespace safeswarm
