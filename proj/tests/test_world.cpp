#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "safeswarm/rng.hpp"
#include "safeswarm/world.hpp"

using namespace safeswarm;

TEST_CASE("drone dynamics: velocity tracking step") {
    DroneParams params;
    params.gain_k = 4.0;
    params.v_max = 1.0;

    SUBCASE("accelerates toward the command") {
        DroneState s;
        s.pos = {0, 0, 0};
        s.vel = {0, 0, 0};
        const DroneState n = step_drone_dynamics(s, params, {1, 0, 0}, 0.1);
        CHECK(n.vel.x == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(n.vel.y == 0.0);
        CHECK(n.vel.z == 0.0);
        CHECK(n.pos.x == doctest::Approx(0.04).epsilon(1e-12));
    }

    SUBCASE("decays toward a zero command") {
        DroneState s;
        s.vel = {1, 0, 0};
        const DroneState n = step_drone_dynamics(s, params, {0, 0, 0}, 0.1);
        CHECK(n.vel.x == doctest::Approx(0.6).epsilon(1e-12));
    }

    SUBCASE("cmd == v is a fixed point of the velocity update") {
        DroneState s;
        s.pos = {0.5, -0.25, 1.0};
        s.vel = {0.3, -0.2, 0.1};
        const DroneState n = step_drone_dynamics(s, params, s.vel, 0.02);
        CHECK(n.vel.x == s.vel.x);
        CHECK(n.vel.y == s.vel.y);
        CHECK(n.vel.z == s.vel.z);
        // position still advances with the held velocity
        CHECK(n.pos.x == doctest::Approx(s.pos.x + s.vel.x * 0.02));
    }

    SUBCASE("position uses the updated velocity (semi-implicit)") {
        DroneState s;
        s.pos = {1, 2, 3};
        s.vel = {0, 0, 0};
        const DroneState n = step_drone_dynamics(s, params, {0, 0, -1}, 0.05);
        CHECK(n.pos.z == doctest::Approx(3.0 + n.vel.z * 0.05).epsilon(1e-15));
    }

    SUBCASE("rejects non-Flying drones") {
        DroneState s;
        s.status = DroneStatus::Landed;
        CHECK_THROWS_AS(step_drone_dynamics(s, params, {0, 0, 0}, 0.02), std::invalid_argument);
        s.status = DroneStatus::Crashed;
        CHECK_THROWS_AS(step_drone_dynamics(s, params, {0, 0, 0}, 0.02), std::invalid_argument);
    }

    SUBCASE("rejects out-of-bound and non-finite commands") {
        DroneState s;
        CHECK_THROWS_AS(step_drone_dynamics(s, params, {1.5, 0, 0}, 0.02), std::invalid_argument);
        CHECK_THROWS_AS(step_drone_dynamics(s, params, {0, -2, 0}, 0.02), std::invalid_argument);
        const double nan = std::nan("");
        CHECK_THROWS_AS(step_drone_dynamics(s, params, {nan, 0, 0}, 0.02), std::invalid_argument);
        CHECK_THROWS_AS(step_drone_dynamics(s, params, {0, 0, 0}, 0.0), std::invalid_argument);
    }
}

TEST_CASE("drone dynamics: per-axis contraction toward the command") {
    // |v+ - cmd| = (1 - k*dt) |v - cmd| per axis when k*dt < 1
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        DroneParams params;
        params.gain_k = rng.uniform(0.5, 8.0);
        params.v_max = 1.0;
        const double dt = rng.uniform(0.005, std::min(0.1, 0.99 / params.gain_k));
        DroneState s;
        s.pos = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 2.0)};
        s.vel = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec3 cmd{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const DroneState n = step_drone_dynamics(s, params, cmd, dt);
        const double shrink = 1.0 - params.gain_k * dt;
        CHECK(n.vel.x - cmd.x == doctest::Approx(shrink * (s.vel.x - cmd.x)).epsilon(1e-12));
        CHECK(n.vel.y - cmd.y == doctest::Approx(shrink * (s.vel.y - cmd.y)).epsilon(1e-12));
        CHECK(n.vel.z - cmd.z == doctest::Approx(shrink * (s.vel.z - cmd.z)).epsilon(1e-12));
    }
}

TEST_CASE("pad motion") {
    ArenaSpec arena;
    arena.half_extent_xy = 1.0;

    SUBCASE("static pads never move") {
        PadSpec pad;
        pad.center = {0.3, -0.4, 0.1};
        const PadSpec n = step_pad(pad, arena, 0.5);
        CHECK(n.center.x == pad.center.x);
        CHECK(n.center.y == pad.center.y);
        CHECK(n.vel_x == 0.0);
    }

    SUBCASE("advances linearly inside the arena") {
        PadSpec pad;
        pad.center = {0.0, 0.0, 0.1};
        pad.motion = PadMotionKind::LinearBounce;
        pad.vel_x = 0.2;
        const PadSpec n = step_pad(pad, arena, 0.5);
        CHECK(n.center.x == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(n.vel_x == 0.2);
    }

    SUBCASE("reflects at the boundary, mirroring position and negating velocity") {
        PadSpec pad;
        pad.center = {0.9, 0.0, 0.1};
        pad.motion = PadMotionKind::LinearBounce;
        pad.vel_x = 0.2;
        const PadSpec n = step_pad(pad, arena, 1.0);
        CHECK(n.center.x == doctest::Approx(0.9).epsilon(1e-12));
        CHECK(n.vel_x == doctest::Approx(-0.2).epsilon(1e-12));
    }

    SUBCASE("stays inside the box and preserves speed over long runs") {
        Rng rng(7);
        for (int trial = 0; trial < 20; ++trial) {
            PadSpec pad;
            pad.center = {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), 0.1};
            pad.motion = PadMotionKind::LinearBounce;
            pad.vel_x = rng.uniform(-0.5, 0.5);
            pad.vel_y = rng.uniform(-0.5, 0.5);
            const double speed0 = std::hypot(pad.vel_x, pad.vel_y);
            for (int k = 0; k < 500; ++k) {
                pad = step_pad(pad, arena, 0.02);
                CHECK(std::fabs(pad.center.x) <= arena.half_extent_xy + 1e-12);
                CHECK(std::fabs(pad.center.y) <= arena.half_extent_xy + 1e-12);
            }
            CHECK(std::hypot(pad.vel_x, pad.vel_y) == doctest::Approx(speed0).epsilon(1e-12));
        }
    }
}

TEST_CASE("obstacle clearance") {
    SUBCASE("horizontal distance minus radius") {
        ObstacleSpec obs;
        obs.center_x = 0.0;
        obs.center_y = 0.0;
        obs.radius = 0.5;
        CHECK(obstacle_clearance({2, 0, 1}, obs) == doctest::Approx(1.5).epsilon(1e-12));
    }

    SUBCASE("on the axis the clearance is minus the radius") {
        ObstacleSpec obs;
        obs.center_x = 1.0;
        obs.center_y = -1.0;
        obs.radius = 0.3;
        CHECK(obstacle_clearance({1, -1, 0.7}, obs) == doctest::Approx(-0.3).epsilon(1e-12));
    }

    SUBCASE("z is ignored: cylinders are treated as full height") {
        ObstacleSpec obs;
        obs.center_x = 0.0;
        obs.center_y = 0.0;
        obs.radius = 1.0;
        obs.height = 1.5;
        CHECK(obstacle_clearance({0, 1, 5}, obs) == doctest::Approx(0.0));
    }

    SUBCASE("1-Lipschitz in the horizontal plane") {
        Rng rng(99);
        ObstacleSpec obs;
        obs.center_x = 0.4;
        obs.center_y = -0.2;
        obs.radius = 0.35;
        for (int trial = 0; trial < 500; ++trial) {
            const Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 3)};
            const Vec3 q{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 3)};
            const double diff = std::fabs(obstacle_clearance(p, obs) - obstacle_clearance(q, obs));
            CHECK(diff <= distance_xy(p, q) + 1e-12);
        }
    }
}

TEST_CASE("nearest obstacle") {
    SUBCASE("picks the minimum clearance") {
        // clearances 1.5, 0.3, 2.0 as seen from the origin
        std::vector<ObstacleSpec> obstacles(3);
        obstacles[0] = {1.6, 0.0, 0.1, 1.5};
        obstacles[1] = {0.0, 0.4, 0.1, 1.5};
        obstacles[2] = {-2.1, 0.0, 0.1, 1.5};
        const auto [idx, c] = nearest_obstacle({0, 0, 1}, obstacles);
        CHECK(idx == 1);
        CHECK(c == doctest::Approx(0.3).epsilon(1e-12));
    }

    SUBCASE("empty list yields no obstacle and infinite clearance") {
        const auto [idx, c] = nearest_obstacle({0, 0, 1}, {});
        CHECK(idx == -1);
        CHECK(std::isinf(c));
        CHECK(c > 0);
    }

    SUBCASE("ties go to the lowest index") {
        std::vector<ObstacleSpec> obstacles(2);
        obstacles[0] = {0.4, 0.0, 0.1, 1.5};
        obstacles[1] = {-0.4, 0.0, 0.1, 1.5};
        const auto [idx, c] = nearest_obstacle({0, 0, 1}, obstacles);
        CHECK(idx == 0);
        CHECK(c == doctest::Approx(0.3).epsilon(1e-12));
    }

    SUBCASE("matches a brute-force scan on random scenes") {
        Rng rng(31);
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 1 + static_cast<int>(rng.uniform_int(6));
            std::vector<ObstacleSpec> obstacles;
            for (int i = 0; i < n; ++i) {
                ObstacleSpec o;
                o.center_x = rng.uniform(-2, 2);
                o.center_y = rng.uniform(-2, 2);
                o.radius = rng.uniform(0.05, 0.5);
                obstacles.push_back(o);
            }
            const Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 3)};
            int best = -1;
            double best_c = kInfiniteClearance;
            for (int i = 0; i < n; ++i) {
                const double c = obstacle_clearance(p, obstacles[i]);
                if (c < best_c) {
                    best_c = c;
                    best = i;
                }
            }
            const auto [idx, c] = nearest_obstacle(p, obstacles);
            CHECK(idx == best);
            CHECK(c == best_c);
        }
    }
}

TEST_CASE("config validation") {
    SUBCASE("drone params") {
        DroneParams p;
        CHECK_NOTHROW(validate(p));
        p.gain_k = 0.0;
        CHECK_THROWS_AS(validate(p), std::invalid_argument);
        p = DroneParams{};
        p.v_max = -1.0;
        CHECK_THROWS_AS(validate(p), std::invalid_argument);
        p = DroneParams{};
        p.body_radius = 0.0;
        CHECK_THROWS_AS(validate(p), std::invalid_argument);
    }

    SUBCASE("obstacles and pads") {
        ObstacleSpec o;
        CHECK_NOTHROW(validate(o));
        o.radius = 0.0;
        CHECK_THROWS_AS(validate(o), std::invalid_argument);
        o = ObstacleSpec{};
        o.height = -1.0;
        CHECK_THROWS_AS(validate(o), std::invalid_argument);

        PadSpec pad;
        CHECK_NOTHROW(validate(pad, 0.5));
        pad.radius = 0.0;
        CHECK_THROWS_AS(validate(pad, 0.5), std::invalid_argument);
        pad = PadSpec{};
        pad.motion = PadMotionKind::LinearBounce;
        pad.vel_x = 0.6;
        CHECK_THROWS_AS(validate(pad, 0.5), std::invalid_argument);
        pad.vel_x = 0.4;
        CHECK_NOTHROW(validate(pad, 0.5));
    }

    SUBCASE("world config") {
        WorldConfig w;
        w.drones.resize(2);
        w.drones[1].id = 1;
        w.pads.resize(2);
        CHECK_NOTHROW(validate(w));
        w.dt = 0.2;
        CHECK_THROWS_AS(validate(w), std::invalid_argument);
        w.dt = 0.02;
        w.pads.resize(1);
        CHECK_THROWS_AS(validate(w), std::invalid_argument);
        w.pads.resize(2);
        w.drones.clear();
        w.pads.clear();
        CHECK_THROWS_AS(validate(w), std::invalid_argument);
    }
}

TEST_CASE("status names") {
    CHECK(std::string(drone_status_name(DroneStatus::Flying)) == "Flying");
    CHECK(std::string(drone_status_name(DroneStatus::Landed)) == "Landed");
    CHECK(std::string(drone_status_name(DroneStatus::Crashed)) == "Crashed");
}
