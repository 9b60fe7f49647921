#include <doctest.h>

#include <cmath>
#include <vector>

#include "dtc/mpc_baseline.hpp"
#include "support.hpp"

using namespace dtc;
using namespace dtc::test;

TEST_CASE("tangent at the critical accumulation is flat at peak production") {
    const Mfd mfd = Mfd::parabolic(240.0, 160.0);
    // With an odd piece count one interval center lands exactly on n_cr.
    const PwaMfd pwa = pwa_fit(mfd, 5);
    REQUIRE(pwa.pieces.size() == 5);
    const auto& mid = pwa.pieces[2];
    CHECK(std::abs(mid.slope) <= 1e-6 * 240.0 / 160.0);
    CHECK(std::abs(mid.intercept - 240.0) <= 1e-4);
}

TEST_CASE("envelope stays above the curve and is tight at the tangent points") {
    const Mfd mfd = Mfd::parabolic(1440.0, 480.0);
    const PwaMfd pwa = pwa_fit(mfd, 8);
    for (int i = 0; i <= 1000; ++i) {
        const double n = 480.0 * i / 1000.0;
        CHECK(pwa.value(n) >= mfd.production(n) - 1e-6);
    }
    for (int k = 1; k <= 8; ++k) {
        const double a = (2.0 * k - 1.0) * 480.0 / 16.0;
        CHECK(std::abs(pwa.value(a) - mfd.production(a)) <= 1e-4 * 1440.0);
    }
}

TEST_CASE("non-concave production is rejected") {
    Mfd convex;
    convex.coeffs = {0.1, 0.0, 1e-4};  // cubic growth, convex on the range
    convex.p_max = 1000.0;
    convex.n_max = 200.0;
    convex.n_cr = 200.0;
    CHECK_THROWS(pwa_fit(convex, 4));
}

TEST_CASE("single uncongested region saturates its completion flow bound") {
    RegionNetwork net;
    Region r;
    r.id = 0;
    r.network_length_km = 2.0;
    r.trip_length_km = 0.5;
    r.mfd = Mfd::parabolic(300.0, 200.0);
    net.regions = {r};
    net.lights = {{0, 0.0, 1.0, 1.0}};
    net.internal_lights = {{0}};
    net.theta = {Eigen::MatrixXd::Ones(1, 1)};
    net.validate();

    SimState s = SimState::zero(1);
    s.n(0, 0) = 60.0;  // below n_cr = 100
    LmpcConfig cfg;
    cfg.N_p = 1;
    cfg.T_p_hours = 60.0 / 3600.0;
    cfg.pieces = 1;
    const std::vector<PwaMfd> pwa = {pwa_fit(r.mfd, 1)};
    const std::vector<Eigen::VectorXd> q = {Eigen::VectorXd::Zero(1)};
    const MpcPlan plan = solve_lmpc(net, s, q, pwa, cfg);
    REQUIRE_FALSE(plan.degraded);
    const double bound = pwa[0].value(60.0) / r.trip_length_km;  // theta*alpha = 1
    CHECK(plan.f_self(0, 0) == doctest::Approx(bound).epsilon(1e-5));
}

TEST_CASE("linear program beats every feasible point of a coarse grid") {
    const RegionNetwork net = two_region_network();
    SimState s = SimState::zero(2);
    s.n << 30.0, 20.0, 40.0, 120.0;
    LmpcConfig cfg;
    cfg.N_p = 2;
    cfg.T_p_hours = 60.0 / 3600.0;
    cfg.pieces = 6;
    std::vector<PwaMfd> pwa;
    for (const auto& r : net.regions) pwa.push_back(pwa_fit(r.mfd, cfg.pieces));
    std::vector<Eigen::VectorXd> q(2, Eigen::VectorXd::Zero(2));
    q[0] << 300.0, 600.0;
    q[1] << 200.0, 400.0;
    const MpcPlan plan = solve_lmpc(net, s, q, pwa, cfg);
    REQUIRE_FALSE(plan.degraded);

    // Same frozen weights and bounds as the solver uses.
    const Eigen::VectorXd n0 = s.accumulations();
    Eigen::VectorXd self_w(2);
    Eigen::MatrixXd trans_w = Eigen::MatrixXd::Zero(2, 2);
    for (int i = 0; i < 2; ++i) {
        self_w(i) = net.theta[i](i, i) * s.n(i, i) / n0(i);
        for (const auto& b : net.boundaries) {
            if (b.from != i) continue;
            double w = 0.0;
            for (int j = 0; j < 2; ++j) w += net.theta[i](j, b.to) * s.n(i, j) / n0(i);
            trans_w(i, b.to) = w;
        }
    }
    const int grid = 4;
    double best = -1.0;
    int idx[8];
    for (long code = 0; code < 390625L /* 5^8 */; ++code) {
        long c = code;
        for (int v = 0; v < 8; ++v) {
            idx[v] = static_cast<int>(c % (grid + 1));
            c /= grid + 1;
        }
        // Roll the aggregated dynamics with flows at grid fractions of the
        // envelope evaluated at the rolled accumulation, mirroring the
        // program's coupled capacity rows; reject box violations.
        Eigen::Vector2d n = n0;
        bool feasible = true;
        double obj = 0.0;
        for (int k = 0; k < 2 && feasible; ++k) {
            double cap[4], f[4];
            for (int i = 0; i < 2; ++i)
                cap[i] = self_w(i) * std::max(pwa[static_cast<size_t>(i)].value(n(i)), 0.0) /
                         net.regions[i].trip_length_km;
            for (int b = 0; b < 2; ++b) {
                const auto& bd = net.boundaries[static_cast<size_t>(b)];
                cap[2 + b] = trans_w(bd.from, bd.to) *
                             std::max(pwa[static_cast<size_t>(bd.from)].value(n(bd.from)), 0.0) /
                             net.regions[bd.from].trip_length_km;
            }
            for (int v = 0; v < 4; ++v) f[v] = cap[v] * idx[k * 4 + v] / grid;
            Eigen::Vector2d dn;
            for (int i = 0; i < 2; ++i) {
                dn(i) = q[static_cast<size_t>(k)](i) - f[i];
                obj += net.regions[i].trip_length_km * f[i];
            }
            for (int b = 0; b < 2; ++b) {
                const auto& bd = net.boundaries[static_cast<size_t>(b)];
                dn(bd.from) -= f[2 + b];
                dn(bd.to) += f[2 + b];
                obj += net.regions[bd.from].trip_length_km * f[2 + b];
            }
            n += cfg.T_p_hours * dn;
            for (int i = 0; i < 2; ++i)
                if (n(i) < -1e-9 || n(i) > net.regions[i].mfd.n_max + 1e-9) feasible = false;
        }
        if (feasible) best = std::max(best, obj);
    }
    REQUIRE(best > 0.0);
    CHECK(plan.objective >= best - 1e-6 * best);
}

TEST_CASE("plan flows invert to green ratios inside the light bounds") {
    const RegionNetwork net = two_region_network();
    SimState s = SimState::zero(2);
    s.n << 30.0, 20.0, 40.0, 120.0;
    MpcBaselineController ctrl(net, {2, 60.0 / 3600.0, 6});
    std::vector<Eigen::VectorXd> q(2, Eigen::VectorXd::Zero(2));
    q[0] << 300.0, 600.0;
    q[1] << 200.0, 400.0;
    const Eigen::VectorXd lam = ctrl.plan_lights(s, q);
    REQUIRE(lam.size() == 4);
    for (const auto& lt : net.lights) {
        CHECK(lam(lt.id) >= lt.lambda_min - 1e-12);
        CHECK(lam(lt.id) <= lt.lambda_max + 1e-12);
    }
    // Internal lights are not repositioned by the baseline.
    CHECK(lam(2) == net.lights[2].nominal);
    CHECK(lam(3) == net.lights[3].nominal);
}

TEST_CASE("empty region yields zero transfer weights instead of dividing "
          "by zero") {
    const RegionNetwork net = two_region_network();
    SimState s = SimState::zero(2);
    std::vector<PwaMfd> pwa;
    for (const auto& r : net.regions) pwa.push_back(pwa_fit(r.mfd, 4));
    std::vector<Eigen::VectorXd> q(1, Eigen::VectorXd::Zero(2));
    const MpcPlan plan = solve_lmpc(net, s, q, pwa, {1, 60.0 / 3600.0, 4});
    CHECK(plan.f_self.cwiseAbs().maxCoeff() <= 1e-5);
}
