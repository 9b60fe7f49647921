#include "dtc/mpc_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dtc/qp.hpp"

namespace dtc {

double PwaMfd::value(double n) const {
    double v = kInf;
    for (const auto& pc : pieces) v = std::min(v, pc.slope * n + pc.intercept);
    return v;
}

PwaMfd pwa_fit(const Mfd& mfd, int pieces) {
    if (pieces < 1) throw std::invalid_argument("pwa_fit: need at least 1 piece");
    const double n_max = mfd.n_max;
    auto f = [&](double n) { return mfd.production(n); };

    // Concavity scan; tangent envelopes only over-approximate concave shapes.
    const int grid = 2000;
    const double h = n_max / grid;
    for (int i = 1; i < grid; ++i) {
        const double second = f((i + 1) * h) - 2.0 * f(i * h) + f((i - 1) * h);
        if (second > 1e-8 * mfd.p_max)
            throw std::invalid_argument("pwa_fit: MFD is not concave; concavify first");
    }

    PwaMfd out;
    out.n_max = n_max;
    const double dh = n_max * 1e-6;
    for (int k = 1; k <= pieces; ++k) {
        const double a = (2.0 * k - 1.0) * n_max / (2.0 * pieces);
        const double slope = (f(a + dh) - f(a - dh)) / (2.0 * dh);
        out.pieces.push_back({slope, f(a) - slope * a});
    }

    for (int i = 0; i <= grid; ++i) {
        const double n = i * h;
        if (out.value(n) < f(n) - 1e-9 * std::max(mfd.p_max, 1.0))
            throw std::runtime_error("pwa_fit: envelope dips below the MFD");
    }
    return out;
}

MpcPlan solve_lmpc(const RegionNetwork& net, const SimState& state,
                   const std::vector<Eigen::VectorXd>& q_forecast,
                   const std::vector<PwaMfd>& pwa, const LmpcConfig& cfg, SimplexBasis* warm) {
    const int p = net.num_regions();
    const int nb = static_cast<int>(net.boundaries.size());
    const int Np = cfg.N_p;
    if (Np < 1 || cfg.T_p_hours <= 0.0) throw std::invalid_argument("solve_lmpc: bad config");
    if (static_cast<int>(q_forecast.size()) < Np)
        throw std::invalid_argument("solve_lmpc: demand forecast shorter than horizon");
    if (static_cast<int>(pwa.size()) != p)
        throw std::invalid_argument("solve_lmpc: PWA count mismatch");

    const Eigen::VectorXd n0 = state.accumulations();
    // Accumulation proportions and routing weights frozen at the current state.
    Eigen::VectorXd self_w(p);           // theta_ii * alpha_ii
    Eigen::MatrixXd trans_w(p, p);       // sum_j theta_ij^h alpha_ij per (i,h)
    trans_w.setZero();
    for (int i = 0; i < p; ++i) {
        self_w(i) = n0(i) > 0.0 ? net.theta[i](i, i) * state.n(i, i) / n0(i) : 0.0;
        for (const auto& b : net.boundaries) {
            if (b.from != i) continue;
            double w = 0.0;
            if (n0(i) > 0.0)
                for (int j = 0; j < p; ++j) w += net.theta[i](j, b.to) * state.n(i, j) / n0(i);
            trans_w(i, b.to) = w;
        }
    }

    // Nominal rollout fixing the accumulations at which the PWA bounds are
    // evaluated (nominal green ratios, model dynamics).
    Eigen::MatrixXd n_bar(p, Np + 1);
    n_bar.col(0) = n0;
    const Eigen::VectorXd lam_nom = net.nominal_lambda();
    for (int k = 0; k < Np; ++k) {
        Eigen::VectorXd flow_out(p), comp(p);
        Eigen::MatrixXd ft = Eigen::MatrixXd::Zero(p, p);
        for (int i = 0; i < p; ++i) {
            const double G = std::max(pwa[static_cast<size_t>(i)].value(n_bar(i, k)), 0.0) /
                             net.regions[i].trip_length_km;
            comp(i) = self_w(i) * G;
            for (const auto& b : net.boundaries)
                if (b.from == i)
                    ft(i, b.to) = net.boundary_green(i, b.to, lam_nom) * trans_w(i, b.to) * G;
        }
        for (int i = 0; i < p; ++i) {
            double dn = q_forecast[static_cast<size_t>(k)](i) - comp(i) - ft.row(i).sum() +
                        ft.col(i).sum();
            n_bar(i, k + 1) =
                std::clamp(n_bar(i, k) + cfg.T_p_hours * dn, 0.0, net.regions[i].mfd.n_max);
        }
    }

    const int ns = p + nb;           // flows per step
    const int nf = Np * ns;          // all flow vars
    // One slack per (step, flow group, PWA piece): each flow sits under the
    // production envelope evaluated at the step's own predicted accumulation,
    // which is what couples the horizon to the MFD.
    int n_cap = 0;
    for (int i = 0; i < p; ++i) {
        n_cap += static_cast<int>(pwa[static_cast<size_t>(i)].pieces.size());
        for (const auto& b : net.boundaries)
            if (b.from == i)
                n_cap += static_cast<int>(pwa[static_cast<size_t>(i)].pieces.size());
    }
    const int d = nf + Np * p + Np * n_cap;
    auto fi = [&](int k, int i) { return k * ns + i; };
    auto fb = [&](int k, int b) { return k * ns + p + b; };
    auto ni = [&](int k, int i) { return nf + (k - 1) * p + i; };  // k in 1..Np

    Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(d, kInf);
    for (int k = 0; k < Np; ++k) {
        for (int i = 0; i < p; ++i) c(fi(k, i)) = -net.regions[i].trip_length_km;
        for (int b = 0; b < nb; ++b)
            c(fb(k, b)) = -net.regions[net.boundaries[static_cast<size_t>(b)].from].trip_length_km;
    }
    for (int k = 1; k <= Np; ++k)
        for (int i = 0; i < p; ++i) hi(ni(k, i)) = net.regions[i].mfd.n_max;

    const int n_rows = Np * p + Np * n_cap;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_rows, d);
    Eigen::VectorXd rhs(n_rows);
    int row = 0;
    for (int k = 0; k < Np; ++k)
        for (int i = 0; i < p; ++i, ++row) {
            A(row, ni(k + 1, i)) = 1.0;
            if (k > 0) A(row, ni(k, i)) = -1.0;
            A(row, fi(k, i)) = cfg.T_p_hours;
            for (int b = 0; b < nb; ++b) {
                const auto& bd = net.boundaries[static_cast<size_t>(b)];
                if (bd.from == i) A(row, fb(k, b)) += cfg.T_p_hours;
                if (bd.to == i) A(row, fb(k, b)) -= cfg.T_p_hours;
            }
            rhs(row) = cfg.T_p_hours * q_forecast[static_cast<size_t>(k)](i) +
                       (k == 0 ? n0(i) : 0.0);
        }
    int slack = nf + Np * p;
    for (int k = 0; k < Np; ++k) {
        auto add_cap = [&](int var, int src, double w) {
            const double L = net.regions[src].trip_length_km;
            for (const auto& pc : pwa[static_cast<size_t>(src)].pieces) {
                A(row, var) = 1.0;
                A(row, slack) = 1.0;
                if (k == 0) {
                    rhs(row) = (w / L) * (pc.slope * n0(src) + pc.intercept);
                } else {
                    A(row, ni(k, src)) = -(w / L) * pc.slope;
                    rhs(row) = (w / L) * pc.intercept;
                }
                ++row;
                ++slack;
            }
        };
        for (int i = 0; i < p; ++i) add_cap(fi(k, i), i, self_w(i));
        for (int b = 0; b < nb; ++b) {
            const auto& bd = net.boundaries[static_cast<size_t>(b)];
            add_cap(fb(k, b), bd.from, trans_w(bd.from, bd.to));
        }
    }

    MpcPlan plan;
    plan.f_self.resize(p, Np);
    plan.f_transfer.assign(static_cast<size_t>(Np), Eigen::MatrixXd::Zero(p, p));
    plan.n_pred.resize(p, Np + 1);
    plan.n_pred.col(0) = n0;

    QpSolution sol = solve_lp_simplex(c, A, rhs, lo, hi, warm);
    plan.lp_status = sol.status;
    plan.lp_iterations = sol.iterations;
    Eigen::VectorXd x;
    if (sol.status == QpStatus::Solved) {
        x = sol.x;
    } else {
        // Demand overwhelms every admissible control; fall back to the
        // envelope flows along the nominal rollout and report degraded.
        plan.degraded = true;
        x = Eigen::VectorXd::Zero(d);
        for (int k = 0; k < Np; ++k) {
            for (int i = 0; i < p; ++i) {
                const double G = std::max(pwa[static_cast<size_t>(i)].value(n_bar(i, k)), 0.0) /
                                 net.regions[i].trip_length_km;
                x(fi(k, i)) = self_w(i) * G;
            }
            for (int b = 0; b < nb; ++b) {
                const auto& bd = net.boundaries[static_cast<size_t>(b)];
                const double G =
                    std::max(pwa[static_cast<size_t>(bd.from)].value(n_bar(bd.from, k)), 0.0) /
                    net.regions[bd.from].trip_length_km;
                x(fb(k, b)) = trans_w(bd.from, bd.to) * G;
            }
        }
        for (int k = 1; k <= Np; ++k)
            for (int i = 0; i < p; ++i) x(ni(k, i)) = n_bar(i, k);
    }
    for (int k = 0; k < Np; ++k) {
        for (int i = 0; i < p; ++i) plan.f_self(i, k) = x(fi(k, i));
        for (int b = 0; b < nb; ++b) {
            const auto& bd = net.boundaries[static_cast<size_t>(b)];
            plan.f_transfer[static_cast<size_t>(k)](bd.from, bd.to) = x(fb(k, b));
        }
        for (int i = 0; i < p; ++i) plan.n_pred(i, k + 1) = x(ni(k + 1, i));
    }
    plan.objective = 0.0;
    for (int k = 0; k < Np; ++k) {
        for (int i = 0; i < p; ++i)
            plan.objective += net.regions[i].trip_length_km * plan.f_self(i, k);
        for (const auto& bd : net.boundaries)
            plan.objective += net.regions[bd.from].trip_length_km *
                              plan.f_transfer[static_cast<size_t>(k)](bd.from, bd.to);
    }
    return plan;
}

Eigen::VectorXd plan_to_lights(const MpcPlan& plan, const RegionNetwork& net,
                               const SimState& state) {
    Eigen::VectorXd lam = net.nominal_lambda();
    const Eigen::VectorXd n0 = state.accumulations();
    const int p = net.num_regions();
    for (const auto& b : net.boundaries) {
        const int i = b.from, h = b.to;
        const double atten = 0.5 + 0.5 * net.internal_green(i, lam);
        double w = 0.0;
        if (n0(i) > 0.0)
            for (int j = 0; j < p; ++j) w += net.theta[i](j, h) * state.n(i, j) / n0(i);
        const double denom =
            net.regions[i].mfd.production(n0(i)) * atten / net.regions[i].trip_length_km * w;
        double u;
        if (denom > 0.0)
            u = std::clamp(plan.f_transfer[0](i, h) / denom, 0.0, 1.0);
        else
            u = 0.0;  // resolved below to each light's lower bound
        for (int id : b.lights) {
            const auto& lt = net.lights[static_cast<size_t>(id)];
            lam(id) = denom > 0.0 ? std::clamp(u, lt.lambda_min, lt.lambda_max) : lt.lambda_min;
        }
    }
    return lam;
}

MpcBaselineController::MpcBaselineController(const RegionNetwork& net, LmpcConfig cfg)
    : net_(net), cfg_(cfg) {
    for (const auto& r : net.regions) pwa_.push_back(pwa_fit(r.mfd, cfg_.pieces));
}

Eigen::VectorXd MpcBaselineController::plan_lights(
    const SimState& state, const std::vector<Eigen::VectorXd>& q_forecast) {
    last_ = solve_lmpc(net_, state, q_forecast, pwa_, cfg_, &warm_);
    return plan_to_lights(last_, net_, state);
}

}  // namespace dtc
