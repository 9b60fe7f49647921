#pragma once

// Shared test helpers: random system generation, persistently exciting
// inputs, and independent brute-force oracles the solvers are checked
// against. Everything here is deliberately naive and slow.

#include <Eigen/Dense>
#include <random>
#include <stdexcept>
#include <vector>

#include "dtc/behavioral.hpp"
#include "dtc/qp.hpp"
#include "dtc/sim.hpp"
#include "dtc/trajectory.hpp"

namespace dtc::test {

/// Small two-region network: an inner region 0 ringed by an outer region 1,
/// one metered boundary per direction plus one internal light per region.
inline RegionNetwork two_region_network() {
    RegionNetwork net;
    Region inner;
    inner.id = 0;
    inner.network_length_km = 1.6;
    inner.trip_length_km = 0.4;
    inner.mfd = Mfd::parabolic(240.0, 160.0);
    inner.sensors = 4;
    inner.sensor_noise_rel = 0.0;
    Region outer;
    outer.id = 1;
    outer.network_length_km = 4.8;
    outer.trip_length_km = 1.0;
    outer.mfd = Mfd::parabolic(1440.0, 480.0);
    outer.sensors = 4;
    outer.sensor_noise_rel = 0.0;
    net.regions = {inner, outer};
    net.lights = {{0, 0.1, 1.0, 0.5}, {1, 0.1, 1.0, 0.5}, {2, 0.1, 1.0, 0.5},
                  {3, 0.1, 1.0, 0.5}};
    net.boundaries = {{0, 1, {0}}, {1, 0, {1}}};
    net.internal_lights = {{2}, {3}};
    Eigen::MatrixXd t0(2, 2), t1(2, 2);
    t0 << 1.0, 0.0,   // in region 0, destination 0: complete internally
        0.0, 1.0;     // destination 1: head for the boundary to 1
    t1 << 1.0, 0.0,   // in region 1, destination 0: head for the boundary to 0
        0.0, 1.0;     // destination 1: complete internally
    net.theta = {t0, t1};
    net.validate();
    return net;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                                     double amp = 1.0) {
    std::uniform_real_distribution<double> d(-amp, amp);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
    return m;
}

/// Random discrete-time system, resampled until controllable and
/// observable, with spectral radius scaled to 0.85.
inline LtiSystem random_system(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m,
                               Eigen::Index p) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        LtiSystem s;
        s.A = random_matrix(rng, n, n);
        if (n > 0) {
            const double sr = s.A.eigenvalues().cwiseAbs().maxCoeff();
            if (sr > 1e-12) s.A *= 0.85 / sr;
        }
        s.B = random_matrix(rng, n, m);
        s.C = random_matrix(rng, p, n);
        s.D = random_matrix(rng, p, m);
        if (n == 0) return s;

        Eigen::MatrixXd ctrb(n, n * m), obsv(n * p, n);
        Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(n, n);
        for (Eigen::Index k = 0; k < n; ++k) {
            ctrb.middleCols(k * m, m) = Ak * s.B;
            obsv.middleRows(k * p, p) = s.C * Ak;
            Ak = s.A * Ak;
        }
        if (numeric_rank(ctrb) == n && numeric_rank(obsv) == n) return s;
    }
    throw std::runtime_error("random_system: could not draw a minimal realization");
}

inline Trajectory random_input(std::mt19937_64& rng, Eigen::Index m, Eigen::Index T,
                               double amp = 1.0) {
    return Trajectory(random_matrix(rng, m, T, amp));
}

/// y_f = Phi x0 + Gamma u_f over T_f steps, output and input aligned at
/// the same sample index (y(k) = C x(k) + D u(k)).
struct Condensed {
    Eigen::MatrixXd Phi;    // (p T_f) x n
    Eigen::MatrixXd Gamma;  // (p T_f) x (m T_f)
};

inline Condensed condense(const LtiSystem& s, Eigen::Index T_f) {
    const Eigen::Index n = s.order(), m = s.inputs(), p = s.outputs();
    Condensed c;
    c.Phi.resize(p * T_f, n);
    c.Gamma = Eigen::MatrixXd::Zero(p * T_f, m * T_f);
    Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(n, n);
    std::vector<Eigen::MatrixXd> markov;  // markov[k] = C A^(k-1) B, markov[0] = D
    markov.push_back(s.D);
    for (Eigen::Index k = 0; k < T_f; ++k) {
        c.Phi.middleRows(k * p, p) = s.C * Ak;
        markov.push_back(s.C * Ak * s.B);
        Ak = s.A * Ak;
    }
    for (Eigen::Index i = 0; i < T_f; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            c.Gamma.block(i * p, j * m, p, m) = markov[static_cast<size_t>(i - j)];
    return c;
}

/// Current state reconstructed from the last T_ini input/output pairs;
/// unique whenever T_ini >= lag.
inline Eigen::VectorXd estimate_state(const LtiSystem& s, const Eigen::VectorXd& u_ini,
                                      const Eigen::VectorXd& y_ini, Eigen::Index T_ini) {
    const Eigen::Index n = s.order(), m = s.inputs();
    const Condensed c = condense(s, T_ini);
    const Eigen::VectorXd x0 =
        c.Phi.completeOrthogonalDecomposition().solve(y_ini - c.Gamma * u_ini);
    Eigen::VectorXd x = x0;
    for (Eigen::Index k = 0; k < T_ini; ++k) x = s.A * x + s.B * u_ini.segment(k * m, m);
    return x;
}

/// Unconstrained condensed tracking MPC: minimizes the stage-cost sum
/// with weights Q (output) and R > 0 (input) from state x over T_f steps.
/// Returns the stacked optimal input, m*T_f.
inline Eigen::VectorXd mpc_oracle(const LtiSystem& s, const Eigen::VectorXd& x,
                                  const Eigen::MatrixXd& y_ref, const Eigen::MatrixXd& u_ref,
                                  const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                  Eigen::Index T_f) {
    const Eigen::Index m = s.inputs(), p = s.outputs();
    const Condensed c = condense(s, T_f);
    Eigen::MatrixXd Qb = Eigen::MatrixXd::Zero(p * T_f, p * T_f);
    Eigen::MatrixXd Rb = Eigen::MatrixXd::Zero(m * T_f, m * T_f);
    Eigen::VectorXd yr(p * T_f), ur(m * T_f);
    for (Eigen::Index k = 0; k < T_f; ++k) {
        Qb.block(k * p, k * p, p, p) = Q;
        Rb.block(k * m, k * m, m, m) = R;
        yr.segment(k * p, p) = y_ref.col(k);
        ur.segment(k * m, m) = u_ref.col(k);
    }
    const Eigen::MatrixXd H = c.Gamma.transpose() * Qb * c.Gamma + Rb;
    const Eigen::VectorXd rhs = c.Gamma.transpose() * Qb * (yr - c.Phi * x) + Rb * ur;
    return H.ldlt().solve(rhs);
}

struct BruteResult {
    bool feasible = false;
    double objective = 0.0;
    Eigen::VectorXd x;
};

/// Active-set enumeration for box + equality QPs with strictly convex P:
/// every pattern of {free, at lower, at upper} is tried, the restricted
/// equality-constrained problem solved by a rank-revealing KKT solve, and
/// the best bound-feasible stationary point returned.
inline BruteResult qp_brute_force(const QpProblem& prob, double tol = 1e-7) {
    const Eigen::Index d = prob.dim();
    const Eigen::Index e = prob.A_eq.rows();
    BruteResult best;
    std::vector<int> pattern(static_cast<size_t>(d), 0);  // 0 free, 1 lower, 2 upper
    while (true) {
        bool valid = true;
        std::vector<Eigen::Index> free_idx;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
        for (Eigen::Index i = 0; i < d && valid; ++i) {
            if (pattern[static_cast<size_t>(i)] == 0) {
                free_idx.push_back(i);
            } else {
                const double v = pattern[static_cast<size_t>(i)] == 1 ? prob.lower(i)
                                                                      : prob.upper(i);
                if (!std::isfinite(v)) valid = false;
                x(i) = v;
            }
        }
        if (valid) {
            const Eigen::Index nf = static_cast<Eigen::Index>(free_idx.size());
            Eigen::MatrixXd Pff(nf, nf), Af(e, nf);
            Eigen::VectorXd qf(nf);
            for (Eigen::Index a = 0; a < nf; ++a) {
                qf(a) = prob.q(free_idx[static_cast<size_t>(a)]) +
                        prob.P.row(free_idx[static_cast<size_t>(a)]).dot(x);
                Af.col(a) = prob.A_eq.col(free_idx[static_cast<size_t>(a)]);
                for (Eigen::Index b = 0; b < nf; ++b)
                    Pff(a, b) = prob.P(free_idx[static_cast<size_t>(a)],
                                       free_idx[static_cast<size_t>(b)]);
            }
            Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nf + e, nf + e);
            K.topLeftCorner(nf, nf) = Pff;
            K.topRightCorner(nf, e) = Af.transpose();
            K.bottomLeftCorner(e, nf) = Af;
            Eigen::VectorXd rhs(nf + e);
            rhs.head(nf) = -qf;
            rhs.tail(e) = prob.b_eq - prob.A_eq * x;
            const Eigen::VectorXd sol =
                rhs.size() == 0 ? rhs : K.completeOrthogonalDecomposition().solve(rhs).eval();
            const double scale = rhs.size() == 0 ? 1.0 : std::max(1.0, rhs.cwiseAbs().maxCoeff());
            const double kkt_res =
                rhs.size() == 0 ? 0.0 : (K * sol - rhs).cwiseAbs().maxCoeff();
            if (kkt_res <= tol * scale) {
                bool in_bounds = true;
                for (Eigen::Index a = 0; a < nf; ++a) {
                    const Eigen::Index i = free_idx[static_cast<size_t>(a)];
                    x(i) = sol(a);
                    if (x(i) < prob.lower(i) - tol || x(i) > prob.upper(i) + tol)
                        in_bounds = false;
                }
                if (in_bounds) {
                    const double obj = prob.objective_at(x);
                    if (!best.feasible || obj < best.objective) {
                        best.feasible = true;
                        best.objective = obj;
                        best.x = x;
                    }
                }
            }
        }
        // Next base-3 pattern.
        Eigen::Index i = 0;
        for (; i < d; ++i) {
            if (++pattern[static_cast<size_t>(i)] < 3) break;
            pattern[static_cast<size_t>(i)] = 0;
        }
        if (i == d) break;
    }
    return best;
}

/// Vertex enumeration for box + equality LPs: patterns whose free columns
/// are uniquely determined by the equalities are the vertex candidates.
inline BruteResult lp_brute_force(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_eq,
                                  const Eigen::VectorXd& b_eq, const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper, double tol = 1e-7) {
    const Eigen::Index d = c.size(), e = A_eq.rows();
    BruteResult best;
    std::vector<int> pattern(static_cast<size_t>(d), 0);
    while (true) {
        bool valid = true;
        std::vector<Eigen::Index> free_idx;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
        for (Eigen::Index i = 0; i < d && valid; ++i) {
            if (pattern[static_cast<size_t>(i)] == 0) {
                free_idx.push_back(i);
            } else {
                const double v = pattern[static_cast<size_t>(i)] == 1 ? lower(i) : upper(i);
                if (!std::isfinite(v)) valid = false;
                x(i) = v;
            }
        }
        const Eigen::Index nf = static_cast<Eigen::Index>(free_idx.size());
        if (valid) {
            Eigen::MatrixXd Af(e, nf);
            for (Eigen::Index a = 0; a < nf; ++a)
                Af.col(a) = A_eq.col(free_idx[static_cast<size_t>(a)]);
            if (nf == 0 || numeric_rank(Af) == nf) {
                const Eigen::VectorXd rhs = b_eq - A_eq * x;
                Eigen::VectorXd xf = Eigen::VectorXd::Zero(nf);
                if (nf > 0 && e > 0) xf = Af.completeOrthogonalDecomposition().solve(rhs);
                const double scale =
                    e == 0 ? 1.0 : std::max(1.0, rhs.cwiseAbs().maxCoeff());
                const double eq_res = e == 0 ? 0.0 : (Af * xf - rhs).cwiseAbs().maxCoeff();
                if (eq_res <= tol * scale) {
                    bool in_bounds = true;
                    for (Eigen::Index a = 0; a < nf; ++a) {
                        const Eigen::Index i = free_idx[static_cast<size_t>(a)];
                        x(i) = xf(a);
                        if (x(i) < lower(i) - tol || x(i) > upper(i) + tol) in_bounds = false;
                    }
                    if (in_bounds) {
                        const double obj = c.dot(x);
                        if (!best.feasible || obj < best.objective) {
                            best.feasible = true;
                            best.objective = obj;
                            best.x = x;
                        }
                    }
                }
            }
        }
        Eigen::Index i = 0;
        for (; i < d; ++i) {
            if (++pattern[static_cast<size_t>(i)] < 3) break;
            pattern[static_cast<size_t>(i)] = 0;
        }
        if (i == d) break;
    }
    return best;
}

}  // namespace dtc::test
