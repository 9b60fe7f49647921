#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dtc/qp.hpp"

namespace dtc {

namespace {

enum class VarState { Basic, AtLower, AtUpper, FreeZero };

struct Tableau {
    Eigen::MatrixXd A;   // m x N, artificials included
    Eigen::VectorXd c, lo, hi;
    std::vector<int> basis;        // size m
    std::vector<VarState> state;   // size N
    Eigen::VectorXd val;           // nonbasic values; basic entries refreshed on demand
    Eigen::MatrixXd Binv;
    int updates_since_factor = 0;

    void refactorize() {
        const int m = static_cast<int>(basis.size());
        Eigen::MatrixXd B(m, m);
        for (int i = 0; i < m; ++i) B.col(i) = A.col(basis[static_cast<size_t>(i)]);
        Binv = Eigen::PartialPivLU<Eigen::MatrixXd>(B).inverse();
        updates_since_factor = 0;
    }

    // Product-form update after column `enter` replaces basis slot `leave`;
    // `w` is Binv * A.col(enter).
    void update_inverse(int leave, const Eigen::VectorXd& w) {
        if (++updates_since_factor >= 100) {
            refactorize();
            return;
        }
        const int m = static_cast<int>(basis.size());
        Binv.row(leave) /= w(leave);
        for (int i = 0; i < m; ++i)
            if (i != leave) Binv.row(i) -= w(i) * Binv.row(leave);
    }

    Eigen::VectorXd basic_values(const Eigen::VectorXd& b) const {
        Eigen::VectorXd r = b;
        for (int j = 0; j < A.cols(); ++j)
            if (state[static_cast<size_t>(j)] != VarState::Basic && val(j) != 0.0)
                r -= A.col(j) * val(j);
        return Binv * r;
    }
};

// Bounded-variable primal simplex on the tableau; returns Solved, Unbounded,
// or MaxIterations. Dantzig pricing with a Bland fallback against cycling.
QpStatus simplex_iterate(Tableau& t, const Eigen::VectorXd& b, int max_pivots, int& pivots) {
    const int m = static_cast<int>(t.basis.size());
    const int N = static_cast<int>(t.A.cols());
    const double cost_tol = 1e-9 * (1.0 + (N > 0 ? t.c.cwiseAbs().maxCoeff() : 0.0));
    const double piv_tol = 1e-10;
    const int bland_after = std::max(200, 5 * (N + m));
    const int start_pivots = pivots;

    Eigen::VectorXd xB = t.basic_values(b);

    for (; pivots < max_pivots; ++pivots) {
        Eigen::VectorXd cB(m);
        for (int i = 0; i < m; ++i) cB(i) = t.c(t.basis[static_cast<size_t>(i)]);
        Eigen::VectorXd y = t.Binv.transpose() * cB;

        const bool bland = pivots - start_pivots >= bland_after;
        int enter = -1;
        double enter_sign = 0.0, best = cost_tol;
        for (int j = 0; j < N; ++j) {
            const VarState s = t.state[static_cast<size_t>(j)];
            if (s == VarState::Basic) continue;
            if (t.lo(j) == t.hi(j) && std::isfinite(t.lo(j))) continue;  // pinned
            const double d = t.c(j) - y.dot(t.A.col(j));
            double sign = 0.0;
            if ((s == VarState::AtLower || s == VarState::FreeZero) && d < -best) sign = 1.0;
            if ((s == VarState::AtUpper || s == VarState::FreeZero) && d > best) sign = -1.0;
            if (sign != 0.0) {
                enter = j;
                enter_sign = sign;
                if (bland) break;
                best = std::abs(d);
            }
        }
        if (enter < 0) return QpStatus::Solved;

        Eigen::VectorXd w = t.Binv * t.A.col(enter);

        // Ratio test: how far the entering variable can move before a basic
        // variable, or its own opposite bound, becomes binding.
        double t_max = kInf;
        int leave = -1;
        double leave_bound = 0.0;
        for (int i = 0; i < m; ++i) {
            const int bi = t.basis[static_cast<size_t>(i)];
            const double delta = enter_sign * w(i);  // xB(i) moves by -delta * step
            if (delta > piv_tol) {
                if (std::isfinite(t.lo(bi))) {
                    const double step = (xB(i) - t.lo(bi)) / delta;
                    if (step < t_max - piv_tol ||
                        (step < t_max + piv_tol &&
                         (leave < 0 || bi < t.basis[static_cast<size_t>(leave)]))) {
                        t_max = std::max(step, 0.0);
                        leave = i;
                        leave_bound = t.lo(bi);
                    }
                }
            } else if (delta < -piv_tol) {
                if (std::isfinite(t.hi(bi))) {
                    const double step = (t.hi(bi) - xB(i)) / (-delta);
                    if (step < t_max - piv_tol ||
                        (step < t_max + piv_tol &&
                         (leave < 0 || bi < t.basis[static_cast<size_t>(leave)]))) {
                        t_max = std::max(step, 0.0);
                        leave = i;
                        leave_bound = t.hi(bi);
                    }
                }
            }
        }
        double flip = kInf;
        if (std::isfinite(t.lo(enter)) && std::isfinite(t.hi(enter)))
            flip = t.hi(enter) - t.lo(enter);
        if (flip <= t_max + piv_tol && flip < kInf) {
            // Bound flip; the basis is unchanged.
            t.state[static_cast<size_t>(enter)] =
                enter_sign > 0.0 ? VarState::AtUpper : VarState::AtLower;
            t.val(enter) = enter_sign > 0.0 ? t.hi(enter) : t.lo(enter);
            xB = t.basic_values(b);
            continue;
        }
        if (leave < 0) return QpStatus::Unbounded;

        const int out = t.basis[static_cast<size_t>(leave)];
        t.state[static_cast<size_t>(out)] =
            leave_bound == t.lo(out) ? VarState::AtLower : VarState::AtUpper;
        if (!std::isfinite(leave_bound)) t.state[static_cast<size_t>(out)] = VarState::FreeZero;
        t.val(out) = std::isfinite(leave_bound) ? leave_bound : 0.0;
        t.basis[static_cast<size_t>(leave)] = enter;
        t.state[static_cast<size_t>(enter)] = VarState::Basic;
        t.val(enter) = 0.0;
        t.update_inverse(leave, w);
        xB = t.basic_values(b);
    }
    return QpStatus::MaxIterations;
}

VarState decode_state(int s) {
    switch (s) {
        case 0: return VarState::Basic;
        case 1: return VarState::AtLower;
        case 2: return VarState::AtUpper;
        default: return VarState::FreeZero;
    }
}

int encode_state(VarState s) {
    switch (s) {
        case VarState::Basic: return 0;
        case VarState::AtLower: return 1;
        case VarState::AtUpper: return 2;
        default: return 3;
    }
}

}  // namespace

QpSolution solve_lp_simplex(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_eq,
                            const Eigen::VectorXd& b_eq, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, SimplexBasis* warm) {
    const int n = static_cast<int>(c.size());
    const int m = static_cast<int>(A_eq.rows());
    const double bmax = m > 0 ? b_eq.cwiseAbs().maxCoeff() : 0.0;
    QpSolution sol;
    sol.status = QpStatus::Infeasible;

    Tableau t;
    t.A.resize(m, n + m);
    t.A.leftCols(n) = A_eq;
    t.A.rightCols(m).setZero();
    t.c.setZero(n + m);
    t.lo.resize(n + m);
    t.hi.resize(n + m);
    t.lo.head(n) = lower;
    t.hi.head(n) = upper;
    t.lo.tail(m).setZero();
    t.hi.tail(m).setConstant(kInf);
    t.state.assign(static_cast<size_t>(n + m), VarState::AtLower);
    t.val.setZero(n + m);
    for (int j = 0; j < n; ++j) {
        if (std::isfinite(lower(j)))
            t.val(j) = lower(j);
        else if (std::isfinite(upper(j))) {
            t.val(j) = upper(j);
            t.state[static_cast<size_t>(j)] = VarState::AtUpper;
        } else {
            t.state[static_cast<size_t>(j)] = VarState::FreeZero;
        }
    }

    int pivots = 0;
    const int max_pivots = 200 * (n + m + 10);
    const double feas_tol = 1e-7 * (1.0 + bmax);
    bool warm_feasible = false;

    // A warm basis from a structurally identical program usually stays
    // feasible and skips phase 1 entirely.
    if (warm && static_cast<int>(warm->basis.size()) == m &&
        static_cast<int>(warm->state.size()) == n + m) {
        t.basis = warm->basis;
        for (int j = 0; j < n + m; ++j)
            t.state[static_cast<size_t>(j)] = decode_state(warm->state[static_cast<size_t>(j)]);
        for (int j = 0; j < n + m; ++j) {
            if (t.state[static_cast<size_t>(j)] == VarState::Basic) {
                t.val(j) = 0.0;
            } else if (t.state[static_cast<size_t>(j)] == VarState::AtLower) {
                t.val(j) = std::isfinite(t.lo(j)) ? t.lo(j) : 0.0;
            } else if (t.state[static_cast<size_t>(j)] == VarState::AtUpper) {
                t.val(j) = std::isfinite(t.hi(j)) ? t.hi(j) : 0.0;
            } else {
                t.val(j) = 0.0;
            }
        }
        for (int i = 0; i < m; ++i) t.A(i, n + i) = 1.0;  // artificial columns, pinned
        for (int j = n; j < n + m; ++j) {
            t.lo(j) = 0.0;
            t.hi(j) = 0.0;
            if (t.state[static_cast<size_t>(j)] != VarState::Basic) {
                t.val(j) = 0.0;
                t.state[static_cast<size_t>(j)] = VarState::AtLower;
            }
        }
        t.refactorize();
        if (t.Binv.allFinite()) {
            Eigen::VectorXd xB = t.basic_values(b_eq);
            warm_feasible = true;
            for (int i = 0; i < m && warm_feasible; ++i) {
                const int bi = t.basis[static_cast<size_t>(i)];
                if (xB(i) < t.lo(bi) - feas_tol || xB(i) > t.hi(bi) + feas_tol)
                    warm_feasible = false;
            }
        }
        if (!warm_feasible) {
            t.basis.clear();
            t.state.assign(static_cast<size_t>(n + m), VarState::AtLower);
            t.val.setZero(n + m);
            t.lo.tail(m).setZero();
            t.hi.tail(m).setConstant(kInf);
            t.A.rightCols(m).setZero();
            for (int j = 0; j < n; ++j) {
                if (std::isfinite(lower(j)))
                    t.val(j) = lower(j);
                else if (std::isfinite(upper(j))) {
                    t.val(j) = upper(j);
                    t.state[static_cast<size_t>(j)] = VarState::AtUpper;
                } else {
                    t.state[static_cast<size_t>(j)] = VarState::FreeZero;
                }
            }
        }
    }

    if (!warm_feasible) {
        // Phase 1: artificial columns signed so they start feasible at
        // |residual|; drive their sum to zero.
        Eigen::VectorXd r = b_eq - t.A.leftCols(n) * t.val.head(n);
        for (int i = 0; i < m; ++i) {
            t.A(i, n + i) = r(i) >= 0.0 ? 1.0 : -1.0;
            t.c(n + i) = 1.0;
            t.basis.push_back(n + i);
            t.state[static_cast<size_t>(n + i)] = VarState::Basic;
        }
        t.refactorize();
        QpStatus st = simplex_iterate(t, b_eq, max_pivots, pivots);
        sol.iterations = pivots;
        if (st == QpStatus::MaxIterations) {
            sol.status = st;
            return sol;
        }
        Eigen::VectorXd xB = t.basic_values(b_eq);
        double art = 0.0;
        for (int i = 0; i < m; ++i)
            if (t.basis[static_cast<size_t>(i)] >= n) art += std::abs(xB(i));
        for (int j = n; j < n + m; ++j)
            if (t.state[static_cast<size_t>(j)] != VarState::Basic) art += std::abs(t.val(j));
        if (art > feas_tol) {
            sol.status = QpStatus::Infeasible;
            return sol;
        }
        // Pin artificials for phase 2.
        for (int j = n; j < n + m; ++j) {
            t.lo(j) = 0.0;
            t.hi(j) = 0.0;
            if (t.state[static_cast<size_t>(j)] != VarState::Basic) {
                t.state[static_cast<size_t>(j)] = VarState::AtLower;
                t.val(j) = 0.0;
            }
        }
    }

    // Phase 2: real costs.
    t.c.head(n) = c;
    t.c.tail(m).setZero();
    QpStatus st = simplex_iterate(t, b_eq, max_pivots, pivots);
    sol.iterations = pivots;
    if (st != QpStatus::Solved) {
        sol.status = st;
        return sol;
    }

    Eigen::VectorXd xB = t.basic_values(b_eq);
    Eigen::VectorXd x = t.val.head(n);
    for (int i = 0; i < m; ++i) {
        const int bi = t.basis[static_cast<size_t>(i)];
        if (bi < n) x(bi) = xB(i);
    }
    sol.x = x;
    sol.objective = c.dot(x);
    sol.primal_residual = m > 0 ? (A_eq * x - b_eq).cwiseAbs().maxCoeff() : 0.0;
    sol.dual_residual = 0.0;
    sol.status = QpStatus::Solved;
    sol.y.setZero(m + n);
    sol.z.setZero(m + n);

    if (warm) {
        warm->basis = t.basis;
        warm->state.resize(static_cast<size_t>(n + m));
        for (int j = 0; j < n + m; ++j)
            warm->state[static_cast<size_t>(j)] = encode_state(t.state[static_cast<size_t>(j)]);
    }
    return sol;
}

}  // namespace dtc
