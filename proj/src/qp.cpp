#include "dtc/qp.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dtc {

namespace {

double soft_threshold(double v, double k) {
    if (v > k) return v - k;
    if (v < -k) return v + k;
    return 0.0;
}

bool has_finite_bounds(const QpProblem& p) {
    for (Eigen::Index i = 0; i < p.dim(); ++i)
        if (std::isfinite(p.lower(i)) || std::isfinite(p.upper(i))) return true;
    return false;
}

}  // namespace

void QpProblem::validate() const {
    const Eigen::Index d = dim();
    if (P.rows() != d || P.cols() != d) throw std::invalid_argument("QpProblem: P shape");
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, P.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("QpProblem: P not symmetric");
    if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != d))
        throw std::invalid_argument("QpProblem: equality shape");
    if (lower.size() != d || upper.size() != d)
        throw std::invalid_argument("QpProblem: bound size");
    for (Eigen::Index i = 0; i < d; ++i)
        if (lower(i) > upper(i)) throw std::invalid_argument("QpProblem: lower > upper");
    if (l1_weight < 0.0) throw std::invalid_argument("QpProblem: negative l1 weight");
    if (l1_weight > 0.0 && (l1_begin < 0 || l1_begin + l1_count > d))
        throw std::invalid_argument("QpProblem: l1 range out of bounds");
}

double QpProblem::objective_at(const Eigen::VectorXd& x) const {
    double obj = 0.5 * x.dot(P * x) + q.dot(x);
    if (l1_weight > 0.0) obj += l1_weight * x.segment(l1_begin, l1_count).cwiseAbs().sum();
    return obj;
}

void QpSolver::factorize(const QpProblem& prob, double rho, double sigma) {
    const Eigen::Index d = prob.dim();
    const Eigen::Index e = prob.A_eq.rows();
    const Eigen::Index rows = e + d + (prob.l1_weight > 0.0 ? prob.l1_count : 0);
    if (cached_dim_ != d || cached_rows_ != rows) {
        AtA_ = Eigen::MatrixXd::Identity(d, d);  // box rows
        if (e > 0) AtA_ += prob.A_eq.transpose() * prob.A_eq;
        if (prob.l1_weight > 0.0)
            AtA_.diagonal().segment(prob.l1_begin, prob.l1_count).array() += 1.0;
        cached_dim_ = d;
        cached_rows_ = rows;
        cached_rho_ = -1.0;
    }
    if (cached_rho_ != rho) {
        Eigen::MatrixXd K = prob.P + rho * AtA_;
        K.diagonal().array() += sigma;
        kkt_.compute(K);
        cached_rho_ = rho;
    }
}

QpSolution QpSolver::solve(const QpProblem& prob, const QpSettings& settings,
                           const QpSolution* warm_start, bool structure_unchanged) {
    prob.validate();
    const Eigen::Index d = prob.dim();
    const Eigen::Index e = prob.A_eq.rows();
    const bool l1 = prob.l1_weight > 0.0;
    const Eigen::Index nl1 = l1 ? prob.l1_count : 0;
    const Eigen::Index rows = e + d + nl1;

    QpSolution sol;

    // Equality-only problems have a direct KKT solution; the minimum-norm
    // least-squares solve also covers a singular P (flat directions).
    if (!l1 && !has_finite_bounds(prob)) {
        Eigen::MatrixXd K(d + e, d + e);
        K.setZero();
        K.topLeftCorner(d, d) = prob.P;
        if (e > 0) {
            K.topRightCorner(d, e) = prob.A_eq.transpose();
            K.bottomLeftCorner(e, d) = prob.A_eq;
        }
        Eigen::VectorXd rhs(d + e);
        rhs.head(d) = -prob.q;
        rhs.tail(e) = prob.b_eq;
        Eigen::VectorXd xv = K.completeOrthogonalDecomposition().solve(rhs);
        sol.x = xv.head(d);
        Eigen::VectorXd nu = xv.tail(e);
        sol.primal_residual = e > 0 ? (prob.A_eq * sol.x - prob.b_eq).cwiseAbs().maxCoeff() : 0.0;
        Eigen::VectorXd stat = prob.P * sol.x + prob.q;
        if (e > 0) stat += prob.A_eq.transpose() * nu;
        sol.dual_residual = stat.cwiseAbs().maxCoeff();
        sol.objective = prob.objective_at(sol.x);
        sol.iterations = 1;
        sol.y.setZero(rows);
        sol.y.head(e) = nu;
        sol.z.setZero(rows);
        sol.status = (sol.primal_residual <= settings.tol_p && sol.dual_residual <= settings.tol_d)
                         ? QpStatus::Solved
                         : QpStatus::Infeasible;
        return sol;
    }

    if (!structure_unchanged) cached_dim_ = -1;
    double rho = settings.rho;
    if (structure_unchanged && cached_rho_ > 0.0) rho = cached_rho_;
    factorize(prob, rho, settings.sigma);

    Eigen::VectorXd x, y, z;
    if (warm_start && warm_start->x.size() == d && warm_start->y.size() == rows &&
        warm_start->z.size() == rows) {
        x = warm_start->x;
        y = warm_start->y;
        z = warm_start->z;
    } else {
        x = Eigen::VectorXd::Zero(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            if (std::isfinite(prob.lower(i)) && x(i) < prob.lower(i)) x(i) = prob.lower(i);
            if (std::isfinite(prob.upper(i)) && x(i) > prob.upper(i)) x(i) = prob.upper(i);
        }
        y = Eigen::VectorXd::Zero(rows);
        z = Eigen::VectorXd::Zero(rows);
        z.head(e) = prob.b_eq;
        z.segment(e, d) = x;
        if (l1) z.tail(nl1) = x.segment(prob.l1_begin, prob.l1_count);
    }

    auto A_mul = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd r(rows);
        if (e > 0) r.head(e) = prob.A_eq * v;
        r.segment(e, d) = v;
        if (l1) r.tail(nl1) = v.segment(prob.l1_begin, prob.l1_count);
        return r;
    };
    auto At_mul = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd r = v.segment(e, d);
        if (e > 0) r += prob.A_eq.transpose() * v.head(e);
        if (l1) r.segment(prob.l1_begin, prob.l1_count) += v.tail(nl1);
        return r;
    };
    auto prox = [&](Eigen::VectorXd v, double r) {
        v.head(e) = prob.b_eq;
        for (Eigen::Index i = 0; i < d; ++i)
            v(e + i) = std::clamp(v(e + i), prob.lower(i), prob.upper(i));
        if (l1) {
            const double k = prob.l1_weight / r;
            for (Eigen::Index i = 0; i < nl1; ++i)
                v(e + d + i) = soft_threshold(v(e + d + i), k);
        }
        return v;
    };

    // A warm start may carry z rows belonging to an older right-hand side;
    // refresh the auxiliary variable so the residuals below see the current
    // constraints.
    z = prox(A_mul(x), rho);

    // Primal infeasibility certificate: a dual direction dy with A'dy = 0
    // whose support function over the constraint set is negative.
    auto certifies_infeasible = [&](const Eigen::VectorXd& dy) {
        const double dn = dy.cwiseAbs().maxCoeff();
        if (dn <= 0.0) return false;
        const double eps = settings.eps_infeasible * dn;
        if (At_mul(dy).cwiseAbs().maxCoeff() > eps) return false;
        double support = 0.0;
        if (e > 0) support += prob.b_eq.dot(dy.head(e));
        for (Eigen::Index i = 0; i < d; ++i) {
            const double v = dy(e + i);
            if (v > 0.0) {
                if (!std::isfinite(prob.upper(i))) {
                    if (v > eps) return false;
                } else {
                    support += prob.upper(i) * v;
                }
            } else if (v < 0.0) {
                if (!std::isfinite(prob.lower(i))) {
                    if (-v > eps) return false;
                } else {
                    support += prob.lower(i) * v;
                }
            }
        }
        // The one-norm rows are penalty rows; they carry no constraint and
        // cannot participate in a certificate.
        if (l1 && dy.tail(nl1).cwiseAbs().maxCoeff() > eps) return false;
        return support <= -eps;
    };

    const double alpha = settings.over_relaxation;
    Eigen::VectorXd y_prev = y;
    int iter = 0;
    for (iter = 1; iter <= settings.max_iter; ++iter) {
        // Convergence check on the current iterate.
        Eigen::VectorXd Ax = A_mul(x);
        const double rp = (Ax - z).cwiseAbs().maxCoeff();
        const Eigen::VectorXd Px = prob.P * x;
        const Eigen::VectorXd Aty = At_mul(y);
        const double rd = (Px + prob.q + Aty).cwiseAbs().maxCoeff();
        sol.primal_residual = rp;
        sol.dual_residual = rd;
        const double tol_p =
            settings.tol_p +
            settings.tol_rel * std::max(Ax.cwiseAbs().maxCoeff(), z.cwiseAbs().maxCoeff());
        const double tol_d =
            settings.tol_d +
            settings.tol_rel * std::max({Px.cwiseAbs().maxCoeff(), Aty.cwiseAbs().maxCoeff(),
                                         prob.q.cwiseAbs().maxCoeff()});
        if (rp <= tol_p && rd <= tol_d) {
            sol.status = QpStatus::Solved;
            break;
        }
        if (iter % settings.rho_check_every == 0 && certifies_infeasible(y - y_prev)) {
            sol.status = QpStatus::Infeasible;
            break;
        }

        if (iter % settings.rho_check_every == 0) {
            double new_rho = rho;
            if (rp > settings.rho_ratio * rd)
                new_rho = std::min(rho * settings.rho_scale, 1e6);
            else if (rd > settings.rho_ratio * rp)
                new_rho = std::max(rho / settings.rho_scale, 1e-6);
            if (new_rho != rho) {
                rho = new_rho;
                factorize(prob, rho, settings.sigma);
            }
        }

        y_prev = y;
        Eigen::VectorXd rhs = settings.sigma * x - prob.q + At_mul(rho * z - y);
        Eigen::VectorXd x_t = kkt_.solve(rhs);
        Eigen::VectorXd z_t = A_mul(x_t);
        x = alpha * x_t + (1.0 - alpha) * x;
        Eigen::VectorXd v = alpha * z_t + (1.0 - alpha) * z + y / rho;
        Eigen::VectorXd z_new = prox(v, rho);
        y += rho * (alpha * z_t + (1.0 - alpha) * z - z_new);
        z = z_new;
    }
    if (iter > settings.max_iter) {
        iter = settings.max_iter;
        sol.status = QpStatus::MaxIterations;
    }

    sol.x = x;
    sol.y = y;
    sol.z = z;
    sol.iterations = iter;
    sol.objective = prob.objective_at(x);
    return sol;
}

QpSolution solve_qp(const QpProblem& prob, double tol_p, double tol_d, int max_iter) {
    QpSettings s;
    s.tol_p = tol_p;
    s.tol_d = tol_d;
    s.max_iter = max_iter;
    QpSolver solver;
    return solver.solve(prob, s);
}

QpSolution solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_eq,
                    const Eigen::VectorXd& b_eq, const Eigen::VectorXd& lower,
                    const Eigen::VectorXd& upper, const QpSettings&) {
    return solve_lp_simplex(c, A_eq, b_eq, lower, upper);
}

QpSolution solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_eq,
                    const Eigen::VectorXd& b_eq, const Eigen::VectorXd& lower,
                    const Eigen::VectorXd& upper, double, double, int) {
    return solve_lp_simplex(c, A_eq, b_eq, lower, upper);
}

void dump_problem(const QpProblem& prob, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.precision(17);
    auto put = [&](const char* name, const Eigen::MatrixXd& m) {
        f << "%%block " << name << " " << m.rows() << " " << m.cols() << "\n";
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                if (m(i, j) != 0.0) f << i + 1 << " " << j + 1 << " " << m(i, j) << "\n";
    };
    put("P", prob.P);
    put("q", prob.q);
    put("A_eq", prob.A_eq);
    put("b_eq", prob.b_eq);
    put("lower", prob.lower);
    put("upper", prob.upper);
    f << "%%l1 " << prob.l1_weight << " " << prob.l1_begin << " " << prob.l1_count << "\n";
}

}  // namespace dtc
