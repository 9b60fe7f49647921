#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <limits>
#include <string>
#include <vector>

namespace dtc {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Dense convex QP in the canonical form
///   min 0.5 x'Px + q'x + l1_weight * ||x[l1 range]||_1
///   s.t. A_eq x = b_eq,  lower <= x <= upper
/// P must be symmetric PSD; bound entries may be +-inf.
struct QpProblem {
    Eigen::MatrixXd P;
    Eigen::VectorXd q;
    Eigen::MatrixXd A_eq;  // e x d, may have zero rows
    Eigen::VectorXd b_eq;
    Eigen::VectorXd lower, upper;

    double l1_weight = 0.0;
    Eigen::Index l1_begin = 0;
    Eigen::Index l1_count = 0;

    Eigen::Index dim() const { return q.size(); }
    void validate() const;
    double objective_at(const Eigen::VectorXd& x) const;
};

enum class QpStatus { Solved, MaxIterations, Infeasible, Unbounded };

struct QpSolution {
    Eigen::VectorXd x;
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
    QpStatus status = QpStatus::MaxIterations;

    // Internal multipliers kept for warm starting.
    Eigen::VectorXd y, z;
};

struct QpSettings {
    double tol_p = 1e-6;
    double tol_d = 1e-6;
    // Relative termination component, scaled by the iterate magnitudes.
    double tol_rel = 0.0;
    int max_iter = 20000;
    double rho = 0.1;
    double sigma = 1e-6;
    double over_relaxation = 1.6;
    // Adaptive penalty: rescale rho by `rho_scale` when the residual ratio
    // exceeds `rho_ratio`, checked every `rho_check_every` iterations.
    double rho_ratio = 10.0;
    double rho_scale = 2.0;
    int rho_check_every = 50;
    // Relative threshold for the primal infeasibility certificate.
    double eps_infeasible = 1e-5;
};

/// Operator-splitting solver. A solver object owns reusable workspace; a
/// receding-horizon caller that re-solves problems with identical (P, A_eq,
/// bounds pattern) should keep one instance and pass structure_unchanged.
class QpSolver {
public:
    QpSolution solve(const QpProblem& prob, const QpSettings& settings = {},
                     const QpSolution* warm_start = nullptr,
                     bool structure_unchanged = false);

private:
    void factorize(const QpProblem& prob, double rho, double sigma);

    Eigen::MatrixXd AtA_;     // A'A for the stacked constraint matrix
    Eigen::LDLT<Eigen::MatrixXd> kkt_;
    Eigen::Index cached_dim_ = -1;
    Eigen::Index cached_rows_ = -1;
    double cached_rho_ = -1.0;
};

/// One-shot convenience wrapper.
QpSolution solve_qp(const QpProblem& prob, double tol_p = 1e-6, double tol_d = 1e-6,
                    int max_iter = 20000);

/// LP min c'x s.t. A_eq x = b_eq, lower <= x <= upper, solved by a two-phase
/// bounded-variable primal simplex. The tolerance/iteration arguments are
/// accepted for interface compatibility and ignored; vertex solutions are
/// exact up to factorization error.
QpSolution solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_eq,
                    const Eigen::VectorXd& b_eq, const Eigen::VectorXd& lower,
                    const Eigen::VectorXd& upper, double tol_p = 1e-6, double tol_d = 1e-6,
                    int max_iter = 20000);
QpSolution solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_eq,
                    const Eigen::VectorXd& b_eq, const Eigen::VectorXd& lower,
                    const Eigen::VectorXd& upper, const QpSettings& settings);
/// Optimal basis of a previous structurally identical LP; passing it back in
/// skips phase 1 when the basis is still primal feasible.
struct SimplexBasis {
    std::vector<int> basis;
    std::vector<int> state;  // 0 basic, 1 at lower, 2 at upper, 3 free at zero
};

QpSolution solve_lp_simplex(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_eq,
                            const Eigen::VectorXd& b_eq, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, SimplexBasis* warm = nullptr);

/// Debug dump in a matrix-market-like plain text layout.
void dump_problem(const QpProblem& prob, const std::string& path);

}  // namespace dtc
