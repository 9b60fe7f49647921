#pragma once

#include <Eigen/Core>
#include <deque>

#include "dtc/qp.hpp"
#include "dtc/trajectory.hpp"

namespace dtc {

/// The four stacked data blocks: row partition of the depth-(T_ini+T_f)
/// Hankel matrices of the offline input and output records.
struct DeepcData {
    Eigen::MatrixXd Up, Yp, Uf, Yf;
    Eigen::Index m = 0, p = 0, T_ini = 0, T_f = 0;

    Eigen::Index columns() const { return Up.cols(); }
};

DeepcData build_deepc_data(const Trajectory& u_d, const Trajectory& y_d, Eigen::Index T_ini,
                           Eigen::Index T_f);

enum class Regularizer { SquaredTwoNorm, OneNorm };

struct DeepcConfig {
    Eigen::Index T_ini = 1;
    Eigen::Index T_f = 1;
    Eigen::MatrixXd Q;  // p x p output weight
    Eigen::MatrixXd R;  // m x m input weight (demand block never contributes)
    Regularizer regularizer = Regularizer::SquaredTwoNorm;
    double lambda_g = 1.0;
    Eigen::VectorXd lambda_lower, lambda_upper;  // per controlled light, size l
    Eigen::Index duty_cycle = 1;                 // steps; must divide T_f
    Eigen::VectorXd rho_max;                     // per region; empty = no output cap
    bool soft_output = false;
    double soft_output_weight = 1e4;

    // Solver settings for the receding-horizon program.
    double solver_tol = 1e-6;
    int solver_max_iter = 20000;

    void validate(Eigen::Index m, Eigen::Index p, Eigen::Index l) const;
};

struct ReferenceSpec {
    Eigen::MatrixXd y_ref;  // p x T_f
    Eigen::MatrixXd u_ref;  // m x T_f; demand rows must equal the pinned forecast
};

/// Rolling buffers of the most recent T_ini input/output pairs.
class ControllerState {
public:
    ControllerState(Eigen::Index m, Eigen::Index p, Eigen::Index T_ini);

    void push(const Eigen::VectorXd& u, const Eigen::VectorXd& y);
    bool warmed_up() const { return static_cast<Eigen::Index>(u_hist_.size()) == T_ini_; }
    long clock() const { return clock_; }
    void advance(long steps) { clock_ += steps; }

    Eigen::VectorXd u_ini() const;  // stacked, m*T_ini
    Eigen::VectorXd y_ini() const;  // stacked, p*T_ini

private:
    Eigen::Index m_, p_, T_ini_;
    std::deque<Eigen::VectorXd> u_hist_, y_hist_;
    long clock_ = 0;
};

/// Input equalities and boxes over the stacked future input u (m*T_f,
/// sample-major: lambda channels first within each sample, then demand).
struct ConstraintSet {
    Eigen::MatrixXd duty_cycle_eq;  // M u = 0
    Eigen::MatrixXd demand_pin;     // D u = d_bar
    Eigen::VectorXd d_bar;
    Eigen::VectorXd u_lower, u_upper;  // m*T_f
    Eigen::VectorXd y_lower, y_upper;  // p*T_f
    Eigen::Index num_controlled = 0;   // l

    double max_equality_residual(const Eigen::VectorXd& u_stacked) const;
};

struct NetDims {
    Eigen::Index m = 0, p = 0, l = 0;
};

/// Traffic constraint assembly: duty-cycle ties on the lambda channels,
/// demand channels pinned to the forecast, lambda boxes, output cap.
ConstraintSet assemble_constraints(const DeepcConfig& cfg, const Eigen::VectorXd& d_bar,
                                   const NetDims& dims);

struct DeepcSolution {
    Eigen::MatrixXd u_star;  // m x T_f
    Eigen::MatrixXd y_star;  // p x T_f
    Eigen::VectorXd g;
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
    QpStatus status = QpStatus::MaxIterations;
};

/// One receding-horizon solve of the regularized data-driven program. The
/// demand channels are substituted by the forecast before the solve; the
/// returned u_star carries them back in place. Passing a persistent solver
/// plus warm start makes consecutive solves with identical data cheap.
DeepcSolution solve_deepc(const DeepcData& data, const ControllerState& state,
                          const ReferenceSpec& ref, const ConstraintSet& cons,
                          const DeepcConfig& cfg, QpSolver* solver = nullptr,
                          QpSolution* warm = nullptr, bool structure_unchanged = false);

/// Receding-horizon controller: observe every step, plan every duty cycle.
class DeepcController {
public:
    DeepcController(DeepcData data, DeepcConfig cfg, NetDims dims);

    /// Append the latest applied input and measured output.
    void observe(const Eigen::VectorXd& u, const Eigen::VectorXd& y);
    bool warmed_up() const { return state_.warmed_up(); }

    /// Returns the applied lambda block, l x duty_cycle, projected exactly
    /// onto the duty-cycle ties and boxes. Before warm-up this is the
    /// nominal lambda part of the reference.
    Eigen::MatrixXd plan(const ReferenceSpec& ref, const ConstraintSet& cons);

    const DeepcSolution& last_solution() const { return last_; }
    bool degraded() const { return degraded_; }
    long clock() const { return state_.clock(); }

private:
    DeepcData data_;
    DeepcConfig cfg_;
    NetDims dims_;
    ControllerState state_;
    QpSolver solver_;
    QpSolution warm_;
    bool have_warm_ = false;
    DeepcSolution last_;
    bool degraded_ = false;
};

}  // namespace dtc
