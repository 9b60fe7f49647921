#pragma once

#include <Eigen/Core>

#include "dtc/trajectory.hpp"

namespace dtc {

/// Block-Hankel matrix of depth L built from a trajectory: block (i,j)
/// equals source sample w(i+j) (0-based), size (q*L) x (T-L+1).
struct HankelMatrix {
    Eigen::Index depth = 0;
    Eigen::Index source_channels = 0;
    Eigen::MatrixXd matrix;
};

HankelMatrix hankel(const Trajectory& w, Eigen::Index L);

/// Numeric rank with a relative singular-value threshold (default 1e-9
/// times the largest singular value).
Eigen::Index numeric_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-9);

struct PeResult {
    bool ok = false;
    Eigen::Index achieved_rank = 0;
    Eigen::Index required_rank = 0;
    Eigen::Index rows = 0;  // row count of the tested Hankel matrix
};

/// Generalized persistency-of-excitation check: true iff
/// rank H_L(w) == m*L + n at the documented numeric-rank threshold.
PeResult pe_check(const Trajectory& w, Eigen::Index L, Eigen::Index m, Eigen::Index n,
                  double rel_tol = 1e-9);

/// Discrete-time state-space model x+ = Ax + Bu, y = Cx + Du.
struct LtiSystem {
    Eigen::MatrixXd A, B, C, D;

    Eigen::Index order() const { return A.rows(); }
    Eigen::Index inputs() const { return B.cols(); }
    Eigen::Index outputs() const { return C.rows(); }

    void validate() const;
};

/// Exact forward simulation; returns the output trajectory.
Trajectory lti_simulate(const LtiSystem& sys, const Eigen::VectorXd& x0, const Trajectory& u);

/// Smallest k such that the order-k observability matrix has full rank n.
/// Throws if (C, A) is unobservable. A static system (n = 0) has lag 0.
Eigen::Index lag_of(const LtiSystem& sys, double rel_tol = 1e-9);

}  // namespace dtc
