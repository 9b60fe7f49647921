#include "dtc/behavioral.hpp"

#include <Eigen/SVD>
#include <stdexcept>

namespace dtc {

HankelMatrix hankel(const Trajectory& w, Eigen::Index L) {
    if (L < 1 || L > w.length())
        throw std::invalid_argument("hankel: depth out of range");
    const Eigen::Index q = w.channels();
    const Eigen::Index cols = w.length() - L + 1;
    HankelMatrix h;
    h.depth = L;
    h.source_channels = q;
    h.matrix.resize(q * L, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < L; ++i)
            h.matrix.block(q * i, j, q, 1) = w.data().col(i + j);
    return h;
}

Eigen::Index numeric_rank(const Eigen::MatrixXd& m, double rel_tol) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    const double cut = rel_tol * sv(0);
    Eigen::Index r = 0;
    while (r < sv.size() && sv(r) > cut) ++r;
    return r;
}

PeResult pe_check(const Trajectory& w, Eigen::Index L, Eigen::Index m, Eigen::Index n,
                  double rel_tol) {
    PeResult res;
    res.required_rank = m * L + n;
    const HankelMatrix h = hankel(w, L);
    res.rows = h.matrix.rows();
    res.achieved_rank = numeric_rank(h.matrix, rel_tol);
    res.ok = (res.achieved_rank == res.required_rank);
    return res;
}

void LtiSystem::validate() const {
    const Eigen::Index n = A.rows();
    if (A.cols() != n) throw std::invalid_argument("LtiSystem: A not square");
    if (B.rows() != n) throw std::invalid_argument("LtiSystem: B row mismatch");
    if (C.cols() != n) throw std::invalid_argument("LtiSystem: C column mismatch");
    if (D.rows() != C.rows() || D.cols() != B.cols())
        throw std::invalid_argument("LtiSystem: D shape mismatch");
}

Trajectory lti_simulate(const LtiSystem& sys, const Eigen::VectorXd& x0, const Trajectory& u) {
    sys.validate();
    if (u.channels() != sys.inputs())
        throw std::invalid_argument("lti_simulate: input channel mismatch");
    if (x0.size() != sys.order())
        throw std::invalid_argument("lti_simulate: state size mismatch");
    Eigen::MatrixXd y(sys.outputs(), u.length());
    Eigen::VectorXd x = x0;
    for (Eigen::Index t = 0; t < u.length(); ++t) {
        y.col(t) = sys.C * x + sys.D * u.data().col(t);
        x = sys.A * x + sys.B * u.data().col(t);
    }
    return Trajectory(std::move(y));
}

Eigen::Index lag_of(const LtiSystem& sys, double rel_tol) {
    sys.validate();
    const Eigen::Index n = sys.order();
    if (n == 0) return 0;
    const Eigen::Index p = sys.outputs();
    Eigen::MatrixXd obs(p * n, n);
    Eigen::MatrixXd block = sys.C;
    for (Eigen::Index k = 0; k < n; ++k) {
        obs.middleRows(p * k, p) = block;
        if (numeric_rank(obs.topRows(p * (k + 1)), rel_tol) == n) return k + 1;
        block = block * sys.A;
    }
    throw std::runtime_error("lag_of: (C, A) unobservable, observability matrix rank " +
                             std::to_string(numeric_rank(obs, rel_tol)) + " < " +
                             std::to_string(n));
}

}  // namespace dtc
