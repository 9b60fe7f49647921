#include "dtc/deepc.hpp"

#include <cmath>
#include <stdexcept>

#include "dtc/behavioral.hpp"

namespace dtc {

DeepcData build_deepc_data(const Trajectory& u_d, const Trajectory& y_d, Eigen::Index T_ini,
                           Eigen::Index T_f) {
    if (u_d.length() != y_d.length())
        throw std::invalid_argument("build_deepc_data: input/output length mismatch");
    if (T_ini < 1 || T_f < 1) throw std::invalid_argument("build_deepc_data: horizons must be >= 1");
    const Eigen::Index L = T_ini + T_f;
    if (L > u_d.length())
        throw std::invalid_argument("build_deepc_data: T_ini + T_f exceeds data length");
    const Eigen::Index m = u_d.channels();
    const Eigen::Index p = y_d.channels();

    DeepcData d;
    d.m = m;
    d.p = p;
    d.T_ini = T_ini;
    d.T_f = T_f;
    const Eigen::MatrixXd Hu = hankel(u_d, L).matrix;
    const Eigen::MatrixXd Hy = hankel(y_d, L).matrix;
    d.Up = Hu.topRows(m * T_ini);
    d.Uf = Hu.bottomRows(m * T_f);
    d.Yp = Hy.topRows(p * T_ini);
    d.Yf = Hy.bottomRows(p * T_f);
    return d;
}

void DeepcConfig::validate(Eigen::Index m, Eigen::Index p, Eigen::Index l) const {
    if (T_ini < 1 || T_f < 1) throw std::invalid_argument("DeepcConfig: horizons must be >= 1");
    if (duty_cycle < 1 || T_f % duty_cycle != 0)
        throw std::invalid_argument("DeepcConfig: duty cycle must divide T_f");
    if (Q.rows() != p || Q.cols() != p) throw std::invalid_argument("DeepcConfig: Q shape");
    if (R.rows() != m || R.cols() != m) throw std::invalid_argument("DeepcConfig: R shape");
    if (lambda_lower.size() != l || lambda_upper.size() != l)
        throw std::invalid_argument("DeepcConfig: lambda bound size");
    for (Eigen::Index i = 0; i < l; ++i)
        if (lambda_lower(i) > lambda_upper(i))
            throw std::invalid_argument("DeepcConfig: crossed input bounds");
    if (rho_max.size() > 0) {
        if (rho_max.size() != p) throw std::invalid_argument("DeepcConfig: rho_max size");
        if ((rho_max.array() <= 0.0).any())
            throw std::invalid_argument("DeepcConfig: rho_max must be positive");
    }
    if (lambda_g < 0.0) throw std::invalid_argument("DeepcConfig: negative regularizer weight");
}

ControllerState::ControllerState(Eigen::Index m, Eigen::Index p, Eigen::Index T_ini)
    : m_(m), p_(p), T_ini_(T_ini) {}

void ControllerState::push(const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
    if (u.size() != m_ || y.size() != p_)
        throw std::invalid_argument("ControllerState::push: channel mismatch");
    u_hist_.push_back(u);
    y_hist_.push_back(y);
    while (static_cast<Eigen::Index>(u_hist_.size()) > T_ini_) {
        u_hist_.pop_front();
        y_hist_.pop_front();
    }
}

Eigen::VectorXd ControllerState::u_ini() const {
    if (!warmed_up()) throw std::logic_error("ControllerState: not warmed up");
    Eigen::VectorXd v(m_ * T_ini_);
    for (Eigen::Index k = 0; k < T_ini_; ++k) v.segment(k * m_, m_) = u_hist_[static_cast<size_t>(k)];
    return v;
}

Eigen::VectorXd ControllerState::y_ini() const {
    if (!warmed_up()) throw std::logic_error("ControllerState: not warmed up");
    Eigen::VectorXd v(p_ * T_ini_);
    for (Eigen::Index k = 0; k < T_ini_; ++k) v.segment(k * p_, p_) = y_hist_[static_cast<size_t>(k)];
    return v;
}

double ConstraintSet::max_equality_residual(const Eigen::VectorXd& u_stacked) const {
    double r = 0.0;
    if (duty_cycle_eq.rows() > 0)
        r = std::max(r, (duty_cycle_eq * u_stacked).cwiseAbs().maxCoeff());
    if (demand_pin.rows() > 0)
        r = std::max(r, (demand_pin * u_stacked - d_bar).cwiseAbs().maxCoeff());
    return r;
}

ConstraintSet assemble_constraints(const DeepcConfig& cfg, const Eigen::VectorXd& d_bar,
                                   const NetDims& dims) {
    cfg.validate(dims.m, dims.p, dims.l);
    const Eigen::Index m = dims.m, p = dims.p, l = dims.l;
    const Eigen::Index pd = m - l;  // pinned demand channels per sample
    const Eigen::Index T_f = cfg.T_f;
    if (d_bar.size() != pd * T_f)
        throw std::invalid_argument("assemble_constraints: demand forecast length mismatch");
    if ((d_bar.array() < 0.0).any())
        throw std::invalid_argument("assemble_constraints: negative demand forecast");

    ConstraintSet cs;
    cs.num_controlled = l;
    cs.d_bar = d_bar;

    const Eigen::Index blocks = T_f / cfg.duty_cycle;
    const Eigen::Index tie_rows = l * (T_f - blocks);
    cs.duty_cycle_eq = Eigen::MatrixXd::Zero(tie_rows, m * T_f);
    Eigen::Index row = 0;
    for (Eigen::Index b = 0; b < blocks; ++b)
        for (Eigen::Index k = 1; k < cfg.duty_cycle; ++k)
            for (Eigen::Index li = 0; li < l; ++li, ++row) {
                const Eigen::Index step = b * cfg.duty_cycle + k;
                cs.duty_cycle_eq(row, step * m + li) = 1.0;
                cs.duty_cycle_eq(row, (step - 1) * m + li) = -1.0;
            }

    cs.demand_pin = Eigen::MatrixXd::Zero(pd * T_f, m * T_f);
    for (Eigen::Index k = 0; k < T_f; ++k)
        for (Eigen::Index c = 0; c < pd; ++c)
            cs.demand_pin(k * pd + c, k * m + l + c) = 1.0;

    cs.u_lower.setConstant(m * T_f, 0.0);
    cs.u_upper.setConstant(m * T_f, kInf);
    for (Eigen::Index k = 0; k < T_f; ++k)
        for (Eigen::Index li = 0; li < l; ++li) {
            cs.u_lower(k * m + li) = cfg.lambda_lower(li);
            cs.u_upper(k * m + li) = cfg.lambda_upper(li);
        }

    if (cfg.rho_max.size() > 0) {
        cs.y_lower.setConstant(p * T_f, 0.0);
        cs.y_upper.resize(p * T_f);
        for (Eigen::Index k = 0; k < T_f; ++k) cs.y_upper.segment(k * p, p) = cfg.rho_max;
    } else {
        cs.y_lower.setConstant(p * T_f, -kInf);
        cs.y_upper.setConstant(p * T_f, kInf);
    }
    return cs;
}

DeepcSolution solve_deepc(const DeepcData& data, const ControllerState& state,
                          const ReferenceSpec& ref, const ConstraintSet& cons,
                          const DeepcConfig& cfg, QpSolver* solver, QpSolution* warm,
                          bool structure_unchanged) {
    const Eigen::Index m = data.m, p = data.p, T_f = data.T_f, T_ini = data.T_ini;
    const Eigen::Index l = cons.num_controlled;
    const Eigen::Index pd = m - l;
    const Eigen::Index N = data.columns();
    if (cfg.T_ini != T_ini || cfg.T_f != T_f)
        throw std::invalid_argument("solve_deepc: config horizons do not match data");
    if (ref.y_ref.rows() != p || ref.y_ref.cols() != T_f || ref.u_ref.rows() != m ||
        ref.u_ref.cols() != T_f)
        throw std::invalid_argument("solve_deepc: reference shape mismatch");
    if (pd > 0) {
        // The demand block of the input reference must equal the pinned forecast.
        for (Eigen::Index k = 0; k < T_f; ++k)
            if ((ref.u_ref.col(k).tail(pd) - cons.d_bar.segment(k * pd, pd)).cwiseAbs().maxCoeff() >
                1e-12)
                throw std::invalid_argument("solve_deepc: input reference demand != forecast");
    }

    const Eigen::VectorXd u_ini = state.u_ini();
    const Eigen::VectorXd y_ini = state.y_ini();

    // Split the future-input block rows of the data into controlled and
    // pinned channels.
    Eigen::MatrixXd Uf_l(l * T_f, N), Uf_d(pd * T_f, N);
    for (Eigen::Index k = 0; k < T_f; ++k) {
        Uf_l.middleRows(k * l, l) = data.Uf.middleRows(k * m, l);
        if (pd > 0) Uf_d.middleRows(k * pd, pd) = data.Uf.middleRows(k * m + l, pd);
    }

    const bool soft = cfg.soft_output && cfg.rho_max.size() > 0;
    const Eigen::Index nu = l * T_f, ny = p * T_f;
    const Eigen::Index og = 0, ou = N, oy = N + nu;
    const Eigen::Index os = oy + ny, ot = os + ny;  // soft-cap slack blocks
    const Eigen::Index d = soft ? ot + ny : oy + ny;

    QpProblem prob;
    prob.P = Eigen::MatrixXd::Zero(d, d);
    prob.q = Eigen::VectorXd::Zero(d);
    prob.lower.setConstant(d, -kInf);
    prob.upper.setConstant(d, kInf);

    const Eigen::MatrixXd R_ll = cfg.R.topLeftCorner(l, l);
    for (Eigen::Index k = 0; k < T_f; ++k) {
        prob.P.block(ou + k * l, ou + k * l, l, l) = 2.0 * R_ll;
        prob.q.segment(ou + k * l, l) = -2.0 * R_ll * ref.u_ref.col(k).head(l);
        prob.P.block(oy + k * p, oy + k * p, p, p) = 2.0 * cfg.Q;
        prob.q.segment(oy + k * p, p) = -2.0 * cfg.Q * ref.y_ref.col(k);
    }
    if (cfg.regularizer == Regularizer::SquaredTwoNorm) {
        prob.P.block(og, og, N, N).diagonal().array() += 2.0 * cfg.lambda_g;
    } else if (cfg.lambda_g > 0.0) {
        prob.l1_weight = cfg.lambda_g;
        prob.l1_begin = og;
        prob.l1_count = N;
    }

    // Lambda boxes from the constraint set.
    for (Eigen::Index k = 0; k < T_f; ++k)
        for (Eigen::Index li = 0; li < l; ++li) {
            prob.lower(ou + k * l + li) = cons.u_lower(k * m + li);
            prob.upper(ou + k * l + li) = cons.u_upper(k * m + li);
        }
    if (soft) {
        prob.P.block(os, os, ny, ny).diagonal().array() += 2.0 * cfg.soft_output_weight;
        prob.lower.segment(os, ny).setZero();
        prob.upper.segment(ot, ny) = cons.y_upper;
    } else {
        prob.lower.segment(oy, ny) = cons.y_lower;
        prob.upper.segment(oy, ny) = cons.y_upper;
    }

    // Duty-cycle ties act on the lambda-only stacking.
    const Eigen::Index blocks = T_f / cfg.duty_cycle;
    const Eigen::Index tie_rows = l * (T_f - blocks);
    const Eigen::Index e = m * T_ini + p * T_ini + l * T_f + pd * T_f + p * T_f + tie_rows +
                           (soft ? ny : 0);
    prob.A_eq = Eigen::MatrixXd::Zero(e, d);
    prob.b_eq = Eigen::VectorXd::Zero(e);
    Eigen::Index r = 0;
    prob.A_eq.block(r, og, m * T_ini, N) = data.Up;
    prob.b_eq.segment(r, m * T_ini) = u_ini;
    r += m * T_ini;
    prob.A_eq.block(r, og, p * T_ini, N) = data.Yp;
    prob.b_eq.segment(r, p * T_ini) = y_ini;
    r += p * T_ini;
    prob.A_eq.block(r, og, l * T_f, N) = Uf_l;
    prob.A_eq.block(r, ou, nu, nu) = -Eigen::MatrixXd::Identity(nu, nu);
    r += l * T_f;
    if (pd > 0) {
        prob.A_eq.block(r, og, pd * T_f, N) = Uf_d;
        prob.b_eq.segment(r, pd * T_f) = cons.d_bar;
    }
    r += pd * T_f;
    prob.A_eq.block(r, og, p * T_f, N) = data.Yf;
    prob.A_eq.block(r, oy, ny, ny) = -Eigen::MatrixXd::Identity(ny, ny);
    r += p * T_f;
    for (Eigen::Index b = 0; b < blocks; ++b)
        for (Eigen::Index k = 1; k < cfg.duty_cycle; ++k)
            for (Eigen::Index li = 0; li < l; ++li, ++r) {
                const Eigen::Index step = b * cfg.duty_cycle + k;
                prob.A_eq(r, ou + step * l + li) = 1.0;
                prob.A_eq(r, ou + (step - 1) * l + li) = -1.0;
            }
    if (soft) {
        // t = y - s, with t boxed at the cap and s >= 0 penalized.
        prob.A_eq.block(r, ot, ny, ny) = Eigen::MatrixXd::Identity(ny, ny);
        prob.A_eq.block(r, oy, ny, ny) = -Eigen::MatrixXd::Identity(ny, ny);
        prob.A_eq.block(r, os, ny, ny) = Eigen::MatrixXd::Identity(ny, ny);
        r += ny;
    }

    // Demand rows sit three orders of magnitude above the rest; normalizing
    // each equality row keeps the splitting iteration well conditioned.
    for (Eigen::Index i = 0; i < e; ++i) {
        const double s = std::max(1.0, prob.A_eq.row(i).cwiseAbs().maxCoeff());
        prob.A_eq.row(i) /= s;
        prob.b_eq(i) /= s;
    }

    QpSolver local;
    QpSolver& slv = solver ? *solver : local;
    QpSettings settings;
    settings.tol_p = cfg.solver_tol;
    settings.tol_d = cfg.solver_tol;
    settings.max_iter = cfg.solver_max_iter;
    QpSolution qsol = slv.solve(prob, settings, warm, structure_unchanged);
    if (warm) *warm = qsol;

    DeepcSolution out;
    out.status = qsol.status;
    out.primal_residual = qsol.primal_residual;
    out.dual_residual = qsol.dual_residual;
    out.iterations = qsol.iterations;
    out.g = qsol.x.segment(og, N);
    out.u_star.resize(m, T_f);
    out.y_star.resize(p, T_f);
    for (Eigen::Index k = 0; k < T_f; ++k) {
        out.u_star.col(k).head(l) = qsol.x.segment(ou + k * l, l);
        if (pd > 0) out.u_star.col(k).tail(pd) = cons.d_bar.segment(k * pd, pd);
        out.y_star.col(k) = qsol.x.segment(oy + k * p, p);
    }

    double obj = 0.0;
    for (Eigen::Index k = 0; k < T_f; ++k) {
        const Eigen::VectorXd ey = out.y_star.col(k) - ref.y_ref.col(k);
        const Eigen::VectorXd eu = out.u_star.col(k) - ref.u_ref.col(k);
        obj += ey.dot(cfg.Q * ey) + eu.dot(cfg.R * eu);
    }
    obj += (cfg.regularizer == Regularizer::SquaredTwoNorm)
               ? cfg.lambda_g * out.g.squaredNorm()
               : cfg.lambda_g * out.g.cwiseAbs().sum();
    out.objective = obj;

    if (out.status == QpStatus::Infeasible)
        throw std::runtime_error("solve_deepc: infeasible program, stacked equality residual " +
                                 std::to_string(out.primal_residual));
    return out;
}

DeepcController::DeepcController(DeepcData data, DeepcConfig cfg, NetDims dims)
    : data_(std::move(data)),
      cfg_(std::move(cfg)),
      dims_(dims),
      state_(dims.m, dims.p, cfg_.T_ini) {
    cfg_.validate(dims_.m, dims_.p, dims_.l);
    if (data_.m != dims_.m || data_.p != dims_.p)
        throw std::invalid_argument("DeepcController: data dimensions do not match network");
}

void DeepcController::observe(const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
    state_.push(u, y);
}

Eigen::MatrixXd DeepcController::plan(const ReferenceSpec& ref, const ConstraintSet& cons) {
    const Eigen::Index l = dims_.l, j = cfg_.duty_cycle;
    Eigen::MatrixXd applied(l, j);
    if (!warmed_up()) {
        applied = ref.u_ref.topRows(l).leftCols(j);
    } else {
        last_ = solve_deepc(data_, state_, ref, cons, cfg_, &solver_, &warm_, have_warm_);
        degraded_ = (last_.status == QpStatus::MaxIterations);
        have_warm_ = true;
        applied = last_.u_star.topRows(l).leftCols(j);
    }
    // Exact projection onto the applied block's ties and boxes: one value
    // per light, clamped.
    for (Eigen::Index li = 0; li < l; ++li) {
        double v = applied.row(li).mean();
        v = std::clamp(v, cfg_.lambda_lower(li), cfg_.lambda_upper(li));
        applied.row(li).setConstant(v);
    }
    state_.advance(j);
    return applied;
}

}  // namespace dtc
