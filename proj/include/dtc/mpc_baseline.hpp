#pragma once

#include <Eigen/Core>
#include <vector>

#include "dtc/qp.hpp"
#include "dtc/sim.hpp"

namespace dtc {

/// Concave upper envelope of a production MFD: pointwise minimum of
/// tangent lines P ~ slope*n + intercept on [0, n_max].
struct PwaMfd {
    struct Piece {
        double slope = 0.0;
        double intercept = 0.0;
    };
    std::vector<Piece> pieces;
    double n_max = 0.0;

    double value(double n) const;
};

/// Tangent lines at `pieces` equispaced accumulations (interval centers).
/// Throws on a non-concave MFD.
PwaMfd pwa_fit(const Mfd& mfd, int pieces);

struct MpcPlan {
    Eigen::MatrixXd f_self;                   // p x N_p, completion flows veh/h
    std::vector<Eigen::MatrixXd> f_transfer;  // per step, (i,h) transfer flows
    Eigen::MatrixXd n_pred;                   // p x (N_p + 1) accumulations
    double objective = 0.0;                   // total production, veh*km
    bool degraded = false;
    QpStatus lp_status = QpStatus::MaxIterations;
    int lp_iterations = 0;
};

struct LmpcConfig {
    int N_p = 2;              // plan steps
    double T_p_hours = 0.0;   // plan step length
    int pieces = 8;           // PWA pieces per region
};

/// Production-maximizing linear program over the aggregated dynamics.
/// `q_forecast` holds the per-region aggregated demand (veh/h) for each
/// plan step; accumulation proportions are read from the current state.
MpcPlan solve_lmpc(const RegionNetwork& net, const SimState& state,
                   const std::vector<Eigen::VectorXd>& q_forecast,
                   const std::vector<PwaMfd>& pwa, const LmpcConfig& cfg,
                   SimplexBasis* warm = nullptr);

/// Inverts the first-step flows back to boundary green ratios; internal
/// lights stay at their nominal setting (the baseline does not control
/// them). Returns the full per-light lambda vector.
Eigen::VectorXd plan_to_lights(const MpcPlan& plan, const RegionNetwork& net,
                               const SimState& state);

/// Convenience wrapper caching the PWA fits across replans.
class MpcBaselineController {
public:
    MpcBaselineController(const RegionNetwork& net, LmpcConfig cfg);

    Eigen::VectorXd plan_lights(const SimState& state,
                                const std::vector<Eigen::VectorXd>& q_forecast);
    const MpcPlan& last_plan() const { return last_; }

private:
    const RegionNetwork& net_;
    LmpcConfig cfg_;
    std::vector<PwaMfd> pwa_;
    MpcPlan last_;
    SimplexBasis warm_;
};

}  // namespace dtc
