#pragma once

#include <Eigen/Core>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtc/behavioral.hpp"
#include "dtc/deepc.hpp"
#include "dtc/sim.hpp"

namespace dtc {

/// Bad or inconsistent configuration input (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
    RegionNetwork network;
    double delta_s = 10.0;
    long duty_cycle = 6;
    long horizon_steps = 360;
    std::map<std::string, DemandProfile> demands;
    std::string scenario = "uncongested";  // default demand profile name

    std::uint64_t seed_sim = 1, seed_noise = 2, seed_excitation = 3;

    Eigen::Index T_ini = 6, T_f = 12;
    double lambda_g = 1.0;
    Regularizer regularizer = Regularizer::SquaredTwoNorm;
    double q_weight = 1.0, r_weight = 0.1;
    Eigen::VectorXd q_weights;  // optional per-region override of q_weight
    Eigen::VectorXd y_ref;      // optional per-region density setpoint; empty = critical
    Eigen::VectorXd y_cap;      // optional per-region soft density cap; empty = jam density
    Eigen::VectorXd lambda_ref; // optional per-light input setpoint; empty = nominal
    // Internal lights get their own, typically much larger, input weight so
    // the controller cannot profitably throttle completions to inflate the
    // density toward its reference.
    double r_weight_internal = 0.1;
    double solver_tol = 1e-6;
    int solver_max_iter = 20000;
    bool soft_output = true;
    double soft_output_weight = 1e4;

    int mpc_pieces = 8;
    int mpc_horizon_blocks = 0;   // 0 resolves to T_f / duty_cycle
    int mpc_block_duty_cycles = 1;  // plan-block length in duty cycles

    std::string collect_profile = "congested";
    long collect_steps_per_episode = 150;
    Eigen::Index order_bound = 0;  // 0 resolves to 2p

    std::string source_path;

    /// Parses the JSON scenario file; seeds may be overridden through the
    /// DTC_SEED_SIM / DTC_SEED_NOISE / DTC_SEED_EXCITATION environment
    /// variables.
    static ScenarioConfig load(const std::string& path);

    const DemandProfile& demand(const std::string& name) const;
    NetDims dims() const;
    DeepcConfig deepc_config() const;
    Eigen::VectorXd rho_cr() const;
    Eigen::VectorXd rho_max() const;
    Eigen::Index effective_order_bound() const;
};

struct CollectResult {
    Trajectory u_d, y_d;
    PeResult rank;
};

/// Offline data collection: seeded uniform random green ratios held per
/// duty cycle, over four concatenated demand episodes (state carries over,
/// so the record is one contiguous trajectory).
CollectResult collect(const ScenarioConfig& cfg);
void write_collect(const CollectResult& res, const std::string& dir);

struct PlanLog {
    long t = 0;               // step index at which the plan was applied
    Eigen::VectorXd lambda;   // applied green ratios, size l
    double objective = 0.0;
    double primal = 0.0;
    double dual = 0.0;
    int iterations = 0;
};

struct RunResult {
    std::string controller, demand_name;
    Metrics metrics;
    std::vector<PlanLog> plan_log;  // deepc only
    PeResult rank;                  // deepc only
    Eigen::MatrixXd density_trace;  // p x K, true regional density
    Eigen::MatrixXd flow_trace;     // p x K, veh/h
    Eigen::MatrixXd lambda_trace;   // l x K
    double max_lambda_eq_residual = 0.0;  // over applied DeePC blocks
    double delta_s = 0.0;
    long horizon_steps = 0;
    std::uint64_t seed_sim = 0, seed_noise = 0;
};

/// Closed-loop run under {deepc, mpc, none}. DeePC needs the collect
/// output directory (u_d.csv / y_d.csv) in data_dir.
RunResult run_scenario(const ScenarioConfig& cfg, const std::string& demand_name,
                       const std::string& controller, const std::string& data_dir = "");
void write_run(const RunResult& res, const ScenarioConfig& cfg, const std::string& dir);

struct ComparisonReport {
    struct Row {
        std::string controller;
        double travel_time_min = 0.0;
        double waiting_time_min = 0.0;
        double vehicle_hours = 0.0;
        double improvement_vs_none = 0.0;  // (base - x) / base on travel time
        Eigen::VectorXd peak_density;
    };
    std::string demand_name;
    std::vector<Row> rows;

    const Row* find(const std::string& controller) const;
};

/// Reads run directories (metrics.json) and assembles the comparison;
/// refuses runs from mismatched scenarios.
ComparisonReport compare_runs(const std::vector<std::string>& run_dirs);
void write_report(const ComparisonReport& report, const std::vector<std::string>& run_dirs,
                  const ScenarioConfig& cfg, const std::string& dir, bool svg);

}  // namespace dtc
