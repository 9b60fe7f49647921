#pragma once

#include <Eigen/Core>
#include <random>
#include <utility>
#include <vector>

namespace dtc {

/// Production MFD of a region: P(n) in veh*km/h as a function of the
/// accumulation n in veh, with P(0) = P(n_max) = 0.
struct Mfd {
    // Polynomial coefficients c_1..c_degree of P(n) = sum_k c_k n^k.
    // The constant term is pinned to zero. An empty vector denotes the
    // canonical parabola 4*p_max*n*(n_max - n)/n_max^2.
    std::vector<double> coeffs;
    double p_max = 0.0;  // peak production, veh*km/h
    double n_max = 0.0;  // gridlock accumulation, veh
    double n_cr = 0.0;   // critical accumulation, veh
    bool unsaturated = false;

    static Mfd parabolic(double p_max, double n_max);

    /// P(n), clipped below at zero and treated as zero beyond n_max.
    double production(double n) const;
};

/// Least-squares polynomial fit with P(0) = 0 over (accumulation,
/// production) samples. n_max is taken as the production zero crossing
/// beyond the critical point (extrapolated when the samples never reach
/// it, in which case the fit is flagged unsaturated).
Mfd mfd_fit(const std::vector<std::pair<double, double>>& samples, int degree);

struct Light {
    int id = 0;
    double lambda_min = 0.0;
    double lambda_max = 1.0;
    double nominal = 0.5;
};

struct Region {
    int id = 0;
    double network_length_km = 1.0;
    double trip_length_km = 1.0;
    Mfd mfd;
    int sensors = 1;
    double sensor_noise_rel = 0.02;
    double free_flow_speed_kmh = 50.0;

    double critical_density() const { return mfd.n_cr / network_length_km; }
    double gridlock_density() const { return mfd.n_max / network_length_km; }
};

struct Boundary {
    int from = 0;
    int to = 0;
    std::vector<int> lights;
};

struct RegionNetwork {
    std::vector<Region> regions;
    std::vector<Boundary> boundaries;
    std::vector<std::vector<int>> internal_lights;  // per region, light ids
    std::vector<Light> lights;                      // index == light id
    // Routing: theta[i](j, h) is the fraction of vehicles in region i with
    // destination j that move toward region h (h == i only for j == i,
    // the internal completion share). Rows sum to one.
    std::vector<Eigen::MatrixXd> theta;

    int num_regions() const { return static_cast<int>(regions.size()); }
    int num_lights() const { return static_cast<int>(lights.size()); }
    void validate() const;

    const Boundary* boundary(int from, int to) const;
    /// Mean green ratio over the boundary's lights; 0 when absent.
    double boundary_green(int from, int to, const Eigen::VectorXd& lambda) const;
    /// Mean green ratio over a region's internal lights; 1 when none.
    double internal_green(int region, const Eigen::VectorXd& lambda) const;
    Eigen::VectorXd nominal_lambda() const;
};

struct SimState {
    Eigen::MatrixXd n;  // n(i, j): vehicles in region i destined to j
    long k = 0;
    double completed_trips = 0.0;
    double vehicle_hours = 0.0;
    Eigen::VectorXd completed_by_region;

    static SimState zero(int p);
    Eigen::VectorXd accumulations() const { return n.rowwise().sum(); }
};

/// Flow rates realized during one step, all in veh/h after the overdraw
/// and receiving-capacity adjustments.
struct FlowRecord {
    Eigen::MatrixXd transfer;        // transfer(i, h): aggregated flow i -> h
    Eigen::VectorXd completion;      // per region
    Eigen::MatrixXd demand_served;   // per (origin, destination)
    double total_inflow = 0.0;       // veh/h actually injected
    double total_completion = 0.0;   // veh/h
};

struct StepResult {
    SimState state;
    FlowRecord flows;
};

/// One explicit-Euler step of the accumulation dynamics. `lambda` is the
/// full per-light green-ratio vector, `q` the instantaneous demand matrix
/// in veh/h, `delta_h` the step length in hours.
StepResult sim_step(const RegionNetwork& net, const SimState& state,
                    const Eigen::VectorXd& lambda, const Eigen::MatrixXd& q, double delta_h);

struct SensorReading {
    Eigen::VectorXd density;  // per sensor, veh/km
    Eigen::VectorXd flow;     // per sensor, veh/h
};

/// Noisy per-sensor densities and flows. The production-side flow uses the
/// same internal-light attenuation as the dynamics, hence lambda.
SensorReading sense(const RegionNetwork& net, const SimState& state,
                    const Eigen::VectorXd& lambda, std::mt19937_64& rng);

/// Arithmetic mean of each region's sensors.
Eigen::VectorXd aggregate(const RegionNetwork& net, const Eigen::VectorXd& sensor_density);

/// Piecewise-linear demand profile; breakpoints are (time_s, p x p rate
/// matrix in veh/h), held constant outside the covered range.
struct DemandProfile {
    std::vector<std::pair<double, Eigen::MatrixXd>> breakpoints;
    double horizon_s = 0.0;

    Eigen::MatrixXd at(double t_s) const;
};

struct Metrics {
    double avg_travel_time_min = 0.0;
    double avg_waiting_time_min = 0.0;
    double vehicle_hours = 0.0;
    double completed_trips = 0.0;
    Eigen::VectorXd peak_density;
};

/// Aggregate run metrics; `peak_density` is the per-region running maximum
/// collected by the caller. Requires completed_trips > 0.
Metrics compute_metrics(const RegionNetwork& net, const SimState& final_state,
                        const Eigen::VectorXd& peak_density);

}  // namespace dtc
