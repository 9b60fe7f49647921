#include "dtc/sim.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dtc {

namespace {

double poly_eval(const std::vector<double>& coeffs, double n) {
    // Horner on c_1 n + c_2 n^2 + ... (no constant term).
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * n + *it;
    return acc * n;
}

double poly_deriv(const std::vector<double>& coeffs, double n) {
    // d/dn of c_1 n + c_2 n^2 + ...
    double acc = 0.0;
    for (size_t k = coeffs.size(); k-- > 0;)
        acc = acc * n + coeffs[k] * static_cast<double>(k + 1);
    return acc;
}

}  // namespace

Mfd Mfd::parabolic(double p_max, double n_max) {
    if (p_max <= 0.0 || n_max <= 0.0)
        throw std::invalid_argument("Mfd::parabolic: parameters must be positive");
    Mfd m;
    m.p_max = p_max;
    m.n_max = n_max;
    m.n_cr = 0.5 * n_max;
    return m;
}

double Mfd::production(double n) const {
    if (n <= 0.0 || n >= n_max) return 0.0;
    double v;
    if (coeffs.empty())
        v = 4.0 * p_max * n * (n_max - n) / (n_max * n_max);
    else
        v = poly_eval(coeffs, n);
    return std::max(v, 0.0);
}

Mfd mfd_fit(const std::vector<std::pair<double, double>>& samples, int degree) {
    if (degree < 1) throw std::invalid_argument("mfd_fit: degree must be >= 1");
    if (static_cast<int>(samples.size()) < degree)
        throw std::invalid_argument("mfd_fit: need at least `degree` samples");
    const Eigen::Index ns = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd X(ns, degree);
    Eigen::VectorXd y(ns);
    double n_hi = 0.0;
    for (Eigen::Index i = 0; i < ns; ++i) {
        const double n = samples[static_cast<size_t>(i)].first;
        double b = n;
        for (int k = 0; k < degree; ++k) {
            X(i, k) = b;
            b *= n;
        }
        y(i) = samples[static_cast<size_t>(i)].second;
        n_hi = std::max(n_hi, n);
    }
    if (n_hi <= 0.0) throw std::invalid_argument("mfd_fit: samples have no positive accumulation");
    Eigen::VectorXd c = X.colPivHouseholderQr().solve(y);

    Mfd m;
    m.coeffs.assign(c.data(), c.data() + c.size());
    auto f = [&](double n) { return poly_eval(m.coeffs, n); };

    // Locate the maximum and the downcrossing on a coarse grid first.
    const double span = 3.0 * n_hi;
    const int coarse = 30000;
    int arg = 1;
    double best_v = f(span / coarse);
    for (int i = 2; i <= coarse; ++i) {
        const double v = f(span * i / coarse);
        if (v > best_v) {
            best_v = v;
            arg = i;
        }
    }
    const double n_cr0 = span * arg / coarse;
    double n_max = span;
    bool crossed = false;
    for (int i = arg + 1; i <= coarse; ++i) {
        if (f(span * i / coarse) <= 0.0) {
            double lo = span * (i - 1) / coarse, hi = span * i / coarse;
            for (int b = 0; b < 100; ++b) {
                const double mid = 0.5 * (lo + hi);
                (f(mid) > 0.0 ? lo : hi) = mid;
            }
            n_max = 0.5 * (lo + hi);
            crossed = true;
            break;
        }
    }
    m.n_max = n_max;
    m.unsaturated = !crossed || n_cr0 > n_hi;

    // Re-grid over [0, n_max] at the documented resolution, then refine.
    const int fine = 10000;
    arg = 1;
    best_v = f(n_max / fine);
    for (int i = 2; i < fine; ++i) {
        const double v = f(n_max * i / fine);
        if (v > best_v) {
            best_v = v;
            arg = i;
        }
    }
    // Refine by bisecting the analytic derivative around the grid winner;
    // maximizing on function values alone caps accuracy near sqrt(eps).
    const double h = n_max / fine;
    double lo = std::max(0.0, arg * h - h), hi = std::min(n_max, arg * h + h);
    if (poly_deriv(m.coeffs, lo) > 0.0 && poly_deriv(m.coeffs, hi) < 0.0) {
        for (int b = 0; b < 200 && hi - lo > 1e-15 * n_max; ++b) {
            const double mid = 0.5 * (lo + hi);
            (poly_deriv(m.coeffs, mid) > 0.0 ? lo : hi) = mid;
        }
    }
    m.n_cr = 0.5 * (lo + hi);
    m.p_max = f(m.n_cr);
    if (m.p_max <= 0.0) throw std::runtime_error("mfd_fit: fitted production is nonpositive");
    return m;
}

void RegionNetwork::validate() const {
    const int p = num_regions();
    if (p < 1) throw std::invalid_argument("RegionNetwork: no regions");
    if (static_cast<int>(theta.size()) != p)
        throw std::invalid_argument("RegionNetwork: routing tensor size mismatch");
    if (static_cast<int>(internal_lights.size()) != p)
        throw std::invalid_argument("RegionNetwork: internal_lights size mismatch");
    for (int i = 0; i < p; ++i) {
        if (theta[i].rows() != p || theta[i].cols() != p)
            throw std::invalid_argument("RegionNetwork: routing matrix shape");
        for (int j = 0; j < p; ++j) {
            if (std::abs(theta[i].row(j).sum() - 1.0) > 1e-12)
                throw std::invalid_argument("RegionNetwork: routing row of region " +
                                            std::to_string(i) + " does not sum to 1");
            for (int h = 0; h < p; ++h) {
                if (theta[i](j, h) < 0.0)
                    throw std::invalid_argument("RegionNetwork: negative routing entry");
                if (h != i && theta[i](j, h) > 0.0 && boundary(i, h) == nullptr)
                    throw std::invalid_argument(
                        "RegionNetwork: routing mass on boundary without lights (" +
                        std::to_string(i) + "->" + std::to_string(h) + ")");
            }
        }
        if (regions[i].network_length_km <= 0.0 || regions[i].trip_length_km <= 0.0 ||
            regions[i].sensors < 1)
            throw std::invalid_argument("RegionNetwork: invalid region parameters");
    }
    for (const auto& b : boundaries)
        if (b.lights.empty())
            throw std::invalid_argument("RegionNetwork: boundary without lights");
}

const Boundary* RegionNetwork::boundary(int from, int to) const {
    for (const auto& b : boundaries)
        if (b.from == from && b.to == to) return &b;
    return nullptr;
}

double RegionNetwork::boundary_green(int from, int to, const Eigen::VectorXd& lambda) const {
    const Boundary* b = boundary(from, to);
    if (!b || b->lights.empty()) return 0.0;
    double s = 0.0;
    for (int id : b->lights) s += lambda(id);
    return s / static_cast<double>(b->lights.size());
}

double RegionNetwork::internal_green(int region, const Eigen::VectorXd& lambda) const {
    const auto& ids = internal_lights[static_cast<size_t>(region)];
    if (ids.empty()) return 1.0;
    double s = 0.0;
    for (int id : ids) s += lambda(id);
    return s / static_cast<double>(ids.size());
}

Eigen::VectorXd RegionNetwork::nominal_lambda() const {
    Eigen::VectorXd v(num_lights());
    for (const auto& l : lights) v(l.id) = l.nominal;
    return v;
}

SimState SimState::zero(int p) {
    SimState s;
    s.n = Eigen::MatrixXd::Zero(p, p);
    s.completed_by_region = Eigen::VectorXd::Zero(p);
    return s;
}

StepResult sim_step(const RegionNetwork& net, const SimState& state,
                    const Eigen::VectorXd& lambda, const Eigen::MatrixXd& q, double delta_h) {
    const int p = net.num_regions();
    if (lambda.size() != net.num_lights())
        throw std::invalid_argument("sim_step: lambda size mismatch");
    if (q.rows() != p || q.cols() != p) throw std::invalid_argument("sim_step: demand shape");
    if (delta_h <= 0.0) throw std::invalid_argument("sim_step: step length must be positive");
    if ((q.array() < 0.0).any()) throw std::invalid_argument("sim_step: negative demand");

    const Eigen::VectorXd n_tot = state.accumulations();

    // Attenuated production rate P~_i / L_i, veh/h.
    Eigen::VectorXd rate(p);
    for (int i = 0; i < p; ++i) {
        const double atten = 0.5 + 0.5 * net.internal_green(i, lambda);
        rate(i) = net.regions[i].mfd.production(n_tot(i)) * atten / net.regions[i].trip_length_km;
    }

    // Raw flows.
    Eigen::VectorXd comp = Eigen::VectorXd::Zero(p);
    std::vector<Eigen::MatrixXd> M(static_cast<size_t>(p), Eigen::MatrixXd::Zero(p, p));
    for (int i = 0; i < p; ++i) {
        if (n_tot(i) <= 0.0) continue;
        comp(i) = net.theta[i](i, i) * (state.n(i, i) / n_tot(i)) * rate(i);
        for (const auto& b : net.boundaries) {
            if (b.from != i) continue;
            const int h = b.to;
            const double u = net.boundary_green(i, h, lambda);
            for (int j = 0; j < p; ++j)
                M[static_cast<size_t>(i)](j, h) =
                    u * net.theta[i](j, h) * (state.n(i, j) / n_tot(i)) * rate(i);
        }
        if (comp(i) < 0.0 || (M[static_cast<size_t>(i)].array() < 0.0).any())
            throw std::runtime_error("sim_step: negative flow computed in region " +
                                     std::to_string(i) + " at step " + std::to_string(state.k));
    }

    auto outflow_of = [&](int i, int j) {
        double o = M[static_cast<size_t>(i)].row(j).sum();
        if (i == j) o += comp(i);
        return o;
    };

    // Explicit-Euler overdraw guard: no cell may go below zero.
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            const double o = outflow_of(i, j);
            if (delta_h * o > state.n(i, j) && o > 0.0) {
                const double s = state.n(i, j) / (delta_h * o);
                M[static_cast<size_t>(i)].row(j) *= s;
                if (i == j) comp(i) *= s;
            }
        }

    // Receiving capacity: scale all inflows into a full region by a common
    // factor; vehicles held back stay in their origin cells.
    Eigen::MatrixXd qe = q;
    for (int pass = 0; pass < 8; ++pass) {
        bool changed = false;
        for (int h = 0; h < p; ++h) {
            double in_h = qe.row(h).sum();
            for (int i = 0; i < p; ++i)
                if (i != h) in_h += M[static_cast<size_t>(i)].col(h).sum();
            double out_h = 0.0;
            for (int j = 0; j < p; ++j) out_h += outflow_of(h, j);
            const double n_next = n_tot(h) + delta_h * (in_h - out_h);
            const double cap = net.regions[h].mfd.n_max;
            if (n_next > cap * (1.0 + 1e-12) && in_h > 0.0) {
                double g = (cap - n_tot(h) + delta_h * out_h) / (delta_h * in_h);
                g = std::clamp(g, 0.0, 1.0);
                qe.row(h) *= g;
                for (int i = 0; i < p; ++i)
                    if (i != h) M[static_cast<size_t>(i)].col(h) *= g;
                changed = true;
            }
        }
        if (!changed) break;
    }

    StepResult res;
    res.state = state;
    res.flows.transfer = Eigen::MatrixXd::Zero(p, p);
    res.flows.completion = comp;
    res.flows.demand_served = qe;
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
            double dn = qe(i, j) - M[static_cast<size_t>(i)].row(j).sum();
            if (i == j) dn -= comp(i);
            for (int h = 0; h < p; ++h)
                if (h != i) dn += M[static_cast<size_t>(h)](j, i);
            res.state.n(i, j) = state.n(i, j) + delta_h * dn;
            if (res.state.n(i, j) < 0.0) {
                if (res.state.n(i, j) < -1e-9)
                    throw std::runtime_error("sim_step: negative accumulation at step " +
                                             std::to_string(state.k));
                res.state.n(i, j) = 0.0;
            }
        }
        for (int h = 0; h < p; ++h)
            if (h != i) res.flows.transfer(i, h) = M[static_cast<size_t>(i)].col(h).sum();
    }

    res.flows.total_inflow = qe.sum();
    res.flows.total_completion = comp.sum();
    res.state.k = state.k + 1;
    res.state.completed_trips = state.completed_trips + delta_h * comp.sum();
    res.state.vehicle_hours = state.vehicle_hours + delta_h * state.n.sum();
    res.state.completed_by_region = state.completed_by_region + delta_h * comp;
    return res;
}

SensorReading sense(const RegionNetwork& net, const SimState& state,
                    const Eigen::VectorXd& lambda, std::mt19937_64& rng) {
    int total = 0;
    for (const auto& r : net.regions) total += r.sensors;
    SensorReading out;
    out.density.resize(total);
    out.flow.resize(total);
    const Eigen::VectorXd n_tot = state.accumulations();
    int s = 0;
    for (int i = 0; i < net.num_regions(); ++i) {
        const auto& r = net.regions[i];
        const double atten = 0.5 + 0.5 * net.internal_green(i, lambda);
        const double rho = n_tot(i) / r.network_length_km;
        const double phi = r.mfd.production(n_tot(i)) * atten / r.network_length_km;
        std::uniform_real_distribution<double> eps(-r.sensor_noise_rel, r.sensor_noise_rel);
        for (int j = 0; j < r.sensors; ++j, ++s) {
            out.density(s) = rho * (1.0 + (r.sensor_noise_rel > 0.0 ? eps(rng) : 0.0));
            out.flow(s) = phi * (1.0 + (r.sensor_noise_rel > 0.0 ? eps(rng) : 0.0));
        }
    }
    return out;
}

Eigen::VectorXd aggregate(const RegionNetwork& net, const Eigen::VectorXd& sensor_density) {
    Eigen::VectorXd out(net.num_regions());
    int s = 0;
    for (int i = 0; i < net.num_regions(); ++i) {
        const int cnt = net.regions[i].sensors;
        if (s + cnt > sensor_density.size())
            throw std::invalid_argument("aggregate: sensor count mismatch");
        out(i) = sensor_density.segment(s, cnt).mean();
        s += cnt;
    }
    if (s != sensor_density.size()) throw std::invalid_argument("aggregate: sensor count mismatch");
    return out;
}

Eigen::MatrixXd DemandProfile::at(double t_s) const {
    if (breakpoints.empty()) throw std::invalid_argument("DemandProfile: no breakpoints");
    if (t_s <= breakpoints.front().first) return breakpoints.front().second;
    if (t_s >= breakpoints.back().first) return breakpoints.back().second;
    for (size_t i = 1; i < breakpoints.size(); ++i) {
        if (t_s <= breakpoints[i].first) {
            const double t0 = breakpoints[i - 1].first, t1 = breakpoints[i].first;
            const double a = (t_s - t0) / (t1 - t0);
            return (1.0 - a) * breakpoints[i - 1].second + a * breakpoints[i].second;
        }
    }
    return breakpoints.back().second;
}

Metrics compute_metrics(const RegionNetwork& net, const SimState& final_state,
                        const Eigen::VectorXd& peak_density) {
    if (final_state.completed_trips <= 0.0)
        throw std::runtime_error("compute_metrics: no completed trips");
    Metrics m;
    m.vehicle_hours = final_state.vehicle_hours;
    m.completed_trips = final_state.completed_trips;
    m.avg_travel_time_min = 60.0 * final_state.vehicle_hours / final_state.completed_trips;
    double ff_h = 0.0;
    for (int i = 0; i < net.num_regions(); ++i)
        ff_h += final_state.completed_by_region(i) *
                (net.regions[i].trip_length_km / net.regions[i].free_flow_speed_kmh);
    m.avg_waiting_time_min =
        m.avg_travel_time_min - 60.0 * ff_h / final_state.completed_trips;
    m.peak_density = peak_density;
    return m;
}

}  // namespace dtc
