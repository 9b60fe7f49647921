#include "dtc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "dtc/mpc_baseline.hpp"

namespace dtc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(f);
    } catch (const std::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
}

Eigen::MatrixXd parse_matrix(const json& j, int rows, int cols, const std::string& what) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows)
        throw ConfigError(what + ": expected " + std::to_string(rows) + " rows");
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols)
            throw ConfigError(what + ": expected " + std::to_string(cols) + " columns");
        for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

std::uint64_t seed_from_env(const char* var, std::uint64_t fallback) {
    if (const char* v = std::getenv(var)) return std::stoull(v);
    return fallback;
}

/// Full input sample col(lambda, vec(q)) with demand ordered (origin-major).
Eigen::VectorXd input_sample(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& q) {
    const Eigen::Index l = lambda.size(), p = q.rows();
    Eigen::VectorXd u(l + p * p);
    u.head(l) = lambda;
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) u(l + i * p + j) = q(i, j);
    return u;
}

Eigen::VectorXd region_flow(const RegionNetwork& net, const SimState& state,
                            const Eigen::VectorXd& lambda) {
    const int p = net.num_regions();
    Eigen::VectorXd f(p);
    const Eigen::VectorXd n_tot = state.accumulations();
    for (int i = 0; i < p; ++i) {
        const double atten = 0.5 + 0.5 * net.internal_green(i, lambda);
        f(i) = net.regions[i].mfd.production(n_tot(i)) * atten / net.regions[i].network_length_km;
    }
    return f;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << content;
}

}  // namespace

ScenarioConfig ScenarioConfig::load(const std::string& path) {
    const json j = load_json(path);
    ScenarioConfig cfg;
    cfg.source_path = path;
    try {
        cfg.delta_s = j.value("delta_s", cfg.delta_s);
        cfg.duty_cycle = j.value("duty_cycle_steps", cfg.duty_cycle);
        cfg.horizon_steps = j.value("horizon_steps", cfg.horizon_steps);
        cfg.scenario = j.value("scenario", cfg.scenario);

        const json& jn = j.at("network");
        const int p = static_cast<int>(jn.at("regions").size());
        for (const auto& jr : jn.at("regions")) {
            Region r;
            r.id = jr.at("id").get<int>();
            r.network_length_km = jr.at("network_length_km").get<double>();
            r.trip_length_km = jr.at("trip_length_km").get<double>();
            r.sensors = jr.value("sensors", 10);
            r.sensor_noise_rel = jr.value("sensor_noise_rel", 0.02);
            r.free_flow_speed_kmh = jr.value("free_flow_speed_kmh", 50.0);
            r.mfd = Mfd::parabolic(jr.at("mfd").at("p_max").get<double>(),
                                   jr.at("mfd").at("n_max").get<double>());
            cfg.network.regions.push_back(r);
        }
        for (const auto& jl : jn.at("lights")) {
            Light l;
            l.id = jl.at("id").get<int>();
            l.lambda_min = jl.value("min", 0.0);
            l.lambda_max = jl.value("max", 1.0);
            l.nominal = jl.value("nominal", 0.5);
            cfg.network.lights.push_back(l);
        }
        for (const auto& jb : jn.at("boundaries")) {
            Boundary b;
            b.from = jb.at("from").get<int>();
            b.to = jb.at("to").get<int>();
            for (const auto& id : jb.at("lights")) b.lights.push_back(id.get<int>());
            cfg.network.boundaries.push_back(b);
        }
        cfg.network.internal_lights.resize(static_cast<size_t>(p));
        if (jn.contains("internal_lights"))
            for (int i = 0; i < p; ++i)
                for (const auto& id : jn.at("internal_lights")[i])
                    cfg.network.internal_lights[static_cast<size_t>(i)].push_back(id.get<int>());
        for (int i = 0; i < p; ++i)
            cfg.network.theta.push_back(
                parse_matrix(jn.at("routing")[i], p, p, "routing[" + std::to_string(i) + "]"));
        cfg.network.validate();

        for (const auto& [name, jd] : j.at("demand").items()) {
            DemandProfile prof;
            for (const auto& jb : jd.at("breakpoints"))
                prof.breakpoints.emplace_back(jb.at("t_s").get<double>(),
                                              parse_matrix(jb.at("q"), p, p, "demand " + name));
            if (prof.breakpoints.empty()) throw ConfigError("demand " + name + ": no breakpoints");
            prof.horizon_s = prof.breakpoints.back().first;
            cfg.demands.emplace(name, std::move(prof));
        }

        if (j.contains("deepc")) {
            const json& jd = j.at("deepc");
            cfg.T_ini = jd.value("T_ini", cfg.T_ini);
            cfg.T_f = jd.value("T_f", cfg.T_f);
            cfg.lambda_g = jd.value("lambda_g", cfg.lambda_g);
            const std::string reg = jd.value("regularizer", std::string("squared"));
            if (reg == "squared")
                cfg.regularizer = Regularizer::SquaredTwoNorm;
            else if (reg == "one")
                cfg.regularizer = Regularizer::OneNorm;
            else
                throw ConfigError("unknown regularizer: " + reg);
            cfg.q_weight = jd.value("q_weight", cfg.q_weight);
            if (jd.contains("q_weights")) {
                const auto& qw = jd.at("q_weights");
                cfg.q_weights.resize(qw.size());
                for (std::size_t i = 0; i < qw.size(); ++i)
                    cfg.q_weights(static_cast<Eigen::Index>(i)) = qw.at(i).get<double>();
            }
            if (jd.contains("y_cap")) {
                const auto& yc = jd.at("y_cap");
                cfg.y_cap.resize(yc.size());
                for (std::size_t i = 0; i < yc.size(); ++i)
                    cfg.y_cap(static_cast<Eigen::Index>(i)) = yc.at(i).get<double>();
            }
            if (jd.contains("lambda_ref")) {
                const auto& lr = jd.at("lambda_ref");
                cfg.lambda_ref.resize(lr.size());
                for (std::size_t i = 0; i < lr.size(); ++i)
                    cfg.lambda_ref(static_cast<Eigen::Index>(i)) = lr.at(i).get<double>();
            }
            if (jd.contains("y_ref")) {
                const auto& yr = jd.at("y_ref");
                cfg.y_ref.resize(yr.size());
                for (std::size_t i = 0; i < yr.size(); ++i)
                    cfg.y_ref(static_cast<Eigen::Index>(i)) = yr.at(i).get<double>();
            }
            cfg.r_weight = jd.value("r_weight", cfg.r_weight);
            cfg.r_weight_internal = jd.value("r_weight_internal", cfg.r_weight);
            cfg.solver_tol = jd.value("solver_tol", cfg.solver_tol);
            cfg.solver_max_iter = jd.value("solver_max_iter", cfg.solver_max_iter);
            cfg.soft_output = jd.value("soft_output", cfg.soft_output);
            cfg.soft_output_weight = jd.value("soft_output_weight", cfg.soft_output_weight);
        }
        if (j.contains("mpc")) {
            cfg.mpc_pieces = j.at("mpc").value("pieces", cfg.mpc_pieces);
            cfg.mpc_horizon_blocks = j.at("mpc").value("horizon_blocks", cfg.mpc_horizon_blocks);
            cfg.mpc_block_duty_cycles =
                j.at("mpc").value("block_duty_cycles", cfg.mpc_block_duty_cycles);
        }
        if (j.contains("collect")) {
            const json& jc = j.at("collect");
            cfg.collect_profile = jc.value("profile", cfg.collect_profile);
            cfg.collect_steps_per_episode =
                jc.value("steps_per_episode", cfg.collect_steps_per_episode);
            cfg.order_bound = jc.value("order_bound", cfg.order_bound);
        }
        if (j.contains("seeds")) {
            const json& js = j.at("seeds");
            cfg.seed_sim = js.value("sim", cfg.seed_sim);
            cfg.seed_noise = js.value("noise", cfg.seed_noise);
            cfg.seed_excitation = js.value("excitation", cfg.seed_excitation);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid config ") + path + ": " + e.what());
    }

    cfg.seed_sim = seed_from_env("DTC_SEED_SIM", cfg.seed_sim);
    cfg.seed_noise = seed_from_env("DTC_SEED_NOISE", cfg.seed_noise);
    cfg.seed_excitation = seed_from_env("DTC_SEED_EXCITATION", cfg.seed_excitation);

    if (cfg.T_f % cfg.duty_cycle != 0)
        throw ConfigError("duty_cycle_steps must divide deepc T_f");
    return cfg;
}

const DemandProfile& ScenarioConfig::demand(const std::string& name) const {
    auto it = demands.find(name);
    if (it == demands.end()) throw ConfigError("unknown demand profile: " + name);
    return it->second;
}

NetDims ScenarioConfig::dims() const {
    NetDims d;
    d.l = network.num_lights();
    d.p = network.num_regions();
    d.m = d.l + d.p * d.p;
    return d;
}

DeepcConfig ScenarioConfig::deepc_config() const {
    const NetDims d = dims();
    DeepcConfig c;
    c.T_ini = T_ini;
    c.T_f = T_f;
    c.Q = q_weight * Eigen::MatrixXd::Identity(d.p, d.p);
    if (q_weights.size() > 0) {
        if (q_weights.size() != d.p) throw ConfigError("deepc.q_weights: need one entry per region");
        c.Q = q_weights.asDiagonal();
    }
    c.R = r_weight * Eigen::MatrixXd::Identity(d.m, d.m);
    for (const auto& ids : network.internal_lights)
        for (int id : ids) c.R(id, id) = r_weight_internal;
    c.solver_tol = solver_tol;
    c.solver_max_iter = solver_max_iter;
    c.regularizer = regularizer;
    c.lambda_g = lambda_g;
    c.lambda_lower.resize(d.l);
    c.lambda_upper.resize(d.l);
    for (const auto& l : network.lights) {
        c.lambda_lower(l.id) = l.lambda_min;
        c.lambda_upper(l.id) = l.lambda_max;
    }
    c.duty_cycle = duty_cycle;
    c.rho_max = this->rho_max();
    if (y_cap.size() > 0) {
        if (y_cap.size() != d.p) throw ConfigError("deepc.y_cap: need one entry per region");
        c.rho_max = y_cap;
    }
    c.soft_output = soft_output;
    c.soft_output_weight = soft_output_weight;
    return c;
}

Eigen::VectorXd ScenarioConfig::rho_cr() const {
    Eigen::VectorXd v(network.num_regions());
    for (int i = 0; i < network.num_regions(); ++i) v(i) = network.regions[i].critical_density();
    return v;
}

Eigen::VectorXd ScenarioConfig::rho_max() const {
    Eigen::VectorXd v(network.num_regions());
    for (int i = 0; i < network.num_regions(); ++i) v(i) = network.regions[i].gridlock_density();
    return v;
}

Eigen::Index ScenarioConfig::effective_order_bound() const {
    return order_bound > 0 ? order_bound : 2 * network.num_regions();
}

CollectResult collect(const ScenarioConfig& cfg) {
    const NetDims d = cfg.dims();
    const DemandProfile& base = cfg.demand(cfg.collect_profile);
    double q_peak = 0.0;
    for (const auto& [t, q] : base.breakpoints) q_peak = std::max(q_peak, q.maxCoeff());
    if (q_peak <= 0.0) throw ConfigError("collect: demand profile is identically zero");

    std::mt19937_64 rng_exc(cfg.seed_excitation);
    std::mt19937_64 rng_noise(cfg.seed_noise);
    const long steps = cfg.collect_steps_per_episode;
    const long total = 4 * steps;
    Eigen::MatrixXd U(d.m, total), Y(d.p, total);

    SimState state = SimState::zero(static_cast<int>(d.p));
    Eigen::VectorXd lambda = cfg.network.nominal_lambda();
    Eigen::MatrixXd q_walk = base.at(0.0);
    const double scales[3] = {0.3, 0.7, 1.2};
    const double delta_h = cfg.delta_s / 3600.0;

    for (long k = 0; k < total; ++k) {
        const int episode = static_cast<int>(k / steps);
        const double t_local = static_cast<double>(k % steps) * cfg.delta_s;
        if (k % cfg.duty_cycle == 0) {
            for (const auto& lt : cfg.network.lights) {
                std::uniform_real_distribution<double> dist(lt.lambda_min, lt.lambda_max);
                lambda(lt.id) = dist(rng_exc);
            }
            if (episode == 3) {
                std::uniform_real_distribution<double> stepd(-0.15 * q_peak, 0.15 * q_peak);
                for (Eigen::Index i = 0; i < d.p; ++i)
                    for (Eigen::Index jj = 0; jj < d.p; ++jj)
                        q_walk(i, jj) =
                            std::clamp(q_walk(i, jj) + stepd(rng_exc), 0.0, 1.3 * q_peak);
            }
        }
        const Eigen::MatrixXd q = episode < 3 ? (scales[episode] * base.at(t_local)).eval()
                                              : q_walk;
        StepResult res = sim_step(cfg.network, state, lambda, q, delta_h);
        const SensorReading reading = sense(cfg.network, res.state, lambda, rng_noise);
        U.col(k) = input_sample(lambda, q);
        Y.col(k) = aggregate(cfg.network, reading.density);
        state = res.state;
    }

    CollectResult out{Trajectory(U), Trajectory(Y),
                      pe_check(Trajectory::stack(Trajectory(U), Trajectory(Y)),
                               cfg.T_ini + cfg.T_f, d.m, cfg.effective_order_bound())};
    return out;
}

void write_collect(const CollectResult& res, const std::string& dir) {
    fs::create_directories(dir);
    res.u_d.to_csv(dir + "/u_d.csv");
    res.y_d.to_csv(dir + "/y_d.csv");
    json j;
    j["achieved_rank"] = res.rank.achieved_rank;
    j["required_rank"] = res.rank.required_rank;
    j["hankel_rows"] = res.rank.rows;
    j["persistently_exciting"] = res.rank.ok;
    write_text(dir + "/rank_report.json", j.dump(2) + "\n");
}

RunResult run_scenario(const ScenarioConfig& cfg, const std::string& demand_name,
                       const std::string& controller, const std::string& data_dir) {
    if (controller != "deepc" && controller != "mpc" && controller != "none")
        throw ConfigError("unknown controller: " + controller);
    cfg.network.validate();
    const NetDims d = cfg.dims();
    const DemandProfile& profile = cfg.demand(demand_name);
    const double delta_h = cfg.delta_s / 3600.0;
    const long K = cfg.horizon_steps;

    std::mt19937_64 rng_noise(cfg.seed_noise);
    SimState state = SimState::zero(static_cast<int>(d.p));
    const Eigen::VectorXd nominal = cfg.network.nominal_lambda();
    const Eigen::VectorXd rho_cr = cfg.rho_cr();
    Eigen::VectorXd y_setpoint = cfg.y_ref.size() > 0 ? cfg.y_ref : rho_cr;
    if (cfg.y_ref.size() > 0 && cfg.y_ref.size() != static_cast<Eigen::Index>(d.p))
        throw ConfigError("deepc.y_ref: need one entry per region");
    Eigen::VectorXd lambda_setpoint = cfg.lambda_ref.size() > 0 ? cfg.lambda_ref : nominal;
    if (cfg.lambda_ref.size() > 0 && cfg.lambda_ref.size() != static_cast<Eigen::Index>(d.l))
        throw ConfigError("deepc.lambda_ref: need one entry per light");

    std::unique_ptr<DeepcController> dc;
    DeepcConfig dcfg;
    std::unique_ptr<MpcBaselineController> mpc;
    PeResult rank;
    if (controller == "deepc") {
        if (data_dir.empty()) throw ConfigError("deepc run needs a collect data directory");
        Trajectory u_d = Trajectory::from_csv(data_dir + "/u_d.csv");
        Trajectory y_d = Trajectory::from_csv(data_dir + "/y_d.csv");
        if (u_d.channels() != d.m || y_d.channels() != d.p)
            throw ConfigError("collected data channel count does not match the network");
        dcfg = cfg.deepc_config();
        dc = std::make_unique<DeepcController>(build_deepc_data(u_d, y_d, cfg.T_ini, cfg.T_f),
                                               dcfg, d);
        rank = pe_check(Trajectory::stack(u_d, y_d), cfg.T_ini + cfg.T_f, d.m,
                        cfg.effective_order_bound());
    } else if (controller == "mpc") {
        LmpcConfig mc;
        mc.N_p = cfg.mpc_horizon_blocks > 0 ? cfg.mpc_horizon_blocks
                                            : static_cast<int>(cfg.T_f / cfg.duty_cycle);
        mc.T_p_hours =
            static_cast<double>(cfg.mpc_block_duty_cycles) * cfg.duty_cycle * delta_h;
        mc.pieces = cfg.mpc_pieces;
        mpc = std::make_unique<MpcBaselineController>(cfg.network, mc);
    }

    RunResult out;
    out.controller = controller;
    out.demand_name = demand_name;
    out.delta_s = cfg.delta_s;
    out.horizon_steps = K;
    out.seed_sim = cfg.seed_sim;
    out.seed_noise = cfg.seed_noise;
    out.rank = rank;
    out.density_trace.resize(d.p, K);
    out.flow_trace.resize(d.p, K);
    out.lambda_trace.resize(d.l, K);
    Eigen::VectorXd peak = Eigen::VectorXd::Zero(d.p);

    Eigen::MatrixXd block = nominal.replicate(1, cfg.duty_cycle);
    Eigen::VectorXd lambda_current = nominal;

    for (long k = 0; k < K; ++k) {
        const double t_s = static_cast<double>(k) * cfg.delta_s;
        try {
            if (k % cfg.duty_cycle == 0) {
                if (dc) {
                    const Eigen::Index pd = d.p * d.p;
                    Eigen::VectorXd d_bar(pd * cfg.T_f);
                    ReferenceSpec ref;
                    ref.y_ref = y_setpoint.replicate(1, cfg.T_f);
                    ref.u_ref.resize(d.m, cfg.T_f);
                    for (Eigen::Index s = 0; s < cfg.T_f; ++s) {
                        const Eigen::MatrixXd qf =
                            profile.at(t_s + static_cast<double>(s + 1) * cfg.delta_s);
                        const Eigen::VectorXd uf = input_sample(lambda_setpoint, qf);
                        ref.u_ref.col(s) = uf;
                        d_bar.segment(s * pd, pd) = uf.tail(pd);
                    }
                    const ConstraintSet cons = assemble_constraints(dcfg, d_bar, d);
                    block = dc->plan(ref, cons);
                    // Applied-block exactness: ties and boxes after projection.
                    for (Eigen::Index li = 0; li < d.l; ++li) {
                        const double lo = dcfg.lambda_lower(li), hi = dcfg.lambda_upper(li);
                        for (Eigen::Index c = 0; c < cfg.duty_cycle; ++c) {
                            out.max_lambda_eq_residual =
                                std::max(out.max_lambda_eq_residual,
                                         std::abs(block(li, c) - block(li, 0)));
                            out.max_lambda_eq_residual =
                                std::max({out.max_lambda_eq_residual, lo - block(li, c),
                                          block(li, c) - hi});
                        }
                    }
                    if (dc->warmed_up()) {
                        const auto& sol = dc->last_solution();
                        out.plan_log.push_back({k, block.col(0), sol.objective,
                                                sol.primal_residual, sol.dual_residual,
                                                sol.iterations});
                    }
                } else if (mpc) {
                    std::vector<Eigen::VectorXd> forecast;
                    const long blocks = cfg.mpc_horizon_blocks > 0
                                            ? cfg.mpc_horizon_blocks
                                            : cfg.T_f / cfg.duty_cycle;
                    const double block_s =
                        static_cast<double>(cfg.mpc_block_duty_cycles) * cfg.duty_cycle *
                        cfg.delta_s;
                    for (long s = 0; s < blocks; ++s) {
                        const Eigen::MatrixXd qf =
                            profile.at(t_s + (static_cast<double>(s) + 0.5) * block_s);
                        forecast.push_back(qf.rowwise().sum());
                    }
                    lambda_current = mpc->plan_lights(state, forecast);
                }
            }
            const Eigen::VectorXd lam = dc ? block.col(k % cfg.duty_cycle).eval() : lambda_current;
            const Eigen::MatrixXd q = profile.at(t_s);
            StepResult res = sim_step(cfg.network, state, lam, q, delta_h);
            const SensorReading reading = sense(cfg.network, res.state, lam, rng_noise);
            if (dc) dc->observe(input_sample(lam, q), aggregate(cfg.network, reading.density));

            const Eigen::VectorXd n_tot = res.state.accumulations();
            for (Eigen::Index i = 0; i < d.p; ++i)
                out.density_trace(i, k) = n_tot(i) / cfg.network.regions[i].network_length_km;
            out.flow_trace.col(k) = region_flow(cfg.network, res.state, lam);
            out.lambda_trace.col(k) = lam;
            peak = peak.cwiseMax(out.density_trace.col(k));
            state = res.state;
        } catch (const std::exception& e) {
            throw std::runtime_error("run aborted at step " + std::to_string(k) + ": " + e.what());
        }
    }

    out.metrics = compute_metrics(cfg.network, state, peak);
    return out;
}

void write_run(const RunResult& res, const ScenarioConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    {
        std::ofstream f(dir + "/trace.csv");
        f.precision(17);
        f << "k,region,density,flow,n_total";
        for (Eigen::Index li = 0; li < res.lambda_trace.rows(); ++li) f << ",lambda" << li;
        f << "\n";
        for (long k = 0; k < res.horizon_steps; ++k)
            for (Eigen::Index i = 0; i < res.density_trace.rows(); ++i) {
                f << k << "," << i << "," << res.density_trace(i, k) << ","
                  << res.flow_trace(i, k) << ","
                  << res.density_trace(i, k) * cfg.network.regions[i].network_length_km;
                for (Eigen::Index li = 0; li < res.lambda_trace.rows(); ++li)
                    f << "," << res.lambda_trace(li, k);
                f << "\n";
            }
    }
    if (!res.plan_log.empty()) {
        std::ofstream f(dir + "/controller.csv");
        f.precision(17);
        f << "t";
        for (Eigen::Index li = 0; li < res.lambda_trace.rows(); ++li) f << ",lambda_" << li;
        f << ",objective,primal_res,dual_res,iterations\n";
        for (const auto& e : res.plan_log) {
            f << e.t;
            for (Eigen::Index li = 0; li < e.lambda.size(); ++li) f << "," << e.lambda(li);
            f << "," << e.objective << "," << e.primal << "," << e.dual << "," << e.iterations
              << "\n";
        }
    }
    json j;
    j["controller"] = res.controller;
    j["demand"] = res.demand_name;
    j["delta_s"] = res.delta_s;
    j["horizon_steps"] = res.horizon_steps;
    j["seeds"] = {{"sim", res.seed_sim}, {"noise", res.seed_noise}};
    j["travel_time_min"] = res.metrics.avg_travel_time_min;
    j["waiting_time_min"] = res.metrics.avg_waiting_time_min;
    j["vehicle_hours"] = res.metrics.vehicle_hours;
    j["completed_trips"] = res.metrics.completed_trips;
    j["peak_density"] = std::vector<double>(res.metrics.peak_density.data(),
                                            res.metrics.peak_density.data() +
                                                res.metrics.peak_density.size());
    j["max_lambda_eq_residual"] = res.max_lambda_eq_residual;
    if (res.controller == "deepc") {
        j["achieved_rank"] = res.rank.achieved_rank;
        j["required_rank"] = res.rank.required_rank;
    }
    write_text(dir + "/metrics.json", j.dump(2) + "\n");
}

const ComparisonReport::Row* ComparisonReport::find(const std::string& controller) const {
    for (const auto& r : rows)
        if (r.controller == controller) return &r;
    return nullptr;
}

ComparisonReport compare_runs(const std::vector<std::string>& run_dirs) {
    if (run_dirs.empty()) throw ConfigError("compare: no run directories given");
    ComparisonReport rep;
    double delta_s = 0.0;
    long horizon = 0;
    for (const auto& dir : run_dirs) {
        const json j = load_json(dir + "/metrics.json");
        ComparisonReport::Row row;
        row.controller = j.at("controller").get<std::string>();
        row.travel_time_min = j.at("travel_time_min").get<double>();
        row.waiting_time_min = j.at("waiting_time_min").get<double>();
        row.vehicle_hours = j.at("vehicle_hours").get<double>();
        const auto pk = j.at("peak_density").get<std::vector<double>>();
        row.peak_density = Eigen::Map<const Eigen::VectorXd>(pk.data(),
                                                             static_cast<Eigen::Index>(pk.size()));
        if (rep.rows.empty()) {
            rep.demand_name = j.at("demand").get<std::string>();
            delta_s = j.at("delta_s").get<double>();
            horizon = j.at("horizon_steps").get<long>();
        } else if (rep.demand_name != j.at("demand").get<std::string>() ||
                   delta_s != j.at("delta_s").get<double>() ||
                   horizon != j.at("horizon_steps").get<long>()) {
            throw ConfigError("compare: run " + dir + " is from a different scenario");
        }
        rep.rows.push_back(std::move(row));
    }
    if (const auto* base = rep.find("none")) {
        for (auto& r : rep.rows)
            r.improvement_vs_none =
                (base->travel_time_min - r.travel_time_min) / base->travel_time_min;
    }
    return rep;
}

namespace {

/// Minimal line-plot SVG: one polyline per run plus dashed reference lines.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<std::pair<std::string, Eigen::VectorXd>>& series,
                    const std::vector<std::pair<std::string, double>>& hlines) {
    const int W = 720, H = 420, ml = 60, mr = 20, mt = 40, mb = 40;
    double ymax = 1e-9;
    long n = 0;
    for (const auto& [name, v] : series) {
        ymax = std::max(ymax, v.maxCoeff());
        n = std::max(n, static_cast<long>(v.size()));
    }
    for (const auto& [name, v] : hlines) ymax = std::max(ymax, v);
    ymax *= 1.05;
    auto X = [&](double i) { return ml + (W - ml - mr) * i / std::max<long>(n - 1, 1); };
    auto Yc = [&](double v) { return H - mb - (H - mt - mb) * v / ymax; };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};

    std::ostringstream s;
    s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    s << "<rect width='100%' height='100%' fill='white'/>\n";
    s << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
    s << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
      << "' stroke='black'/>\n";
    s << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
      << "' stroke='black'/>\n";
    int ci = 0;
    for (const auto& [name, v] : series) {
        s << "<polyline fill='none' stroke='" << colors[ci % 5] << "' stroke-width='1.5' points='";
        for (Eigen::Index i = 0; i < v.size(); ++i)
            s << X(static_cast<double>(i)) << "," << Yc(v(i)) << " ";
        s << "'/>\n";
        s << "<text x='" << W - mr - 100 << "' y='" << mt + 16 * ci << "' fill='"
          << colors[ci % 5] << "' font-size='12'>" << name << "</text>\n";
        ++ci;
    }
    for (const auto& [name, v] : hlines) {
        s << "<line x1='" << ml << "' y1='" << Yc(v) << "' x2='" << W - mr << "' y2='" << Yc(v)
          << "' stroke='gray' stroke-dasharray='6,4'/>\n";
        s << "<text x='" << ml + 4 << "' y='" << Yc(v) - 4 << "' fill='gray' font-size='11'>"
          << name << "</text>\n";
    }
    s << "<text x='" << ml - 8 << "' y='" << mt - 8 << "' text-anchor='end' font-size='11'>"
      << std::fixed << ymax << "</text>\n";
    s << "</svg>\n";
    write_text(path, s.str());
}

Eigen::MatrixXd read_trace_column(const std::string& dir, int column, int regions, long steps) {
    std::ifstream f(dir + "/trace.csv");
    if (!f) throw ConfigError("missing trace.csv in " + dir);
    std::string line;
    std::getline(f, line);
    Eigen::MatrixXd m(regions, steps);
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> cells;
        while (std::getline(ss, tok, ',')) cells.push_back(tok);
        const long k = std::stol(cells[0]);
        const int i = std::stoi(cells[1]);
        if (k < steps && i < regions) m(i, k) = std::stod(cells[static_cast<size_t>(column)]);
    }
    return m;
}

}  // namespace

void write_report(const ComparisonReport& rep, const std::vector<std::string>& run_dirs,
                  const ScenarioConfig& cfg, const std::string& dir, bool svg) {
    fs::create_directories(dir);
    std::ostringstream md, csv;
    md << "# Scenario comparison: " << rep.demand_name << "\n\n";
    md << "| Metric |";
    for (const auto& r : rep.rows) md << " " << r.controller << " |";
    md << "\n|---|";
    for (size_t i = 0; i < rep.rows.size(); ++i) md << "---|";
    md << "\n";
    auto row = [&](const std::string& name, auto get) {
        md << "| " << name << " |";
        csv << name;
        for (const auto& r : rep.rows) {
            md << " " << get(r) << " |";
            csv << "," << get(r);
        }
        md << "\n";
        csv << "\n";
    };
    csv << "metric";
    for (const auto& r : rep.rows) csv << "," << r.controller;
    csv << "\n";
    row("Travel Time (min)", [](const auto& r) { return r.travel_time_min; });
    row("Waiting Time (min)", [](const auto& r) { return r.waiting_time_min; });
    row("Vehicle-hours", [](const auto& r) { return r.vehicle_hours; });
    row("Improvement vs no control (%)",
        [](const auto& r) { return 100.0 * r.improvement_vs_none; });
    write_text(dir + "/report.md", md.str());
    write_text(dir + "/report.csv", csv.str());

    if (!svg) return;
    const int p = cfg.network.num_regions();
    const long steps = cfg.horizon_steps;
    std::vector<Eigen::MatrixXd> dens, flow;
    for (const auto& rd : run_dirs) {
        dens.push_back(read_trace_column(rd, 2, p, steps));
        flow.push_back(read_trace_column(rd, 3, p, steps));
    }
    for (int i = 0; i < p; ++i) {
        std::vector<std::pair<std::string, Eigen::VectorXd>> ds, fl;
        for (size_t r = 0; r < rep.rows.size(); ++r) {
            ds.emplace_back(rep.rows[r].controller, dens[r].row(i).transpose());
            fl.emplace_back(rep.rows[r].controller, flow[r].row(i).transpose());
        }
        write_svg_plot(dir + "/density_region" + std::to_string(i) + ".svg",
                       "Density region " + std::to_string(i) + " (veh/km)", ds,
                       {{"rho_cr", cfg.rho_cr()(i)}, {"rho_max", cfg.rho_max()(i)}});
        write_svg_plot(dir + "/flow_region" + std::to_string(i) + ".svg",
                       "Flow region " + std::to_string(i) + " (veh/h)", fl, {});
    }
}

}  // namespace dtc
