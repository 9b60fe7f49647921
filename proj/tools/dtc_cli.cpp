#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtc/harness.hpp"

namespace fs = std::filesystem;

namespace {

/// Output directories are populated under a temporary name and renamed
/// into place once complete, so readers never see a partial result.
class StagedDir {
public:
    explicit StagedDir(std::string final_path)
        : final_(std::move(final_path)), tmp_(final_ + ".partial") {
        fs::remove_all(tmp_);
        fs::create_directories(tmp_);
    }
    const std::string& path() const { return tmp_; }
    void commit() {
        fs::remove_all(final_);
        fs::rename(tmp_, final_);
        committed_ = true;
    }
    ~StagedDir() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(tmp_, ec);
        }
    }

private:
    std::string final_, tmp_;
    bool committed_ = false;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"data-driven and model-based traffic perimeter control experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, controller, demand_name, data_dir;
    bool svg = false;
    std::vector<std::string> run_dirs;

    auto* collect_cmd = app.add_subcommand("collect", "record offline excitation data");
    collect_cmd->add_option("--config", config_path, "scenario JSON")->required();
    collect_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* run_cmd = app.add_subcommand("run", "closed-loop scenario run");
    run_cmd->add_option("--config", config_path, "scenario JSON")->required();
    run_cmd->add_option("--controller", controller, "deepc | mpc | none")->required();
    run_cmd->add_option("--out", out_dir, "output directory")->required();
    run_cmd->add_option("--demand", demand_name, "demand profile name (default: config scenario)");
    run_cmd->add_option("--data", data_dir, "collect output directory (deepc only)");

    auto* cmp_cmd = app.add_subcommand("compare", "tabulate and plot finished runs");
    cmp_cmd->add_option("runs", run_dirs, "run output directories")->required();
    cmp_cmd->add_option("--config", config_path, "scenario JSON (needed for --svg axes)");
    cmp_cmd->add_option("--out", out_dir, "output directory")->required();
    cmp_cmd->add_flag("--svg", svg, "emit density/flow SVG plots");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (collect_cmd->parsed()) {
            const dtc::ScenarioConfig cfg = dtc::ScenarioConfig::load(config_path);
            const dtc::CollectResult res = dtc::collect(cfg);
            StagedDir out(out_dir);
            dtc::write_collect(res, out.path());
            out.commit();
            std::cout << "collected " << res.u_d.length() << " samples, stacked Hankel rank "
                      << res.rank.achieved_rank << "/" << res.rank.rows << " rows"
                      << (res.rank.achieved_rank < res.rank.rows
                              ? " (row deficient: some windows may be infeasible)"
                              : "")
                      << "\n";
        } else if (run_cmd->parsed()) {
            const dtc::ScenarioConfig cfg = dtc::ScenarioConfig::load(config_path);
            const std::string demand = demand_name.empty() ? cfg.scenario : demand_name;
            if (controller == "deepc" && data_dir.empty())
                throw dtc::ConfigError("run --controller deepc needs --data <collect dir>");
            const dtc::RunResult res = dtc::run_scenario(cfg, demand, controller, data_dir);
            StagedDir out(out_dir);
            dtc::write_run(res, cfg, out.path());
            out.commit();
            std::cout << controller << "/" << demand << ": travel "
                      << res.metrics.avg_travel_time_min << " min, waiting "
                      << res.metrics.avg_waiting_time_min << " min, peak density "
                      << res.metrics.peak_density.transpose() << "\n";
        } else {
            const dtc::ComparisonReport rep = dtc::compare_runs(run_dirs);
            if (svg && config_path.empty())
                throw dtc::ConfigError("compare --svg needs --config for the axis limits");
            dtc::ScenarioConfig cfg;
            if (!config_path.empty()) cfg = dtc::ScenarioConfig::load(config_path);
            StagedDir out(out_dir);
            dtc::write_report(rep, run_dirs, cfg, out.path(), svg);
            out.commit();
            for (const auto& r : rep.rows)
                std::cout << r.controller << ": travel " << r.travel_time_min << " min ("
                          << 100.0 * r.improvement_vs_none << "% vs none)\n";
        }
    } catch (const dtc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
