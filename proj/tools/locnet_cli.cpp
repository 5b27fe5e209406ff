#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "locnet/config.hpp"
#include "locnet/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

locnet::ScenarioConfig load_config(const std::string& config_path, uint64_t* seed_override,
                                   const std::string& scenario_override,
                                   const std::string& mode_override,
                                   const std::string& out_override) {
    locnet::ScenarioConfig cfg;
    if (!config_path.empty()) cfg = locnet::parse_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (!scenario_override.empty()) cfg.which = scenario_override;
    if (!mode_override.empty()) cfg.mode = mode_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
}

json mse_table(const locnet::TrialStats& stats, const std::vector<int>& steps) {
    json rows = json::array();
    for (size_t i = 0; i < stats.steps.size(); ++i) {
        const auto& s = stats.steps[i];
        json row;
        row["step"] = steps.size() > i ? steps[i] : s.step;
        row["mse"] = json::array();
        row["b_minus"] = json::array();
        row["b_plus"] = json::array();
        for (int t = 0; t < s.mse.size(); ++t) {
            row["mse"].push_back(s.mse(t));
            row["b_minus"].push_back(s.b_minus(t));
            row["b_plus"].push_back(s.b_plus(t));
        }
        row["logdet_cov"] = s.logdet_cov;
        row["failures"] = s.failures;
        rows.push_back(row);
    }
    return rows;
}

std::string potential_csv(const locnet::ScenarioTrace& trace) {
    std::string out = "step,potential,aux\n";
    for (const auto& rec : trace.steps)
        out += std::to_string(rec.step) + "," + fmt(rec.potential) + "," + fmt(rec.aux) + "\n";
    return out;
}

std::string trajectory_csv(const locnet::ScenarioTrace& trace) {
    std::string out = "step,node,x,y,x_tracked,y_tracked\n";
    for (const auto& rec : trace.steps)
        for (int node = 0; node < rec.planned.cols(); ++node)
            out += std::to_string(rec.step) + "," + std::to_string(node) + "," +
                   fmt(rec.planned(0, node)) + "," + fmt(rec.planned(1, node)) + "," +
                   fmt(rec.tracked(0, node)) + "," + fmt(rec.tracked(1, node)) + "\n";
    return out;
}

int cmd_run(const locnet::ScenarioConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "effective_config.ini", locnet::serialize_config(cfg));

    locnet::ScenarioTrace trace;
    if (cfg.which == "inspection") {
        trace = locnet::run_inspection_scenario(cfg.inspection());
    } else {
        const auto mode = cfg.mode == "D" ? locnet::ConstraintMode::DistanceOnly
                                          : locnet::ConstraintMode::RelativePosition;
        trace = locnet::run_ugv_scenario(cfg.ugv(), mode);
    }

    write_file(fs::path(cfg.out_dir) / "trace.csv", locnet::trace_csv(trace));
    write_file(fs::path(cfg.out_dir) / "potential_vs_step.csv", potential_csv(trace));
    write_file(fs::path(cfg.out_dir) / "trajectories.csv", trajectory_csv(trace));
    if (!trace.mc.steps.empty())
        write_file(fs::path(cfg.out_dir) / "mse.csv", locnet::trial_stats_csv(trace.mc));

    json summary;
    summary["scenario"] = cfg.which;
    if (cfg.which == "ugv") summary["mode"] = cfg.mode;
    summary["seed"] = cfg.seed;
    summary["steps"] = trace.steps.size();
    summary["potential_initial"] = trace.steps.front().potential;
    summary["potential_final"] = trace.steps.back().potential;
    summary["potential_decreased"] =
        trace.steps.back().potential < trace.steps.front().potential;
    if (cfg.which == "ugv") summary["final_constraint_norm"] = trace.final_constraint_norm;
    if (!trace.mc.steps.empty()) summary["mse"] = mse_table(trace.mc, trace.mc_steps);
    write_file(fs::path(cfg.out_dir) / "summary.json", summary.dump(2) + "\n");

    std::cout << "wrote " << cfg.out_dir << "/{trace.csv,summary.json,...}; potential "
              << fmt(trace.steps.front().potential) << " -> "
              << fmt(trace.steps.back().potential) << "\n";
    return kExitOk;
}

int cmd_verify(const locnet::ScenarioConfig& cfg, const std::string& mutate) {
    const int failures = locnet::run_verification(cfg.seed, mutate, std::cout);
    return failures == 0 ? kExitOk : kExitFailure;
}

int cmd_montecarlo(const locnet::ScenarioConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const std::vector<std::string> modes =
        cfg.mode == "both" ? std::vector<std::string>{"D", "RP"}
                           : std::vector<std::string>{cfg.mode};

    json report;
    report["scenario"] = "ugv";
    report["trials"] = cfg.mc_trials;
    report["seed"] = cfg.seed;
    report["rows"] = json::array();
    std::string csv = "mode,mse_0,conf_0,mse_f,conf_f,wallclock_s\n";

    std::cout << "mode   MSE_0        +/-          MSE_F        +/-          wallclock\n";
    for (const auto& m : modes) {
        const auto mode = m == "D" ? locnet::ConstraintMode::DistanceOnly
                                   : locnet::ConstraintMode::RelativePosition;
        const auto t0 = std::chrono::steady_clock::now();
        const locnet::ScenarioTrace trace = locnet::run_ugv_scenario(cfg.ugv(), mode);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const auto& first = trace.mc.steps.front();
        const auto& last = trace.mc.steps.back();
        const double mse0 = first.mse.mean();
        const double msef = last.mse.mean();
        // half-width of the averaged-tag MSE confidence band
        const double conf0 = (first.b_plus - first.mse).mean();
        const double conff = (last.b_plus - last.mse).mean();

        json row;
        row["mode"] = m;
        row["mse_initial"] = mse0;
        row["confidence_initial"] = conf0;
        row["mse_final"] = msef;
        row["confidence_final"] = conff;
        row["wallclock_s"] = wall;
        report["rows"].push_back(row);
        csv += m + "," + fmt(mse0) + "," + fmt(conf0) + "," + fmt(msef) + "," + fmt(conff) +
               "," + fmt(wall) + "\n";
        std::printf("%-6s %-12.4g %-12.4g %-12.4g %-12.4g %.2fs\n", m.c_str(), mse0, conf0,
                    msef, conff, wall);
    }
    write_file(fs::path(cfg.out_dir) / "montecarlo.json", report.dump(2) + "\n");
    write_file(fs::path(cfg.out_dir) / "montecarlo.csv", csv);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CRLB-based localizability deployment simulator"};
    app.require_subcommand(1);

    std::string config_path, scenario, mode, out_dir, mutate;
    uint64_t seed = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "configuration file");
        cmd->add_option("--seed", seed, "override the top-level seed")
            ->each([&](const std::string&) { seed_set = true; });
        cmd->add_option("--out", out_dir, "output directory");
    };

    CLI::App* run = app.add_subcommand("run", "run a scenario and write trace files");
    add_common(run);
    run->add_option("--scenario", scenario)->check(CLI::IsMember({"inspection", "ugv"}));
    run->add_option("--mode", mode)->check(CLI::IsMember({"D", "RP"}));

    CLI::App* verify = app.add_subcommand("verify", "run the invariant property suites");
    add_common(verify);
    verify->add_option("--mutate", mutate)->group("");  // hidden fault-injection hook

    CLI::App* mc = app.add_subcommand("montecarlo", "reproduce the UGV error table");
    add_common(mc);
    mc->add_option("--mode", mode)->check(CLI::IsMember({"D", "RP", "both"}));

    CLI11_PARSE(app, argc, argv);

    try {
        locnet::ScenarioConfig cfg =
            load_config(config_path, seed_set ? &seed : nullptr, scenario, mode, out_dir);
        if (run->parsed()) return cmd_run(cfg);
        if (verify->parsed()) return cmd_verify(cfg, mutate);
        if (mc->parsed()) {
            if (mode.empty()) cfg.mode = "both";
            return cmd_montecarlo(cfg);
        }
    } catch (const locnet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}
