#ifndef LOCNET_CONFIG_HPP
#define LOCNET_CONFIG_HPP

#include <iosfwd>
#include <string>

#include "locnet/scenarios.hpp"

namespace locnet {

/// Full simulator configuration. Defaults reproduce the reference inspection
/// setup; every field can be overridden from the INI-style config document
/// (see README for the format).
struct ScenarioConfig {
    // [scenario]
    std::string which = "inspection";  // inspection | ugv
    std::string mode = "D";            // D | RP
    int steps = 100;
    uint64_t seed = 1;

    // [network]
    Eigen::MatrixXd ranging_pairs;  // 2 x P, empty = every tag-involving pair

    // [noise]
    std::string noise_kind = "additive";  // additive | lognormal
    double sigma = 0.1;

    // [potential]
    std::string potential_kind = "dopt";
    double k_loc = 2.0;
    double k_con = 0.01;
    double step_cap = 0.2;

    // [distributed]
    double dist_eta = 0.0;
    int dist_max_rounds = 20000;
    double dist_tol = 1e-9;
    int dist_inner_rounds = 50;
    int dist_outer_iters = 200;

    // [constraints]
    double delta = 0.5;
    double armijo_step = 1.0;
    double armijo_contraction = 0.5;
    double armijo_decrease = 1e-4;
    int armijo_max_backtracks = 30;

    // [inspection]
    double structure_length = 6.0;
    double structure_height = 10.0;
    double waypoint_spacing = 0.1;
    Eigen::MatrixXd insp_tags;     // 2 x U
    Eigen::MatrixXd insp_anchors;  // 2 x K
    Eigen::MatrixXd insp_boxes;    // rows of (lo_x lo_y hi_x hi_y)
    double box_influence = 1.5;
    double kp = 3.0;
    double ki = 0.5;
    double alpha = 0.5;
    double beta = 0.5;
    double dt = 0.05;
    double dt_max = 0.01;
    double plan_period = 1.0;
    bool plan_on_estimates = false;

    // [ugv]
    Eigen::MatrixXd ugv_offsets;  // 2 x 2
    Eigen::MatrixXd ugv_anchors;  // 2 x 3
    Eigen::Vector2d ugv_start{-15.0, -4.0};
    double ugv_theta0 = -M_PI / 8.0;
    int ugv_max_steps = 2500;
    double ugv_sigma = 1.0;  // the vehicle error table corresponds to unit noise
    double ugv_penalty_rho = 1.0;
    double ugv_step_cap = 0.2;

    // [montecarlo]
    int mc_trials = 500;
    int mc_period = 5;
    int mc_inner_trials = 100;

    // [output]
    std::string out_dir = "out";

    ScenarioConfig();

    NoiseModel noise() const;
    InspectionConfig inspection() const;
    UgvConfig ugv() const;
};

/// Parse the INI-style document; unknown keys, type mismatches and value
/// constraints raise ConfigError with a section.key diagnostic.
ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig parse_config(const std::string& path);

std::string serialize_config(const ScenarioConfig& config);

}  // namespace locnet

#endif
