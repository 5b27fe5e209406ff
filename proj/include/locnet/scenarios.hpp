#ifndef LOCNET_SCENARIOS_HPP
#define LOCNET_SCENARIOS_HPP

#include "locnet/estimation.hpp"

namespace locnet {

/// Planar monocycle: center (x, y), heading theta, transceiver mounted at
/// robot-frame offset (alpha, beta) with alpha != 0 for velocity control.
struct RobotState {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double theta = 0.0;
    double alpha = 0.5;
    double beta = 0.5;

    Eigen::Vector2d transceiver() const {
        const double c = std::cos(theta), s = std::sin(theta);
        return center + Eigen::Vector2d(c * alpha - s * beta, s * alpha + c * beta);
    }
};

/// Explicit Euler integration of the monocycle kinematics, subdivided so no
/// substep exceeds dt_max.
RobotState monocycle_step(const RobotState& state, double v, double omega, double dt,
                          double dt_max = 0.01);

struct PiController {
    double kp = 3.0;
    double ki = 0.5;
    Eigen::Vector2d integral = Eigen::Vector2d::Zero();
};

/// PI law on the transceiver position error, returning the world-frame
/// velocity command.
Eigen::Vector2d pi_velocity(PiController& pi, const Eigen::Vector2d& target,
                            const Eigen::Vector2d& measured, double dt);

/// Map a desired world-frame transceiver velocity to (v, omega) through the
/// offset matrix T(theta); requires alpha != 0.
Eigen::Vector2d velocity_to_command(const Eigen::Vector2d& u_tilde, const RobotState& state);

struct BoundingBox {
    Eigen::Vector2d lo;
    Eigen::Vector2d hi;
    double influence = 1.5;  // d_s
};

struct Repulsion {
    double value = 0.0;
    Eigen::Vector2d gradient = Eigen::Vector2d::Zero();
};

/// Sum of the edge repulsion terms 0.5 (1/d - 1/d_s)^2 over the four box
/// edges within influence; the position must lie strictly inside.
Repulsion repulsive_box_gradient(const Eigen::Vector2d& position, const BoundingBox& box);

struct StepRecord {
    int step = 0;
    Eigen::MatrixXd planned;  // dim x N
    Eigen::MatrixXd tracked;  // dim x N
    double potential = 0.0;   // J_D or J_c
    double aux = 0.0;         // box repulsion value or |f_c|
    bool skipped = false;     // singular FIM at this step
};

struct ScenarioTrace {
    std::vector<StepRecord> steps;
    TrialStats mc;
    std::vector<int> mc_steps;
    double final_constraint_norm = 0.0;
};

std::string trace_csv(const ScenarioTrace& trace);

struct InspectionConfig {
    double structure_length = 6.0;
    double structure_height = 10.0;
    double waypoint_spacing = 0.1;
    int steps = 100;
    Eigen::MatrixXd tag_start;     // 2 x 2
    Eigen::MatrixXd anchor_start;  // 2 x 3
    // measured pairs; empty selects every tag-involving pair
    std::vector<std::pair<int, int>> ranging_pairs;
    std::vector<BoundingBox> boxes;
    NoiseModel noise{NoiseKind::Additive, 0.1};
    double k_loc = 2.0;
    double k_con = 0.01;
    double step_cap = 0.2;  // Delta_vel
    double alpha = 0.5;
    double beta = 0.5;
    double kp = 3.0;
    double ki = 0.5;
    double dt = 0.05;
    double dt_max = 0.01;
    double plan_period = 1.0;  // tracking time per planning step
    int mc_period = 0;         // 0 disables embedded Monte Carlo
    int mc_trials = 100;
    uint64_t seed = 1;
    bool plan_on_estimates = false;

    InspectionConfig();
};

ScenarioTrace run_inspection_scenario(const InspectionConfig& config);

enum class ConstraintMode { DistanceOnly, RelativePosition };

struct UgvConfig {
    Eigen::MatrixXd body_offsets;  // 2 x 2: (1,0) and (-1,0)
    Eigen::MatrixXd anchors;       // 2 x 3
    // The error table the vehicle scenario reproduces corresponds to unit
    // range-noise variance, so sigma defaults to 1 here (the narrative value
    // elsewhere is 0.1 m).
    NoiseModel noise{NoiseKind::Additive, 1.0};
    Eigen::Vector2d start_center{-15.0, -4.0};
    double start_theta = -M_PI / 8.0;
    int max_steps = 2500;
    double stall_tol = 1e-7;   // stop when primal steps stall
    double delta = 0.5;
    double penalty_rho = 1.0;  // quadratic constraint penalty in the descent
    double primal_step_cap = 0.2;
    ArmijoParams armijo;
    double k_rho = 0.8;
    double k_alpha = 2.0;
    double k_theta = 1.0;
    double dt = 0.05;
    double dt_max = 0.01;
    double plan_period = 1.0;
    int mc_trials = 500;
    uint64_t seed = 1;

    UgvConfig();
};

ScenarioTrace run_ugv_scenario(const UgvConfig& config, ConstraintMode mode);

}  // namespace locnet

#endif
