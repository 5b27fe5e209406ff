#include "locnet/scenarios.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace locnet {

namespace {

double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b, Eigen::Vector2d* closest) {
    const Eigen::Vector2d ab = b - a;
    const double t = std::clamp(ab.dot(p - a) / ab.squaredNorm(), 0.0, 1.0);
    const Eigen::Vector2d q = a + t * ab;
    if (closest) *closest = q;
    return (p - q).norm();
}

}  // namespace

RobotState monocycle_step(const RobotState& state, double v, double omega, double dt,
                          double dt_max) {
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    RobotState s = state;
    int n = std::max(1, static_cast<int>(std::ceil(dt / dt_max)));
    const double h = dt / n;
    for (int i = 0; i < n; ++i) {
        s.center.x() += h * v * std::cos(s.theta);
        s.center.y() += h * v * std::sin(s.theta);
        s.theta += h * omega;
    }
    return s;
}

Eigen::Vector2d pi_velocity(PiController& pi, const Eigen::Vector2d& target,
                            const Eigen::Vector2d& measured, double dt) {
    const Eigen::Vector2d err = target - measured;
    pi.integral += dt * err;
    return pi.kp * err + pi.ki * pi.integral;
}

Eigen::Vector2d velocity_to_command(const Eigen::Vector2d& u_tilde, const RobotState& state) {
    if (state.alpha == 0.0)
        throw std::invalid_argument("velocity control needs alpha != 0");
    const double c = std::cos(state.theta), s = std::sin(state.theta);
    Eigen::Matrix2d t;
    t << state.alpha * c - state.beta * s, state.alpha * s + state.beta * c, -s, c;
    return (t / state.alpha) * u_tilde;
}

Repulsion repulsive_box_gradient(const Eigen::Vector2d& position, const BoundingBox& box) {
    if (!(position.x() > box.lo.x() && position.x() < box.hi.x() &&
          position.y() > box.lo.y() && position.y() < box.hi.y()))
        throw BarrierError("position is not strictly inside its bounding box");

    const Eigen::Vector2d c00 = box.lo;
    const Eigen::Vector2d c11 = box.hi;
    const Eigen::Vector2d c10(box.hi.x(), box.lo.y());
    const Eigen::Vector2d c01(box.lo.x(), box.hi.y());
    const std::pair<Eigen::Vector2d, Eigen::Vector2d> edges[4] = {
        {c00, c10}, {c10, c11}, {c11, c01}, {c01, c00}};

    Repulsion out;
    for (const auto& [a, b] : edges) {
        Eigen::Vector2d closest;
        const double d = point_segment_distance(position, a, b, &closest);
        if (d <= 0.0) throw BarrierError("position touches a box edge");
        if (d >= box.influence) continue;
        const double diff = 1.0 / d - 1.0 / box.influence;
        out.value += 0.5 * diff * diff;
        // dg/dd = -diff / d^2, d(d)/dp = (p - closest)/d
        out.gradient += (-diff / (d * d)) * ((position - closest) / d);
    }
    return out;
}

std::string trace_csv(const ScenarioTrace& trace) {
    std::ostringstream os;
    os << "step,node,x_planned,y_planned,x_tracked,y_tracked,potential,aux,skipped\n";
    char buf[64];
    for (const auto& rec : trace.steps) {
        for (int node = 0; node < rec.planned.cols(); ++node) {
            os << rec.step << ',' << node;
            const double vals[] = {rec.planned(0, node), rec.planned(1, node),
                                   rec.tracked(0, node), rec.tracked(1, node),
                                   rec.potential, rec.aux};
            for (double v : vals) {
                std::snprintf(buf, sizeof(buf), ",%.17g", v);
                os << buf;
            }
            os << ',' << (rec.skipped ? 1 : 0) << '\n';
        }
    }
    return os.str();
}

InspectionConfig::InspectionConfig() {
    tag_start.resize(2, 2);
    tag_start << 1.0, 5.0, -0.5, -0.5;
    anchor_start.resize(2, 3);
    anchor_start << -2.0, -1.5, 8.0, 0.0, 0.0, 0.0;
    // boxes flank the structure footprint [0,L] x [0,H]
    boxes = {
        BoundingBox{{-4.5, -2.0}, {-1.75, 12.0}, 1.5},
        BoundingBox{{-1.75, -2.0}, {0.0, 12.0}, 1.5},
        BoundingBox{{6.0, -2.0}, {10.5, 12.0}, 1.5},
    };
}

ScenarioTrace run_inspection_scenario(const InspectionConfig& cfg) {
    const int tag_count = static_cast<int>(cfg.tag_start.cols());
    const int anchor_count = static_cast<int>(cfg.anchor_start.cols());
    const int n = tag_count + anchor_count;
    if (static_cast<int>(cfg.boxes.size()) < anchor_count)
        throw std::invalid_argument("one bounding box per anchor expected");

    std::vector<std::pair<int, int>> pairs = cfg.ranging_pairs;
    if (pairs.empty())
        for (int t = 0; t < tag_count; ++t)
            for (int j = t + 1; j < n; ++j) pairs.emplace_back(t, j);
    const RangingGraph graph = build_graph(2, tag_count, anchor_count, pairs);

    Configuration planned(2, n);
    planned.positions.leftCols(tag_count) = cfg.tag_start;
    planned.positions.rightCols(anchor_count) = cfg.anchor_start;

    std::vector<int> anchors(anchor_count);
    std::iota(anchors.begin(), anchors.end(), tag_count);

    // robots track the planned node positions; transceiver starts on the node
    std::vector<RobotState> robots(n);
    std::vector<PiController> pis(n);
    for (int i = 0; i < n; ++i) {
        robots[i].alpha = cfg.alpha;
        robots[i].beta = cfg.beta;
        robots[i].theta = 0.0;
        robots[i].center = planned.positions.col(i) - Eigen::Vector2d(cfg.alpha, cfg.beta);
        pis[i].kp = cfg.kp;
        pis[i].ki = cfg.ki;
    }

    ScenarioTrace trace;
    std::vector<MonteCarloCase> mc_cases;
    Rng rng(cfg.seed);

    for (int k = 0; k <= cfg.steps; ++k) {
        StepRecord rec;
        rec.step = k;

        if (k > 0) {
            // tags advance along their inspection paths
            const double y = cfg.waypoint_spacing * k;
            planned.positions(0, 0) = cfg.structure_length / 3.0;
            planned.positions(1, 0) = y;
            planned.positions(0, 1) = 2.0 * cfg.structure_length / 3.0;
            planned.positions(1, 1) = y;

            // anchors take one capped descent step on K_l J_D + K_c J_con
            Configuration grad_config = planned;
            if (cfg.plan_on_estimates) {
                MeasurementSet meas = sample_measurements(graph, planned, cfg.noise, rng);
                const LsResult est =
                    ls_localize(graph, planned.positions.rightCols(anchor_count), meas,
                                planned.positions.leftCols(tag_count));
                if (est.converged)
                    grad_config.positions.leftCols(tag_count) = est.tag_positions;
            }
            try {
                const GradientField loc =
                    potential_gradient(PotentialKind::DOpt, graph, grad_config, cfg.noise,
                                       anchors);
                GradientField total;
                total.value = cfg.k_loc * loc.value;
                for (int a = 0; a < anchor_count; ++a) {
                    const int node = tag_count + a;
                    const Repulsion rep = repulsive_box_gradient(
                        planned.positions.col(node), cfg.boxes[a]);
                    total.grad[node] = cfg.k_loc * loc.at(node) + cfg.k_con * rep.gradient;
                }
                planned = descent_step(planned, total, 1.0, cfg.step_cap);
            } catch (const SingularMatrixError&) {
                rec.skipped = true;  // anchors hold position this step
            }
        }

        // potentials at the planned configuration
        try {
            rec.potential = potential_value(PotentialKind::DOpt,
                                            fim(graph, planned, cfg.noise).tag_block());
        } catch (const SingularMatrixError&) {
            rec.potential = std::numeric_limits<double>::infinity();
            rec.skipped = true;
        }
        double rep_total = 0.0;
        for (int a = 0; a < anchor_count; ++a)
            rep_total +=
                repulsive_box_gradient(planned.positions.col(tag_count + a), cfg.boxes[a])
                    .value;
        rec.aux = rep_total;

        // robots track the new plan for one planning period
        const int control_steps =
            std::max(1, static_cast<int>(std::round(cfg.plan_period / cfg.dt)));
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < control_steps; ++c) {
                const Eigen::Vector2d u = pi_velocity(pis[i], planned.positions.col(i),
                                                      robots[i].transceiver(), cfg.dt);
                const Eigen::Vector2d cmd = velocity_to_command(u, robots[i]);
                robots[i] = monocycle_step(robots[i], cmd(0), cmd(1), cfg.dt, cfg.dt_max);
            }
        }

        rec.planned = planned.positions;
        rec.tracked.resize(2, n);
        for (int i = 0; i < n; ++i) rec.tracked.col(i) = robots[i].transceiver();
        trace.steps.push_back(rec);

        if (cfg.mc_period > 0 && (k % cfg.mc_period == 0 || k == cfg.steps))
            mc_cases.push_back({k, graph, planned});
    }

    if (!mc_cases.empty()) {
        const Estimator est = [](const RangingGraph& g, const Eigen::MatrixXd& anc,
                                 const MeasurementSet& m, const Eigen::MatrixXd& guess) {
            return ls_localize(g, anc, m, guess);
        };
        trace.mc = monte_carlo(mc_cases, cfg.noise, est, cfg.mc_trials, cfg.seed);
        for (const auto& c : mc_cases) trace.mc_steps.push_back(c.step);
    }
    return trace;
}

UgvConfig::UgvConfig() {
    body_offsets.resize(2, 2);
    body_offsets << 1.0, -1.0, 0.0, 0.0;
    anchors.resize(2, 3);
    anchors << -5.0, 5.0, 5.0, 5.0, -5.0, 5.0;
}

ScenarioTrace run_ugv_scenario(const UgvConfig& cfg, ConstraintMode mode) {
    const int tag_count = 2;
    const int anchor_count = static_cast<int>(cfg.anchors.cols());
    const int n = tag_count + anchor_count;

    std::vector<std::pair<int, int>> pairs;
    for (int t = 0; t < tag_count; ++t)
        for (int j = t + 1; j < n; ++j) pairs.emplace_back(t, j);
    const RangingGraph graph = build_graph(2, tag_count, anchor_count, pairs);

    RigidGroup group;
    group.robot_id = 0;
    group.tags = {0, 1};
    group.body_offsets = {cfg.body_offsets.col(0), cfg.body_offsets.col(1)};
    const RigidGroups groups = {group};

    auto pose_positions = [&](const Eigen::Vector2d& center, double theta) {
        Eigen::VectorXd th(1);
        th(0) = theta;
        const Eigen::MatrixXd rot = rotation_exp(th, 2);
        Eigen::MatrixXd tags(2, 2);
        tags.col(0) = center + rot * cfg.body_offsets.col(0);
        tags.col(1) = center + rot * cfg.body_offsets.col(1);
        return tags;
    };

    Configuration planned(2, n);
    planned.positions.leftCols(2) = pose_positions(cfg.start_center, cfg.start_theta);
    planned.positions.rightCols(anchor_count) = cfg.anchors;

    const std::vector<int> mobile = {0, 1};

    const ConstraintFn constraint_fn = [&](const Configuration& c) {
        return distance_constraints(groups, c, tag_count);
    };
    const ObjectiveFn objective_fn = [&](const Configuration& c) -> GradientField {
        if (mode == ConstraintMode::DistanceOnly)
            return constrained_potential_gradient(groups, graph, c, cfg.noise, mobile);
        Eigen::MatrixXd desired = c.positions.leftCols(2);
        const PoseFit fit = project_to_rigid_pose(group, desired);
        return rp_potential_gradient(graph, c, cfg.noise, groups, {fit.theta}, mobile);
    };

    PrimalDualState state;
    state.config = planned;
    state.lambda = Eigen::VectorXd::Zero(1);
    state.delta = cfg.delta;
    state.armijo = cfg.armijo;
    state.step_cap = cfg.primal_step_cap;
    const ObjectiveFn descent_objective =
        cfg.penalty_rho > 0.0
            ? augment_objective(objective_fn, constraint_fn, cfg.penalty_rho, mobile)
            : objective_fn;

    RobotState robot;
    robot.center = cfg.start_center;
    robot.theta = cfg.start_theta;
    robot.alpha = 1.0;  // unused by the pose controller
    robot.beta = 0.0;

    ScenarioTrace trace;
    std::vector<MonteCarloCase> mc_cases;
    mc_cases.push_back({0, graph, planned});

    Configuration final_planned = planned;
    for (int k = 0; k <= cfg.max_steps; ++k) {
        StepRecord rec;
        rec.step = k;

        double moved = 0.0;
        if (k > 0) {
            const Configuration before = state.config;
            primal_dual_step(state, descent_objective, constraint_fn, mobile);
            moved = (state.config.positions - before.positions).norm();
        }

        const GradientField field = objective_fn(state.config);
        const ConstraintEval cons = constraint_fn(state.config);
        rec.potential = field.value;
        rec.aux = cons.residual.norm();

        // waypoint: pose-project the primal iterate, then track it
        const PoseFit fit = project_to_rigid_pose(group, state.config.positions.leftCols(2));
        const Eigen::Vector2d waypoint_center =
            fit.translation + fit.rotation * (0.5 * (cfg.body_offsets.col(0) +
                                                     cfg.body_offsets.col(1)));
        const double waypoint_theta = fit.theta(0);

        const int control_steps =
            std::max(1, static_cast<int>(std::round(cfg.plan_period / cfg.dt)));
        for (int c = 0; c < control_steps; ++c) {
            const Eigen::Vector2d err = waypoint_center - robot.center;
            const double rho = err.norm();
            double v = 0.0, omega = 0.0;
            if (rho > 1e-3) {
                const double heading = std::atan2(err.y(), err.x());
                const double a = wrap_angle(heading - robot.theta);
                v = cfg.k_rho * rho * std::cos(a);
                omega = cfg.k_alpha * a;
            } else {
                omega = cfg.k_theta * wrap_angle(waypoint_theta - robot.theta);
            }
            robot = monocycle_step(robot, v, omega, cfg.dt, cfg.dt_max);
        }

        final_planned.positions.leftCols(2) = fit.fitted_positions;
        rec.planned = final_planned.positions;
        rec.tracked = rec.planned;
        rec.tracked.leftCols(2) = pose_positions(robot.center, robot.theta);
        trace.steps.push_back(rec);

        if (k > 0 && moved < cfg.stall_tol) break;
    }

    trace.final_constraint_norm =
        distance_constraints(groups, final_planned, tag_count).residual.norm();
    mc_cases.push_back({static_cast<int>(trace.steps.size()) - 1, graph, final_planned});

    // The relative-position estimator constrains the baseline by the robot's
    // own heading (known from its tracked pose), which is what separates the
    // two modes at estimation time.
    for (const auto& mc : mc_cases) {
        const PoseFit fit = project_to_rigid_pose(group, mc.config.positions.leftCols(2));
        const std::vector<double> thetas{fit.theta(0)};
        const Estimator est = [&](const RangingGraph& g, const Eigen::MatrixXd& anc,
                                  const MeasurementSet& m, const Eigen::MatrixXd& guess) {
            if (mode == ConstraintMode::DistanceOnly)
                return ls_localize_distance_constrained(g, anc, m, groups, guess);
            return ls_localize_rp_constrained(g, anc, m, groups, guess, thetas);
        };
        TrialStats stats = monte_carlo({mc}, cfg.noise, est, cfg.mc_trials, cfg.seed);
        trace.mc.trials = stats.trials;
        trace.mc.steps.push_back(stats.steps.front());
        trace.mc_steps.push_back(mc.step);
    }
    return trace;
}

}  // namespace locnet
