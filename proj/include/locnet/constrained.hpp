#ifndef LOCNET_CONSTRAINED_HPP
#define LOCNET_CONSTRAINED_HPP

#include <functional>

#include "locnet/potentials.hpp"

namespace locnet {

/// Tags mounted on one rigid body. The first listed tag is the reference for
/// relative-position constraints; body offsets are fixed robot-frame vectors.
struct RigidGroup {
    int robot_id = 0;
    std::vector<int> tags;
    std::vector<Eigen::VectorXd> body_offsets;

    int size() const { return static_cast<int>(tags.size()); }
};

using RigidGroups = std::vector<RigidGroup>;

/// Orientation parameters, one per group: a scalar angle in 2D, exponential
/// coordinates in 3D.
using Thetas = std::vector<Eigen::VectorXd>;

struct ConstraintEval {
    Eigen::VectorXd residual;
    Eigen::MatrixXd jacobian;  // C x (dim U), tag coordinates only
};

/// Squared-distance constraints |p_ij|^2 - d_ij^2 for every intra-group tag
/// pair, ordered group by group.
ConstraintEval distance_constraints(const RigidGroups& groups, const Configuration& config,
                                    int tag_count);

/// Per-group Euclidean motion columns embedded in the tag coordinate space;
/// ungrouped tags contribute identity columns. Spans ker of the distance
/// constraint Jacobian.
Eigen::MatrixXd distance_nullspace(const RigidGroups& groups, const Configuration& config,
                                   int tag_count);

struct ConstrainedCrlb {
    Eigen::MatrixXd matrix;
    bool pseudo_inverse = false;
};

/// B = A (A^T F_U A)^+ A^T.
ConstrainedCrlb constrained_crlb(const Eigen::MatrixXd& tag_fim, const Eigen::MatrixXd& a,
                                 double tol = 1e-10);

/// J_c = trace(B) under the distance constraints together with its analytic
/// gradient on the requested mobile nodes.
GradientField constrained_potential_gradient(const RigidGroups& groups,
                                             const RangingGraph& graph,
                                             const Configuration& config,
                                             const NoiseModel& noise,
                                             const std::vector<int>& mobile_nodes);

/// exp of the skew form of theta: 2x2 rotation for a scalar, Rodrigues in 3D.
Eigen::MatrixXd rotation_exp(const Eigen::VectorXd& theta, int dim);
Eigen::VectorXd rotation_log(const Eigen::MatrixXd& rot);

struct RpConstraintSystem {
    Eigen::VectorXd residual;   // n (U - R)
    Eigen::MatrixXd n_matrix;   // n (U - R) x (n + q) R
    Eigen::MatrixXd a_rp;       // (n U + q R) x (n + q) R, in permuted ordering
    std::vector<int> tag_order; // permuted tag indices: non-reference first, then references
};

RpConstraintSystem rp_constraints(const RigidGroups& groups, const Configuration& config,
                                  const Thetas& thetas, int tag_count);

struct RpCrlb {
    Eigen::MatrixXd b_rp;  // (n U + q R) square, permuted ordering
    double potential = 0.0;
    bool pseudo_inverse = false;
};

RpCrlb rp_constrained_crlb(const RangingGraph& graph, const Configuration& config,
                           const NoiseModel& noise, const RigidGroups& groups,
                           const Thetas& thetas);

GradientField rp_potential_gradient(const RangingGraph& graph, const Configuration& config,
                                    const NoiseModel& noise, const RigidGroups& groups,
                                    const Thetas& thetas,
                                    const std::vector<int>& mobile_nodes);

struct ArmijoParams {
    double initial_step = 1.0;
    double contraction = 0.5;
    double sufficient_decrease = 1e-4;
    int max_backtracks = 30;
};

struct PrimalDualState {
    Configuration config;
    Eigen::VectorXd lambda;
    double delta = 0.5;
    ArmijoParams armijo;
    // per-node displacement cap for the unit primal step (robot velocity
    // limit); 0 disables capping
    double step_cap = 0.0;
};

struct PrimalDualStepInfo {
    bool accepted = false;
    double eta = 0.0;
    int backtracks = 0;
};

/// Objective evaluator: returns (J_c value, gradient over mobile nodes).
using ObjectiveFn = std::function<GradientField(const Configuration&)>;
/// Constraint evaluator over tag coordinates.
using ConstraintFn = std::function<ConstraintEval(const Configuration&)>;

/// One primal step on J_c + lambda^T f_c (Armijo backtracked) followed by one
/// dual ascent step lambda += delta f_c(p_k).
PrimalDualStepInfo primal_dual_step(PrimalDualState& state, const ObjectiveFn& objective,
                                    const ConstraintFn& constraints,
                                    const std::vector<int>& mobile_nodes);

/// Quadratic constraint penalty added to an objective: value gains
/// rho/2 |f_c|^2 and the gradient the matching restoring force. Damps the
/// dual oscillation of the plain first-order scheme.
ObjectiveFn augment_objective(ObjectiveFn objective, ConstraintFn constraints, double rho,
                              std::vector<int> mobile_nodes);

struct PoseFit {
    Eigen::VectorXd translation;
    Eigen::MatrixXd rotation;
    Eigen::VectorXd theta;
    double residual = 0.0;  // sum of squared placement errors
    Eigen::MatrixXd fitted_positions;  // dim x group size
};

/// Closed-form least-squares rigid pose (orthogonal Procrustes with
/// determinant correction) mapping body offsets onto desired tag positions.
PoseFit project_to_rigid_pose(const RigidGroup& group,
                              const Eigen::MatrixXd& desired_positions);

}  // namespace locnet

#endif
