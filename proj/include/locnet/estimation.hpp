#ifndef LOCNET_ESTIMATION_HPP
#define LOCNET_ESTIMATION_HPP

#include <functional>
#include <optional>

#include "locnet/constrained.hpp"

namespace locnet {

/// Sampled ranges for the measured (tag-involving) edges, in graph edge
/// order. Anchor-anchor edges are not measured.
struct MeasurementSet {
    Eigen::VectorXd distances;
    uint64_t seed = 0;
};

MeasurementSet sample_measurements(const RangingGraph& graph, const Configuration& config,
                                   const NoiseModel& noise, Rng& rng);

struct LsOptions {
    double gtol = 1e-10;
    double xtol = 1e-12;
    int max_iterations = 200;
};

struct LsResult {
    Eigen::MatrixXd tag_positions;  // dim x U
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    double cost = 0.0;
    double constraint_residual = 0.0;
};

/// Damped Gauss-Newton on Q = sum of squared range residuals over the
/// measured edges. initial_guess: dim x U.
LsResult ls_localize(const RangingGraph& graph, const Eigen::MatrixXd& anchor_positions,
                     const MeasurementSet& measurements, const Eigen::MatrixXd& initial_guess,
                     const LsOptions& opts = {});

/// Same cost subject to the intra-group distance constraints, solved by an
/// augmented-Lagrangian outer loop around Gauss-Newton.
LsResult ls_localize_distance_constrained(const RangingGraph& graph,
                                          const Eigen::MatrixXd& anchor_positions,
                                          const MeasurementSet& measurements,
                                          const RigidGroups& groups,
                                          const Eigen::MatrixXd& initial_guess,
                                          const LsOptions& opts = {});

/// 2D estimator reparameterized per robot by (reference position, heading);
/// the relative-position constraint holds exactly by construction.
LsResult ls_localize_rp_constrained(const RangingGraph& graph,
                                    const Eigen::MatrixXd& anchor_positions,
                                    const MeasurementSet& measurements,
                                    const RigidGroups& groups,
                                    const Eigen::MatrixXd& initial_guess,
                                    const LsOptions& opts = {});

/// Variant with the robot headings supplied (e.g. from the tracked pose), so
/// each group reduces to its reference translation only.
LsResult ls_localize_rp_constrained(const RangingGraph& graph,
                                    const Eigen::MatrixXd& anchor_positions,
                                    const MeasurementSet& measurements,
                                    const RigidGroups& groups,
                                    const Eigen::MatrixXd& initial_guess,
                                    const std::vector<double>& known_thetas,
                                    const LsOptions& opts = {});

/// How Monte Carlo trials seed the local search.
struct InitialGuessPolicy {
    enum Kind { PerturbTruth, Fixed } kind = PerturbTruth;
    double perturbation_scale = 1.0;   // times sigma, for PerturbTruth
    Eigen::MatrixXd fixed_positions;   // dim x U, for Fixed
};

using Estimator = std::function<LsResult(const RangingGraph&, const Eigen::MatrixXd&,
                                         const MeasurementSet&, const Eigen::MatrixXd&)>;

struct StepStats {
    int step = 0;
    Eigen::VectorXd mse;       // per tag
    Eigen::VectorXd variance;  // per tag, empirical variance of the squared error
    Eigen::VectorXd b_minus;
    Eigen::VectorXd b_plus;
    double logdet_cov = 0.0;  // log det of the stacked tag error covariance
    int failures = 0;
};

struct TrialStats {
    std::vector<StepStats> steps;
    int trials = 0;
};

struct MonteCarloCase {
    int step = 0;
    RangingGraph graph;
    Configuration config;
};

TrialStats monte_carlo(const std::vector<MonteCarloCase>& cases, const NoiseModel& noise,
                       const Estimator& estimator, int trials, uint64_t seed,
                       const InitialGuessPolicy& init = {},
                       double failure_abort_fraction = 0.05);

std::string trial_stats_csv(const TrialStats& stats);

}  // namespace locnet

#endif
