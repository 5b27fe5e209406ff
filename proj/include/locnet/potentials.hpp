#ifndef LOCNET_POTENTIALS_HPP
#define LOCNET_POTENTIALS_HPP

#include <map>

#include "locnet/fisher.hpp"

namespace locnet {

enum class PotentialKind { AOpt, DOpt, EOpt };

/// Scalar potential value together with its per-node gradient; entries exist
/// only for nodes that were declared mobile.
struct GradientField {
    double value = 0.0;
    std::map<int, Eigen::VectorXd> grad;

    Eigen::VectorXd at(int node) const {
        auto it = grad.find(node);
        if (it == grad.end()) throw std::out_of_range("node has no gradient entry");
        return it->second;
    }
};

/// trace(F_U^-1), -ln det(F_U) or -lambda_min(F_U). AOpt/DOpt throw
/// SingularMatrixError when F_U is not positive definite at tolerance.
double potential_value(PotentialKind kind, const Eigen::MatrixXd& tag_fim,
                       double tol = 1e-10);

GradientField potential_gradient(PotentialKind kind, const RangingGraph& graph,
                                 const Configuration& config, const NoiseModel& noise,
                                 const std::vector<int>& mobile_nodes,
                                 double gap_tol = 1e-8);

/// -trace(F_U): constant for the additive model, an attractive potential for
/// the log-normal one. Diagnostic only.
double t_potential(const RangingGraph& graph, const Configuration& config,
                   const NoiseModel& noise);

/// One capped gradient-descent step: each mobile node moves by
/// -g * min(gain, step_cap/|g|); other nodes are untouched.
Configuration descent_step(const Configuration& config, const GradientField& field,
                           double gain, double step_cap);

}  // namespace locnet

#endif
