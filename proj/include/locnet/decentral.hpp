#ifndef LOCNET_DECENTRAL_HPP
#define LOCNET_DECENTRAL_HPP

#include "locnet/network.hpp"
#include "locnet/potentials.hpp"

namespace locnet {

struct SolveOptions {
    double eta = 0.0;  // <= 0: derived from the trace bound (safe for Richardson)
    int max_rounds = 200000;
    double tol = 1e-9;  // relative Frobenius residual of F_U x = E
};

/// Decentralized Richardson iterations x <- x - eta (F_U x - E) run over the
/// network; tags only exchange their blocks with tag neighbors after a
/// position broadcast. Returns the per-tag blocks of F_U^-1 E.
std::vector<Eigen::MatrixXd> richardson_solve(RoundNetwork& net, const Configuration& config,
                                              const NoiseModel& noise,
                                              const std::vector<Eigen::MatrixXd>& e_blocks,
                                              const SolveOptions& opts = {});

/// Jacobi over-relaxation x_i <- (1-eta) x_i + eta F_ii^-1 (E_i - sum F_ij x_j);
/// requires invertible diagonal blocks and 0 < eta <= 1.
std::vector<Eigen::MatrixXd> jacobi_or_solve(RoundNetwork& net, const Configuration& config,
                                             const NoiseModel& noise,
                                             const std::vector<Eigen::MatrixXd>& e_blocks,
                                             const SolveOptions& opts = {});

GradientField distributed_dopt_gradient(RoundNetwork& net, const Configuration& config,
                                        const NoiseModel& noise,
                                        const std::vector<int>& mobile_nodes,
                                        const SolveOptions& opts = {});

GradientField distributed_aopt_gradient(RoundNetwork& net, const Configuration& config,
                                        const NoiseModel& noise,
                                        const std::vector<int>& mobile_nodes,
                                        const SolveOptions& opts = {});

/// Doubly stochastic Metropolis-Hastings weights supported on the tag
/// subgraph plus self-loops, U x U.
Eigen::MatrixXd metropolis_weights(const RangingGraph& graph);

struct ConsensusResult {
    Eigen::VectorXd values;  // per tag
    bool connected = true;   // false: per-component means were reached instead
};

ConsensusResult consensus_average(RoundNetwork& net, const Eigen::VectorXd& initial_values,
                                  const Eigen::MatrixXd& weights, int rounds);

struct PowerIterOptions {
    double beta = 0.0;  // <= 0: sigma^2 / (2P) (the trace-bound gain rule)
    double mu = 0.0;    // <= 0: 1.1 (additive) or 1.1/d_min^2 (log-normal)
    double eta = 0.0;   // <= 0: 0.5 / (beta * trace_bound + mu)
    int inner_rounds = 50;
    int outer_iters = 200;
    double stop_tol = 0.0;  // > 0: stop outer loop early on small w-updates
    std::vector<Eigen::VectorXd> w0;  // per-tag initial state; empty = random
};

struct EigEstimate {
    std::vector<Eigen::VectorXd> v;  // per-tag components of the unit eigenvector
    double lambda = 0.0;
    int outer_iters_used = 0;

    Eigen::VectorXd stacked() const {
        if (v.empty()) return {};
        const int d = static_cast<int>(v[0].size());
        Eigen::VectorXd out(d * static_cast<int>(v.size()));
        for (size_t i = 0; i < v.size(); ++i) out.segment(d * i, d) = v[i];
        return out;
    }
};

/// Distributed estimation of the eigenvector of lambda_min(F_U): normalized
/// power-iteration flow with the global norm tracked by Metropolis-Hastings
/// consensus; disconnected tag subgraphs run per component and compare their
/// Rayleigh quotients through the anchor network.
EigEstimate power_iteration_eigvec(RoundNetwork& net, const Configuration& config,
                                   const NoiseModel& noise, Rng& rng,
                                   const PowerIterOptions& opts = {});

GradientField distributed_eopt_gradient(RoundNetwork& net, const Configuration& config,
                                        const NoiseModel& noise, const EigEstimate& eig,
                                        const std::vector<int>& mobile_nodes);

}  // namespace locnet

#endif
