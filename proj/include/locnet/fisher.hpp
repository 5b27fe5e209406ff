#ifndef LOCNET_FISHER_HPP
#define LOCNET_FISHER_HPP

#include "locnet/geometry.hpp"

namespace locnet {

enum class NoiseKind { Additive, LogNormal };

/// Range measurement noise. sigma is in meters for the additive model and
/// dimensionless for the log-normal one; kappa is the exponent the model
/// contributes to the information weights 1/(d^(2 kappa) sigma^2).
struct NoiseModel {
    NoiseKind kind = NoiseKind::Additive;
    double sigma = 0.1;

    int kappa() const { return kind == NoiseKind::Additive ? 1 : 2; }
};

/// Full Fisher information of the node coordinates with its tag/anchor
/// partition. Block (i,j) is -p_ij p_ij^T / (d_ij^(2 kappa) sigma^2) on edges,
/// zero off edges, and each diagonal block is minus the sum of its row.
struct FisherMatrix {
    int dim = 2;
    int tag_count = 0;
    Eigen::MatrixXd full;  // (dim N) x (dim N)

    Eigen::MatrixXd tag_block() const {
        const int nu = dim * tag_count;
        return full.topLeftCorner(nu, nu);
    }
    Eigen::MatrixXd cross_block() const {
        const int nu = dim * tag_count;
        return full.topRightCorner(nu, full.cols() - nu);
    }
    Eigen::MatrixXd anchor_block() const {
        const int nu = dim * tag_count;
        return full.bottomRightCorner(full.rows() - nu, full.cols() - nu);
    }
};

FisherMatrix fim(const RangingGraph& graph, const Configuration& config,
                 const NoiseModel& noise);

/// Oracle route: R^T Q R with Q = diag(1/(d^(2 kappa) sigma^2)).
Eigen::MatrixXd fim_from_rigidity(const RangingGraph& graph, const Configuration& config,
                                  const NoiseModel& noise);

/// d F_ij / d xi_i for the off-diagonal block of an edge {i,j}; coord indexes
/// the moved coordinate of node i. The derivative with respect to xi_j is the
/// negative of this.
Eigen::MatrixXd fim_block_derivative(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_j,
                                     int coord, const NoiseModel& noise);

/// d F_U / d xi_node assembled from the block derivatives and the weighted
/// Laplacian row-sum structure; node may be a tag or an anchor.
Eigen::MatrixXd fim_partial(const RangingGraph& graph, const Configuration& config,
                            const NoiseModel& noise, int node, int coord);

struct CrlbResult {
    Eigen::MatrixXd matrix;
    bool pseudo_inverse = false;  // set when the singular-value cutoff was used
};

CrlbResult crlb_unconstrained(const Eigen::MatrixXd& tag_fim, double tol = 1e-10);

}  // namespace locnet

#endif
