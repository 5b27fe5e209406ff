#ifndef LOCNET_GEOMETRY_HPP
#define LOCNET_GEOMETRY_HPP

#include <utility>
#include <vector>

#include "locnet/common.hpp"

namespace locnet {

/// Ranging graph over N = U + K nodes. Tags occupy indices 0..U-1, anchors
/// U..N-1, so a stacked coordinate vector reads col(p_tags, p_anchors).
/// Anchor-anchor edges are implicit (their subgraph is complete) and are
/// appended automatically; measured edges are exactly those containing a tag.
struct RangingGraph {
    int dim = 2;
    int tag_count = 0;
    int anchor_count = 0;
    // Canonical order: tag-tag pairs, then tag-anchor, then anchor-anchor,
    // each group lexicographic on (min,max).
    std::vector<std::pair<int, int>> edges;
    std::vector<std::vector<int>> neighborhoods;  // sorted ascending

    int node_count() const { return tag_count + anchor_count; }
    int edge_count() const { return static_cast<int>(edges.size()); }
    int measured_count() const {
        return edge_count() - anchor_count * (anchor_count - 1) / 2;
    }
    bool is_tag(int i) const { return i < tag_count; }
    bool is_anchor(int i) const { return i >= tag_count && i < node_count(); }
};

/// Node positions, one column per node, matching the graph's node indexing.
struct Configuration {
    int dim = 2;
    Eigen::MatrixXd positions;  // dim x N

    Configuration() = default;
    Configuration(int d, int n) : dim(d), positions(Eigen::MatrixXd::Zero(d, n)) {}

    int node_count() const { return static_cast<int>(positions.cols()); }
    Eigen::VectorXd stacked() const {
        return Eigen::Map<const Eigen::VectorXd>(positions.data(), positions.size());
    }
    static Configuration from_stacked(int dim, const Eigen::VectorXd& p) {
        Configuration c;
        c.dim = dim;
        c.positions = Eigen::Map<const Eigen::MatrixXd>(p.data(), dim, p.size() / dim);
        return c;
    }
};

/// Axis-aligned sampling region for triangulation placement.
struct Region {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
};

RangingGraph build_graph(int dim, int tag_count, int anchor_count,
                         const std::vector<std::pair<int, int>>& ranging_pairs);

Eigen::MatrixXd incidence_matrix(const RangingGraph& graph);

/// Half squared edge lengths, in edge order.
Eigen::VectorXd rigidity_function(const RangingGraph& graph, const Configuration& config);

/// Jacobian of the rigidity function: row for edge i->j carries p_ij^T at
/// block i and -p_ij^T at block j.
Eigen::MatrixXd rigidity_matrix(const RangingGraph& graph, const Configuration& config);

/// Basis of the rigid translations/rotations: (dim*N) x 3 in 2D, x 6 in 3D.
/// Throws DegenerateConfigError when the configuration does not span enough
/// dimensions (all coincident in 2D, all collinear in 3D).
Eigen::MatrixXd euclidean_motion_basis(const Configuration& config);

bool is_infinitesimally_rigid(const RangingGraph& graph, const Configuration& config,
                              double tol = 1e-9);

struct Triangulation {
    RangingGraph graph;
    Configuration config;
};

/// Incremental placement: each tag is sampled inside the region and linked to
/// dim+1 previously placed nodes in general position, which guarantees an
/// infinitesimally rigid framework with invertible tag FIM.
Triangulation build_triangulation(int dim, const Eigen::MatrixXd& anchor_positions,
                                  int tag_count, const Region& region, Rng& rng,
                                  int max_attempts_per_tag = 1000);

}  // namespace locnet

#endif
