#include "locnet/fisher.hpp"

namespace locnet {

namespace {

double edge_weight(double dist, const NoiseModel& noise) {
    return 1.0 / (std::pow(dist, 2.0 * noise.kappa()) * noise.sigma * noise.sigma);
}

void check_edge_distance(double dist, int i, int j) {
    if (dist < 1e-12)
        throw SingularGeometryError("zero-distance edge {" + std::to_string(i) + "," +
                                    std::to_string(j) + "}");
}

}  // namespace

FisherMatrix fim(const RangingGraph& graph, const Configuration& config,
                 const NoiseModel& noise) {
    if (config.dim != graph.dim || config.node_count() != graph.node_count())
        throw std::invalid_argument("configuration does not match graph");
    const int d = graph.dim;
    const int n = graph.node_count();

    FisherMatrix f;
    f.dim = d;
    f.tag_count = graph.tag_count;
    f.full = Eigen::MatrixXd::Zero(d * n, d * n);

    for (const auto& [i, j] : graph.edges) {
        const Eigen::VectorXd pij = config.positions.col(i) - config.positions.col(j);
        const double dist = pij.norm();
        check_edge_distance(dist, i, j);
        const Eigen::MatrixXd off = -edge_weight(dist, noise) * (pij * pij.transpose());
        f.full.block(d * i, d * j, d, d) = off;
        f.full.block(d * j, d * i, d, d) = off;
        f.full.block(d * i, d * i, d, d) -= off;
        f.full.block(d * j, d * j, d, d) -= off;
    }
    return f;
}

Eigen::MatrixXd fim_from_rigidity(const RangingGraph& graph, const Configuration& config,
                                  const NoiseModel& noise) {
    const Eigen::MatrixXd r = rigidity_matrix(graph, config);
    Eigen::VectorXd q(graph.edge_count());
    for (int e = 0; e < graph.edge_count(); ++e) {
        const auto& [i, j] = graph.edges[e];
        const double dist = (config.positions.col(i) - config.positions.col(j)).norm();
        check_edge_distance(dist, i, j);
        q(e) = edge_weight(dist, noise);
    }
    return r.transpose() * q.asDiagonal() * r;
}

Eigen::MatrixXd fim_block_derivative(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_j,
                                     int coord, const NoiseModel& noise) {
    const int d = static_cast<int>(p_i.size());
    if (coord < 0 || coord >= d) throw std::invalid_argument("coord out of range");
    const Eigen::VectorXd pij = p_i - p_j;
    const double dist = pij.norm();
    check_edge_distance(dist, -1, -1);

    // F_ij = -p p^T / (sigma^2 d^(2k)), so
    // dF_ij/dxi = [2k xi p p^T / d^2 - (e p^T + p e^T)] / (sigma^2 d^(2k)).
    const int kappa = noise.kappa();
    const double w = edge_weight(dist, noise);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e(coord) = 1.0;
    Eigen::MatrixXd out = (2.0 * kappa * pij(coord) / (dist * dist)) * (pij * pij.transpose());
    out -= e * pij.transpose() + pij * e.transpose();
    return w * out;
}

Eigen::MatrixXd fim_partial(const RangingGraph& graph, const Configuration& config,
                            const NoiseModel& noise, int node, int coord) {
    if (node < 0 || node >= graph.node_count())
        throw std::invalid_argument("node out of range");
    const int d = graph.dim;
    const int u = graph.tag_count;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d * u, d * u);

    // Only blocks touching `node` or the diagonal blocks of its tag neighbors
    // change; everything else is structurally zero.
    for (int j : graph.neighborhoods[node]) {
        if (!graph.is_tag(j)) continue;
        const Eigen::MatrixXd dij = fim_block_derivative(config.positions.col(node),
                                                         config.positions.col(j), coord, noise);
        out.block(d * j, d * j, d, d) -= dij;  // via F_jj = -sum_l F_jl
        if (graph.is_tag(node)) {
            out.block(d * node, d * j, d, d) += dij;
            out.block(d * j, d * node, d, d) += dij;
        }
    }
    if (graph.is_tag(node)) {
        for (int l : graph.neighborhoods[node]) {
            const Eigen::MatrixXd dil = fim_block_derivative(
                config.positions.col(node), config.positions.col(l), coord, noise);
            out.block(d * node, d * node, d, d) -= dil;
        }
    }
    return out;
}

CrlbResult crlb_unconstrained(const Eigen::MatrixXd& tag_fim, double tol) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tag_fim);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double lmax = ev.size() ? std::abs(ev(ev.size() - 1)) : 0.0;
    const double cutoff = tol * lmax;

    CrlbResult out;
    out.pseudo_inverse = ev.size() == 0 || ev(0) <= cutoff;
    Eigen::VectorXd inv(ev.size());
    for (int i = 0; i < ev.size(); ++i) inv(i) = ev(i) > cutoff ? 1.0 / ev(i) : 0.0;
    out.matrix = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    return out;
}

}  // namespace locnet
