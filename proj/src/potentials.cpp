#include "locnet/potentials.hpp"

namespace locnet {

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> decompose(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eigendecomposition failed");
    return es;
}

void require_positive_definite(const Eigen::VectorXd& ev, double tol) {
    const double lmax = ev(ev.size() - 1);
    if (ev(0) <= tol * std::abs(lmax))
        throw SingularMatrixError("tag FIM is singular at tolerance", ev(0));
}

}  // namespace

double potential_value(PotentialKind kind, const Eigen::MatrixXd& tag_fim, double tol) {
    const auto es = decompose(tag_fim);
    const Eigen::VectorXd& ev = es.eigenvalues();
    switch (kind) {
        case PotentialKind::AOpt: {
            require_positive_definite(ev, tol);
            return ev.cwiseInverse().sum();
        }
        case PotentialKind::DOpt: {
            require_positive_definite(ev, tol);
            return -ev.array().log().sum();
        }
        case PotentialKind::EOpt:
            return -ev(0);
    }
    throw std::logic_error("unreachable");
}

GradientField potential_gradient(PotentialKind kind, const RangingGraph& graph,
                                 const Configuration& config, const NoiseModel& noise,
                                 const std::vector<int>& mobile_nodes, double gap_tol) {
    const Eigen::MatrixXd fu = fim(graph, config, noise).tag_block();
    const auto es = decompose(fu);
    const Eigen::VectorXd& ev = es.eigenvalues();

    GradientField out;
    out.value = potential_value(kind, fu);

    Eigen::MatrixXd weight;  // the matrix traced against dF_U/dxi
    Eigen::VectorXd eigvec;
    switch (kind) {
        case PotentialKind::AOpt: {
            require_positive_definite(ev, 1e-10);
            weight = es.eigenvectors() *
                     ev.cwiseProduct(ev).cwiseInverse().asDiagonal() *
                     es.eigenvectors().transpose();
            break;
        }
        case PotentialKind::DOpt: {
            require_positive_definite(ev, 1e-10);
            weight = es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                     es.eigenvectors().transpose();
            break;
        }
        case PotentialKind::EOpt: {
            const double gap = ev(1) - ev(0);
            if (gap <= gap_tol * std::abs(ev(ev.size() - 1)))
                throw EigenGapError("lambda_min of F_U is (nearly) repeated", gap);
            eigvec = es.eigenvectors().col(0);
            int imax;
            eigvec.cwiseAbs().maxCoeff(&imax);
            if (eigvec(imax) < 0) eigvec = -eigvec;
            break;
        }
    }

    for (int node : mobile_nodes) {
        Eigen::VectorXd g(graph.dim);
        for (int c = 0; c < graph.dim; ++c) {
            const Eigen::MatrixXd dfu = fim_partial(graph, config, noise, node, c);
            if (kind == PotentialKind::EOpt)
                g(c) = -eigvec.dot(dfu * eigvec);
            else
                g(c) = -(weight * dfu).trace();
        }
        out.grad[node] = g;
    }
    return out;
}

double t_potential(const RangingGraph& graph, const Configuration& config,
                   const NoiseModel& noise) {
    // -trace(F_U) via the edge weights; anchor-anchor edges never touch F_U.
    double tr = 0.0;
    const int kappa = noise.kappa();
    for (const auto& [i, j] : graph.edges) {
        const int tags_in_edge = (graph.is_tag(i) ? 1 : 0) + (graph.is_tag(j) ? 1 : 0);
        if (tags_in_edge == 0) continue;
        const double dist = (config.positions.col(i) - config.positions.col(j)).norm();
        if (dist < 1e-12) throw SingularGeometryError("zero-distance edge");
        tr += tags_in_edge * std::pow(dist, 2.0 - 2.0 * kappa) /
              (noise.sigma * noise.sigma);
    }
    return -tr;
}

Configuration descent_step(const Configuration& config, const GradientField& field,
                           double gain, double step_cap) {
    if (gain <= 0.0 || step_cap <= 0.0)
        throw std::invalid_argument("gain and step_cap must be positive");
    Configuration out = config;
    for (const auto& [node, g] : field.grad) {
        const double gnorm = g.norm();
        if (gnorm == 0.0) continue;
        out.positions.col(node) -= g * std::min(gain, step_cap / gnorm);
    }
    return out;
}

}  // namespace locnet
