#ifndef LOCNET_TESTS_HELPERS_HPP
#define LOCNET_TESTS_HELPERS_HPP

#include <functional>

#include "locnet/fisher.hpp"

namespace locnet::testing {

inline Triangulation random_rigid_instance(int dim, int tags, int anchors, Rng& rng,
                                           double extent = 5.0) {
    Eigen::MatrixXd apos(dim, anchors);
    for (int a = 0; a < anchors; ++a)
        for (int c = 0; c < dim; ++c) apos(c, a) = rng.uniform(-extent, extent);
    Region region;
    region.lo = Eigen::VectorXd::Constant(dim, -extent);
    region.hi = Eigen::VectorXd::Constant(dim, extent);
    for (int attempt = 0;; ++attempt) {
        try {
            return build_triangulation(dim, apos, tags, region, rng);
        } catch (const DegenerateConfigError&) {
            if (attempt > 20) throw;
            for (int a = 0; a < anchors; ++a)
                for (int c = 0; c < dim; ++c) apos(c, a) = rng.uniform(-extent, extent);
        }
    }
}

inline double central_difference(const std::function<double(const Configuration&)>& f,
                                 const Configuration& at, int node, int coord,
                                 double h = 1e-6) {
    Configuration plus = at;
    Configuration minus = at;
    plus.positions(coord, node) += h;
    minus.positions(coord, node) -= h;
    return (f(plus) - f(minus)) / (2.0 * h);
}

inline std::vector<int> all_nodes(const RangingGraph& graph) {
    std::vector<int> out(graph.node_count());
    for (int i = 0; i < graph.node_count(); ++i) out[i] = i;
    return out;
}

}  // namespace locnet::testing

#endif
