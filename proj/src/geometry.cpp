#include "locnet/geometry.hpp"

#include <algorithm>
#include <set>

namespace locnet {

namespace {

// 0 = tag-tag, 1 = tag-anchor, 2 = anchor-anchor
int edge_class(const RangingGraph& g, int i, int j) {
    return (g.is_tag(i) ? 0 : 1) + (g.is_tag(j) ? 0 : 1);
}

double triangle_area2(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                      const Eigen::VectorXd& c) {
    if (a.size() == 2) {
        const double z = (b(0) - a(0)) * (c(1) - a(1)) - (b(1) - a(1)) * (c(0) - a(0));
        return 0.5 * std::abs(z);
    }
    Eigen::Vector3d u = b.head<3>() - a.head<3>();
    Eigen::Vector3d v = c.head<3>() - a.head<3>();
    return 0.5 * u.cross(v).norm();
}

double tetra_volume(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                    const Eigen::Vector3d& c, const Eigen::Vector3d& d) {
    return std::abs((b - a).cross(c - a).dot(d - a)) / 6.0;
}

constexpr double kMinArea = 1e-6;
constexpr double kMinVolume = 1e-9;

// General position test for an incrementally grown set of dim+1 points.
bool general_position(int dim, const std::vector<Eigen::VectorXd>& pts) {
    const size_t n = pts.size();
    if (n >= 2 && (pts[1] - pts[0]).norm() < 1e-9) return false;
    if (dim == 2) {
        if (n >= 3 && triangle_area2(pts[0], pts[1], pts[2]) < kMinArea) return false;
        return true;
    }
    if (n >= 3 && triangle_area2(pts[0], pts[1], pts[2]) < kMinArea) return false;
    if (n >= 4 && tetra_volume(pts[0].head<3>(), pts[1].head<3>(), pts[2].head<3>(),
                               pts[3].head<3>()) < kMinVolume)
        return false;
    return true;
}

}  // namespace

RangingGraph build_graph(int dim, int tag_count, int anchor_count,
                         const std::vector<std::pair<int, int>>& ranging_pairs) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("dim must be 2 or 3");
    if (tag_count < 0 || anchor_count < 0)
        throw std::invalid_argument("negative node counts");
    const int n = tag_count + anchor_count;
    if (!(anchor_count > 1 && anchor_count < n))
        throw std::invalid_argument("need 1 < K < N anchors");

    RangingGraph g;
    g.dim = dim;
    g.tag_count = tag_count;
    g.anchor_count = anchor_count;

    std::set<std::pair<int, int>> seen;
    for (auto [a, b] : ranging_pairs) {
        if (a == b) throw std::invalid_argument("self-loop ranging pair");
        if (a < 0 || b < 0 || a >= n || b >= n)
            throw std::invalid_argument("ranging pair index out of range");
        auto e = std::minmax(a, b);
        if (!seen.insert(e).second) throw std::invalid_argument("duplicate ranging pair");
        if (g.is_anchor(e.first) && g.is_anchor(e.second))
            throw std::invalid_argument(
                "anchor-anchor pairs are implicit, not ranging pairs");
    }
    for (int a = tag_count; a < n; ++a)
        for (int b = a + 1; b < n; ++b) seen.insert({a, b});

    g.edges.assign(seen.begin(), seen.end());
    std::sort(g.edges.begin(), g.edges.end(), [&](const auto& x, const auto& y) {
        const int cx = edge_class(g, x.first, x.second);
        const int cy = edge_class(g, y.first, y.second);
        if (cx != cy) return cx < cy;
        return x < y;
    });

    g.neighborhoods.assign(n, {});
    for (auto [a, b] : g.edges) {
        g.neighborhoods[a].push_back(b);
        g.neighborhoods[b].push_back(a);
    }
    for (auto& nb : g.neighborhoods) std::sort(nb.begin(), nb.end());
    return g;
}

Eigen::MatrixXd incidence_matrix(const RangingGraph& graph) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(graph.edge_count(), graph.node_count());
    for (int e = 0; e < graph.edge_count(); ++e) {
        h(e, graph.edges[e].first) = 1.0;
        h(e, graph.edges[e].second) = -1.0;
    }
    return h;
}

Eigen::VectorXd rigidity_function(const RangingGraph& graph, const Configuration& config) {
    if (config.dim != graph.dim || config.node_count() != graph.node_count())
        throw std::invalid_argument("configuration does not match graph");
    Eigen::VectorXd r(graph.edge_count());
    for (int e = 0; e < graph.edge_count(); ++e) {
        const auto [i, j] = graph.edges[e];
        r(e) = 0.5 * (config.positions.col(i) - config.positions.col(j)).squaredNorm();
    }
    return r;
}

Eigen::MatrixXd rigidity_matrix(const RangingGraph& graph, const Configuration& config) {
    if (config.dim != graph.dim || config.node_count() != graph.node_count())
        throw std::invalid_argument("configuration does not match graph");
    const int d = graph.dim;
    Eigen::MatrixXd r =
        Eigen::MatrixXd::Zero(graph.edge_count(), d * graph.node_count());
    for (int e = 0; e < graph.edge_count(); ++e) {
        const auto [i, j] = graph.edges[e];
        const Eigen::VectorXd pij = config.positions.col(i) - config.positions.col(j);
        r.block(e, d * i, 1, d) = pij.transpose();
        r.block(e, d * j, 1, d) = -pij.transpose();
    }
    return r;
}

Eigen::MatrixXd euclidean_motion_basis(const Configuration& config) {
    const int d = config.dim;
    const int n = config.node_count();
    if (n < d) throw DegenerateConfigError("fewer nodes than dimensions");

    if (d == 2) {
        bool distinct = false;
        for (int i = 1; i < n && !distinct; ++i)
            distinct = (config.positions.col(i) - config.positions.col(0)).norm() > 1e-12;
        if (!distinct)
            throw DegenerateConfigError("all nodes coincident: Eucl^2 basis undefined");
        Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(2 * n, 3);
        for (int i = 0; i < n; ++i) {
            basis(2 * i, 0) = 1.0;
            basis(2 * i + 1, 1) = 1.0;
            basis(2 * i, 2) = -config.positions(1, i);
            basis(2 * i + 1, 2) = config.positions(0, i);
        }
        return basis;
    }

    // need 3 nodes spanning a plane
    bool spanning = false;
    for (int i = 1; i < n && !spanning; ++i) {
        Eigen::Vector3d u = config.positions.col(i) - config.positions.col(0);
        if (u.norm() < 1e-12) continue;
        for (int j = i + 1; j < n && !spanning; ++j) {
            Eigen::Vector3d v = config.positions.col(j) - config.positions.col(0);
            if (u.cross(v).norm() > 1e-12) spanning = true;
        }
    }
    if (!spanning)
        throw DegenerateConfigError("all nodes collinear: Eucl^3 basis undefined");

    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(3 * n, 6);
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) basis(3 * i + a, a) = 1.0;
        const Eigen::Vector3d p = config.positions.col(i);
        for (int a = 0; a < 3; ++a) {
            Eigen::Vector3d e = Eigen::Vector3d::Zero();
            e(a) = 1.0;
            basis.block<3, 1>(3 * i, 3 + a) = e.cross(p);
        }
    }
    return basis;
}

bool is_infinitesimally_rigid(const RangingGraph& graph, const Configuration& config,
                              double tol) {
    euclidean_motion_basis(config);  // propagates degeneracy errors
    const int d = graph.dim;
    const int m = d == 2 ? 3 : 6;
    const Eigen::MatrixXd r = rigidity_matrix(graph, config);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return false;
    const double cutoff = tol * sv(0);
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) ++rank;
    return rank == d * graph.node_count() - m;
}

Triangulation build_triangulation(int dim, const Eigen::MatrixXd& anchor_positions,
                                  int tag_count, const Region& region, Rng& rng,
                                  int max_attempts_per_tag) {
    if (anchor_positions.rows() != dim)
        throw std::invalid_argument("anchor positions have wrong dimension");
    const int k = static_cast<int>(anchor_positions.cols());
    if (k < dim + 1) throw std::invalid_argument("triangulation needs >= dim+1 anchors");
    if (region.lo.size() != dim || region.hi.size() != dim)
        throw std::invalid_argument("region dimension mismatch");

    {
        std::vector<Eigen::VectorXd> apts;
        for (int i = 0; i < k && static_cast<int>(apts.size()) < dim + 1; ++i) {
            apts.push_back(anchor_positions.col(i));
            if (!general_position(dim, apts)) apts.pop_back();
        }
        if (static_cast<int>(apts.size()) < dim + 1)
            throw DegenerateConfigError("anchors not in general position");
    }

    const int n = tag_count + k;
    Configuration config(dim, n);
    config.positions.rightCols(k) = anchor_positions;

    // Previously placed nodes, by graph index. Anchors exist from the start.
    std::vector<int> placed;
    for (int a = 0; a < k; ++a) placed.push_back(tag_count + a);

    std::vector<std::pair<int, int>> pairs;
    for (int t = 0; t < tag_count; ++t) {
        bool ok = false;
        for (int attempt = 0; attempt < max_attempts_per_tag && !ok; ++attempt) {
            Eigen::VectorXd pos(dim);
            for (int a = 0; a < dim; ++a) pos(a) = rng.uniform(region.lo(a), region.hi(a));

            // greedy scan through a shuffled order of the placed nodes for a
            // general-position neighborhood of size dim+1
            std::vector<int> order = placed;
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.bits() % i]);

            std::vector<int> links;
            std::vector<Eigen::VectorXd> pts;
            for (int cand : order) {
                pts.push_back(config.positions.col(cand));
                if (general_position(dim, pts)) {
                    links.push_back(cand);
                } else {
                    pts.pop_back();
                }
                if (static_cast<int>(links.size()) == dim + 1) break;
            }
            if (static_cast<int>(links.size()) < dim + 1) continue;

            config.positions.col(t) = pos;
            for (int l : links) pairs.emplace_back(t, l);
            placed.push_back(t);
            ok = true;
        }
        if (!ok)
            throw DegenerateConfigError(
                "could not place tag " + std::to_string(t) +
                " with a general-position neighborhood inside the region");
    }

    Triangulation out;
    out.graph = build_graph(dim, tag_count, k, pairs);
    out.config = config;
    return out;
}

}  // namespace locnet
