#include <doctest.h>

#include "helpers.hpp"

using namespace locnet;

namespace {

NoiseModel additive(double sigma = 1.0) { return {NoiseKind::Additive, sigma}; }
NoiseModel lognormal(double sigma = 0.1) { return {NoiseKind::LogNormal, sigma}; }

}  // namespace

TEST_CASE("fim off-diagonal block by hand") {
    const auto g = build_graph(2, 2, 2, {{0, 1}, {0, 2}, {1, 3}});
    Configuration c(2, 4);
    c.positions << 0.0, 3.0, -1.0, 4.0, 0.0, 4.0, -1.0, 4.0;
    const FisherMatrix f = fim(g, c, additive());
    Eigen::Matrix2d expect;
    expect << 9, 12, 12, 16;
    expect *= -1.0 / 25.0;  // -(1/(d^2 sigma^2)) p p^T with d = 5
    CHECK((f.full.block(0, 2, 2, 2) - expect).norm() < 1e-14);
    CHECK((f.full - f.full.transpose()).norm() == 0.0);
}

TEST_CASE("fim equals rigidity product") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const int dim = i % 2 == 0 ? 2 : 3;
        const auto inst = testing::random_rigid_instance(
            dim, 2 + static_cast<int>(rng.bits() % 4), dim + 1, rng);
        const NoiseModel noise = i % 2 == 0 ? additive(0.3) : lognormal(0.07);
        const Eigen::MatrixXd a = fim(inst.graph, inst.config, noise).full;
        const Eigen::MatrixXd b = fim_from_rigidity(inst.graph, inst.config, noise);
        CHECK((a - b).norm() <= 1e-12 * a.norm());
    }
}

TEST_CASE("fim equals rigidity product on flexible graphs too") {
    // sparse path-like graphs are not rigid; the identity holds regardless
    Rng rng(59);
    for (int i = 0; i < 20; ++i) {
        const int dim = i % 2 == 0 ? 2 : 3;
        const int tags = 3 + static_cast<int>(rng.bits() % 3);
        const int anchors = 2;
        std::vector<std::pair<int, int>> pairs;
        for (int t = 0; t + 1 < tags; ++t) pairs.emplace_back(t, t + 1);
        pairs.emplace_back(0, tags);  // one anchor link keeps it connected
        const auto g = build_graph(dim, tags, anchors, pairs);
        Configuration c(dim, tags + anchors);
        for (int n = 0; n < c.node_count(); ++n)
            for (int d = 0; d < dim; ++d) c.positions(d, n) = rng.uniform(-4.0, 4.0);
        const NoiseModel noise = i % 2 == 0 ? additive(0.4) : lognormal(0.12);
        const Eigen::MatrixXd a = fim(g, c, noise).full;
        const Eigen::MatrixXd b = fim_from_rigidity(g, c, noise);
        CHECK((a - b).norm() <= 1e-12 * a.norm());
        CHECK_FALSE(is_infinitesimally_rigid(g, c));
    }
}

TEST_CASE("graph with a single edge") {
    // no ranging pairs: only the implicit anchor-anchor edge remains
    const auto g = build_graph(2, 1, 2, {});
    CHECK(g.edge_count() == 1);
    CHECK(g.measured_count() == 0);
    Configuration c(2, 3);
    c.positions << 0, 1, 0, 0, 0, 1;
    const Eigen::MatrixXd f = fim_from_rigidity(g, c, additive());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(f);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-12 * svd.singularValues()(0)) ++rank;
    CHECK(rank == 1);  // outer product of one rigidity row
    // the tag block sees no edges at all
    CHECK(fim(g, c, additive()).tag_block().norm() == 0.0);
}

TEST_CASE("fim annihilates euclidean motions") {
    Rng rng(9);
    for (int i = 0; i < 10; ++i) {
        const int dim = i % 2 == 0 ? 2 : 3;
        const auto inst = testing::random_rigid_instance(dim, 3, dim + 1, rng);
        const NoiseModel noise = i % 3 == 0 ? lognormal() : additive(0.5);
        const Eigen::MatrixXd f = fim(inst.graph, inst.config, noise).full;
        const Eigen::MatrixXd basis = euclidean_motion_basis(inst.config);
        CHECK((f * basis).norm() <= 1e-10 * f.norm() * basis.norm());
    }
}

TEST_CASE("zero-distance edge is rejected") {
    const auto g = build_graph(2, 1, 2, {{0, 1}});
    Configuration c(2, 3);
    c.positions << 1.0, 1.0, 0.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(fim(g, c, additive()), SingularGeometryError);
}

TEST_CASE("block derivative matches finite differences") {
    Rng rng(13);
    for (int trial = 0; trial < 40; ++trial) {
        const int dim = trial % 2 == 0 ? 2 : 3;
        const NoiseModel noise = trial % 3 == 0 ? lognormal(0.2) : additive(0.7);
        Eigen::VectorXd pi = rng.normal_vector(dim) * 2.0;
        Eigen::VectorXd pj = rng.normal_vector(dim) * 2.0;
        if ((pi - pj).norm() < 0.3) pj.array() += 1.0;

        for (int coord = 0; coord < dim; ++coord) {
            const Eigen::MatrixXd analytic = fim_block_derivative(pi, pj, coord, noise);
            CHECK((analytic - analytic.transpose()).norm() < 1e-12);
            // antisymmetry in the moving node
            const double h = 1e-6;
            const double w = 1.0;
            auto block = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
                const Eigen::VectorXd diff = a - b;
                const double dist = diff.norm();
                return Eigen::MatrixXd(-w / std::pow(dist, 2.0 * noise.kappa()) /
                                       (noise.sigma * noise.sigma) * diff *
                                       diff.transpose());
            };
            Eigen::VectorXd pp = pi, pm = pi;
            pp(coord) += h;
            pm(coord) -= h;
            const Eigen::MatrixXd fd = (block(pp, pj) - block(pm, pj)) / (2.0 * h);
            CHECK((analytic - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));

            Eigen::VectorXd qp = pj, qm = pj;
            qp(coord) += h;
            qm(coord) -= h;
            const Eigen::MatrixXd fd_j = (block(pi, qp) - block(pi, qm)) / (2.0 * h);
            CHECK((analytic + fd_j).norm() <= 1e-6 * std::max(1.0, fd_j.norm()));
        }
    }
}

TEST_CASE("fim_partial matches finite differences of the tag block") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = trial % 2 == 0 ? 2 : 3;
        const auto inst = testing::random_rigid_instance(dim, 3, dim + 1, rng);
        const NoiseModel noise = trial % 2 == 0 ? additive(0.4) : lognormal(0.1);
        for (int node = 0; node < inst.graph.node_count(); ++node) {
            for (int c = 0; c < dim; ++c) {
                const Eigen::MatrixXd analytic =
                    fim_partial(inst.graph, inst.config, noise, node, c);
                Configuration plus = inst.config, minus = inst.config;
                const double h = 1e-6;
                plus.positions(c, node) += h;
                minus.positions(c, node) -= h;
                const Eigen::MatrixXd fd = (fim(inst.graph, plus, noise).tag_block() -
                                            fim(inst.graph, minus, noise).tag_block()) /
                                           (2.0 * h);
                CHECK((analytic - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
            }
        }
    }
}

TEST_CASE("fim_partial sparsity for anchors") {
    Rng rng(31);
    const auto inst = testing::random_rigid_instance(2, 3, 3, rng);
    const int anchor = 3;  // first anchor
    const Eigen::MatrixXd d = fim_partial(inst.graph, inst.config, additive(), anchor, 0);
    // only diagonal blocks of tag neighbors may be nonzero
    for (int bi = 0; bi < 3; ++bi)
        for (int bj = 0; bj < 3; ++bj)
            if (bi != bj) CHECK(d.block(2 * bi, 2 * bj, 2, 2).norm() == 0.0);
}

TEST_CASE("node with no tag neighbors gives zero fim_partial") {
    // tag 0 links only to anchors; anchor 4 links only to tag... construct:
    // tags {0,1}, anchors {2,3,4}; tag 1 ranges to anchors 2,3 only, so
    // anchor 4 sees only tag 0
    const auto g = build_graph(2, 2, 3, {{0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}});
    Configuration c(2, 5);
    c.positions << 0.0, 2.0, -1.0, 1.0, 3.0, 0.0, 1.0, 2.0, -2.0, 1.5;
    // anchor 4 moved: affects only tag 0's diagonal block
    const Eigen::MatrixXd d = fim_partial(g, c, additive(), 4, 1);
    CHECK(d.block(0, 0, 2, 2).norm() > 0.0);
    CHECK(d.block(2, 2, 2, 2).norm() == 0.0);
    CHECK(d.block(0, 2, 2, 2).norm() == 0.0);
}

TEST_CASE("additive trace identity") {
    Rng rng(37);
    for (int i = 0; i < 10; ++i) {
        const int dim = i % 2 == 0 ? 2 : 3;
        const auto inst = testing::random_rigid_instance(dim, 4, dim + 1, rng);
        const NoiseModel noise = additive(0.3);
        const double tr = fim(inst.graph, inst.config, noise).tag_block().trace();
        double degree_sum = 0.0;
        for (int t = 0; t < inst.graph.tag_count; ++t)
            degree_sum += static_cast<double>(inst.graph.neighborhoods[t].size());
        CHECK(tr == doctest::Approx(degree_sum / (noise.sigma * noise.sigma))
                        .epsilon(1e-12));
    }
}

TEST_CASE("lognormal trace identity") {
    Rng rng(41);
    const auto inst = testing::random_rigid_instance(2, 3, 3, rng);
    const NoiseModel noise = lognormal(0.15);
    const double tr = fim(inst.graph, inst.config, noise).tag_block().trace();
    double expect = 0.0;
    for (int t = 0; t < inst.graph.tag_count; ++t)
        for (int j : inst.graph.neighborhoods[t])
            expect += 1.0 / (inst.config.positions.col(t) - inst.config.positions.col(j))
                                .squaredNorm();
    expect /= noise.sigma * noise.sigma;
    CHECK(tr == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("crlb unconstrained") {
    SUBCASE("plain inverse") {
        const Eigen::MatrixXd f = 2.0 * Eigen::MatrixXd::Identity(4, 4);
        const CrlbResult r = crlb_unconstrained(f);
        CHECK_FALSE(r.pseudo_inverse);
        CHECK((r.matrix - 0.5 * Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-14);
    }
    SUBCASE("pseudo-inverse flagged on rank deficiency") {
        Eigen::MatrixXd f = Eigen::MatrixXd::Zero(3, 3);
        f(0, 0) = 1.0;
        f(1, 1) = 2.0;
        const CrlbResult r = crlb_unconstrained(f);
        CHECK(r.pseudo_inverse);
        CHECK(r.matrix(2, 2) == doctest::Approx(0.0));
        CHECK(r.matrix(1, 1) == doctest::Approx(0.5));
    }
    SUBCASE("triangulation crlb is symmetric positive definite") {
        Rng rng(43);
        const auto inst = testing::random_rigid_instance(2, 3, 3, rng);
        const Eigen::MatrixXd fu = fim(inst.graph, inst.config, additive(0.1)).tag_block();
        const CrlbResult r = crlb_unconstrained(fu);
        CHECK_FALSE(r.pseudo_inverse);
        CHECK((r.matrix - r.matrix.transpose()).norm() < 1e-10 * r.matrix.norm());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.matrix);
        CHECK(es.eigenvalues()(0) > 0.0);
        CHECK(r.matrix.trace() > 0.0);
    }
}

TEST_CASE("triangulation yields positive definite tag FIM") {
    Rng rng(47);
    for (int i = 0; i < 20; ++i) {
        const int dim = i % 2 == 0 ? 2 : 3;
        const auto inst = testing::random_rigid_instance(dim, 3, dim + 1, rng);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            fim(inst.graph, inst.config, additive(0.2)).tag_block());
        CHECK(es.eigenvalues()(0) > 0.0);
    }
}
