#include <doctest.h>

#include "helpers.hpp"
#include "locnet/potentials.hpp"

using namespace locnet;

TEST_CASE("potential values on diagonal matrices") {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
    CHECK(potential_value(PotentialKind::AOpt, eye) == doctest::Approx(2.0));
    CHECK(potential_value(PotentialKind::DOpt, eye) == doctest::Approx(0.0));
    CHECK(potential_value(PotentialKind::EOpt, eye) == doctest::Approx(-1.0));

    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
    d(0, 0) = 1.0;
    d(1, 1) = 4.0;
    CHECK(potential_value(PotentialKind::AOpt, d) == doctest::Approx(1.25));
    CHECK(potential_value(PotentialKind::DOpt, d) == doctest::Approx(-std::log(4.0)));
    CHECK(potential_value(PotentialKind::EOpt, d) == doctest::Approx(-1.0));
}

TEST_CASE("singular matrix rejected for AOpt and DOpt") {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
    s(0, 0) = 1.0;
    CHECK_THROWS_AS(potential_value(PotentialKind::AOpt, s), SingularMatrixError);
    CHECK_THROWS_AS(potential_value(PotentialKind::DOpt, s), SingularMatrixError);
    CHECK(potential_value(PotentialKind::EOpt, s) == doctest::Approx(0.0));
}

TEST_CASE("analytic gradients match finite differences") {
    Rng rng(17);
    const PotentialKind kinds[] = {PotentialKind::AOpt, PotentialKind::DOpt,
                                   PotentialKind::EOpt};
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = trial % 2 == 0 ? 2 : 3;
        const auto inst = testing::random_rigid_instance(dim, 3, dim + 1, rng);
        const NoiseModel noise{trial % 2 == 0 ? NoiseKind::Additive : NoiseKind::LogNormal,
                               trial % 2 == 0 ? 0.3 : 0.08};
        const auto mobile = testing::all_nodes(inst.graph);
        for (const auto kind : kinds) {
            const GradientField g =
                potential_gradient(kind, inst.graph, inst.config, noise, mobile);
            double ref = 1e-9;
            for (int node : mobile) ref = std::max(ref, g.at(node).norm());
            for (int node : mobile) {
                for (int c = 0; c < dim; ++c) {
                    const double fd = testing::central_difference(
                        [&](const Configuration& cc) {
                            return potential_value(kind,
                                                   fim(inst.graph, cc, noise).tag_block());
                        },
                        inst.config, node, c);
                    CHECK(std::abs(g.at(node)(c) - fd) <= 1e-5 * std::max(ref, 1.0));
                }
            }
        }
    }
}

TEST_CASE("gradient entries exist only for mobile nodes") {
    Rng rng(19);
    const auto inst = testing::random_rigid_instance(2, 2, 3, rng);
    const GradientField g = potential_gradient(PotentialKind::DOpt, inst.graph, inst.config,
                                               {NoiseKind::Additive, 0.1}, {3, 4});
    CHECK(g.grad.size() == 2);
    CHECK_THROWS_AS(g.at(0), std::out_of_range);
}

TEST_CASE("rigid translation and rotation leave potentials unchanged") {
    Rng rng(23);
    const auto inst = testing::random_rigid_instance(2, 3, 3, rng);
    const NoiseModel noise{NoiseKind::Additive, 0.2};
    const PotentialKind kinds[] = {PotentialKind::AOpt, PotentialKind::DOpt,
                                   PotentialKind::EOpt};
    Configuration moved = inst.config;
    moved.positions.colwise() += Eigen::Vector2d(3.7, -1.2);
    const double ang = 0.83;
    Eigen::Matrix2d rot;
    rot << std::cos(ang), -std::sin(ang), std::sin(ang), std::cos(ang);
    Configuration rotated = inst.config;
    rotated.positions = rot * rotated.positions;
    for (const auto kind : kinds) {
        const double base =
            potential_value(kind, fim(inst.graph, inst.config, noise).tag_block());
        const double t = potential_value(kind, fim(inst.graph, moved, noise).tag_block());
        const double r = potential_value(kind, fim(inst.graph, rotated, noise).tag_block());
        CHECK(std::abs(t - base) <= 1e-10 * std::max(1.0, std::abs(base)));
        CHECK(std::abs(r - base) <= 1e-10 * std::max(1.0, std::abs(base)));
    }
}

TEST_CASE("eopt value equals negative rayleigh quotient of the minimum eigenvector") {
    Rng rng(29);
    const auto inst = testing::random_rigid_instance(2, 4, 3, rng);
    const NoiseModel noise{NoiseKind::Additive, 0.1};
    const Eigen::MatrixXd fu = fim(inst.graph, inst.config, noise).tag_block();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fu);
    const Eigen::VectorXd v = es.eigenvectors().col(0);
    const double val = potential_value(PotentialKind::EOpt, fu);
    CHECK(std::abs(val + v.dot(fu * v)) <= 1e-10 * std::abs(val));
}

TEST_CASE("t potential") {
    Rng rng(31);
    const auto inst = testing::random_rigid_instance(2, 3, 3, rng);
    SUBCASE("additive model is position independent") {
        const NoiseModel noise{NoiseKind::Additive, 0.5};
        const double base = t_potential(inst.graph, inst.config, noise);
        double degree_sum = 0.0;
        for (int t = 0; t < inst.graph.tag_count; ++t)
            degree_sum += static_cast<double>(inst.graph.neighborhoods[t].size());
        CHECK(base == doctest::Approx(-degree_sum / 0.25));
        Configuration stretched = inst.config;
        stretched.positions *= 2.7;
        CHECK(t_potential(inst.graph, stretched, noise) == doctest::Approx(base));
    }
    SUBCASE("log-normal scales as inverse squared distances") {
        const NoiseModel noise{NoiseKind::LogNormal, 0.1};
        const double base = t_potential(inst.graph, inst.config, noise);
        Configuration halved = inst.config;
        halved.positions *= 0.5;
        CHECK(t_potential(inst.graph, halved, noise) == doctest::Approx(4.0 * base));
    }
}

TEST_CASE("descent step capping") {
    Configuration c(2, 3);
    c.positions << 0, 1, 2, 0, 0, 0;
    GradientField f;
    f.grad[0] = Eigen::Vector2d(3.0, 4.0);  // norm 5

    SUBCASE("zero gradient moves nothing") {
        GradientField zero;
        zero.grad[0] = Eigen::Vector2d::Zero();
        const Configuration out = descent_step(c, zero, 0.1, 1.0);
        CHECK((out.positions - c.positions).norm() == 0.0);
    }
    SUBCASE("uncapped step is gain times gradient") {
        const Configuration out = descent_step(c, f, 0.01, 1.0);
        CHECK((out.positions.col(0) - (c.positions.col(0) -
                                       0.01 * Eigen::Vector2d(3.0, 4.0))).norm() < 1e-15);
    }
    SUBCASE("capped step has exactly the cap length") {
        const Configuration out = descent_step(c, f, 1.0, 0.2);
        CHECK((out.positions.col(0) - c.positions.col(0)).norm() ==
              doctest::Approx(0.2).epsilon(1e-12));
    }
    SUBCASE("non-mobile nodes never move") {
        const Configuration out = descent_step(c, f, 1.0, 0.2);
        CHECK((out.positions.col(1) - c.positions.col(1)).norm() == 0.0);
        CHECK((out.positions.col(2) - c.positions.col(2)).norm() == 0.0);
    }
}

TEST_CASE("descent decreases the potential on a toy network") {
    // single free tag above a triangle of anchors
    const auto g = build_graph(2, 1, 3, {{0, 1}, {0, 2}, {0, 3}});
    Configuration c(2, 4);
    c.positions << 0.3, -1.0, 1.0, 0.0, 0.8, 0.0, 0.0, 1.5;
    const NoiseModel noise{NoiseKind::Additive, 0.1};
    double prev = potential_value(PotentialKind::AOpt, fim(g, c, noise).tag_block());
    for (int it = 0; it < 50; ++it) {
        const GradientField f = potential_gradient(PotentialKind::AOpt, g, c, noise, {0});
        c = descent_step(c, f, 0.01, 1.0);
        const double now = potential_value(PotentialKind::AOpt, fim(g, c, noise).tag_block());
        CHECK(now <= prev + 1e-9);
        prev = now;
    }
}

TEST_CASE("repeated smallest eigenvalue raises gap error") {
    // two tags, each tied to its own orthogonal anchor pair: F_U proportional
    // to the identity, so lambda_min is repeated
    const auto g = build_graph(2, 2, 4, {{0, 2}, {0, 3}, {1, 4}, {1, 5}});
    Configuration c(2, 6);
    c.positions << 0.0, 10.0, 1.0, 0.0, 11.0, 10.0, 0.0, 10.0, 0.0, 1.0, 10.0, 11.0;
    const NoiseModel noise{NoiseKind::Additive, 1.0};
    CHECK_THROWS_AS(
        potential_gradient(PotentialKind::EOpt, g, c, noise, testing::all_nodes(g)),
        EigenGapError);
}
