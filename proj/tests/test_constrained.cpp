#include <doctest.h>

#include "helpers.hpp"
#include "locnet/constrained.hpp"

using namespace locnet;

namespace {

const NoiseModel kNoise{NoiseKind::Additive, 0.1};

// one robot with two tags plus three fixed anchors, matching the vehicle
// deployment geometry
struct VehicleInstance {
    RangingGraph graph;
    Configuration config;
    RigidGroups groups;
    Eigen::VectorXd theta;
};

VehicleInstance vehicle_instance(double theta, const Eigen::Vector2d& center) {
    VehicleInstance v;
    std::vector<std::pair<int, int>> pairs;
    for (int t = 0; t < 2; ++t)
        for (int j = t + 1; j < 5; ++j) pairs.emplace_back(t, j);
    v.graph = build_graph(2, 2, 3, pairs);
    RigidGroup g;
    g.robot_id = 0;
    g.tags = {0, 1};
    g.body_offsets = {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 0.0)};
    v.groups = {g};
    v.theta = Eigen::VectorXd::Constant(1, theta);
    const Eigen::MatrixXd rot = rotation_exp(v.theta, 2);
    v.config = Configuration(2, 5);
    v.config.positions.col(0) = center + rot * g.body_offsets[0];
    v.config.positions.col(1) = center + rot * g.body_offsets[1];
    v.config.positions.col(2) = Eigen::Vector2d(-5.0, 5.0);
    v.config.positions.col(3) = Eigen::Vector2d(5.0, -5.0);
    v.config.positions.col(4) = Eigen::Vector2d(5.0, 5.0);
    return v;
}

}  // namespace

TEST_CASE("distance constraints residual and jacobian") {
    const auto v = vehicle_instance(-M_PI / 8.0, Eigen::Vector2d(-15.0, -4.0));
    const ConstraintEval eval = distance_constraints(v.groups, v.config, 2);
    REQUIRE(eval.residual.size() == 1);
    CHECK(eval.residual(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(eval.jacobian.rows() == 1);
    CHECK(eval.jacobian.cols() == 4);

    // jacobian against finite differences at an infeasible configuration
    Configuration off = v.config;
    off.positions(0, 0) += 0.3;
    off.positions(1, 1) -= 0.2;
    const ConstraintEval at = distance_constraints(v.groups, off, 2);
    for (int node = 0; node < 2; ++node) {
        for (int c = 0; c < 2; ++c) {
            const double fd = testing::central_difference(
                [&](const Configuration& cc) {
                    return distance_constraints(v.groups, cc, 2).residual(0);
                },
                off, node, c);
            CHECK(at.jacobian(0, 2 * node + c) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("distance constraints block sparsity for two groups") {
    RigidGroup g1{0, {0, 1}, {Eigen::Vector2d(0.5, 0.0), Eigen::Vector2d(-0.5, 0.0)}};
    RigidGroup g2{1, {2, 3}, {Eigen::Vector2d(0.7, 0.0), Eigen::Vector2d(-0.7, 0.0)}};
    Configuration c(2, 4);
    c.positions << 0.0, 1.0, 5.0, 6.4, 0.0, 0.0, 2.0, 2.0;
    const ConstraintEval eval = distance_constraints({g1, g2}, c, 4);
    CHECK(eval.residual.size() == 2);
    CHECK(eval.jacobian.rows() == 2);
    CHECK(eval.jacobian.cols() == 8);
    CHECK(eval.jacobian.block(0, 4, 1, 4).norm() == 0.0);
    CHECK(eval.jacobian.block(1, 0, 1, 4).norm() == 0.0);
}

TEST_CASE("distance nullspace annihilates the jacobian") {
    const auto v = vehicle_instance(0.7, Eigen::Vector2d(2.0, -1.0));
    const Eigen::MatrixXd a = distance_nullspace(v.groups, v.config, 2);
    CHECK(a.rows() == 4);
    CHECK(a.cols() == 3);
    const ConstraintEval eval = distance_constraints(v.groups, v.config, 2);
    CHECK((eval.jacobian * a).norm() <= 1e-10 * std::max(1.0, a.norm()));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    CHECK(svd.singularValues()(2) > 1e-9);  // full column rank
}

TEST_CASE("nullspace of an aligned 3D group is rejected") {
    RigidGroup g{0,
                 {0, 1, 2},
                 {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0),
                  Eigen::Vector3d(2, 0, 0)}};
    Configuration c(3, 3);
    c.positions << 0, 1, 2, 0, 0, 0, 0, 0, 0;
    CHECK_THROWS_AS(distance_nullspace({g}, c, 3), DegenerateConfigError);
}

TEST_CASE("constrained crlb reduces to the unconstrained bound for identity A") {
    Rng rng(81);
    const auto inst = testing::random_rigid_instance(2, 3, 3, rng);
    const Eigen::MatrixXd fu = fim(inst.graph, inst.config, kNoise).tag_block();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(6, 6);
    const ConstrainedCrlb b = constrained_crlb(fu, eye);
    CHECK((b.matrix - crlb_unconstrained(fu).matrix).norm() <= 1e-10 * b.matrix.norm());
}

TEST_CASE("constrained crlb is invariant to nullspace basis recombination") {
    const auto v = vehicle_instance(0.3, Eigen::Vector2d(1.0, 1.0));
    const Eigen::MatrixXd fu = fim(v.graph, v.config, kNoise).tag_block();
    const Eigen::MatrixXd a = distance_nullspace(v.groups, v.config, 2);
    Eigen::MatrixXd mix(3, 3);
    mix << 2.0, 0.3, -1.0, 0.0, -1.5, 0.7, 0.4, 0.0, 1.1;
    const ConstrainedCrlb b1 = constrained_crlb(fu, a);
    const ConstrainedCrlb b2 = constrained_crlb(fu, a * mix);
    CHECK((b1.matrix - b2.matrix).norm() <= 1e-10 * b1.matrix.norm());
}

TEST_CASE("constrained bound never exceeds the unconstrained one") {
    Rng rng(83);
    for (int i = 0; i < 10; ++i) {
        const auto v = vehicle_instance(rng.uniform(-3.0, 3.0),
                                        Eigen::Vector2d(rng.uniform(-12.0, 8.0),
                                                        rng.uniform(-8.0, 8.0)));
        const Eigen::MatrixXd fu = fim(v.graph, v.config, kNoise).tag_block();
        const Eigen::MatrixXd inv = crlb_unconstrained(fu).matrix;
        const Eigen::MatrixXd b =
            constrained_crlb(fu, distance_nullspace(v.groups, v.config, 2)).matrix;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inv - b);
        CHECK(es.eigenvalues()(0) >= -1e-9);
        CHECK(b.trace() < inv.trace());
    }
}

TEST_CASE("distance-constrained potential gradient vs finite differences") {
    const auto v = vehicle_instance(-M_PI / 8.0, Eigen::Vector2d(-15.0, -4.0));
    const auto mobile = testing::all_nodes(v.graph);
    const GradientField g =
        constrained_potential_gradient(v.groups, v.graph, v.config, kNoise, mobile);
    auto value = [&](const Configuration& cc) {
        const Eigen::MatrixXd fu = fim(v.graph, cc, kNoise).tag_block();
        const Eigen::MatrixXd a = distance_nullspace(v.groups, cc, 2);
        return constrained_crlb(fu, a).matrix.trace();
    };
    CHECK(g.value == doctest::Approx(value(v.config)));
    double ref = 1.0;
    for (int node : mobile) ref = std::max(ref, g.at(node).norm());
    for (int node : mobile)
        for (int c = 0; c < 2; ++c)
            CHECK(std::abs(g.at(node)(c) -
                           testing::central_difference(value, v.config, node, c)) <=
                  1e-5 * ref);
}

TEST_CASE("constrained potential is translation invariant") {
    const auto v = vehicle_instance(0.4, Eigen::Vector2d(-3.0, 2.0));
    auto value = [&](const Configuration& cc) {
        const Eigen::MatrixXd fu = fim(v.graph, cc, kNoise).tag_block();
        return constrained_crlb(fu, distance_nullspace(v.groups, cc, 2)).matrix.trace();
    };
    Configuration moved = v.config;
    moved.positions.colwise() += Eigen::Vector2d(2.2, -0.9);
    CHECK(value(moved) == doctest::Approx(value(v.config)).epsilon(1e-10));
}

TEST_CASE("rotation exponential and logarithm") {
    Eigen::VectorXd zero1 = Eigen::VectorXd::Zero(1);
    CHECK((rotation_exp(zero1, 2) - Eigen::Matrix2d::Identity()).norm() == 0.0);

    Eigen::VectorXd quarter(1);
    quarter << M_PI / 2.0;
    Eigen::Matrix2d want;
    want << 0, -1, 1, 0;
    CHECK((rotation_exp(quarter, 2) - want).norm() < 1e-15);

    Eigen::Vector3d pi_z(0, 0, M_PI);
    Eigen::Matrix3d half_turn = rotation_exp(pi_z, 3);
    Eigen::Matrix3d expect;
    expect << -1, 0, 0, 0, -1, 0, 0, 0, 1;
    CHECK((half_turn - expect).norm() < 1e-12);

    Rng rng(87);
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd theta = rng.normal_vector(3);
        const Eigen::MatrixXd r = rotation_exp(theta, 3);
        CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() < 1e-12);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
        if (theta.norm() < M_PI) {
            const Eigen::VectorXd back = rotation_log(r);
            CHECK((back - theta).norm() < 1e-9);
        }
    }
}

TEST_CASE("rp constraints vanish on feasible poses and annihilate A_RP") {
    const auto v = vehicle_instance(0.9, Eigen::Vector2d(3.0, -2.0));
    const RpConstraintSystem sys = rp_constraints(v.groups, v.config, {v.theta}, 2);
    CHECK(sys.residual.norm() <= 1e-12);
    CHECK(sys.n_matrix.rows() == 2);
    CHECK(sys.n_matrix.cols() == 3);
    CHECK(sys.a_rp.rows() == 5);
    CHECK(sys.a_rp.cols() == 3);
    Eigen::MatrixXd jac(2, 5);
    jac << Eigen::MatrixXd::Identity(2, 2), sys.n_matrix;
    CHECK((jac * sys.a_rp).norm() <= 1e-10);

    // theta column equals W exp([theta]x) p^r_{21}
    Eigen::Matrix2d w;
    w << 0, -1, 1, 0;
    const Eigen::Vector2d body = v.groups[0].body_offsets[1] - v.groups[0].body_offsets[0];
    const Eigen::Vector2d expect = -(w * rotation_exp(v.theta, 2) * body);
    CHECK((sys.n_matrix.col(2) - expect).norm() < 1e-12);
}

TEST_CASE("rp crlb tightens the distance-only bound") {
    const auto v = vehicle_instance(-M_PI / 8.0, Eigen::Vector2d(-15.0, -4.0));
    const Eigen::MatrixXd fu = fim(v.graph, v.config, kNoise).tag_block();
    const Eigen::MatrixXd b_d =
        constrained_crlb(fu, distance_nullspace(v.groups, v.config, 2)).matrix;
    const RpCrlb rp = rp_constrained_crlb(v.graph, v.config, kNoise, v.groups, {v.theta});
    CHECK(rp.potential > 0.0);
    CHECK(std::isfinite(rp.potential));
    CHECK(rp.potential <= b_d.trace() + 1e-9);

    // PSD ordering on the position block (permuted order vs native order)
    const RpConstraintSystem sys = rp_constraints(v.groups, v.config, {v.theta}, 2);
    Eigen::MatrixXd perm = Eigen::MatrixXd::Zero(4, 4);
    for (int k = 0; k < 2; ++k)
        for (int c = 0; c < 2; ++c) perm(2 * k + c, 2 * sys.tag_order[k] + c) = 1.0;
    const Eigen::MatrixXd b_rp_pos =
        perm.transpose() * rp.b_rp.topLeftCorner(4, 4) * perm;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b_d - b_rp_pos);
    CHECK(es.eigenvalues()(0) >= -1e-9);
}

TEST_CASE("rp crlb flags rank failure for coincident offsets") {
    // a degenerate body (both offsets equal) zeroes the orientation column of
    // the constraint tangent, so the constrained FIM loses rank
    VehicleInstance v = vehicle_instance(0.2, Eigen::Vector2d(0.0, 0.0));
    v.groups[0].body_offsets[1] = v.groups[0].body_offsets[0];
    const RpCrlb rp = rp_constrained_crlb(v.graph, v.config, kNoise, v.groups, {v.theta});
    CHECK(rp.pseudo_inverse);
}

TEST_CASE("rp potential gradient matches manifold finite differences") {
    const auto v = vehicle_instance(-M_PI / 8.0, Eigen::Vector2d(-15.0, -4.0));
    const auto mobile = testing::all_nodes(v.graph);
    const GradientField g =
        rp_potential_gradient(v.graph, v.config, kNoise, v.groups, {v.theta}, mobile);

    // feasible directions: robot translations and a rotation about the
    // reference tag; anchors move freely
    auto j_at = [&](const Configuration& cc, double theta) {
        Eigen::VectorXd th(1);
        th << theta;
        return rp_constrained_crlb(v.graph, cc, kNoise, v.groups, {th}).potential;
    };
    const double h = 1e-6;
    double ref = 1.0;
    for (int node : mobile) ref = std::max(ref, g.at(node).norm());

    for (int c = 0; c < 2; ++c) {  // robot translation along axis c
        Configuration plus = v.config, minus = v.config;
        plus.positions.col(0)(c) += h;
        plus.positions.col(1)(c) += h;
        minus.positions.col(0)(c) -= h;
        minus.positions.col(1)(c) -= h;
        const double fd = (j_at(plus, v.theta(0)) - j_at(minus, v.theta(0))) / (2.0 * h);
        const double analytic = g.at(0)(c) + g.at(1)(c);
        CHECK(std::abs(analytic - fd) <= 1e-4 * ref);
    }
    {  // rotation about the reference tag (tag 0)
        auto rotated = [&](double eps) {
            Configuration cc = v.config;
            Eigen::VectorXd th(1);
            th << eps;
            const Eigen::MatrixXd r = rotation_exp(th, 2);
            cc.positions.col(1) =
                cc.positions.col(0) + r * (v.config.positions.col(1) -
                                           v.config.positions.col(0));
            return cc;
        };
        const double fd =
            (j_at(rotated(h), v.theta(0) + h) - j_at(rotated(-h), v.theta(0) - h)) /
            (2.0 * h);
        Eigen::Matrix2d w;
        w << 0, -1, 1, 0;
        const Eigen::Vector2d vel =
            w * (v.config.positions.col(1) - v.config.positions.col(0));
        const double analytic = g.at(1).dot(vel);
        CHECK(std::abs(analytic - fd) <= 1e-4 * ref);
    }
    for (int node = 2; node < 5; ++node) {  // anchors are unconstrained
        for (int c = 0; c < 2; ++c) {
            const double fd = testing::central_difference(
                [&](const Configuration& cc) { return j_at(cc, v.theta(0)); },
                v.config, node, c);
            CHECK(std::abs(g.at(node)(c) - fd) <= 1e-4 * ref);
        }
    }
}

TEST_CASE("primal dual step") {
    const auto v = vehicle_instance(-M_PI / 8.0, Eigen::Vector2d(-15.0, -4.0));
    const std::vector<int> mobile = {0, 1};
    const ObjectiveFn objective = [&](const Configuration& c) {
        return constrained_potential_gradient(v.groups, v.graph, c, kNoise, mobile);
    };
    const ConstraintFn constraints = [&](const Configuration& c) {
        return distance_constraints(v.groups, c, 2);
    };

    SUBCASE("zero gradient at a feasible point is a fixed point") {
        PrimalDualState state;
        state.config = v.config;
        state.lambda = Eigen::VectorXd::Zero(1);
        const ObjectiveFn flat = [&](const Configuration& c) {
            GradientField f;
            f.value = 1.0;
            f.grad[0] = Eigen::Vector2d::Zero();
            f.grad[1] = Eigen::Vector2d::Zero();
            return f;
        };
        const PrimalDualStepInfo info = primal_dual_step(state, flat, constraints, mobile);
        CHECK(info.accepted);
        CHECK((state.config.positions - v.config.positions).norm() == 0.0);
        CHECK(state.lambda.norm() <= 1e-12);  // feasible: residual ~ 0
    }

    SUBCASE("descent decreases the constrained potential") {
        PrimalDualState state;
        state.config = v.config;
        state.lambda = Eigen::VectorXd::Zero(1);
        state.delta = 0.5;
        state.step_cap = 0.2;
        const ObjectiveFn damped = augment_objective(objective, constraints, 1.0, mobile);
        const double j0 = objective(state.config).value;
        double worst_violation = 0.0;
        for (int it = 0; it < 100; ++it) {
            primal_dual_step(state, damped, constraints, mobile);
            worst_violation = std::max(
                worst_violation, constraints(state.config).residual.norm());
        }
        CHECK(objective(state.config).value < j0);
        CHECK(worst_violation < 1.0);  // transient infeasibility stays bounded
    }

    SUBCASE("delta zero keeps the multiplier constant") {
        PrimalDualState state;
        state.config = v.config;
        state.config.positions(0, 0) += 0.2;  // infeasible start
        state.lambda = Eigen::VectorXd::Constant(1, 0.7);
        state.delta = 0.0;
        primal_dual_step(state, objective, constraints, mobile);
        CHECK(state.lambda(0) == doctest::Approx(0.7));
    }
}

TEST_CASE("pose projection") {
    RigidGroup g{0, {0, 1}, {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 0.0)}};

    SUBCASE("exact recovery of a rigid pose") {
        Eigen::VectorXd th(1);
        th << 0.6;
        const Eigen::MatrixXd rot = rotation_exp(th, 2);
        const Eigen::Vector2d t(3.0, -1.0);
        Eigen::MatrixXd desired(2, 2);
        desired.col(0) = t + rot * g.body_offsets[0];
        desired.col(1) = t + rot * g.body_offsets[1];
        const PoseFit fit = project_to_rigid_pose(g, desired);
        CHECK(fit.residual <= 1e-20);
        CHECK(fit.theta(0) == doctest::Approx(0.6));
        CHECK((fit.translation - t).norm() < 1e-12);
    }

    SUBCASE("stretched targets match the brute-force grid over theta") {
        Eigen::MatrixXd desired(2, 2);
        desired << 2.5, -1.7, 1.3, 0.4;  // not rigid-consistent with the body
        const PoseFit fit = project_to_rigid_pose(g, desired);

        double best_theta = 0.0;
        double best = std::numeric_limits<double>::infinity();
        for (double th = -M_PI; th < M_PI; th += 1e-3) {
            Eigen::VectorXd tv(1);
            tv << th;
            const Eigen::MatrixXd rot = rotation_exp(tv, 2);
            // optimal translation for fixed theta: match centroids
            const Eigen::Vector2d qbar = desired.rowwise().mean();
            double cost = 0.0;
            for (int s = 0; s < 2; ++s)
                cost += (desired.col(s) - qbar - rot * g.body_offsets[s]).squaredNorm();
            if (cost < best) {
                best = cost;
                best_theta = th;
            }
        }
        CHECK(fit.residual == doctest::Approx(best).epsilon(1e-4));
        CHECK(std::abs(std::remainder(fit.theta(0) - best_theta, 2.0 * M_PI)) < 2e-3);
    }

    SUBCASE("reflection targets keep a proper rotation") {
        RigidGroup tri{0,
                       {0, 1, 2},
                       {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 0.0),
                        Eigen::Vector2d(0.0, 1.0)}};
        Eigen::MatrixXd desired(2, 3);
        desired << 1.0, -1.0, 0.0, 0.0, 0.0, -1.0;  // mirrored third point
        const PoseFit fit = project_to_rigid_pose(tri, desired);
        CHECK(fit.rotation.determinant() == doctest::Approx(1.0));
        double best = std::numeric_limits<double>::infinity();
        for (double th = -M_PI; th < M_PI; th += 1e-3) {
            Eigen::VectorXd tv(1);
            tv << th;
            const Eigen::MatrixXd rot = rotation_exp(tv, 2);
            const Eigen::Vector2d qbar = desired.rowwise().mean();
            const Eigen::Vector2d bbar(0.0, 1.0 / 3.0);
            double cost = 0.0;
            for (int s = 0; s < 3; ++s)
                cost += (desired.col(s) - qbar - rot * (tri.body_offsets[s] - bbar))
                            .squaredNorm();
            best = std::min(best, cost);
        }
        CHECK(fit.residual == doctest::Approx(best).epsilon(1e-4));
    }

    SUBCASE("degenerate offsets are rejected") {
        RigidGroup bad{0, {0, 1}, {Eigen::Vector2d(0.3, 0.3), Eigen::Vector2d(0.3, 0.3)}};
        Eigen::MatrixXd desired(2, 2);
        desired << 0, 1, 0, 1;
        CHECK_THROWS_AS(project_to_rigid_pose(bad, desired), DegenerateConfigError);
    }
}

TEST_CASE("single-tag robots contribute identity blocks to the nullspace") {
    RigidGroup g{0, {0, 1}, {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 0.0)}};
    Configuration c(2, 5);  // 3 tags (one free), 2 anchors
    c.positions << 1.0, -1.0, 4.0, 0.0, 8.0, 0.0, 0.0, 2.0, 5.0, 1.0;
    const Eigen::MatrixXd a = distance_nullspace({g}, c, 3);
    CHECK(a.rows() == 6);
    CHECK(a.cols() == 5);  // 3 group columns + 2 identity columns for tag 2
    CHECK((a.block(4, 3, 2, 2) - Eigen::Matrix2d::Identity()).norm() == 0.0);
    CHECK(a.block(0, 3, 4, 2).norm() == 0.0);
}
