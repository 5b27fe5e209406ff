#include "locnet/verify.hpp"

#include <iomanip>
#include <ostream>

#include "locnet/constrained.hpp"
#include "locnet/decentral.hpp"
#include "locnet/estimation.hpp"

namespace locnet {

namespace {

Triangulation random_rigid_instance(int dim, int tags, int anchors, Rng& rng) {
    Eigen::MatrixXd apos(dim, anchors);
    for (int a = 0; a < anchors; ++a)
        for (int c = 0; c < dim; ++c) apos(c, a) = rng.uniform(-5.0, 5.0);
    Region region;
    region.lo = Eigen::VectorXd::Constant(dim, -5.0);
    region.hi = Eigen::VectorXd::Constant(dim, 5.0);
    for (int attempt = 0;; ++attempt) {
        try {
            return build_triangulation(dim, apos, tags, region, rng);
        } catch (const DegenerateConfigError&) {
            if (attempt > 20) throw;
            for (int a = 0; a < anchors; ++a)
                for (int c = 0; c < dim; ++c) apos(c, a) = rng.uniform(-5.0, 5.0);
        }
    }
}

NoiseModel noise_for(int pick) {
    NoiseModel n;
    n.kind = pick % 2 == 0 ? NoiseKind::Additive : NoiseKind::LogNormal;
    n.sigma = pick % 2 == 0 ? 0.1 : 0.05;
    return n;
}

double finite_difference(const std::function<double(const Configuration&)>& f,
                         const Configuration& at, int node, int coord, double h) {
    Configuration plus = at;
    Configuration minus = at;
    plus.positions(coord, node) += h;
    minus.positions(coord, node) -= h;
    return (f(plus) - f(minus)) / (2.0 * h);
}

int rank_of(const Eigen::MatrixXd& m, double tol) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > tol * sv(0)) ++rank;
    return rank;
}

struct Reporter {
    std::ostream& os;
    int failures = 0;

    void check(const std::string& name, bool ok, double err) {
        os << (ok ? "[PASS] " : "[FAIL] ") << name << " (measured " << std::scientific
           << std::setprecision(3) << err << ")\n";
        if (!ok) ++failures;
    }
};

}  // namespace

int run_verification(uint64_t seed, const std::string& mutate, std::ostream& os) {
    Rng rng(seed);
    Reporter rep{os};

    // FIM equals the weighted rigidity product and shares its kernel
    {
        double worst_rel = 0.0;
        bool ranks_match = true;
        double worst_kernel = 0.0;
        for (int i = 0; i < 30; ++i) {
            const int dim = i % 2 == 0 ? 2 : 3;
            auto inst = random_rigid_instance(dim, 2 + static_cast<int>(rng.bits() % 4),
                                              dim + 1, rng);
            const NoiseModel noise = noise_for(i);
            const Eigen::MatrixXd f = fim(inst.graph, inst.config, noise).full;
            const Eigen::MatrixXd f2 = fim_from_rigidity(inst.graph, inst.config, noise);
            worst_rel = std::max(worst_rel, (f - f2).norm() / f.norm());
            const Eigen::MatrixXd r = rigidity_matrix(inst.graph, inst.config);
            if (rank_of(f, 1e-9) != rank_of(r, 1e-9)) ranks_match = false;
            const Eigen::MatrixXd basis = euclidean_motion_basis(inst.config);
            worst_kernel =
                std::max(worst_kernel, (f * basis).norm() / (f.norm() * basis.norm()));
        }
        rep.check("fim matches rigidity product (rel frobenius)", worst_rel < 1e-12,
                  worst_rel);
        rep.check("rank(F) == rank(R)", ranks_match, 0.0);
        rep.check("euclidean motions lie in ker(F)", worst_kernel < 1e-10, worst_kernel);
    }

    // triangulation invertibility
    {
        double lmin_worst = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 10; ++i) {
            const int dim = i % 2 == 0 ? 2 : 3;
            auto inst = random_rigid_instance(dim, 3, dim + 1, rng);
            const Eigen::MatrixXd fu =
                fim(inst.graph, inst.config, noise_for(0)).tag_block();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fu);
            lmin_worst = std::min(lmin_worst, es.eigenvalues()(0));
        }
        rep.check("triangulation gives positive definite tag FIM", lmin_worst > 0.0,
                  lmin_worst);
    }

    // analytic gradients vs central finite differences
    {
        const PotentialKind kinds[] = {PotentialKind::AOpt, PotentialKind::DOpt,
                                       PotentialKind::EOpt};
        const char* names[] = {"aopt", "dopt", "eopt"};
        for (int kk = 0; kk < 3; ++kk) {
            double worst = 0.0;
            for (int i = 0; i < 5; ++i) {
                const int dim = i % 2 == 0 ? 2 : 3;
                auto inst = random_rigid_instance(dim, 3, dim + 1, rng);
                const NoiseModel noise = noise_for(i);
                std::vector<int> mobile;
                for (int v = 0; v < inst.graph.node_count(); ++v) mobile.push_back(v);
                const GradientField g = potential_gradient(kinds[kk], inst.graph,
                                                           inst.config, noise, mobile);
                auto value = [&](const Configuration& c) {
                    return potential_value(kinds[kk], fim(inst.graph, c, noise).tag_block());
                };
                double ref = 0.0;
                for (int node : mobile)
                    ref = std::max(ref, g.at(node).norm());
                for (int node : mobile) {
                    for (int c = 0; c < dim; ++c) {
                        double analytic = g.at(node)(c);
                        if (mutate == "dopt-sign" && kinds[kk] == PotentialKind::DOpt)
                            analytic = -analytic;
                        const double fd =
                            finite_difference(value, inst.config, node, c, 1e-6);
                        worst = std::max(worst, std::abs(analytic - fd) / std::max(ref, 1.0));
                    }
                }
            }
            rep.check(std::string("gradient check ") + names[kk] + " vs finite differences",
                      worst < 1e-5, worst);
        }
    }

    // constrained gradient checks on a two-robot 2D instance
    {
        auto make_instance = [&](Configuration& config, RigidGroups& groups,
                                 RangingGraph& graph) {
            const int u = 4, k = 3;
            std::vector<std::pair<int, int>> pairs;
            for (int t = 0; t < u; ++t)
                for (int j = t + 1; j < u + k; ++j) pairs.emplace_back(t, j);
            graph = build_graph(2, u, k, pairs);
            config = Configuration(2, u + k);
            config.positions << 0.8, 2.9, 5.2, 7.1, -2.0, 9.5, 4.0,
                                0.2, 1.1, 3.8, 2.7,  0.5, 1.0, 8.0;
            RigidGroup g1{0, {0, 1}, {Eigen::Vector2d(1.0, 0.3), Eigen::Vector2d(-1.1, 0.0)}};
            RigidGroup g2{1, {2, 3}, {Eigen::Vector2d(0.9, 0.0), Eigen::Vector2d(-0.9, 0.4)}};
            groups = {g1, g2};
            // overwrite tag positions with rigid placements so constraints hold
            Eigen::VectorXd th1(1), th2(1);
            th1(0) = 0.4;
            th2(0) = -1.1;
            const Eigen::MatrixXd r1 = rotation_exp(th1, 2);
            const Eigen::MatrixXd r2 = rotation_exp(th2, 2);
            config.positions.col(0) = Eigen::Vector2d(0.8, 0.2) + r1 * g1.body_offsets[0];
            config.positions.col(1) = Eigen::Vector2d(0.8, 0.2) + r1 * g1.body_offsets[1];
            config.positions.col(2) = Eigen::Vector2d(5.5, 3.0) + r2 * g2.body_offsets[0];
            config.positions.col(3) = Eigen::Vector2d(5.5, 3.0) + r2 * g2.body_offsets[1];
        };
        Configuration config;
        RigidGroups groups;
        RangingGraph graph;
        make_instance(config, groups, graph);
        const NoiseModel noise = noise_for(0);
        std::vector<int> mobile;
        for (int v = 0; v < graph.node_count(); ++v) mobile.push_back(v);

        const GradientField g =
            constrained_potential_gradient(groups, graph, config, noise, mobile);
        auto value = [&](const Configuration& c) {
            const Eigen::MatrixXd fu = fim(graph, c, noise).tag_block();
            const Eigen::MatrixXd a = distance_nullspace(groups, c, graph.tag_count);
            return constrained_crlb(fu, a).matrix.trace();
        };
        double worst = 0.0;
        double ref = 1.0;
        for (int node : mobile) ref = std::max(ref, g.at(node).norm());
        for (int node : mobile)
            for (int c = 0; c < 2; ++c)
                worst = std::max(worst, std::abs(g.at(node)(c) -
                                                 finite_difference(value, config, node, c,
                                                                   1e-6)) /
                                            ref);
        rep.check("distance-constrained gradient vs finite differences", worst < 1e-5, worst);

        // PSD ordering chain at the same instance
        const Eigen::MatrixXd fu = fim(graph, config, noise).tag_block();
        const Eigen::MatrixXd inv_fu = crlb_unconstrained(fu).matrix;
        const Eigen::MatrixXd b_d =
            constrained_crlb(fu, distance_nullspace(groups, config, graph.tag_count)).matrix;
        Eigen::VectorXd th1(1), th2(1);
        th1(0) = 0.4;
        th2(0) = -1.1;
        const RpCrlb rp = rp_constrained_crlb(graph, config, noise, groups, {th1, th2});
        // permute the RP position block back to the native tag order
        const auto sys = rp_constraints(groups, config, {th1, th2}, graph.tag_count);
        Eigen::MatrixXd perm = Eigen::MatrixXd::Zero(8, 8);
        for (int kk = 0; kk < 4; ++kk)
            for (int c = 0; c < 2; ++c) perm(2 * kk + c, 2 * sys.tag_order[kk] + c) = 1.0;
        const Eigen::MatrixXd b_rp_pos =
            perm.transpose() * rp.b_rp.topLeftCorner(8, 8) * perm;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(inv_fu - b_d);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(b_d - b_rp_pos);
        const double worst_psd = std::min(e1.eigenvalues()(0), e2.eigenvalues()(0));
        rep.check("PSD ordering B_RP <= B_D <= inv(F_U)", worst_psd > -1e-9, worst_psd);
    }

    // trace identities
    {
        double worst_add = 0.0, worst_log = 0.0;
        for (int i = 0; i < 5; ++i) {
            const int dim = i % 2 == 0 ? 2 : 3;
            auto inst = random_rigid_instance(dim, 3, dim + 1, rng);
            NoiseModel add{NoiseKind::Additive, 0.2};
            const double tr = fim(inst.graph, inst.config, add).tag_block().trace();
            double degree_sum = 0.0;
            for (int t = 0; t < inst.graph.tag_count; ++t)
                degree_sum += static_cast<double>(inst.graph.neighborhoods[t].size());
            worst_add = std::max(
                worst_add, std::abs(tr - degree_sum / (add.sigma * add.sigma)) /
                               std::abs(tr));
            NoiseModel ln{NoiseKind::LogNormal, 0.1};
            const double trl = fim(inst.graph, inst.config, ln).tag_block().trace();
            worst_log = std::max(worst_log,
                                 std::abs(trl + t_potential(inst.graph, inst.config, ln)) /
                                     std::abs(trl));
        }
        rep.check("additive trace identity trace(F_U) = sum|N_i|/sigma^2",
                  worst_add < 1e-12, worst_add);
        rep.check("log-normal trace identity matches t-potential", worst_log < 1e-12,
                  worst_log);
    }

    // distributed gradients against the centralized formulas
    {
        double worst_d = 0.0, worst_a = 0.0, worst_e = 0.0;
        bool local_ok = true;
        for (int i = 0; i < 3; ++i) {
            auto inst = random_rigid_instance(2, 4, 3, rng);
            const NoiseModel noise{NoiseKind::Additive, 0.1};
            std::vector<int> mobile;
            for (int v = 0; v < inst.graph.node_count(); ++v) mobile.push_back(v);
            auto norm_of = [&](const GradientField& f) {
                double n = 0.0;
                for (const auto& [node, v] : f.grad) n = std::max(n, v.norm());
                return std::max(n, 1e-12);
            };
            auto compare = [&](const GradientField& got, const GradientField& want) {
                double w = 0.0;
                for (const auto& [node, v] : want.grad)
                    w = std::max(w, (got.at(node) - v).norm());
                return w / norm_of(want);
            };
            SolveOptions opts;
            opts.tol = 1e-11;
            RoundNetwork net_d(inst.graph);
            const GradientField dd =
                distributed_dopt_gradient(net_d, inst.config, noise, mobile, opts);
            const GradientField cd = potential_gradient(PotentialKind::DOpt, inst.graph,
                                                        inst.config, noise, mobile);
            worst_d = std::max(worst_d, compare(dd, cd));
            local_ok = local_ok && net_d.locality_audit();

            RoundNetwork net_a(inst.graph);
            const GradientField da =
                distributed_aopt_gradient(net_a, inst.config, noise, mobile, opts);
            const GradientField ca = potential_gradient(PotentialKind::AOpt, inst.graph,
                                                        inst.config, noise, mobile);
            worst_a = std::max(worst_a, compare(da, ca));
            local_ok = local_ok && net_a.locality_audit();

            RoundNetwork net_e(inst.graph, false);
            PowerIterOptions popts;
            popts.outer_iters = 40000;
            popts.inner_rounds = 200;
            popts.stop_tol = 1e-11;
            Rng prng = rng.fork(17 + i);
            const EigEstimate eig =
                power_iteration_eigvec(net_e, inst.config, noise, prng, popts);
            const GradientField de =
                distributed_eopt_gradient(net_e, inst.config, noise, eig, mobile);
            const GradientField ce = potential_gradient(PotentialKind::EOpt, inst.graph,
                                                        inst.config, noise, mobile);
            worst_e = std::max(worst_e, compare(de, ce));
            local_ok = local_ok && net_e.locality_audit();
        }
        rep.check("distributed dopt gradient matches centralized", worst_d < 1e-5, worst_d);
        rep.check("distributed aopt gradient matches centralized", worst_a < 1e-5, worst_a);
        rep.check("distributed eopt gradient matches centralized", worst_e < 1e-3, worst_e);
        rep.check("message transcripts pass the one-hop locality audit", local_ok, 0.0);
    }

    // Richardson residual contraction
    {
        auto inst = random_rigid_instance(2, 4, 3, rng);
        const NoiseModel noise{NoiseKind::Additive, 0.1};
        const Eigen::MatrixXd fu = fim(inst.graph, inst.config, noise).tag_block();
        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(fu.rows(), fu.cols());
        const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(fu.rows(), fu.cols());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fu);
        const double eta = 1.0 / es.eigenvalues().maxCoeff();
        double prev = std::numeric_limits<double>::infinity();
        bool monotone = true;
        for (int it = 0; it < 50; ++it) {
            const Eigen::MatrixXd res = fu * x - e;
            const double rn = res.norm();
            if (rn > prev) monotone = false;
            prev = rn;
            x -= eta * res;
        }
        rep.check("richardson residual decreases monotonically", monotone, prev);
    }

    os << (rep.failures == 0 ? "all properties passed\n"
                             : std::to_string(rep.failures) + " properties failed\n");
    return rep.failures;
}

}  // namespace locnet
