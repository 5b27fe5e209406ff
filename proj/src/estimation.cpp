#include "locnet/estimation.hpp"

#include <sstream>

namespace locnet {

namespace {

constexpr double kMinRange = 1e-12;

std::vector<int> free_tags(const RigidGroups& groups, int tag_count) {
    std::vector<bool> in_group(tag_count, false);
    for (const auto& g : groups)
        for (int t : g.tags) in_group[t] = true;
    std::vector<int> out;
    for (int t = 0; t < tag_count; ++t)
        if (!in_group[t]) out.push_back(t);
    return out;
}

struct Residualizer {
    const RangingGraph& graph;
    const Eigen::MatrixXd& anchors;  // dim x K
    const MeasurementSet& meas;

    Eigen::VectorXd position(int node, const Eigen::MatrixXd& tags) const {
        return graph.is_tag(node) ? Eigen::VectorXd(tags.col(node))
                                  : Eigen::VectorXd(anchors.col(node - graph.tag_count));
    }

    // residuals r_e = |p_i - p_j| - d_e and Jacobian over tag coordinates
    void eval(const Eigen::MatrixXd& tags, Eigen::VectorXd& r, Eigen::MatrixXd& jac) const {
        const int d = graph.dim;
        const int p = graph.measured_count();
        r.resize(p);
        jac = Eigen::MatrixXd::Zero(p, d * graph.tag_count);
        for (int e = 0; e < p; ++e) {
            const auto& [i, j] = graph.edges[e];
            const Eigen::VectorXd diff = position(i, tags) - position(j, tags);
            const double dist = std::max(diff.norm(), kMinRange);
            r(e) = dist - meas.distances(e);
            const Eigen::VectorXd unit = diff / dist;
            if (graph.is_tag(i)) jac.block(e, d * i, 1, d) = unit.transpose();
            if (graph.is_tag(j)) jac.block(e, d * j, 1, d) = -unit.transpose();
        }
    }
};

struct GnOutcome {
    Eigen::VectorXd x;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    double cost = 0.0;
};

// Newton iterations on the gradient of the squared-residual cost, with the
// Hessian taken by central differences of the gradient. Handles the
// large-residual regime where the Gauss-Newton approximation converges too
// slowly to reach gtol.
template <typename EvalFn>
void newton_polish(GnOutcome& out, const EvalFn& eval, const LsOptions& opts) {
    const int n = static_cast<int>(out.x.size());
    auto gradient = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd r;
        Eigen::MatrixXd j;
        eval(x, r, j);
        return Eigen::VectorXd(2.0 * j.transpose() * r);
    };
    Eigen::VectorXd g = gradient(out.x);
    for (int it = 0; it < 40 && g.norm() > opts.gtol; ++it) {
        Eigen::MatrixXd h(n, n);
        const double step = 1e-6;
        for (int c = 0; c < n; ++c) {
            Eigen::VectorXd xp = out.x, xm = out.x;
            xp(c) += step;
            xm(c) -= step;
            h.col(c) = (gradient(xp) - gradient(xm)) / (2.0 * step);
        }
        h = 0.5 * (h + h.transpose());
        Eigen::VectorXd delta = -h.fullPivLu().solve(g);
        if (!delta.allFinite()) break;
        bool improved = false;
        for (int half = 0; half < 12 && !improved; ++half) {
            const Eigen::VectorXd gt = gradient(out.x + delta);
            if (gt.norm() < g.norm()) {
                out.x += delta;
                g = gt;
                improved = true;
            } else {
                delta *= 0.5;
            }
        }
        ++out.iterations;
        if (!improved) break;
    }
    Eigen::VectorXd r;
    Eigen::MatrixXd j;
    eval(out.x, r, j);
    out.cost = r.squaredNorm();
    out.gradient_norm = g.norm();
    out.converged = out.gradient_norm < opts.gtol;
}

// Levenberg-style damped Gauss-Newton over a generic residual function:
// damping doubles on cost increase, halves on decrease.
template <typename EvalFn>
GnOutcome damped_gauss_newton(Eigen::VectorXd x, const EvalFn& eval, const LsOptions& opts) {
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    eval(x, r, jac);

    GnOutcome out;
    out.cost = r.squaredNorm();
    double damping = 1e-6;
    for (int it = 0; it < opts.max_iterations; ++it) {
        out.iterations = it + 1;
        const Eigen::VectorXd grad = 2.0 * jac.transpose() * r;
        out.gradient_norm = grad.norm();
        if (out.gradient_norm < opts.gtol) {
            out.converged = true;
            break;
        }
        const Eigen::MatrixXd h = jac.transpose() * jac;
        bool stepped = false;
        for (int tries = 0; tries < 40 && !stepped; ++tries) {
            Eigen::MatrixXd hd = h;
            hd.diagonal().array() += damping;
            const Eigen::VectorXd delta = hd.ldlt().solve(-0.5 * grad);
            Eigen::VectorXd rt;
            Eigen::MatrixXd jt;
            eval(x + delta, rt, jt);
            const double ct = rt.squaredNorm();
            // below the cost resolution floor, progress shows only in the
            // gradient norm; accept those steps too so stationarity reaches
            // gtol instead of sqrt(eps * cost)
            const double gt = (2.0 * jt.transpose() * rt).norm();
            const bool better_cost = ct < out.cost;
            const bool better_grad =
                ct <= out.cost * (1.0 + 1e-9) && gt < 0.95 * out.gradient_norm;
            if (better_cost || better_grad) {
                x += delta;
                r = rt;
                jac = jt;
                out.cost = std::min(out.cost, ct);
                damping = std::max(damping * 0.5, 1e-12);
                stepped = true;
                out.gradient_norm = gt;
                if (delta.norm() < opts.xtol || gt < opts.gtol) out.converged = true;
            } else {
                damping *= 2.0;
            }
        }
        if (!stepped) {
            out.gradient_norm = (2.0 * jac.transpose() * r).norm();
            out.converged = out.gradient_norm < opts.gtol;
            break;
        }
        if (out.converged) break;
    }
    out.gradient_norm = (2.0 * jac.transpose() * r).norm();
    out.x = x;
    return out;
}

}  // namespace

MeasurementSet sample_measurements(const RangingGraph& graph, const Configuration& config,
                                   const NoiseModel& noise, Rng& rng) {
    MeasurementSet out;
    out.seed = rng.seed();
    out.distances.resize(graph.measured_count());
    for (int e = 0; e < graph.measured_count(); ++e) {
        const auto& [i, j] = graph.edges[e];
        const double dist = (config.positions.col(i) - config.positions.col(j)).norm();
        if (dist < kMinRange) throw SingularGeometryError("zero-distance measured edge");
        if (noise.kind == NoiseKind::Additive)
            out.distances(e) = dist + noise.sigma * rng.normal();
        else
            out.distances(e) = dist * std::exp(noise.sigma * rng.normal());
    }
    return out;
}

LsResult ls_localize(const RangingGraph& graph, const Eigen::MatrixXd& anchor_positions,
                     const MeasurementSet& measurements, const Eigen::MatrixXd& initial_guess,
                     const LsOptions& opts) {
    const int d = graph.dim;
    const int u = graph.tag_count;
    Residualizer res{graph, anchor_positions, measurements};
    auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
        res.eval(Eigen::Map<const Eigen::MatrixXd>(x.data(), d, u), r, jac);
    };
    GnOutcome gn = damped_gauss_newton(
        Eigen::Map<const Eigen::VectorXd>(initial_guess.data(), initial_guess.size()), eval,
        opts);
    if (!gn.converged || gn.gradient_norm > opts.gtol) newton_polish(gn, eval, opts);

    LsResult out;
    out.tag_positions = Eigen::Map<const Eigen::MatrixXd>(gn.x.data(), d, u);
    out.converged = gn.converged;
    out.iterations = gn.iterations;
    out.gradient_norm = gn.gradient_norm;
    out.cost = gn.cost;
    return out;
}

namespace {

// Gauss-Newton over the reduced rigid variables: ungrouped tags keep (x, y),
// each group contributes (x_ref, y_ref, theta). Constraints hold exactly.
LsResult reduced_rigid_gn(const RangingGraph& graph, const Eigen::MatrixXd& anchor_positions,
                          const MeasurementSet& measurements, const RigidGroups& groups,
                          const Eigen::MatrixXd& initial_guess, const LsOptions& opts,
                          const std::vector<double>* fixed_thetas = nullptr) {
    const int d = 2;
    const int theta_vars = fixed_thetas ? 0 : 1;
    const int u = graph.tag_count;
    Residualizer res{graph, anchor_positions, measurements};

    // reduced variables: ungrouped tags keep (x,y); each group contributes
    // (x_ref, y_ref, theta)
    const auto singles = free_tags(groups, u);
    std::vector<int> var_of_tag(u, -1);
    int nv = 0;
    for (int t : singles) {
        var_of_tag[t] = nv;
        nv += d;
    }
    std::vector<int> group_var(groups.size());
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        group_var[gi] = nv;
        nv += d + theta_vars;
    }

    auto theta_of = [&](const Eigen::VectorXd& v, size_t gi) {
        return fixed_thetas ? (*fixed_thetas)[gi] : v(group_var[gi] + d);
    };
    auto unpack = [&](const Eigen::VectorXd& v) {
        Eigen::MatrixXd tags(d, u);
        for (int t : singles) tags.col(t) = v.segment(var_of_tag[t], d);
        for (size_t gi = 0; gi < groups.size(); ++gi) {
            const auto& g = groups[gi];
            const Eigen::Vector2d ref = v.segment(group_var[gi], d);
            Eigen::VectorXd th(1);
            th(0) = theta_of(v, gi);
            const Eigen::MatrixXd rot = rotation_exp(th, 2);
            tags.col(g.tags[0]) = ref;
            for (int s = 1; s < g.size(); ++s)
                tags.col(g.tags[s]) = ref + rot * (g.body_offsets[s] - g.body_offsets[0]);
        }
        return tags;
    };

    auto eval = [&](const Eigen::VectorXd& v, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
        const Eigen::MatrixXd tags = unpack(v);
        Eigen::VectorXd r0;
        Eigen::MatrixXd j0;  // over tag coordinates
        res.eval(tags, r0, j0);
        r = r0;
        jac = Eigen::MatrixXd::Zero(r0.size(), nv);
        for (int t : singles) jac.middleCols(var_of_tag[t], d) += j0.middleCols(d * t, d);
        Eigen::Matrix2d w;
        w << 0, -1, 1, 0;
        for (size_t gi = 0; gi < groups.size(); ++gi) {
            const auto& g = groups[gi];
            Eigen::VectorXd th(1);
            th(0) = theta_of(v, gi);
            const Eigen::MatrixXd rot = rotation_exp(th, 2);
            for (int s = 0; s < g.size(); ++s) {
                const int t = g.tags[s];
                jac.middleCols(group_var[gi], d) += j0.middleCols(d * t, d);
                if (s > 0 && theta_vars)
                    jac.col(group_var[gi] + d) +=
                        j0.middleCols(d * t, d) *
                        (w * rot * (g.body_offsets[s] - g.body_offsets[0]));
            }
        }
    };

    // initial reduced state: per-group pose projection of the guess
    Eigen::VectorXd v0(nv);
    for (int t : singles) v0.segment(var_of_tag[t], d) = initial_guess.col(t);
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        Eigen::MatrixXd desired(d, g.size());
        for (int s = 0; s < g.size(); ++s) desired.col(s) = initial_guess.col(g.tags[s]);
        const PoseFit fit = project_to_rigid_pose(g, desired);
        v0.segment(group_var[gi], d) = fit.translation + fit.rotation * g.body_offsets[0];
        if (theta_vars) v0(group_var[gi] + d) = fit.theta(0);
    }

    GnOutcome gn = damped_gauss_newton(v0, eval, opts);
    if (!gn.converged || gn.gradient_norm > opts.gtol) newton_polish(gn, eval, opts);
    LsResult out;
    out.tag_positions = unpack(gn.x);
    out.converged = gn.converged;
    out.iterations = gn.iterations;
    out.gradient_norm = gn.gradient_norm;
    out.cost = gn.cost;
    out.constraint_residual = 0.0;  // exact by parameterization
    return out;
}

}  // namespace

LsResult ls_localize_distance_constrained(const RangingGraph& graph,
                                          const Eigen::MatrixXd& anchor_positions,
                                          const MeasurementSet& measurements,
                                          const RigidGroups& groups,
                                          const Eigen::MatrixXd& initial_guess,
                                          const LsOptions& opts) {
    const int d = graph.dim;
    const int u = graph.tag_count;
    Residualizer res{graph, anchor_positions, measurements};

    struct Pair {
        int i, j;
        double dist;
    };
    std::vector<Pair> pairs;
    for (const auto& g : groups)
        for (int a = 0; a < g.size(); ++a)
            for (int b = a + 1; b < g.size(); ++b)
                pairs.push_back({g.tags[a], g.tags[b],
                                 (g.body_offsets[a] - g.body_offsets[b]).norm()});

    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pairs.size()));
    double rho = 10.0;
    const double ctol = 1e-8;

    Eigen::VectorXd x =
        Eigen::Map<const Eigen::VectorXd>(initial_guess.data(), initial_guess.size());
    GnOutcome gn;
    double worst = 0.0;
    for (int outer = 0; outer < 5; ++outer) {
        auto eval = [&](const Eigen::VectorXd& xv, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
            const Eigen::MatrixXd tags = Eigen::Map<const Eigen::MatrixXd>(xv.data(), d, u);
            Eigen::VectorXd r0;
            Eigen::MatrixXd j0;
            res.eval(tags, r0, j0);
            const int p = static_cast<int>(r0.size());
            const int c = static_cast<int>(pairs.size());
            r.resize(p + c);
            jac = Eigen::MatrixXd::Zero(p + c, d * u);
            r.head(p) = r0;
            jac.topRows(p) = j0;
            const double w = std::sqrt(rho / 2.0);
            for (int k = 0; k < c; ++k) {
                const Eigen::VectorXd diff = tags.col(pairs[k].i) - tags.col(pairs[k].j);
                const double dist = std::max(diff.norm(), kMinRange);
                r(p + k) = w * (dist - pairs[k].dist + lambda(k) / rho);
                const Eigen::VectorXd unit = diff / dist;
                jac.block(p + k, d * pairs[k].i, 1, d) = w * unit.transpose();
                jac.block(p + k, d * pairs[k].j, 1, d) = -w * unit.transpose();
            }
        };
        gn = damped_gauss_newton(x, eval, opts);
        x = gn.x;
        const Eigen::MatrixXd tags = Eigen::Map<const Eigen::MatrixXd>(x.data(), d, u);
        worst = 0.0;
        for (size_t k = 0; k < pairs.size(); ++k) {
            const double h =
                (tags.col(pairs[k].i) - tags.col(pairs[k].j)).norm() - pairs[k].dist;
            lambda(static_cast<Eigen::Index>(k)) += rho * h;
            worst = std::max(worst, std::abs(h));
        }
        if (worst < ctol) break;
        rho *= 10.0;
    }

    LsResult out;
    out.tag_positions = Eigen::Map<const Eigen::MatrixXd>(x.data(), d, u);
    out.converged = gn.converged && worst < ctol;
    out.iterations = gn.iterations;
    out.constraint_residual = worst;
    Eigen::VectorXd r0;
    Eigen::MatrixXd j0;
    res.eval(out.tag_positions, r0, j0);
    out.cost = r0.squaredNorm();
    out.gradient_norm = gn.gradient_norm;

    // 2D polish: re-solve in the rigid reduced variables from the penalty
    // solution, which drives the tangent-space gradient to gtol and makes the
    // constraint residual exact
    bool polishable = d == 2;
    for (const auto& grp : groups) polishable = polishable && grp.size() >= 2;
    if (polishable) {
        LsResult fine = reduced_rigid_gn(graph, anchor_positions, measurements, groups,
                                         out.tag_positions, opts);
        fine.iterations += out.iterations;
        return fine;
    }
    return out;
}

namespace {

LsResult rp_solve(const RangingGraph& graph, const Eigen::MatrixXd& anchor_positions,
                  const MeasurementSet& measurements, const RigidGroups& groups,
                  const Eigen::MatrixXd& initial_guess, const LsOptions& opts,
                  const std::vector<double>* fixed_thetas) {
    if (graph.dim != 2)
        throw std::invalid_argument("relative-position estimator is 2D only");
    LsResult out = reduced_rigid_gn(graph, anchor_positions, measurements, groups,
                                    initial_guess, opts, fixed_thetas);
    if (!out.converged) {
        // restart from the pose-projected unconstrained solution
        const LsResult free = ls_localize(graph, anchor_positions, measurements,
                                          initial_guess, opts);
        LsResult retry = reduced_rigid_gn(graph, anchor_positions, measurements, groups,
                                          free.tag_positions, opts, fixed_thetas);
        retry.iterations += out.iterations + free.iterations;
        if (retry.converged || retry.cost < out.cost) return retry;
    }
    return out;
}

}  // namespace

LsResult ls_localize_rp_constrained(const RangingGraph& graph,
                                    const Eigen::MatrixXd& anchor_positions,
                                    const MeasurementSet& measurements,
                                    const RigidGroups& groups,
                                    const Eigen::MatrixXd& initial_guess,
                                    const LsOptions& opts) {
    return rp_solve(graph, anchor_positions, measurements, groups, initial_guess, opts,
                    nullptr);
}

LsResult ls_localize_rp_constrained(const RangingGraph& graph,
                                    const Eigen::MatrixXd& anchor_positions,
                                    const MeasurementSet& measurements,
                                    const RigidGroups& groups,
                                    const Eigen::MatrixXd& initial_guess,
                                    const std::vector<double>& known_thetas,
                                    const LsOptions& opts) {
    if (known_thetas.size() != groups.size())
        throw std::invalid_argument("one heading per group expected");
    return rp_solve(graph, anchor_positions, measurements, groups, initial_guess, opts,
                    &known_thetas);
}

TrialStats monte_carlo(const std::vector<MonteCarloCase>& cases, const NoiseModel& noise,
                       const Estimator& estimator, int trials, uint64_t seed,
                       const InitialGuessPolicy& init, double failure_abort_fraction) {
    if (trials < 2) throw std::invalid_argument("monte carlo needs M >= 2 trials");
    TrialStats stats;
    stats.trials = trials;
    Rng root(seed);

    for (const auto& mc : cases) {
        const int d = mc.graph.dim;
        const int u = mc.graph.tag_count;
        const Eigen::MatrixXd anchors = mc.config.positions.rightCols(mc.graph.anchor_count);
        const Eigen::MatrixXd truth = mc.config.positions.leftCols(u);

        Eigen::MatrixXd sq_err(u, trials);
        Eigen::MatrixXd stacked_err(d * u, trials);
        int failures = 0;
        int kept = 0;
        for (int trial = 0; trial < trials; ++trial) {
            Rng stream = root.fork((static_cast<uint64_t>(mc.step) << 32) ^
                                   static_cast<uint64_t>(trial));
            MeasurementSet meas;
            try {
                meas = sample_measurements(mc.graph, mc.config, noise, stream);
            } catch (const SingularGeometryError&) {
                ++failures;
                continue;
            }
            Eigen::MatrixXd guess;
            if (init.kind == InitialGuessPolicy::Fixed) {
                guess = init.fixed_positions;
            } else {
                guess = truth;
                for (int t = 0; t < u; ++t)
                    for (int c = 0; c < d; ++c)
                        guess(c, t) += init.perturbation_scale * noise.sigma * stream.normal();
            }
            LsResult est;
            try {
                est = estimator(mc.graph, anchors, meas, guess);
            } catch (const std::exception&) {
                ++failures;
                continue;
            }
            if (!est.converged) {
                ++failures;
                continue;
            }
            for (int t = 0; t < u; ++t)
                sq_err(t, kept) = (est.tag_positions.col(t) - truth.col(t)).squaredNorm();
            const Eigen::MatrixXd err = est.tag_positions - truth;
            stacked_err.col(kept) = Eigen::Map<const Eigen::VectorXd>(err.data(), err.size());
            ++kept;
        }
        if (failures > failure_abort_fraction * trials)
            throw ConvergenceError("monte carlo aborted: " + std::to_string(failures) +
                                   " of " + std::to_string(trials) + " trials failed");

        StepStats s;
        s.step = mc.step;
        s.failures = failures;
        s.mse.resize(u);
        s.variance.resize(u);
        s.b_minus.resize(u);
        s.b_plus.resize(u);
        const auto eps = sq_err.leftCols(kept);
        for (int t = 0; t < u; ++t) {
            const double mse = eps.row(t).mean();
            double var = 0.0;
            for (int k = 0; k < kept; ++k) var += std::pow(eps(t, k) - mse, 2.0);
            var /= std::max(kept - 1, 1);
            s.mse(t) = mse;
            s.variance(t) = var;
            const double half = 3.0 * std::sqrt(var) / std::sqrt(static_cast<double>(kept));
            s.b_minus(t) = mse - half;
            s.b_plus(t) = mse + half;
        }
        const Eigen::MatrixXd centered =
            stacked_err.leftCols(kept).colwise() - stacked_err.leftCols(kept).rowwise().mean();
        const Eigen::MatrixXd cov = centered * centered.transpose() / std::max(kept - 1, 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        double logdet = 0.0;
        for (int i = 0; i < es.eigenvalues().size(); ++i)
            logdet += std::log(std::max(es.eigenvalues()(i), 1e-300));
        s.logdet_cov = logdet;
        stats.steps.push_back(std::move(s));
    }
    return stats;
}

std::string trial_stats_csv(const TrialStats& stats) {
    std::ostringstream os;
    os << "step,tag,mse,var,b_minus,b_plus,logdet_cov\n";
    char buf[64];
    for (const auto& s : stats.steps) {
        for (int t = 0; t < s.mse.size(); ++t) {
            os << s.step << ',' << t;
            for (double v : {s.mse(t), s.variance(t), s.b_minus(t), s.b_plus(t), s.logdet_cov}) {
                std::snprintf(buf, sizeof(buf), ",%.17g", v);
                os << buf;
            }
            os << '\n';
        }
    }
    return os.str();
}

}  // namespace locnet
