#include "locnet/decentral.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace locnet {

namespace {

enum MsgKind {
    kPos = 0,
    kX = 1,
    kTraceTerm = 2,
    kW = 3,
    kSHat = 4,
    kVHat = 5,
    kLambdaUp = 6,
    kLambdaMin = 7,
};

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
    return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, int rows, int cols) {
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

double trace_bound(const RangingGraph& graph, const Configuration& config,
                   const NoiseModel& noise) {
    // trace(F_U) <= 2 sum_measured d^(2-2kappa) / sigma^2; equality when every
    // measured edge joins two tags.
    double s = 0.0;
    for (int e = 0; e < graph.measured_count(); ++e) {
        const auto& [i, j] = graph.edges[e];
        const double dist = (config.positions.col(i) - config.positions.col(j)).norm();
        s += std::pow(dist, 2.0 - 2.0 * noise.kappa());
    }
    return 2.0 * s / (noise.sigma * noise.sigma);
}

// Per-edge information blocks known to each tag after the position broadcast.
struct LocalFim {
    // F_ij for each neighbor j of tag i, plus the diagonal F_ii
    std::vector<std::map<int, Eigen::MatrixXd>> off;  // indexed by tag
    std::vector<Eigen::MatrixXd> diag;

    void build(const RangingGraph& graph, const Configuration& config,
               const NoiseModel& noise) {
        const int d = graph.dim;
        const int u = graph.tag_count;
        off.assign(u, {});
        diag.assign(u, Eigen::MatrixXd::Zero(d, d));
        for (int i = 0; i < u; ++i) {
            for (int j : graph.neighborhoods[i]) {
                const Eigen::VectorXd pij =
                    config.positions.col(i) - config.positions.col(j);
                const double dist = pij.norm();
                if (dist < 1e-12) throw SingularGeometryError("zero-distance edge");
                const double w =
                    1.0 / (std::pow(dist, 2.0 * noise.kappa()) * noise.sigma * noise.sigma);
                const Eigen::MatrixXd f = -w * (pij * pij.transpose());
                if (graph.is_tag(j)) off[i][j] = f;
                diag[i] -= f;
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Richardson / Jacobi linear solves

class LinearSolveProtocol : public RoundProtocol {
public:
    LinearSolveProtocol(const Configuration& config, const NoiseModel& noise,
                        std::vector<Eigen::MatrixXd> e_blocks, double eta, bool jacobi)
        : config_(config), noise_(noise), e_(std::move(e_blocks)), eta_(eta),
          jacobi_(jacobi) {}

    void init(RoundNetwork& net) override {
        const auto& g = net.graph();
        const int u = g.tag_count;
        if (static_cast<int>(e_.size()) != u)
            throw std::invalid_argument("one E block per tag expected");
        start_round_ = net.round();
        cols_ = static_cast<int>(e_[0].cols());
        x_.assign(u, Eigen::MatrixXd::Zero(g.dim, cols_));
        tested_.assign(u, Eigen::MatrixXd::Zero(g.dim, cols_));
        residual_.assign(u, std::numeric_limits<double>::infinity());
        double enorm2 = 0.0;
        for (const auto& m : e_) enorm2 += m.squaredNorm();
        scale_ = std::sqrt(static_cast<double>(u)) / std::max(std::sqrt(enorm2), 1e-300);
        // round 0: everyone broadcasts its position
        for (int i = 0; i < g.node_count(); ++i)
            net.broadcast(i, kPos, config_.positions.col(i));
    }

    void on_round(RoundNetwork& net, int node) override {
        const auto& g = net.graph();
        if (!g.is_tag(node)) return;
        if (net.round() == start_round_ + 1) {
            if (fim_.off.empty()) fim_.build(g, config_, noise_);  // positions received
            if (jacobi_) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fim_.diag[node]);
                if (es.eigenvalues()(0) <= 1e-10 * es.eigenvalues()(g.dim - 1))
                    throw SingularMatrixError("singular diagonal FIM block at tag " +
                                                  std::to_string(node),
                                              es.eigenvalues()(0));
            }
            send_x(net, node);
            residual_[node] = e_[node].norm() * scale_;
            tested_[node] = x_[node];
            return;
        }
        // gather neighbor blocks from this round's inbox
        Eigen::MatrixXd coupling = Eigen::MatrixXd::Zero(g.dim, cols_);
        for (const auto& msg : net.inbox(node)) {
            if (msg.kind != kX) continue;
            const auto it = fim_.off[node].find(msg.from);
            if (it == fim_.off[node].end()) continue;
            coupling += it->second * unflatten(msg.payload, g.dim, cols_);
        }
        const Eigen::MatrixXd full_row = fim_.diag[node] * x_[node] + coupling;
        residual_[node] = (full_row - e_[node]).norm() * scale_;
        tested_[node] = x_[node];
        if (jacobi_) {
            x_[node] = (1.0 - eta_) * x_[node] +
                       eta_ * fim_.diag[node].ldlt().solve(e_[node] - coupling);
        } else {
            x_[node] -= eta_ * (full_row - e_[node]);
        }
        send_x(net, node);
    }

    double local_residual(int node) const override {
        return residual_.empty() ? std::numeric_limits<double>::infinity()
                                 : residual_[node];
    }

    std::vector<int> participants(const RangingGraph& graph) const override {
        std::vector<int> tags(graph.tag_count);
        std::iota(tags.begin(), tags.end(), 0);
        return tags;
    }

    const std::vector<Eigen::MatrixXd>& solution() const { return tested_; }

private:
    void send_x(RoundNetwork& net, int node) {
        for (int j : net.graph().neighborhoods[node])
            if (net.graph().is_tag(j)) net.send(node, j, kX, flatten(x_[node]));
    }

    Configuration config_;
    NoiseModel noise_;
    std::vector<Eigen::MatrixXd> e_;
    double eta_;
    bool jacobi_;
    int start_round_ = 0;
    int cols_ = 0;
    double scale_ = 1.0;
    LocalFim fim_;
    std::vector<Eigen::MatrixXd> x_;
    std::vector<Eigen::MatrixXd> tested_;
    std::vector<double> residual_;
};

std::vector<Eigen::MatrixXd> run_linear_solve(RoundNetwork& net, const Configuration& config,
                                              const NoiseModel& noise,
                                              const std::vector<Eigen::MatrixXd>& e_blocks,
                                              const SolveOptions& opts, bool jacobi) {
    double eta = opts.eta;
    if (eta <= 0.0)
        eta = jacobi ? 1.0 : 1.0 / trace_bound(net.graph(), config, noise);
    LinearSolveProtocol proto(config, noise, e_blocks, eta, jacobi);

    // run_protocol with divergence tracking layered on the residuals
    const std::vector<int> tags = proto.participants(net.graph());
    proto.init(net);
    double prev = std::numeric_limits<double>::infinity();
    int growth_streak = 0;
    for (int r = 0; r < opts.max_rounds; ++r) {
        net.step();
        for (int t : tags) proto.on_round(net, t);
        double worst = 0.0;
        for (int t : tags) worst = std::max(worst, proto.local_residual(t));
        if (worst < opts.tol) return proto.solution();
        if (r > 0) {
            growth_streak = worst > prev ? growth_streak + 1 : 0;
            if (growth_streak >= 10)
                throw ConvergenceError(
                    "iteration diverging: residual grew over 10 consecutive rounds "
                    "(eta too large?)");
        }
        prev = worst;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", prev);
    throw ConvergenceError(
        std::string("linear solve did not converge within max_rounds (residual ") + buf +
        ")");
}

}  // namespace

std::vector<Eigen::MatrixXd> richardson_solve(RoundNetwork& net, const Configuration& config,
                                              const NoiseModel& noise,
                                              const std::vector<Eigen::MatrixXd>& e_blocks,
                                              const SolveOptions& opts) {
    return run_linear_solve(net, config, noise, e_blocks, opts, false);
}

std::vector<Eigen::MatrixXd> jacobi_or_solve(RoundNetwork& net, const Configuration& config,
                                             const NoiseModel& noise,
                                             const std::vector<Eigen::MatrixXd>& e_blocks,
                                             const SolveOptions& opts) {
    if (opts.eta > 1.0) throw std::invalid_argument("jacobi over-relaxation needs eta <= 1");
    return run_linear_solve(net, config, noise, e_blocks, opts, true);
}

// ---------------------------------------------------------------------------
// Distributed D-/A-Opt gradients

namespace {

// One extra round: every tag sends, per coordinate of each neighbor i, the
// scalar trace(M_jj dF_ij/dxi_i); mobile nodes then assemble their gradients.
GradientField assemble_from_rows(RoundNetwork& net, const Configuration& config,
                                 const NoiseModel& noise,
                                 const std::vector<Eigen::MatrixXd>& rows,
                                 const std::vector<int>& mobile_nodes,
                                 PotentialKind kind) {
    const auto& g = net.graph();
    const int d = g.dim;

    auto own_block = [&](int tag, int col_tag) -> Eigen::MatrixXd {
        return rows[tag].middleCols(d * col_tag, d);
    };

    for (int j = 0; j < g.tag_count; ++j) {
        const Eigen::MatrixXd mjj = own_block(j, j);
        for (int i : g.neighborhoods[j]) {
            Eigen::VectorXd terms(d);
            for (int c = 0; c < d; ++c) {
                const Eigen::MatrixXd dij = fim_block_derivative(
                    config.positions.col(i), config.positions.col(j), c, noise);
                terms(c) = (mjj * dij).trace();
            }
            net.send(j, i, kTraceTerm, terms);
        }
    }
    net.step();

    GradientField out;
    out.value = potential_value(kind, fim(g, config, noise).tag_block());
    for (int node : mobile_nodes) {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
        for (const auto& msg : net.inbox(node))
            if (msg.kind == kTraceTerm) grad += msg.payload;
        if (g.is_tag(node)) {
            const Eigen::MatrixXd mii = own_block(node, node);
            for (int j : g.neighborhoods[node]) {
                for (int c = 0; c < d; ++c) {
                    const Eigen::MatrixXd dij = fim_block_derivative(
                        config.positions.col(node), config.positions.col(j), c, noise);
                    if (g.is_tag(j))
                        grad(c) += ((mii - 2.0 * own_block(node, j)) * dij).trace();
                    else
                        grad(c) += (mii * dij).trace();  // anchor neighbors hit only F_ii
                }
            }
        }
        out.grad[node] = grad;
    }
    return out;
}

std::vector<Eigen::MatrixXd> identity_blocks(const RangingGraph& g) {
    std::vector<Eigen::MatrixXd> e(g.tag_count);
    for (int j = 0; j < g.tag_count; ++j) {
        e[j] = Eigen::MatrixXd::Zero(g.dim, g.dim * g.tag_count);
        e[j].middleCols(g.dim * j, g.dim).setIdentity();
    }
    return e;
}

}  // namespace

GradientField distributed_dopt_gradient(RoundNetwork& net, const Configuration& config,
                                        const NoiseModel& noise,
                                        const std::vector<int>& mobile_nodes,
                                        const SolveOptions& opts) {
    const auto rows = richardson_solve(net, config, noise, identity_blocks(net.graph()), opts);
    return assemble_from_rows(net, config, noise, rows, mobile_nodes, PotentialKind::DOpt);
}

GradientField distributed_aopt_gradient(RoundNetwork& net, const Configuration& config,
                                        const NoiseModel& noise,
                                        const std::vector<int>& mobile_nodes,
                                        const SolveOptions& opts) {
    const auto inv_rows =
        richardson_solve(net, config, noise, identity_blocks(net.graph()), opts);
    // second pass with E = F_U^-1 computes the rows of F_U^-2
    const auto rows = richardson_solve(net, config, noise, inv_rows, opts);
    return assemble_from_rows(net, config, noise, rows, mobile_nodes, PotentialKind::AOpt);
}

// ---------------------------------------------------------------------------
// Consensus averaging

Eigen::MatrixXd metropolis_weights(const RangingGraph& graph) {
    const int u = graph.tag_count;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(u, u);
    for (int i = 0; i < u; ++i) {
        for (int j : graph.neighborhoods[i]) {
            if (!graph.is_tag(j)) continue;
            const double di = static_cast<double>(graph.neighborhoods[i].size());
            const double dj = static_cast<double>(graph.neighborhoods[j].size());
            w(i, j) = 1.0 / (1.0 + std::max(di, dj));
        }
        w(i, i) = 1.0 - w.row(i).sum();
    }
    return w;
}

namespace {

std::vector<int> tag_components(const RangingGraph& graph) {
    std::vector<int> comp(graph.tag_count, -1);
    int next = 0;
    for (int s = 0; s < graph.tag_count; ++s) {
        if (comp[s] >= 0) continue;
        std::vector<int> stack{s};
        comp[s] = next;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int j : graph.neighborhoods[v])
                if (graph.is_tag(j) && comp[j] < 0) {
                    comp[j] = next;
                    stack.push_back(j);
                }
        }
        ++next;
    }
    return comp;
}

// One synchronous round of s <- L s over the tag subgraph.
Eigen::VectorXd consensus_round(RoundNetwork& net, const Eigen::VectorXd& s,
                                const Eigen::MatrixXd& weights) {
    const auto& g = net.graph();
    const int u = g.tag_count;
    for (int i = 0; i < u; ++i) {
        Eigen::VectorXd v(1);
        v(0) = s(i);
        for (int j : g.neighborhoods[i])
            if (g.is_tag(j)) net.send(i, j, kSHat, v);
    }
    net.step();
    Eigen::VectorXd next(u);
    for (int i = 0; i < u; ++i) {
        double acc = weights(i, i) * s(i);
        for (const auto& msg : net.inbox(i))
            if (msg.kind == kSHat) acc += weights(i, msg.from) * msg.payload(0);
        next(i) = acc;
    }
    return next;
}

}  // namespace

ConsensusResult consensus_average(RoundNetwork& net, const Eigen::VectorXd& initial_values,
                                  const Eigen::MatrixXd& weights, int rounds) {
    if (initial_values.size() != net.graph().tag_count)
        throw std::invalid_argument("one initial value per tag expected");
    ConsensusResult res;
    res.values = initial_values;
    for (int r = 0; r < rounds; ++r) res.values = consensus_round(net, res.values, weights);
    const auto comp = tag_components(net.graph());
    res.connected = comp.empty() || *std::max_element(comp.begin(), comp.end()) == 0;
    return res;
}

// ---------------------------------------------------------------------------
// Power iteration for the minimum eigenpair

namespace {

struct ComponentRun {
    std::vector<int> tags;  // graph indices
};

}  // namespace

EigEstimate power_iteration_eigvec(RoundNetwork& net, const Configuration& config,
                                   const NoiseModel& noise, Rng& rng,
                                   const PowerIterOptions& opts) {
    const auto& g = net.graph();
    const int d = g.dim;
    const int u = g.tag_count;

    double beta = opts.beta;
    double mu = opts.mu;
    double eta = opts.eta;
    const double lam_bar = trace_bound(g, config, noise);
    // 1/lam_bar generalizes the additive-model rule beta = sigma^2/(2P); it
    // keeps beta * lambda_min < 1 so any mu > 1 satisfies the gain condition.
    if (beta <= 0.0) beta = 1.0 / lam_bar;
    if (mu <= 0.0) mu = 1.1;
    if (eta <= 0.0) eta = 1.0 / (beta * lam_bar + mu);

    LocalFim fim_local;
    fim_local.build(g, config, noise);
    const Eigen::MatrixXd weights = metropolis_weights(g);

    // position broadcast (Algorithm line 1; LocalFim uses the same data)
    for (int i = 0; i < g.node_count(); ++i) net.broadcast(i, kPos, config.positions.col(i));
    net.step();

    const std::vector<int> comp_of = tag_components(g);
    const int n_comp = comp_of.empty() ? 0 : *std::max_element(comp_of.begin(), comp_of.end()) + 1;
    std::vector<ComponentRun> comps(n_comp);
    for (int t = 0; t < u; ++t) comps[comp_of[t]].tags.push_back(t);

    std::vector<Eigen::VectorXd> w(u);
    if (!opts.w0.empty()) {
        if (static_cast<int>(opts.w0.size()) != u)
            throw std::invalid_argument("w0 override needs one block per tag");
        w = opts.w0;
    } else {
        for (int t = 0; t < u; ++t) w[t] = rng.normal_vector(d);
    }
    std::vector<double> s_hat(u, 0.0);

    int outer_used = 0;
    for (int k = 0; k < opts.outer_iters; ++k) {
        // consensus on s = |w|^2 / (n U): per-tag share |w_i|^2 / n averaged
        // over the tag subgraph (per component when disconnected)
        Eigen::VectorXd sv(u);
        for (int t = 0; t < u; ++t) sv(t) = w[t].squaredNorm() / d;
        for (int l = 0; l < opts.inner_rounds; ++l) sv = consensus_round(net, sv, weights);
        for (int t = 0; t < u; ++t) s_hat[t] = sv(t);
        // one exchange of w blocks, then the discretized flow update
        for (int i = 0; i < u; ++i)
            for (int j : g.neighborhoods[i])
                if (g.is_tag(j)) net.send(i, j, kW, w[i]);
        net.step();
        double update_norm2 = 0.0;
        std::vector<Eigen::VectorXd> wn(u);
        for (int i = 0; i < u; ++i) {
            Eigen::VectorXd fw = fim_local.diag[i] * w[i];
            for (const auto& msg : net.inbox(i)) {
                if (msg.kind != kW) continue;
                const auto it = fim_local.off[i].find(msg.from);
                if (it != fim_local.off[i].end()) fw += it->second * msg.payload;
            }
            const double s_i = s_hat[i];
            const Eigen::VectorXd delta = mu * (1.0 - s_i) * w[i] - beta * fw;
            wn[i] = w[i] + eta * delta;
            update_norm2 += delta.squaredNorm();
        }
        w = wn;
        outer_used = k + 1;
        if (opts.stop_tol > 0.0 && std::sqrt(update_norm2) < opts.stop_tol) break;
    }

    // local normalization v_i = w_i / sqrt(n U_comp s_comp)
    std::vector<Eigen::VectorXd> v(u);
    for (int t = 0; t < u; ++t) {
        const double u_c = static_cast<double>(comps[comp_of[t]].tags.size());
        const double denom = std::sqrt(std::max(d * u_c * s_hat[t], 1e-300));
        v[t] = w[t] / denom;
    }

    // Rayleigh quotient per component: one v exchange then consensus-sum
    for (int i = 0; i < u; ++i)
        for (int j : g.neighborhoods[i])
            if (g.is_tag(j)) net.send(i, j, kVHat, v[i]);
    net.step();
    std::vector<double> q(u);
    for (int i = 0; i < u; ++i) {
        Eigen::VectorXd fv = fim_local.diag[i] * v[i];
        for (const auto& msg : net.inbox(i)) {
            if (msg.kind != kVHat) continue;
            const auto it = fim_local.off[i].find(msg.from);
            if (it != fim_local.off[i].end()) fv += it->second * msg.payload;
        }
        q[i] = v[i].dot(fv);
    }
    // averaging consensus inside each component, then rescale by U_comp so
    // each tag holds the component's Rayleigh numerator sum v^T F v
    {
        Eigen::VectorXd qv(u);
        for (int t = 0; t < u; ++t) qv(t) = q[t];
        for (int l = 0; l < opts.inner_rounds; ++l) qv = consensus_round(net, qv, weights);
        for (int t = 0; t < u; ++t)
            q[t] = qv(t) * static_cast<double>(comps[comp_of[t]].tags.size());
    }

    EigEstimate out;
    out.outer_iters_used = outer_used;

    if (n_comp == 1) {
        // final exact normalization: consensus already brought |v| to ~1, the
        // division by the true norm removes the residual consensus error
        double norm2 = 0.0;
        for (const auto& vi : v) norm2 += vi.squaredNorm();
        const double norm = std::sqrt(std::max(norm2, 1e-300));
        for (auto& vi : v) vi /= norm;
        out.lambda = (q.empty() ? 0.0 : q[0]) / norm2;
        out.v = v;
        return out;
    }

    // Block-diagonal case: each component's (lambda, id) travels through the
    // anchors, everyone keeps the winning component and zero-pads the rest.
    std::vector<double> comp_lambda(n_comp, 0.0);
    std::vector<double> comp_norm2(n_comp, 0.0);
    for (int t = 0; t < u; ++t) comp_norm2[comp_of[t]] += v[t].squaredNorm();
    for (int t = 0; t < u; ++t)
        comp_lambda[comp_of[t]] = q[t] / std::max(comp_norm2[comp_of[t]], 1e-300);

    // tags raise (lambda, comp) to anchor neighbors
    for (int t = 0; t < u; ++t) {
        Eigen::VectorXd m(2);
        m(0) = comp_lambda[comp_of[t]];
        m(1) = static_cast<double>(comp_of[t]);
        for (int j : g.neighborhoods[t])
            if (g.is_anchor(j)) net.send(t, j, kLambdaUp, m);
    }
    net.step();
    // anchors share their view with each other (their subgraph is complete)
    std::vector<std::pair<double, double>> best_at_anchor(
        g.node_count(), {std::numeric_limits<double>::infinity(), -1.0});
    for (int a = g.tag_count; a < g.node_count(); ++a) {
        for (const auto& msg : net.inbox(a))
            if (msg.kind == kLambdaUp)
                best_at_anchor[a] =
                    std::min(best_at_anchor[a], {msg.payload(0), msg.payload(1)});
        Eigen::VectorXd m(2);
        m(0) = best_at_anchor[a].first;
        m(1) = best_at_anchor[a].second;
        for (int j : g.neighborhoods[a])
            if (g.is_anchor(j)) net.send(a, j, kLambdaUp, m);
    }
    net.step();
    for (int a = g.tag_count; a < g.node_count(); ++a) {
        for (const auto& msg : net.inbox(a))
            if (msg.kind == kLambdaUp)
                best_at_anchor[a] =
                    std::min(best_at_anchor[a], {msg.payload(0), msg.payload(1)});
        Eigen::VectorXd m(2);
        m(0) = best_at_anchor[a].first;
        m(1) = best_at_anchor[a].second;
        for (int j : g.neighborhoods[a])
            if (g.is_tag(j)) net.send(a, j, kLambdaMin, m);
    }
    net.step();
    // tags flood the minimum within their component so that tags without an
    // anchor neighbor also learn the winner
    std::vector<std::pair<double, double>> best_at_tag(
        u, {std::numeric_limits<double>::infinity(), -1.0});
    for (int t = 0; t < u; ++t)
        for (const auto& msg : net.inbox(t))
            if (msg.kind == kLambdaMin)
                best_at_tag[t] = std::min(best_at_tag[t], {msg.payload(0), msg.payload(1)});
    for (int r = 0; r < u; ++r) {
        for (int t = 0; t < u; ++t) {
            Eigen::VectorXd m(2);
            m(0) = best_at_tag[t].first;
            m(1) = best_at_tag[t].second;
            for (int j : g.neighborhoods[t])
                if (g.is_tag(j)) net.send(t, j, kLambdaMin, m);
        }
        net.step();
        for (int t = 0; t < u; ++t)
            for (const auto& msg : net.inbox(t))
                if (msg.kind == kLambdaMin)
                    best_at_tag[t] =
                        std::min(best_at_tag[t], {msg.payload(0), msg.payload(1)});
    }

    const std::pair<double, double> winner =
        *std::min_element(best_at_tag.begin(), best_at_tag.end());
    const int win_comp = static_cast<int>(winner.second);
    out.lambda = winner.first;
    const double norm = std::sqrt(std::max(comp_norm2[win_comp], 1e-300));
    for (int t = 0; t < u; ++t)
        v[t] = comp_of[t] == win_comp ? Eigen::VectorXd(v[t] / norm)
                                      : Eigen::VectorXd(Eigen::VectorXd::Zero(d));
    out.v = v;
    return out;
}

GradientField distributed_eopt_gradient(RoundNetwork& net, const Configuration& config,
                                        const NoiseModel& noise, const EigEstimate& eig,
                                        const std::vector<int>& mobile_nodes) {
    const auto& g = net.graph();
    const int d = g.dim;
    if (static_cast<int>(eig.v.size()) != g.tag_count)
        throw std::invalid_argument("eigenvector estimate does not match tag count");

    // each tag shares its component with every neighbor (tags and anchors)
    for (int t = 0; t < g.tag_count; ++t) net.broadcast(t, kVHat, eig.v[t]);
    net.step();

    GradientField out;
    out.value = potential_value(PotentialKind::EOpt, fim(g, config, noise).tag_block());
    for (int node : mobile_nodes) {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
        std::map<int, Eigen::VectorXd> recv;
        for (const auto& msg : net.inbox(node))
            if (msg.kind == kVHat) recv[msg.from] = msg.payload;
        for (int c = 0; c < d; ++c) {
            double acc = 0.0;
            if (g.is_tag(node)) {
                const Eigen::VectorXd& vi = eig.v[node];
                for (int j : g.neighborhoods[node]) {
                    const Eigen::MatrixXd dij = fim_block_derivative(
                        config.positions.col(node), config.positions.col(j), c, noise);
                    if (g.is_tag(j)) {
                        const Eigen::VectorXd diff = vi - recv.at(j);
                        acc += diff.dot(dij * diff);
                    } else {
                        acc += vi.dot(dij * vi);
                    }
                }
            } else {
                for (int j : g.neighborhoods[node]) {
                    if (!g.is_tag(j)) continue;
                    const Eigen::MatrixXd dij = fim_block_derivative(
                        config.positions.col(node), config.positions.col(j), c, noise);
                    const Eigen::VectorXd& vj = recv.at(j);
                    acc += vj.dot(dij * vj);
                }
            }
            grad(c) = acc;
        }
        out.grad[node] = grad;
    }
    return out;
}

}  // namespace locnet
