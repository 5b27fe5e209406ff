#include "locnet/constrained.hpp"

#include <set>

namespace locnet {

namespace {

void check_groups(const RigidGroups& groups, int tag_count, int dim) {
    std::set<int> seen;
    for (const auto& g : groups) {
        if (g.tags.size() != g.body_offsets.size())
            throw std::invalid_argument("group needs one body offset per tag");
        if (g.size() < 2) throw std::invalid_argument("rigid group needs >= 2 tags");
        for (int t : g.tags) {
            if (t < 0 || t >= tag_count)
                throw std::invalid_argument("group tag index out of range");
            if (!seen.insert(t).second)
                throw std::invalid_argument("tag appears in more than one group");
        }
        for (const auto& b : g.body_offsets)
            if (b.size() != dim) throw std::invalid_argument("body offset dimension mismatch");
    }
}

Eigen::MatrixXd skew(const Eigen::Vector3d& w) {
    Eigen::Matrix3d s;
    s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return s;
}

std::vector<int> ungrouped_tags(const RigidGroups& groups, int tag_count) {
    std::vector<bool> in_group(tag_count, false);
    for (const auto& g : groups)
        for (int t : g.tags) in_group[t] = true;
    std::vector<int> out;
    for (int t = 0; t < tag_count; ++t)
        if (!in_group[t]) out.push_back(t);
    return out;
}

}  // namespace

ConstraintEval distance_constraints(const RigidGroups& groups, const Configuration& config,
                                    int tag_count) {
    const int d = config.dim;
    check_groups(groups, tag_count, d);
    int c = 0;
    for (const auto& g : groups) c += g.size() * (g.size() - 1) / 2;

    ConstraintEval out;
    out.residual.resize(c);
    out.jacobian = Eigen::MatrixXd::Zero(c, d * tag_count);
    int row = 0;
    for (const auto& g : groups) {
        for (int a = 0; a < g.size(); ++a) {
            for (int b = a + 1; b < g.size(); ++b) {
                const int i = g.tags[a];
                const int j = g.tags[b];
                const Eigen::VectorXd pij =
                    config.positions.col(i) - config.positions.col(j);
                const double known = (g.body_offsets[a] - g.body_offsets[b]).squaredNorm();
                out.residual(row) = pij.squaredNorm() - known;
                out.jacobian.block(row, d * i, 1, d) = 2.0 * pij.transpose();
                out.jacobian.block(row, d * j, 1, d) = -2.0 * pij.transpose();
                ++row;
            }
        }
    }
    return out;
}

Eigen::MatrixXd distance_nullspace(const RigidGroups& groups, const Configuration& config,
                                   int tag_count) {
    const int d = config.dim;
    check_groups(groups, tag_count, d);
    const int m = d == 2 ? 3 : 6;
    const auto singles = ungrouped_tags(groups, tag_count);
    const int cols = m * static_cast<int>(groups.size()) + d * static_cast<int>(singles.size());

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d * tag_count, cols);
    int col = 0;
    for (const auto& g : groups) {
        // per-group degeneracy: same preconditions as the Euclidean basis
        Configuration sub(d, g.size());
        for (int t = 0; t < g.size(); ++t)
            sub.positions.col(t) = config.positions.col(g.tags[t]);
        const Eigen::MatrixXd basis = euclidean_motion_basis(sub);
        for (int t = 0; t < g.size(); ++t)
            a.block(d * g.tags[t], col, d, m) = basis.block(d * t, 0, d, m);
        col += m;
    }
    for (int t : singles) {
        a.block(d * t, col, d, d).setIdentity();
        col += d;
    }
    return a;
}

ConstrainedCrlb constrained_crlb(const Eigen::MatrixXd& tag_fim, const Eigen::MatrixXd& a,
                                 double tol) {
    const Eigen::MatrixXd fc = a.transpose() * tag_fim * a;
    const CrlbResult inv = crlb_unconstrained(fc, tol);
    ConstrainedCrlb out;
    out.pseudo_inverse = inv.pseudo_inverse;
    out.matrix = a * inv.matrix * a.transpose();
    return out;
}

GradientField constrained_potential_gradient(const RigidGroups& groups,
                                             const RangingGraph& graph,
                                             const Configuration& config,
                                             const NoiseModel& noise,
                                             const std::vector<int>& mobile_nodes) {
    const int d = graph.dim;
    const int u = graph.tag_count;
    const Eigen::MatrixXd fu = fim(graph, config, noise).tag_block();
    const Eigen::MatrixXd a = distance_nullspace(groups, config, u);
    const Eigen::MatrixXd fc = a.transpose() * fu * a;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fc);
    if (es.eigenvalues()(0) <= 1e-10 * std::abs(es.eigenvalues()(fc.rows() - 1)))
        throw SingularMatrixError("constrained FIM A^T F_U A is singular",
                                  es.eigenvalues()(0));
    const Eigen::MatrixXd fc_inv = es.eigenvectors() *
                                   es.eigenvalues().cwiseInverse().asDiagonal() *
                                   es.eigenvectors().transpose();
    const Eigen::MatrixXd b = a * fc_inv * a.transpose();
    const Eigen::MatrixXd b2 = b * b;
    const Eigen::MatrixXd lhs = fc_inv * a.transpose() *
                                (Eigen::MatrixXd::Identity(d * u, d * u) - b * fu);

    // map a tag to (its group, slot) for the dA columns
    std::vector<int> group_of(u, -1), slot_of(u, -1);
    for (size_t gi = 0; gi < groups.size(); ++gi)
        for (int s = 0; s < groups[gi].size(); ++s) {
            group_of[groups[gi].tags[s]] = static_cast<int>(gi);
            slot_of[groups[gi].tags[s]] = s;
        }
    const int m = d == 2 ? 3 : 6;

    GradientField out;
    out.value = b.trace();
    for (int node : mobile_nodes) {
        Eigen::VectorXd grad(d);
        for (int c = 0; c < d; ++c) {
            const Eigen::MatrixXd dfu = fim_partial(graph, config, noise, node, c);
            double val = -(b2 * dfu).trace();
            if (graph.is_tag(node) && group_of[node] >= 0) {
                // dA/dxi: only the rotation columns of the node's group move
                Eigen::MatrixXd da = Eigen::MatrixXd::Zero(d * u, a.cols());
                const int col0 = group_of[node] * m;
                if (d == 2) {
                    // v_Rz entries (-y_i, x_i): x-derivative hits the y row, y
                    // derivative the x row
                    if (c == 0)
                        da(d * node + 1, col0 + 2) = 1.0;
                    else
                        da(d * node, col0 + 2) = -1.0;
                } else {
                    for (int ax = 0; ax < 3; ++ax) {
                        Eigen::Vector3d e_ax = Eigen::Vector3d::Zero();
                        Eigen::Vector3d e_c = Eigen::Vector3d::Zero();
                        e_ax(ax) = 1.0;
                        e_c(c) = 1.0;
                        da.block<3, 1>(d * node, col0 + 3 + ax) = e_ax.cross(e_c);
                    }
                }
                val += 2.0 * (lhs * da).trace();
            }
            grad(c) = val;
        }
        out.grad[node] = grad;
    }
    return out;
}

Eigen::MatrixXd rotation_exp(const Eigen::VectorXd& theta, int dim) {
    if (dim == 2) {
        if (theta.size() != 1) throw std::invalid_argument("2D theta is a scalar");
        const double c = std::cos(theta(0));
        const double s = std::sin(theta(0));
        Eigen::Matrix2d r;
        r << c, -s, s, c;
        return r;
    }
    if (theta.size() != 3) throw std::invalid_argument("3D theta has 3 components");
    const double angle = theta.norm();
    if (angle < 1e-12) return Eigen::Matrix3d::Identity();
    const Eigen::Vector3d axis = theta / angle;
    const Eigen::Matrix3d k = skew(axis);
    return Eigen::Matrix3d::Identity() + std::sin(angle) * k +
           (1.0 - std::cos(angle)) * k * k;
}

Eigen::VectorXd rotation_log(const Eigen::MatrixXd& rot) {
    if (rot.rows() == 2) {
        Eigen::VectorXd theta(1);
        theta(0) = std::atan2(rot(1, 0), rot(0, 0));
        return theta;
    }
    const double c = std::min(1.0, std::max(-1.0, (rot.trace() - 1.0) / 2.0));
    const double angle = std::acos(c);
    Eigen::Vector3d w;
    if (angle < 1e-8) {
        w << rot(2, 1) - rot(1, 2), rot(0, 2) - rot(2, 0), rot(1, 0) - rot(0, 1);
        return 0.5 * w;
    }
    if (angle > M_PI - 1e-6) {
        // axis from the symmetric part R + I
        const Eigen::Matrix3d b = 0.5 * (rot + Eigen::Matrix3d::Identity());
        Eigen::Vector3d axis;
        int imax;
        b.diagonal().maxCoeff(&imax);
        axis = b.col(imax) / std::sqrt(b(imax, imax));
        return angle * axis.normalized();
    }
    w << rot(2, 1) - rot(1, 2), rot(0, 2) - rot(2, 0), rot(1, 0) - rot(0, 1);
    return (angle / (2.0 * std::sin(angle))) * w;
}

RpConstraintSystem rp_constraints(const RigidGroups& groups, const Configuration& config,
                                  const Thetas& thetas, int tag_count) {
    const int d = config.dim;
    check_groups(groups, tag_count, d);
    if (thetas.size() != groups.size())
        throw std::invalid_argument("one theta per group expected");
    const int q = d == 2 ? 1 : 3;
    const int r_count = static_cast<int>(groups.size());
    const auto singles = ungrouped_tags(groups, tag_count);
    if (!singles.empty())
        throw std::invalid_argument("relative-position constraints need every tag grouped");

    int others = 0;
    for (const auto& g : groups) others += g.size() - 1;

    RpConstraintSystem out;
    out.residual.resize(d * others);
    out.n_matrix = Eigen::MatrixXd::Zero(d * others, (d + q) * r_count);

    // permuted tag order: non-reference tags grouped by robot, then references
    out.tag_order.clear();
    for (const auto& g : groups)
        for (int s = 1; s < g.size(); ++s) out.tag_order.push_back(g.tags[s]);
    for (const auto& g : groups) out.tag_order.push_back(g.tags[0]);

    int row = 0;
    for (int r = 0; r < r_count; ++r) {
        const auto& g = groups[r];
        const Eigen::MatrixXd rot = rotation_exp(thetas[r], d);
        const int ref = g.tags[0];
        for (int s = 1; s < g.size(); ++s) {
            const int j = g.tags[s];
            const Eigen::VectorXd body = g.body_offsets[s] - g.body_offsets[0];
            const Eigen::VectorXd phi = rot * body;
            out.residual.segment(row, d) = config.positions.col(j) -
                                           config.positions.col(ref) - phi;
            out.n_matrix.block(row, d * r, d, d) = -Eigen::MatrixXd::Identity(d, d);
            if (d == 2) {
                Eigen::Matrix2d w;
                w << 0, -1, 1, 0;
                out.n_matrix.block(row, d * r_count + r, d, 1) = -(w * phi);
            } else {
                for (int ax = 0; ax < 3; ++ax) {
                    Eigen::Vector3d e = Eigen::Vector3d::Zero();
                    e(ax) = 1.0;
                    out.n_matrix.block(row, d * r_count + 3 * r + ax, d, 1) =
                        -(skew(e) * phi.head<3>());
                }
            }
            row += d;
        }
    }

    const int total = d * tag_count + q * r_count;
    out.a_rp = Eigen::MatrixXd::Zero(total, (d + q) * r_count);
    out.a_rp.topRows(d * others) = -out.n_matrix;
    out.a_rp.bottomRows((d + q) * r_count).setIdentity();
    return out;
}

namespace {

// permutation matrix P with (P x)_new = x_old(tag_order), acting on stacked
// tag coordinates
Eigen::MatrixXd tag_permutation(const std::vector<int>& tag_order, int dim) {
    const int u = static_cast<int>(tag_order.size());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(dim * u, dim * u);
    for (int k = 0; k < u; ++k)
        for (int c = 0; c < dim; ++c) p(dim * k + c, dim * tag_order[k] + c) = 1.0;
    return p;
}

}  // namespace

RpCrlb rp_constrained_crlb(const RangingGraph& graph, const Configuration& config,
                           const NoiseModel& noise, const RigidGroups& groups,
                           const Thetas& thetas) {
    const int d = graph.dim;
    const int u = graph.tag_count;
    const int q = d == 2 ? 1 : 3;
    const int r_count = static_cast<int>(groups.size());

    const auto sys = rp_constraints(groups, config, thetas, u);
    const Eigen::MatrixXd perm = tag_permutation(sys.tag_order, d);
    const Eigen::MatrixXd fu = fim(graph, config, noise).tag_block();

    const int total = d * u + q * r_count;
    Eigen::MatrixXd f_ext = Eigen::MatrixXd::Zero(total, total);
    f_ext.topLeftCorner(d * u, d * u) = perm * fu * perm.transpose();

    const Eigen::MatrixXd fc = sys.a_rp.transpose() * f_ext * sys.a_rp;
    const CrlbResult inv = crlb_unconstrained(fc, 1e-10);

    RpCrlb out;
    out.pseudo_inverse = inv.pseudo_inverse;
    out.b_rp = sys.a_rp * inv.matrix * sys.a_rp.transpose();
    out.potential = out.b_rp.topLeftCorner(d * u, d * u).trace();
    return out;
}

GradientField rp_potential_gradient(const RangingGraph& graph, const Configuration& config,
                                    const NoiseModel& noise, const RigidGroups& groups,
                                    const Thetas& thetas,
                                    const std::vector<int>& mobile_nodes) {
    const int d = graph.dim;
    const int u = graph.tag_count;
    const int q = d == 2 ? 1 : 3;
    const int r_count = static_cast<int>(groups.size());

    const auto sys = rp_constraints(groups, config, thetas, u);
    const Eigen::MatrixXd perm = tag_permutation(sys.tag_order, d);
    const Eigen::MatrixXd fu = fim(graph, config, noise).tag_block();

    const int total = d * u + q * r_count;
    Eigen::MatrixXd f_ext = Eigen::MatrixXd::Zero(total, total);
    f_ext.topLeftCorner(d * u, d * u) = perm * fu * perm.transpose();

    const Eigen::MatrixXd fc = sys.a_rp.transpose() * f_ext * sys.a_rp;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fc);
    if (es.eigenvalues()(0) <= 1e-10 * std::abs(es.eigenvalues()(fc.rows() - 1)))
        throw SingularMatrixError("RP constrained FIM is singular", es.eigenvalues()(0));
    const Eigen::MatrixXd fc_inv = es.eigenvectors() *
                                   es.eigenvalues().cwiseInverse().asDiagonal() *
                                   es.eigenvectors().transpose();

    // C selects the position block in the permuted ordering
    Eigen::MatrixXd c_sel = Eigen::MatrixXd::Zero(d * u, total);
    c_sel.leftCols(d * u).setIdentity();
    const Eigen::MatrixXd d_mat = c_sel * sys.a_rp * fc_inv;  // (dU) x (d+q)R

    // position of each tag in the permuted "others" block, for dN placement
    std::vector<int> row_of_other(u, -1);
    {
        int row = 0;
        for (const auto& g : groups)
            for (int s = 1; s < g.size(); ++s) {
                row_of_other[g.tags[s]] = row;
                row += d;
            }
    }
    std::vector<int> group_of(u, -1);
    std::vector<bool> is_ref(u, false);
    for (int r = 0; r < r_count; ++r) {
        for (int s = 0; s < groups[r].size(); ++s) group_of[groups[r].tags[s]] = r;
        is_ref[groups[r].tags[0]] = true;
    }

    GradientField out;
    out.value = (sys.a_rp * fc_inv * sys.a_rp.transpose()).topLeftCorner(d * u, d * u).trace();

    for (int node : mobile_nodes) {
        Eigen::VectorXd grad(d);
        for (int c = 0; c < d; ++c) {
            // dF_ext: permuted dF_U block
            const Eigen::MatrixXd dfu = fim_partial(graph, config, noise, node, c);
            Eigen::MatrixXd df_ext = Eigen::MatrixXd::Zero(total, total);
            df_ext.topLeftCorner(d * u, d * u) = perm * dfu * perm.transpose();

            // dA_RP via the on-manifold substitution Phi = p_j - p_ref
            Eigen::MatrixXd da = Eigen::MatrixXd::Zero(total, (d + q) * r_count);
            if (graph.is_tag(node) && group_of[node] >= 0) {
                const int r = group_of[node];
                const auto& g = groups[r];
                const double sign_self = is_ref[node] ? -1.0 : 1.0;
                auto fill = [&](int tag, double sign) {
                    const int row = row_of_other[tag];
                    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
                    e(c) = sign;
                    if (d == 2) {
                        Eigen::Matrix2d w;
                        w << 0, -1, 1, 0;
                        // dA top block is -dN = +d(N_theta embedding)
                        da.block(row, d * r_count + r, d, 1) = w * e;
                    } else {
                        for (int ax = 0; ax < 3; ++ax) {
                            Eigen::Vector3d unit = Eigen::Vector3d::Zero();
                            unit(ax) = 1.0;
                            da.block(row, d * r_count + 3 * r + ax, d, 1) =
                                skew(unit) * e.head<3>();
                        }
                    }
                };
                if (is_ref[node]) {
                    for (int s = 1; s < g.size(); ++s) fill(g.tags[s], sign_self);
                } else {
                    fill(node, sign_self);
                }
            }

            const Eigen::MatrixXd dfc = da.transpose() * f_ext * sys.a_rp +
                                        sys.a_rp.transpose() * df_ext * sys.a_rp +
                                        sys.a_rp.transpose() * f_ext * da;
            grad(c) = 2.0 * (c_sel * da * d_mat.transpose()).trace() -
                      (d_mat * dfc * d_mat.transpose()).trace();
        }
        out.grad[node] = grad;
    }
    return out;
}

PrimalDualStepInfo primal_dual_step(PrimalDualState& state, const ObjectiveFn& objective,
                                    const ConstraintFn& constraints,
                                    const std::vector<int>& mobile_nodes) {
    const int d = state.config.dim;
    const GradientField field = objective(state.config);
    const ConstraintEval cons = constraints(state.config);
    if (state.lambda.size() != cons.residual.size())
        throw std::invalid_argument("dual variable size does not match constraints");

    // Lagrangian gradient over the mobile coordinates
    const Eigen::VectorXd lam_jac = cons.jacobian.transpose() * state.lambda;  // dU
    std::map<int, Eigen::VectorXd> dir;
    double dir_norm2 = 0.0;
    for (int node : mobile_nodes) {
        Eigen::VectorXd g = field.at(node);
        if (d * node < lam_jac.size()) g += lam_jac.segment(d * node, d);
        if (state.step_cap > 0.0 && g.norm() > state.step_cap)
            g *= state.step_cap / g.norm();
        dir[node] = g;
        dir_norm2 += g.squaredNorm();
    }

    auto lagrangian = [&](const Configuration& c) {
        return objective(c).value + state.lambda.dot(constraints(c).residual);
    };
    const double l0 = field.value + state.lambda.dot(cons.residual);

    PrimalDualStepInfo info;
    double eta = state.armijo.initial_step;
    for (int bt = 0; bt <= state.armijo.max_backtracks; ++bt) {
        Configuration trial = state.config;
        for (const auto& [node, g] : dir) trial.positions.col(node) -= eta * g;
        double lt;
        try {
            lt = lagrangian(trial);
        } catch (const SingularMatrixError&) {
            lt = std::numeric_limits<double>::infinity();
        }
        if (lt <= l0 - state.armijo.sufficient_decrease * eta * dir_norm2) {
            state.config = trial;
            info.accepted = true;
            info.eta = eta;
            info.backtracks = bt;
            break;
        }
        eta *= state.armijo.contraction;
    }
    // dual ascent uses the pre-step residuals, per the primal-dual scheme
    state.lambda += state.delta * cons.residual;
    return info;
}

ObjectiveFn augment_objective(ObjectiveFn objective, ConstraintFn constraints, double rho,
                              std::vector<int> mobile_nodes) {
    return [objective = std::move(objective), constraints = std::move(constraints), rho,
            mobile = std::move(mobile_nodes)](const Configuration& c) {
        GradientField f = objective(c);
        const ConstraintEval cons = constraints(c);
        f.value += 0.5 * rho * cons.residual.squaredNorm();
        const Eigen::VectorXd force = cons.jacobian.transpose() * cons.residual;
        const int d = c.dim;
        for (int node : mobile) {
            if (d * node < force.size()) f.grad[node] += rho * force.segment(d * node, d);
        }
        return f;
    };
}

PoseFit project_to_rigid_pose(const RigidGroup& group,
                              const Eigen::MatrixXd& desired_positions) {
    const int d = static_cast<int>(desired_positions.rows());
    const int m = group.size();
    if (static_cast<int>(desired_positions.cols()) != m)
        throw std::invalid_argument("one desired position per group tag expected");
    if (m < 2) throw std::invalid_argument("pose fit needs >= 2 tags");

    Eigen::MatrixXd body(d, m);
    for (int s = 0; s < m; ++s) body.col(s) = group.body_offsets[s];

    // degeneracy: offsets must span d-1 dimensions
    const Eigen::VectorXd bbar = body.rowwise().mean();
    const Eigen::MatrixXd bc = body.colwise() - bbar;
    if (d == 3) {
        Eigen::JacobiSVD<Eigen::MatrixXd> chk(bc);
        if (chk.singularValues()(1) < 1e-12)
            throw DegenerateConfigError("3D pose fit needs non-collinear body offsets");
    } else if (bc.colwise().norm().maxCoeff() < 1e-12) {
        throw DegenerateConfigError("pose fit needs distinct body offsets");
    }

    const Eigen::VectorXd qbar = desired_positions.rowwise().mean();
    const Eigen::MatrixXd qc = desired_positions.colwise() - qbar;

    // cross covariance and Kabsch rotation with determinant correction
    const Eigen::MatrixXd s = bc * qc.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::VectorXd corr = Eigen::VectorXd::Ones(d);
    corr(d - 1) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
    const Eigen::MatrixXd rot =
        svd.matrixV() * corr.asDiagonal() * svd.matrixU().transpose();

    PoseFit fit;
    fit.rotation = rot;
    fit.translation = qbar - rot * bbar;
    fit.theta = rotation_log(rot);
    fit.fitted_positions = (rot * body).colwise() + fit.translation;
    fit.residual = (desired_positions - fit.fitted_positions).squaredNorm();
    return fit;
}

}  // namespace locnet
