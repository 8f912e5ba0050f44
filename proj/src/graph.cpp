#include "semslam/graph.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <set>

#include "semslam/errors.hpp"

namespace semslam {

NoiseModel::NoiseModel(const Eigen::MatrixXd& covariance) : covariance_(covariance) {
    if (covariance.rows() != covariance.cols()) {
        throw Error("NoiseModel: covariance must be square");
    }
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw Error("NoiseModel: covariance must be symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success) {
        throw Error("NoiseModel: covariance must be positive-definite");
    }
    const Eigen::MatrixXd l = llt.matrixL();
    sqrt_info_ = l.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(covariance.rows(), covariance.cols()));
}

NoiseModel NoiseModel::isotropic(int dim, double sigma) {
    return NoiseModel(sigma * sigma * Eigen::MatrixXd::Identity(dim, dim));
}

Eigen::VectorXd NoiseModel::whiten(const Eigen::VectorXd& r) const {
    return sqrt_info_ * r;
}

Eigen::MatrixXd NoiseModel::whiten_matrix(const Eigen::MatrixXd& j) const {
    return sqrt_info_ * j;
}

namespace {

int var_dim(VariableKey k) { return k.kind == VarKind::Pose ? 6 : 3; }

const Pose& pose_at(const GraphEstimate& e, VariableKey k) {
    auto it = e.poses.find(k);
    if (it == e.poses.end()) throw UnknownKey("estimate missing pose variable");
    return it->second;
}

const Eigen::Vector3d& landmark_at(const GraphEstimate& e, VariableKey k) {
    auto it = e.landmarks.find(k);
    if (it == e.landmarks.end()) throw UnknownKey("estimate missing landmark variable");
    return it->second;
}

std::vector<VariableKey> factor_keys(const Factor& f) {
    return std::visit(
        [](const auto& ff) -> std::vector<VariableKey> {
            using T = std::decay_t<decltype(ff)>;
            if constexpr (std::is_same_v<T, PriorPoseFactor>) return {ff.key};
            if constexpr (std::is_same_v<T, BetweenFactor>) return {ff.a, ff.b};
            if constexpr (std::is_same_v<T, ObservationFactor>) return {ff.pose, ff.landmark};
        },
        f);
}

const NoiseModel& factor_noise(const Factor& f) {
    return std::visit([](const auto& ff) -> const NoiseModel& { return ff.noise; }, f);
}

GraphEstimate retract(const GraphEstimate& e, const std::map<VariableKey, int>& offset,
                      const Eigen::VectorXd& delta) {
    GraphEstimate out = e;
    for (auto& [k, p] : out.poses) {
        p = se3_compose(p, se3_exp(delta.segment<6>(offset.at(k))));
    }
    for (auto& [k, l] : out.landmarks) {
        l += delta.segment<3>(offset.at(k));
    }
    return out;
}

} // namespace

Eigen::VectorXd FactorGraph::residual(const Factor& f, const GraphEstimate& e) {
    if (const auto* prior = std::get_if<PriorPoseFactor>(&f)) {
        return se3_log(se3_compose(prior->mean.inverse(), pose_at(e, prior->key)));
    }
    if (const auto* between = std::get_if<BetweenFactor>(&f)) {
        const Pose rel = se3_compose(pose_at(e, between->a).inverse(), pose_at(e, between->b));
        return se3_log(se3_compose(between->relative.inverse(), rel));
    }
    const auto& obs = std::get<ObservationFactor>(f);
    return obs.measured - transform_to_frame(pose_at(e, obs.pose), landmark_at(e, obs.landmark));
}

std::vector<std::pair<VariableKey, Eigen::MatrixXd>> FactorGraph::jacobians(
    const Factor& f, const GraphEstimate& e) {
    if (const auto* prior = std::get_if<PriorPoseFactor>(&f)) {
        const Twist r = se3_log(se3_compose(prior->mean.inverse(), pose_at(e, prior->key)));
        return {{prior->key, se3_inverse_right_jacobian(r)}};
    }
    if (const auto* between = std::get_if<BetweenFactor>(&f)) {
        const Pose& pa = pose_at(e, between->a);
        const Pose& pb = pose_at(e, between->b);
        const Pose rel = se3_compose(pa.inverse(), pb);
        const Twist r = se3_log(se3_compose(between->relative.inverse(), rel));
        const Eigen::Matrix<double, 6, 6> jr_inv = se3_inverse_right_jacobian(r);
        return {{between->a, -jr_inv * se3_adjoint(rel.inverse())}, {between->b, jr_inv}};
    }
    const auto& obs = std::get<ObservationFactor>(f);
    const Pose& p = pose_at(e, obs.pose);
    const Eigen::Vector3d y = transform_to_frame(p, landmark_at(e, obs.landmark));
    Eigen::Matrix<double, 3, 6> jpose;
    jpose.leftCols<3>() = -skew(y);
    jpose.rightCols<3>() = Eigen::Matrix3d::Identity();
    return {{obs.pose, jpose}, {obs.landmark, -p.rotation.transpose()}};
}

VariableKey FactorGraph::add_pose(const Pose& initial) {
    if (!initial.translation.allFinite() || !initial.rotation.allFinite()) {
        throw Error("add_pose: initial value must be finite");
    }
    const VariableKey k = pose_key(next_pose_index_++);
    estimate_.poses.emplace(k, initial);
    cache_valid_ = false;
    return k;
}

VariableKey FactorGraph::add_landmark(const Eigen::Vector3d& initial) {
    if (!initial.allFinite()) throw Error("add_landmark: initial value must be finite");
    const VariableKey k = landmark_key(next_landmark_index_++);
    estimate_.landmarks.emplace(k, initial);
    cache_valid_ = false;
    return k;
}

bool FactorGraph::has_variable(VariableKey k) const {
    return k.kind == VarKind::Pose ? estimate_.poses.count(k) > 0
                                   : estimate_.landmarks.count(k) > 0;
}

FactorId FactorGraph::add_factor(Factor f) {
    for (VariableKey k : factor_keys(f)) {
        if (!has_variable(k)) throw UnknownKey("add_factor: factor references unknown variable");
    }
    if (const auto* obs = std::get_if<ObservationFactor>(&f)) {
        if (!obs->measured.allFinite()) throw Error("add_factor: observation must be finite");
        if (obs->pose.kind != VarKind::Pose || obs->landmark.kind != VarKind::Landmark) {
            throw UnknownKey("add_factor: observation keys have wrong kinds");
        }
    }
    const FactorId id = next_factor_id_++;
    factors_.emplace(id, std::move(f));
    cache_valid_ = false;
    return id;
}

std::size_t FactorGraph::remove_landmark_factors(VariableKey landmark) {
    if (landmark.kind != VarKind::Landmark || estimate_.landmarks.count(landmark) == 0) {
        throw UnknownKey("remove_landmark_factors: not a known landmark variable");
    }
    std::size_t removed = 0;
    for (auto it = factors_.begin(); it != factors_.end();) {
        const auto* obs = std::get_if<ObservationFactor>(&it->second);
        if (obs != nullptr && obs->landmark == landmark) {
            it = factors_.erase(it);
            ++removed;
        } else {
            ++it;
        }
    }
    estimate_.landmarks.erase(landmark);
    cache_valid_ = false;
    return removed;
}

double FactorGraph::total_error(const GraphEstimate& e) const {
    double err = 0.0;
    for (const auto& [id, f] : factors_) {
        const Eigen::VectorXd w = factor_noise(f).whiten(residual(f, e));
        err += 0.5 * w.squaredNorm();
    }
    return err;
}

FactorGraph::Ordering FactorGraph::make_ordering() const {
    Ordering ord;
    for (const auto& [k, v] : estimate_.poses) {
        ord.offset[k] = ord.dim;
        ord.dim += 6;
    }
    for (const auto& [k, v] : estimate_.landmarks) {
        ord.offset[k] = ord.dim;
        ord.dim += 3;
    }
    return ord;
}

void FactorGraph::check_well_posed() const {
    bool has_prior = false;
    std::set<VariableKey> touched;
    for (const auto& [id, f] : factors_) {
        if (std::holds_alternative<PriorPoseFactor>(f)) has_prior = true;
        for (VariableKey k : factor_keys(f)) touched.insert(k);
    }
    if (!has_prior) throw Underconstrained("optimize: no prior factor anchors the gauge");
    const std::size_t n_vars = estimate_.poses.size() + estimate_.landmarks.size();
    if (touched.size() != n_vars) {
        throw Underconstrained("optimize: some variables have no factor");
    }
}

void FactorGraph::linearize(const Ordering& ord, Eigen::SparseMatrix<double>& h,
                            Eigen::VectorXd& g) const {
    std::vector<Eigen::Triplet<double>> triplets;
    g = Eigen::VectorXd::Zero(ord.dim);
    for (const auto& [id, f] : factors_) {
        const NoiseModel& noise = factor_noise(f);
        const Eigen::VectorXd r_w = noise.whiten(residual(f, estimate_));
        auto blocks = jacobians(f, estimate_);
        for (auto& [k, j] : blocks) j = noise.whiten_matrix(j);

        for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
            const int oi = ord.offset.at(blocks[bi].first);
            g.segment(oi, blocks[bi].second.cols()) += blocks[bi].second.transpose() * r_w;
            for (std::size_t bj = 0; bj < blocks.size(); ++bj) {
                const int oj = ord.offset.at(blocks[bj].first);
                const Eigen::MatrixXd hij =
                    blocks[bi].second.transpose() * blocks[bj].second;
                for (int r = 0; r < hij.rows(); ++r) {
                    for (int c = 0; c < hij.cols(); ++c) {
                        triplets.emplace_back(oi + r, oj + c, hij(r, c));
                    }
                }
            }
        }
    }
    h.resize(ord.dim, ord.dim);
    h.setFromTriplets(triplets.begin(), triplets.end());
}

OptimizeReport FactorGraph::optimize(const OptimizerConfig& cfg) {
    check_well_posed();

    OptimizeReport report;
    report.initial_error = total_error();
    double error = report.initial_error;
    double lambda = cfg.lambda0;

    const Ordering ord = make_ordering();
    Eigen::SparseMatrix<double> identity(ord.dim, ord.dim);
    identity.setIdentity();

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        Eigen::SparseMatrix<double> h;
        Eigen::VectorXd g;
        linearize(ord, h, g);

        bool accepted = false;
        double new_error = error;
        Eigen::VectorXd delta;
        while (!accepted) {
            Eigen::SparseMatrix<double> damped = h + lambda * identity;
            Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(damped);
            if (llt.info() != Eigen::Success) {
                lambda *= 10.0;
                if (lambda > cfg.lambda_max) {
                    throw SingularSystem(
                        "optimize: normal equations not positive-definite at lambda_max");
                }
                continue;
            }
            delta = llt.solve(-g);
            if (!delta.allFinite()) {
                lambda *= 10.0;
                if (lambda > cfg.lambda_max) {
                    throw SingularSystem("optimize: damped solve produced non-finite update");
                }
                continue;
            }
            GraphEstimate candidate = retract(estimate_, ord.offset, delta);
            new_error = total_error(candidate);
            if (new_error <= error) {
                estimate_ = std::move(candidate);
                cache_valid_ = false;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
            } else {
                lambda *= 10.0;
                if (lambda > cfg.lambda_max) break; // cannot improve further
            }
        }
        report.iterations = iter + 1;
        if (!accepted) {
            report.converged = true;
            break;
        }
        const double decrease = error - new_error;
        error = new_error;
        if (decrease < cfg.relative_error_tol * std::max(error, 1e-12) ||
            delta.norm() < cfg.update_norm_tol) {
            report.converged = true;
            break;
        }
    }
    report.final_error = error;
    return report;
}

void FactorGraph::refresh_marginal_cache() const {
    const Ordering ord = make_ordering();
    Eigen::SparseMatrix<double> h;
    Eigen::VectorXd g;
    linearize(ord, h, g);
    if (!cache_ldlt_) {
        cache_ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    }
    cache_ldlt_->compute(h);
    if (cache_ldlt_->info() != Eigen::Success) {
        throw SingularSystem("joint_marginal_covariance: information matrix factorization failed");
    }
    const Eigen::VectorXd d = cache_ldlt_->vectorD();
    if (d.size() > 0 && (d.minCoeff() <= 0.0 || d.minCoeff() < 1e-12 * d.maxCoeff())) {
        throw SingularSystem("joint_marginal_covariance: information matrix is singular");
    }
    cache_ordering_ = ord;
    cache_valid_ = true;
}

JointMarginal FactorGraph::joint_marginal_covariance(VariableKey pose,
                                                     VariableKey landmark) const {
    if (pose.kind != VarKind::Pose || estimate_.poses.count(pose) == 0) {
        throw UnknownKey("joint_marginal_covariance: unknown pose key");
    }
    if (landmark.kind != VarKind::Landmark || estimate_.landmarks.count(landmark) == 0) {
        throw UnknownKey("joint_marginal_covariance: unknown landmark key");
    }
    if (!cache_valid_) refresh_marginal_cache();

    const int po = cache_ordering_.offset.at(pose);
    const int lo = cache_ordering_.offset.at(landmark);
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(cache_ordering_.dim, 9);
    for (int i = 0; i < 6; ++i) basis(po + i, i) = 1.0;
    for (int i = 0; i < 3; ++i) basis(lo + i, 6 + i) = 1.0;

    const Eigen::MatrixXd cols = cache_ldlt_->solve(basis);
    if (!cols.allFinite()) {
        throw SingularSystem("joint_marginal_covariance: covariance solve diverged");
    }
    Eigen::Matrix<double, 9, 9> block;
    for (int i = 0; i < 6; ++i) block.row(i) = cols.row(po + i);
    for (int i = 0; i < 3; ++i) block.row(6 + i) = cols.row(lo + i);

    JointMarginal out;
    out.matrix = 0.5 * (block + block.transpose());
    return out;
}

} // namespace semslam
