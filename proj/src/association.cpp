#include "semslam/association.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "semslam/errors.hpp"

namespace semslam {

Eigen::Vector3d predict_measurement(const Pose& pose, const Eigen::Vector3d& landmark_pos) {
    return transform_to_frame(pose, landmark_pos);
}

Eigen::Matrix<double, 3, 9> measurement_jacobian(const Pose& pose,
                                                 const Eigen::Vector3d& landmark_pos) {
    const Eigen::Vector3d y = transform_to_frame(pose, landmark_pos);
    Eigen::Matrix<double, 3, 9> h;
    h.block<3, 3>(0, 0) = skew(y);
    h.block<3, 3>(0, 3) = -Eigen::Matrix3d::Identity();
    h.block<3, 3>(0, 6) = pose.rotation.transpose();
    return h;
}

Eigen::Matrix3d innovation_covariance(const Eigen::Matrix<double, 3, 9>& h,
                                      const JointMarginal& sigma, const NoiseModel& gamma) {
    if (gamma.dim() != 3) throw Error("innovation_covariance: gamma must be 3x3");
    const Eigen::Matrix3d c = h * sigma.matrix * h.transpose() + gamma.covariance();
    return 0.5 * (c + c.transpose());
}

double mahalanobis_distance(const Eigen::Vector3d& residual, const Eigen::Matrix3d& c) {
    Eigen::LLT<Eigen::Matrix3d> llt(c);
    if (llt.info() != Eigen::Success) {
        throw SingularCovariance("mahalanobis_distance: covariance not positive-definite");
    }
    const Eigen::Vector3d w = llt.matrixL().solve(residual);
    return w.squaredNorm();
}

double chi2_quantile(int d, double alpha) {
    if (d < 1 || alpha <= 0.0 || alpha >= 1.0) {
        throw Error("chi2_quantile: require d >= 1 and 0 < alpha < 1");
    }
    return boost::math::quantile(boost::math::chi_squared_distribution<double>(d), alpha);
}

double association_likelihood(const Eigen::Vector3d& residual, const Eigen::Matrix3d& c) {
    Eigen::LLT<Eigen::Matrix3d> llt(c);
    if (llt.info() != Eigen::Success) {
        throw SingularCovariance("association_likelihood: covariance not positive-definite");
    }
    const Eigen::Vector3d w = llt.matrixL().solve(residual);
    double log_det = 0.0;
    const Eigen::Matrix3d l = llt.matrixL();
    for (int i = 0; i < 3; ++i) log_det += 2.0 * std::log(l(i, i));
    const double d = static_cast<double>(residual.size());
    return std::exp(-0.5 * w.squaredNorm() - 0.5 * log_det - 0.5 * d * std::log(2.0 * M_PI));
}

AssociationResult associate_frame(const std::vector<Detection>& detections,
                                  const std::vector<LandmarkCandidate>& landmarks,
                                  const FactorGraph& graph, VariableKey pose_k,
                                  const NoiseModel& measurement_noise,
                                  const AssociationConfig& cfg,
                                  EmbeddingProvider& embeddings) {
    AssociationResult result;
    if (detections.empty()) return result;
    if (landmarks.empty()) {
        for (std::size_t i = 0; i < detections.size(); ++i) result.new_landmarks.push_back(i);
        return result;
    }

    const Pose& pose = graph.estimate().poses.at(pose_k);
    const double gate = chi2_quantile(cfg.d, cfg.alpha);

    struct Pair {
        std::size_t det;
        std::size_t lm;
        double d2;
        double sim;
    };

    // one innovation covariance per landmark; shared across detections
    std::vector<Eigen::Matrix3d> innovations;
    std::vector<Eigen::Vector3d> predictions;
    innovations.reserve(landmarks.size());
    for (const auto& lm : landmarks) {
        const JointMarginal sigma = graph.joint_marginal_covariance(pose_k, lm.key);
        const Eigen::Matrix<double, 3, 9> h = measurement_jacobian(pose, lm.position);
        innovations.push_back(innovation_covariance(h, sigma, measurement_noise));
        predictions.push_back(predict_measurement(pose, lm.position));
    }

    std::vector<Pair> candidates;
    // per detection: did any landmark pass the geometric gate / both gates
    std::vector<bool> geom_pass(detections.size(), false);
    std::vector<bool> full_pass(detections.size(), false);
    for (std::size_t di = 0; di < detections.size(); ++di) {
        for (std::size_t li = 0; li < landmarks.size(); ++li) {
            const Eigen::Vector3d r = detections[di].point_cam - predictions[li];
            const double d2 = mahalanobis_distance(r, innovations[li]);
            if (d2 >= gate) continue;
            geom_pass[di] = true;
            double sim = -1.0;
            for (const auto& label : landmarks[li].labels) {
                sim = std::max(sim, semantic_similarity(detections[di].label, label, embeddings));
            }
            if (sim < cfg.semantic_threshold) continue;
            full_pass[di] = true;
            candidates.push_back({di, li, d2, sim});
        }
    }

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Pair& a, const Pair& b) { return a.d2 < b.d2; });

    std::vector<bool> det_used(detections.size(), false);
    std::vector<bool> lm_used(landmarks.size(), false);
    for (const Pair& p : candidates) {
        if (det_used[p.det] || lm_used[p.lm]) continue;
        det_used[p.det] = true;
        lm_used[p.lm] = true;
        result.assignments.push_back({p.det, landmarks[p.lm].key, p.d2, p.sim});
    }

    for (std::size_t di = 0; di < detections.size(); ++di) {
        if (det_used[di]) continue;
        if (!geom_pass[di]) {
            result.new_landmarks.push_back(di);
        } else if (!full_pass[di]) {
            result.rejected.push_back({di, RejectReason::SemFail});
        } else {
            result.rejected.push_back({di, RejectReason::GeomFail});
        }
    }
    return result;
}

} // namespace semslam
