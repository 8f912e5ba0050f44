#ifndef SEMSLAM_ASSOCIATION_HPP
#define SEMSLAM_ASSOCIATION_HPP

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "semslam/embedding.hpp"
#include "semslam/geometry.hpp"
#include "semslam/graph.hpp"

namespace semslam {

/// One detector output for a frame.
struct Detection {
    std::string label;
    double confidence = 0.0;              // [0, 1]
    PixelBox pixel_box;
    Eigen::Vector3d point_cam = Eigen::Vector3d::Zero(); // sensor frame, z > 0
    std::optional<Eigen::Vector3d> extent;               // meters
};

struct AssociationConfig {
    int d = 3;                        // residual dimension
    double alpha = 0.95;              // chi-square confidence level
    double semantic_threshold = 0.6;  // cosine similarity cutoff
};

enum class RejectReason { GeomFail, SemFail };

struct AssociationResult {
    struct Assignment {
        std::size_t detection = 0;
        VariableKey landmark;
        double d2 = 0.0;
        double similarity = 0.0;
    };
    struct Rejection {
        std::size_t detection = 0;
        RejectReason reason = RejectReason::GeomFail;
    };

    std::vector<Assignment> assignments;
    std::vector<std::size_t> new_landmarks; // no landmark passed the geometric gate
    std::vector<Rejection> rejected;        // gated out; still spawn new landmarks
};

/// Landmark view handed to the associator: key, current position estimate,
/// and the accumulated label set.
struct LandmarkCandidate {
    VariableKey key;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    std::vector<std::string> labels;
};

/// Noiseless measurement prediction: the landmark in the sensor frame.
Eigen::Vector3d predict_measurement(const Pose& pose, const Eigen::Vector3d& landmark_pos);

/// Jacobian of the prediction w.r.t. (pose tangent, landmark position).
Eigen::Matrix<double, 3, 9> measurement_jacobian(const Pose& pose,
                                                 const Eigen::Vector3d& landmark_pos);

/// H * Sigma * H^T + Gamma; symmetric positive-definite.
Eigen::Matrix3d innovation_covariance(const Eigen::Matrix<double, 3, 9>& h,
                                      const JointMarginal& sigma, const NoiseModel& gamma);

/// r^T C^{-1} r. Throws SingularCovariance when C has no Cholesky factor.
double mahalanobis_distance(const Eigen::Vector3d& residual, const Eigen::Matrix3d& c);

/// Inverse chi-square CDF with d degrees of freedom at level alpha.
double chi2_quantile(int d, double alpha);

/// Gaussian density of the residual under covariance C.
double association_likelihood(const Eigen::Vector3d& residual, const Eigen::Matrix3d& c);

/// Chi-square gate then cosine-similarity gate, then greedy one-to-one
/// assignment by ascending Mahalanobis distance. Detections land in exactly
/// one of the three result lists:
///   - assignments: matched to a landmark;
///   - new_landmarks: no landmark passed the geometric gate (including an
///     empty map);
///   - rejected: SemFail when a geometrically compatible landmark failed the
///     similarity gate, GeomFail when every compatible landmark was claimed
///     by a closer detection.
/// Callers spawn landmarks for new_landmarks and rejected alike.
AssociationResult associate_frame(const std::vector<Detection>& detections,
                                  const std::vector<LandmarkCandidate>& landmarks,
                                  const FactorGraph& graph, VariableKey pose,
                                  const NoiseModel& measurement_noise,
                                  const AssociationConfig& cfg,
                                  EmbeddingProvider& embeddings);

} // namespace semslam

#endif
