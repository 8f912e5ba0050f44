#ifndef SEMSLAM_EVAL_HPP
#define SEMSLAM_EVAL_HPP

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "semslam/embedding.hpp"
#include "semslam/semantics.hpp"
#include "semslam/simulator.hpp"
#include "semslam/supervision.hpp"

namespace semslam {

/// One trajectory sample; quaternion stored (x, y, z, w), unit norm.
struct TrajectoryRecord {
    double t = 0.0;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    Eigen::Vector4d quaternion = Eigen::Vector4d(0, 0, 0, 1);
};

TrajectoryRecord pose_to_record(double t, const Pose& pose);
Pose record_to_pose(const TrajectoryRecord& rec);

struct MapLandmark {
    std::uint32_t id = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d extent = Eigen::Vector3d::Constant(0.2);
    std::vector<std::string> label_set;
    std::string primary_label;
    LandmarkStatus status = LandmarkStatus::Correct;
    int observation_count = 0;
};

struct ConfusionExport {
    std::vector<std::string> labels;
    std::vector<std::vector<std::int64_t>> counts;
};

/// Persisted form of the estimated map.
struct MapExport {
    std::vector<MapLandmark> landmarks;
    ConfusionExport m_matrix;
    ConfusionExport d_matrix;
    EditLog edit_log;
};

struct ApeStats {
    double rmse = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double max_error = 0.0;
};

/// Translational absolute pose error; both trajectories share the anchored
/// world frame, so no alignment is applied. Throws LengthMismatch on size or
/// timestamp disagreement.
ApeStats ape(const std::vector<TrajectoryRecord>& est,
             const std::vector<TrajectoryRecord>& gt);

struct MatchConfig {
    double distance_threshold = 0.3; // meters
    enum class SemanticRule { ExactCategory, Embedding };
    SemanticRule rule = SemanticRule::ExactCategory;
    double embedding_tau = 0.6;
};

struct PrfResult {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int est_count = 0;
    int true_pos = 0;
    int false_pos = 0;
    int false_neg = 0;
    int gt_count = 0;
};

/// Greedy one-to-one matching of exported landmarks to still-active ground
/// truth objects by ascending distance; a pair counts when it is within the
/// distance threshold and passes the semantic rule (exact-category: some
/// label shares the category token; embedding: max cosine >= tau).
PrfResult landmark_prf(const MapExport& map, const WorldGT& world, const MatchConfig& cfg,
                       EmbeddingProvider* embeddings = nullptr);

} // namespace semslam

#endif
