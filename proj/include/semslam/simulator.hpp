#ifndef SEMSLAM_SIMULATOR_HPP
#define SEMSLAM_SIMULATOR_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semslam/frame.hpp"
#include "semslam/geometry.hpp"
#include "semslam/supervision.hpp"

namespace semslam {

/// Self-contained deterministic sampler. All draws go through explicit
/// algorithms (Box-Muller, Knuth, Marsaglia-Tsang) so sequences depend only
/// on the seed, not on the standard library's distribution implementations.
class SimRng {
public:
    explicit SimRng(std::uint64_t seed);

    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);
    double normal();                       // standard normal
    int poisson(double lambda);
    double beta(double a, double b);       // a, b >= 1
    int uniform_int(int lo, int hi);       // inclusive bounds

    /// Stream splitting for per-frame / per-role draws.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

private:
    std::uint64_t next_u64();
    double gamma(double shape);

    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct WorldObject {
    int id = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d extent = Eigen::Vector3d::Constant(0.2);
    std::string category;
    std::string descriptive;
    std::uint64_t active_from = 0;
    std::optional<std::uint64_t> active_until; // removed at this frame

    bool active_at(std::uint64_t frame) const {
        return frame >= active_from && (!active_until || frame < *active_until);
    }
};

struct SceneChangeEvent {
    enum class Action { Remove, Add };
    std::uint64_t frame = 0;
    int object_id = 0;
    Action action = Action::Remove;
    std::optional<WorldObject> added;
};

struct WorldGT {
    std::vector<WorldObject> objects;
    std::vector<SceneChangeEvent> events;

    const WorldObject* find(int id) const;
    std::vector<const WorldObject*> active_objects(std::uint64_t frame) const;
    std::vector<std::string> categories() const; // unique, in first-seen order
};

/// Seeded placement in a 6 x 6 x 1 m room: n_groups clusters of 2-3 objects
/// sharing a category (distinct color-prefixed descriptive labels, pairwise
/// closer than 0.5 m) plus singletons of distinct categories.
WorldGT generate_world(std::uint64_t seed, int n_objects, int n_groups);

/// Remove deactivates the object from the event frame onward; Add inserts a
/// new object. Throws UnknownObject for a Remove of a missing id.
void apply_scene_change(WorldGT& world, const SceneChangeEvent& event);

struct TrajectorySim {
    std::vector<Pose> gt_poses;
    std::vector<Pose> odom_increments; // noisy; index 0 maps origin -> pose 0 exactly
    std::vector<Pose> dead_reckoned;   // cumulative composition of the increments
};

/// Smooth loop around the room; odometry increments carry zero-mean Gaussian
/// twist noise with the given covariance (frame 0 is exact and anchors the
/// gauge).
TrajectorySim generate_trajectory(std::uint64_t seed, int n_frames,
                                  const Eigen::Matrix<double, 6, 6>& odom_noise);

/// Row-stochastic label sampling table, true category -> observed label.
/// Labels without a row sample as themselves.
struct LabelConfusionTable {
    std::map<std::string, std::vector<std::pair<std::string, double>>> rows;

    static LabelConfusionTable identity();
    /// 1 - rate mass on the true label, rate on a fixed per-category confuser.
    static LabelConfusionTable with_confusers(const std::vector<std::string>& categories,
                                              double rate);

    const std::string& sample(const std::string& true_label, double u) const;
    double prob(const std::string& true_label, const std::string& observed) const;
};

/// Detector stand-in: range/FOV visibility, misses, Gaussian point noise,
/// label confusion, Beta-distributed confidences, Poisson clutter, and the
/// 0.5 confidence ingestion floor.
struct DetectorSim {
    double range = 5.0;
    double fov_half_angle = 0.55; // radians
    double miss_prob = 0.05;
    double clutter_rate = 0.3; // false detections per frame
    Eigen::Matrix3d point_noise = 0.0009 * Eigen::Matrix3d::Identity(); // Gamma_sim
    LabelConfusionTable confusion = LabelConfusionTable::identity();
    double conf_correct_a = 8.0;
    double conf_correct_b = 2.0;
    double conf_confused_a = 3.0;
    double conf_confused_b = 2.5;
    double min_confidence = 0.5;
    CameraIntrinsics intrinsics{500.0, 500.0, 320.0, 240.0, 640, 480};
};

std::vector<Detection> simulate_detections(const WorldGT& world, const Pose& gt_pose,
                                           const DetectorSim& det, std::uint64_t seed,
                                           std::uint64_t frame);

/// Ground-truth referee standing in for the multimodal evaluator. Landmarks
/// with no active object within match_radius are Empty; mismatched label
/// sets are Incorrect (corrected to the category); landmarks sharing a
/// nearest object are Duplicated with the descriptive-labeled member
/// precise. The generator role emits the descriptive label of correct
/// landmarks. Each verdict is independently corrupted with probability
/// error_rate.
class ScriptedOracle : public Oracle {
public:
    ScriptedOracle(const WorldGT& world, double error_rate = 0.0, std::uint64_t seed = 0,
                   double match_radius = 0.25);

    std::optional<std::string> landmark_eval(const CompositeSpec& spec,
                                             const std::string& prompt) override;
    std::optional<std::string> class_label_gen(const CompositeSpec& spec,
                                               const std::string& prompt) override;

private:
    struct Verdicts {
        EvalFeedback eval;
        GenFeedback gen;
    };
    Verdicts judge(const CompositeSpec& spec) const;

    const WorldGT* world_;
    double error_rate_;
    std::uint64_t seed_;
    double match_radius_;
};

struct SimOptions {
    std::uint64_t seed = 0;
    int n_objects = 20;
    int n_groups = 3;
    int n_frames = 60;
    double odom_sigma_rot = 0.01;   // rad per frame
    double odom_sigma_trans = 0.02; // m per frame
    double point_sigma = 0.03;      // m
    double miss_prob = 0.05;
    double clutter_rate = 0.3;
    double confusion_rate = 0.15;
    double detection_range = 5.0;
    double fov_half_angle = 0.55;
    CameraIntrinsics intrinsics{500.0, 500.0, 320.0, 240.0, 640, 480};
    /// Optional mid-run removal: (frame, object id).
    std::optional<std::pair<std::uint64_t, int>> remove_event;
};

struct SimDataset {
    std::vector<Frame> frames;
    WorldGT world;
    std::vector<Pose> gt_poses;
    std::vector<Pose> odom_poses; // dead-reckoned odometry trajectory
};

SimDataset generate_dataset(const SimOptions& opts);

} // namespace semslam

#endif
