#ifndef SEMSLAM_SEMANTICS_HPP
#define SEMSLAM_SEMANTICS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semslam/association.hpp"
#include "semslam/embedding.hpp"
#include "semslam/graph.hpp"

namespace semslam {

/// Dynamically resizing label-indexed count matrix with Laplace smoothing.
/// The multiclass instance records {incorrect, refined} pairs; the duplicates
/// instance records {precise, duplicate} pairs, row = first element of the
/// recorded pair.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(double kappa = 1.0);

    /// Inserts unseen labels (zero-filled rows/columns) and increments
    /// counts[truth][observed].
    void record(const std::string& truth, const std::string& observed);

    /// Laplace-smoothed row-conditional probability of `observed` given the
    /// hypothesis row: (counts[h][o] + kappa) / (rowsum(h) + kappa * N).
    double likelihood(const std::string& observed, const std::string& hypothesis) const;

    bool contains(const std::string& label) const;
    std::size_t size() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }
    std::int64_t count(const std::string& truth, const std::string& observed) const;
    double kappa() const { return kappa_; }

    /// Serialized form: square count matrix in label order.
    std::vector<std::vector<std::int64_t>> counts() const { return counts_; }
    static ConfusionMatrix from_counts(std::vector<std::string> labels,
                                       std::vector<std::vector<std::int64_t>> counts,
                                       double kappa = 1.0);

private:
    int index_of(const std::string& label) const; // -1 when absent
    int insert(const std::string& label);

    double kappa_;
    std::vector<std::string> labels_;
    std::map<std::string, int> index_;
    std::vector<std::vector<std::int64_t>> counts_;
};

struct PosteriorResult {
    std::string label;                       // argmax, ties keep the detection
    std::map<std::string, double> posterior; // sums to 1
};

/// Bayes update of a detection's class given the multiclass matrix: the
/// detection confidence is the prior of its own label, the remaining mass is
/// split uniformly, and each class is scored by the row-conditional
/// likelihood of the observed label. Unknown labels and N < 2 return the
/// detection unchanged with a trivial posterior.
PosteriorResult posterior_class_update(const Detection& det, const ConfusionMatrix& m);

enum class LandmarkStatus : std::uint8_t {
    Correct,
    Empty,
    Incorrect,
    Refined,
    Duplicated,
    PreciseAmongDuplicated,
    Generated,
};

std::string to_string(LandmarkStatus s);
LandmarkStatus landmark_status_from_string(const std::string& s);

struct LandmarkSemantics {
    std::vector<std::string> label_set; // generic first, refinements appended
    std::string primary_label;
    LandmarkStatus status = LandmarkStatus::Correct;
    std::map<std::string, double> posterior;

    /// Appends the label if it is not already present.
    bool add_label(const std::string& label);
};

/// Active labels fed to the (simulated) detector; grows monotonically.
class LabelDatabase {
public:
    bool add(const std::string& label);
    bool contains(const std::string& label) const;
    const std::vector<std::string>& labels() const { return labels_; }

private:
    std::vector<std::string> labels_;
    std::map<std::string, bool> present_;
};

/// Landmark bookkeeping outside the graph: extent, semantics, support count.
struct LandmarkRecord {
    Eigen::Vector3d extent = Eigen::Vector3d::Constant(0.2);
    LandmarkSemantics semantics;
    int observation_count = 0;
};

using LandmarkMap = std::map<VariableKey, LandmarkRecord>;

/// Pairs whose projected boxes overlap with IoU above iou_thresh and whose
/// world positions are closer than dist_thresh.
std::vector<std::pair<VariableKey, VariableKey>> find_duplicate_pairs(
    const LandmarkMap& landmarks, const GraphEstimate& estimate, const Pose& camera,
    const CameraIntrinsics& intrinsics, double iou_thresh = 0.90, double dist_thresh = 0.1);

/// Resolves pairs with strict count-majority evidence in the duplicates
/// matrix: the landmark carrying the generic label is removed after its
/// label set is merged into the survivor. Ties or missing evidence keep
/// both. Returns the keys to delete; graph edits are the caller's job.
std::vector<VariableKey> resolve_duplicates(
    const std::vector<std::pair<VariableKey, VariableKey>>& pairs,
    const ConfusionMatrix& d_matrix, LandmarkMap& landmarks);

} // namespace semslam

#endif
