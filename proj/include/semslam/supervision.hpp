#ifndef SEMSLAM_SUPERVISION_HPP
#define SEMSLAM_SUPERVISION_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semslam/geometry.hpp"
#include "semslam/graph.hpp"
#include "semslam/semantics.hpp"

namespace semslam {

/// One numbered landmark overlay in a composite.
struct OverlayEntry {
    VariableKey key;
    int number = 0; // display number, 1-based
    PixelBox box;
    std::string label; // primary label at build time
    std::vector<std::string> label_set;
    PixelBox crop_box;
    Eigen::Vector3d world_pos = Eigen::Vector3d::Zero();
    Eigen::Vector3d extent = Eigen::Vector3d::Zero();
};

/// Geometric overlay specification of the evaluator's composite input. No
/// pixels are rendered; transports that need a raster build it from this.
struct CompositeSpec {
    std::uint64_t frame_id = 0;
    int width = 0;
    int height = 0;
    std::vector<OverlayEntry> entries;

    bool empty() const { return entries.empty(); }
    const OverlayEntry* find(int number) const;
};

/// Projects every landmark with its center in front of the camera, keeps the
/// ones whose boxes intersect the image, and numbers them 1..n in ascending
/// key order (capped at max_overlays).
CompositeSpec build_composite(const LandmarkMap& landmarks, const GraphEstimate& estimate,
                              const Pose& camera, const CameraIntrinsics& intrinsics,
                              std::uint64_t frame_id, std::size_t max_overlays = 25);

std::string render_landmark_eval_prompt(const CompositeSpec& spec);
std::string render_class_label_gen_prompt(const CompositeSpec& spec);

/// Parsed evaluator verdicts, display-number indexed.
struct EvalFeedback {
    std::vector<int> empty;
    std::vector<int> incorrect;
    std::vector<std::string> corrected; // aligned with incorrect
    std::vector<std::vector<int>> duplicated;
    std::vector<int> precise_in_duplicated; // one per group

    bool is_empty() const {
        return empty.empty() && incorrect.empty() && corrected.empty() && duplicated.empty() &&
               precise_in_duplicated.empty();
    }
};

/// Generated descriptive labels per display number.
struct GenFeedback {
    std::map<int, std::vector<std::string>> labels;
};

/// Extracts the five named lists anywhere in the text; accepts both the
/// `_tags` and `_label(s)` spellings and ignores narration around them. The
/// last occurrence of each list wins. Throws MalformedResponse when a list is
/// missing or brackets are unbalanced, and MisalignedCorrection when a
/// non-empty incorrect list disagrees with the corrected list length.
EvalFeedback parse_landmark_eval(const std::string& text);

/// Collects every `tag_N = [...]` line, plus the `descriptive_label = [...]`
/// form when preceded by a bracketed display number. No tag lines yields an
/// empty map.
GenFeedback parse_class_label_gen(const std::string& text);

/// Canonical response texts in the evaluator's list format; parsing them
/// recovers the feedback exactly.
std::string render_landmark_eval_response(const EvalFeedback& feedback);
std::string render_class_label_gen_response(const GenFeedback& feedback);

/// Two-role evaluator backend. Returns nullopt when the backend is
/// unavailable; callers skip that round.
class Oracle {
public:
    virtual ~Oracle() = default;
    virtual std::optional<std::string> landmark_eval(const CompositeSpec& spec,
                                                     const std::string& prompt) = 0;
    virtual std::optional<std::string> class_label_gen(const CompositeSpec& spec,
                                                       const std::string& prompt) = 0;
};

/// HTTP adapter: POSTs {frame_id, prompt, overlays} as JSON to
/// /landmark_eval and /class_label_gen and expects {"text": ...} back.
/// Non-200, timeouts, and malformed bodies all surface as nullopt.
class HttpOracle : public Oracle {
public:
    explicit HttpOracle(std::string base_url, double timeout_seconds = 30.0);
    std::optional<std::string> landmark_eval(const CompositeSpec& spec,
                                             const std::string& prompt) override;
    std::optional<std::string> class_label_gen(const CompositeSpec& spec,
                                               const std::string& prompt) override;

private:
    std::optional<std::string> post(const std::string& path, const CompositeSpec& spec,
                                    const std::string& prompt);

    std::string base_url_;
    double timeout_seconds_;
};

enum class EditAction : std::uint8_t {
    Removed,
    Relabeled,
    Merged,
    LabelGenerated,
    SkippedStale,
};

std::string to_string(EditAction a);
EditAction edit_action_from_string(const std::string& s);

struct EditLogEntry {
    std::uint64_t frame_id = 0;
    EditAction action = EditAction::Removed;
    std::uint32_t landmark_index = 0;
    std::string detail;
};

using EditLog = std::vector<EditLogEntry>;

/// Applies one round of evaluator feedback, in order: removals, label
/// corrections (recorded into M), duplicate merges (recorded into D, all
/// non-precise members removed), then generated labels (appended to the
/// landmark and the label database). Stale display numbers are skipped and
/// logged; re-applying the same feedback produces no further mutations.
/// Callers re-optimize the graph afterwards.
EditLog apply_feedback(const CompositeSpec& composite, const EvalFeedback& eval,
                       const GenFeedback& gen, FactorGraph& graph, LandmarkMap& landmarks,
                       ConfusionMatrix& m_matrix, ConfusionMatrix& d_matrix,
                       LabelDatabase& label_db);

} // namespace semslam

#endif
