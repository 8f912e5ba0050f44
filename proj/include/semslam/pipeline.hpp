#ifndef SEMSLAM_PIPELINE_HPP
#define SEMSLAM_PIPELINE_HPP

#include <deque>
#include <future>
#include <memory>
#include <optional>

#include "semslam/association.hpp"
#include "semslam/eval.hpp"
#include "semslam/frame.hpp"
#include "semslam/graph.hpp"
#include "semslam/semantics.hpp"
#include "semslam/supervision.hpp"

namespace semslam {

enum class OracleMode : std::uint8_t { None, Scripted, Http };

std::string to_string(OracleMode m);
OracleMode oracle_mode_from_string(const std::string& s);

struct PipelineConfig {
    AssociationConfig association;
    int supervision_interval = 5; // frames between evaluator rounds
    std::size_t max_overlays = 25;
    OracleMode oracle_mode = OracleMode::None;
    double relabel_margin = 0.1;   // posterior gap required to rename a detection
    double duplicate_iou = 0.90;
    double duplicate_distance = 0.1; // meters
    double measurement_sigma = 0.05; // meters, isotropic observation noise
    double prior_covariance = 1e-6; // diagonal of the first-pose anchor
    int min_observations = 2;       // export support threshold
    double kappa = 1.0;             // confusion-matrix smoothing
    OptimizerConfig optimizer;
    double oracle_timeout_s = 30.0; // http adapter
    double error_rate = 0.0;        // scripted oracle corruption
    std::uint64_t seed = 0;         // scripted oracle corruption stream
};

struct StepReport {
    std::uint64_t frame_id = 0;
    int detections = 0;
    int assignments = 0;
    int new_landmarks = 0;
    int rejected_geom = 0;
    int rejected_sem = 0;
    int relabeled_detections = 0;
    int duplicates_removed = 0;
    int feedback_edits = 0;
    bool supervision_dispatched = false;
    double final_error = 0.0;
};

struct RunResult {
    MapExport map;
    std::vector<TrajectoryRecord> trajectory;
    EditLog edit_log;
    std::vector<StepReport> reports;
    int oracle_skips = 0;   // unavailable or unparseable rounds
};

/// Frame-by-frame orchestration: odometry factor insertion, posterior
/// relabeling, association, optimization, proactive duplicate resolution,
/// and periodic evaluator rounds. Single-threaded over the graph; evaluator
/// responses are queued and applied only at frame boundaries.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg, std::shared_ptr<Oracle> oracle = nullptr,
                      std::shared_ptr<EmbeddingProvider> embeddings = nullptr);

    StepReport step(const Frame& frame);

    /// Flushes pending evaluator feedback, optionally runs a final round, and
    /// assembles the run outputs.
    RunResult finish();

    const FactorGraph& graph() const { return graph_; }
    const LandmarkMap& landmarks() const { return landmarks_; }
    const ConfusionMatrix& multiclass_matrix() const { return m_matrix_; }
    const ConfusionMatrix& duplicates_matrix() const { return d_matrix_; }
    const LabelDatabase& label_database() const { return label_db_; }
    const EditLog& edit_log() const { return edit_log_; }

private:
    struct PendingRound {
        CompositeSpec composite;
        bool async = false;
        std::optional<std::string> eval_text;
        std::optional<std::string> gen_text;
        std::future<std::optional<std::string>> eval_future;
        std::future<std::optional<std::string>> gen_future;
    };

    void dispatch_supervision(std::uint64_t frame_id);
    int drain_feedback(bool wait);
    MapExport export_map() const;

    PipelineConfig cfg_;
    std::shared_ptr<Oracle> oracle_;
    std::shared_ptr<EmbeddingProvider> embeddings_;
    NoiseModel measurement_noise_;

    FactorGraph graph_;
    LandmarkMap landmarks_;
    ConfusionMatrix m_matrix_;
    ConfusionMatrix d_matrix_;
    LabelDatabase label_db_;
    EditLog edit_log_;
    std::deque<PendingRound> pending_;
    std::vector<StepReport> reports_;

    std::optional<std::uint64_t> last_frame_id_;
    std::optional<std::uint64_t> last_supervised_frame_;
    VariableKey last_pose_;
    std::vector<double> timestamps_;
    CameraIntrinsics last_intrinsics_;
    int oracle_skips_ = 0;
};

/// Convenience wrapper: steps every frame in order and finishes.
RunResult run_pipeline(const std::vector<Frame>& frames, const PipelineConfig& cfg,
                       std::shared_ptr<Oracle> oracle = nullptr,
                       std::shared_ptr<EmbeddingProvider> embeddings = nullptr);

} // namespace semslam

#endif
