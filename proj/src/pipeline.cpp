#include "semslam/pipeline.hpp"

#include <algorithm>
#include <chrono>

#include "semslam/errors.hpp"

namespace semslam {

std::string to_string(OracleMode m) {
    switch (m) {
        case OracleMode::None: return "none";
        case OracleMode::Scripted: return "scripted";
        case OracleMode::Http: return "http";
    }
    return "none";
}

OracleMode oracle_mode_from_string(const std::string& s) {
    if (s == "none") return OracleMode::None;
    if (s == "scripted") return OracleMode::Scripted;
    if (s == "http") return OracleMode::Http;
    throw SchemaViolation("unknown oracle mode: " + s);
}

Pipeline::Pipeline(PipelineConfig cfg, std::shared_ptr<Oracle> oracle,
                   std::shared_ptr<EmbeddingProvider> embeddings)
    : cfg_(cfg),
      oracle_(std::move(oracle)),
      embeddings_(embeddings ? std::move(embeddings) : std::make_shared<NgramHashEmbedding>()),
      measurement_noise_(NoiseModel::isotropic(3, cfg.measurement_sigma)),
      m_matrix_(cfg.kappa),
      d_matrix_(cfg.kappa) {
    if (cfg_.oracle_mode != OracleMode::None && !oracle_) {
        throw Error("Pipeline: oracle mode set but no oracle provided");
    }
}

void Pipeline::dispatch_supervision(std::uint64_t frame_id) {
    const Pose& camera = graph_.estimate().poses.at(last_pose_);
    CompositeSpec spec = build_composite(landmarks_, graph_.estimate(), camera,
                                         last_intrinsics_, frame_id, cfg_.max_overlays);
    if (spec.empty()) return;

    PendingRound round;
    round.composite = std::move(spec);
    const std::string eval_prompt = render_landmark_eval_prompt(round.composite);
    const std::string gen_prompt = render_class_label_gen_prompt(round.composite);

    if (cfg_.oracle_mode == OracleMode::Http) {
        round.async = true;
        Oracle* oracle = oracle_.get();
        const CompositeSpec spec_copy = round.composite;
        round.eval_future = std::async(std::launch::async, [oracle, spec_copy, eval_prompt] {
            return oracle->landmark_eval(spec_copy, eval_prompt);
        });
        round.gen_future = std::async(std::launch::async, [oracle, spec_copy, gen_prompt] {
            return oracle->class_label_gen(spec_copy, gen_prompt);
        });
    } else {
        round.eval_text = oracle_->landmark_eval(round.composite, eval_prompt);
        round.gen_text = oracle_->class_label_gen(round.composite, gen_prompt);
    }
    pending_.push_back(std::move(round));
    last_supervised_frame_ = frame_id;
}

int Pipeline::drain_feedback(bool wait) {
    int edits = 0;
    while (!pending_.empty()) {
        PendingRound& round = pending_.front();
        if (round.async) {
            if (round.eval_future.valid()) {
                if (wait || round.eval_future.wait_for(std::chrono::seconds(0)) ==
                                std::future_status::ready) {
                    round.eval_text = round.eval_future.get();
                } else {
                    break; // applied in dispatch order; head not ready yet
                }
            }
            if (round.gen_future.valid()) {
                if (wait || round.gen_future.wait_for(std::chrono::seconds(0)) ==
                                std::future_status::ready) {
                    round.gen_text = round.gen_future.get();
                } else {
                    break;
                }
            }
        }

        EvalFeedback eval;
        GenFeedback gen;
        bool usable = false;
        if (round.eval_text) {
            try {
                eval = parse_landmark_eval(*round.eval_text);
                usable = true;
            } catch (const Error&) {
                ++oracle_skips_;
            }
        } else {
            ++oracle_skips_;
        }
        if (round.gen_text) {
            try {
                gen = parse_class_label_gen(*round.gen_text);
                usable = true;
            } catch (const Error&) {
                ++oracle_skips_;
            }
        }

        if (usable) {
            const EditLog log = apply_feedback(round.composite, eval, gen, graph_, landmarks_,
                                               m_matrix_, d_matrix_, label_db_);
            bool mutated = false;
            for (const auto& entry : log) {
                if (entry.action != EditAction::SkippedStale) mutated = true;
                edit_log_.push_back(entry);
                ++edits;
            }
            if (mutated) graph_.optimize(cfg_.optimizer);
        }
        pending_.pop_front();
    }
    return edits;
}

StepReport Pipeline::step(const Frame& frame) {
    if (last_frame_id_ && frame.id <= *last_frame_id_) {
        throw OutOfOrderFrame("step: frame " + std::to_string(frame.id) +
                              " arrived after frame " + std::to_string(*last_frame_id_));
    }

    StepReport report;
    report.frame_id = frame.id;
    report.detections = static_cast<int>(frame.detections.size());

    // (1) extend the pose chain
    if (!last_frame_id_) {
        const Pose origin = frame.odom_increment;
        last_pose_ = graph_.add_pose(origin);
        graph_.add_factor(PriorPoseFactor{
            last_pose_, origin,
            NoiseModel(cfg_.prior_covariance * Eigen::MatrixXd::Identity(6, 6))});
    } else {
        const Pose init = graph_.estimate().poses.at(last_pose_) * frame.odom_increment;
        const VariableKey next = graph_.add_pose(init);
        graph_.add_factor(
            BetweenFactor{last_pose_, next, frame.odom_increment, NoiseModel(frame.odom_cov)});
        last_pose_ = next;
    }
    last_frame_id_ = frame.id;
    last_intrinsics_ = frame.intrinsics;
    timestamps_.push_back(frame.timestamp);
    graph_.optimize(cfg_.optimizer);

    // (2) posterior relabeling against the multiclass matrix
    std::vector<Detection> detections = frame.detections;
    for (auto& det : detections) {
        const PosteriorResult post = posterior_class_update(det, m_matrix_);
        if (post.label == det.label) continue;
        const double gap = post.posterior.at(post.label) - post.posterior.at(det.label);
        if (gap > cfg_.relabel_margin) {
            det.label = post.label;
            ++report.relabeled_detections;
        }
    }

    // (3) associate against the current map
    std::vector<LandmarkCandidate> candidates;
    for (const auto& [key, rec] : landmarks_) {
        candidates.push_back(
            {key, graph_.estimate().landmarks.at(key), rec.semantics.label_set});
    }
    const AssociationResult assoc =
        associate_frame(detections, candidates, graph_, last_pose_, measurement_noise_,
                        cfg_.association, *embeddings_);
    report.assignments = static_cast<int>(assoc.assignments.size());
    for (const auto& r : assoc.rejected) {
        (r.reason == RejectReason::GeomFail ? report.rejected_geom : report.rejected_sem)++;
    }

    // (4) observation factors for matches, new landmarks for the rest
    for (const auto& a : assoc.assignments) {
        graph_.add_factor(ObservationFactor{last_pose_, a.landmark,
                                            detections[a.detection].point_cam,
                                            measurement_noise_});
        landmarks_.at(a.landmark).observation_count += 1;
    }
    std::vector<std::size_t> spawn = assoc.new_landmarks;
    for (const auto& r : assoc.rejected) spawn.push_back(r.detection);
    std::sort(spawn.begin(), spawn.end());
    for (std::size_t di : spawn) {
        const Detection& det = detections[di];
        const Eigen::Vector3d world_pos =
            graph_.estimate().poses.at(last_pose_) * det.point_cam;
        const VariableKey key = graph_.add_landmark(world_pos);
        graph_.add_factor(
            ObservationFactor{last_pose_, key, det.point_cam, measurement_noise_});
        LandmarkRecord rec;
        rec.extent = det.extent.value_or(Eigen::Vector3d::Constant(0.2));
        rec.semantics.primary_label = det.label;
        rec.semantics.label_set = {det.label};
        rec.observation_count = 1;
        landmarks_.emplace(key, std::move(rec));
        ++report.new_landmarks;
    }

    // (5) re-optimize with this frame's observations
    graph_.optimize(cfg_.optimizer);

    // (6) proactive duplicate resolution from the duplicates matrix
    const auto pairs =
        find_duplicate_pairs(landmarks_, graph_.estimate(),
                             graph_.estimate().poses.at(last_pose_), frame.intrinsics,
                             cfg_.duplicate_iou, cfg_.duplicate_distance);
    if (!pairs.empty()) {
        const auto removals = resolve_duplicates(pairs, d_matrix_, landmarks_);
        for (const VariableKey key : removals) {
            graph_.remove_landmark_factors(key);
            edit_log_.push_back(
                {frame.id, EditAction::Merged, key.index, "proactive duplicate removal"});
            ++report.duplicates_removed;
        }
        if (!removals.empty()) graph_.optimize(cfg_.optimizer);
    }

    // (7) evaluator round on the supervision cadence, then queued feedback
    if (oracle_ && cfg_.oracle_mode != OracleMode::None && cfg_.supervision_interval > 0 &&
        frame.id % static_cast<std::uint64_t>(cfg_.supervision_interval) == 0) {
        dispatch_supervision(frame.id);
        report.supervision_dispatched = true;
    }
    report.feedback_edits = drain_feedback(false);

    report.final_error = graph_.total_error();
    reports_.push_back(report);
    return report;
}

MapExport Pipeline::export_map() const {
    // support = observation factors actually present in the graph, which can
    // lag the bookkeeping counter after duplicate merges
    std::map<VariableKey, int> support;
    for (const auto& [id, f] : graph_.factors()) {
        if (const auto* obs = std::get_if<ObservationFactor>(&f)) support[obs->landmark] += 1;
    }

    MapExport out;
    for (const auto& [key, rec] : landmarks_) {
        const auto it = support.find(key);
        const int n_factors = it == support.end() ? 0 : it->second;
        if (n_factors < cfg_.min_observations) continue;
        MapLandmark lm;
        lm.id = key.index;
        lm.position = graph_.estimate().landmarks.at(key);
        lm.extent = rec.extent;
        lm.label_set = rec.semantics.label_set;
        lm.primary_label = rec.semantics.primary_label;
        lm.status = rec.semantics.status;
        lm.observation_count = n_factors;
        out.landmarks.push_back(std::move(lm));
    }
    out.m_matrix = {m_matrix_.labels(), m_matrix_.counts()};
    out.d_matrix = {d_matrix_.labels(), d_matrix_.counts()};
    out.edit_log = edit_log_;
    return out;
}

RunResult Pipeline::finish() {
    // final evaluator round when the cadence missed the last frame
    if (oracle_ && cfg_.oracle_mode != OracleMode::None && last_frame_id_ &&
        (!last_supervised_frame_ || *last_supervised_frame_ != *last_frame_id_)) {
        dispatch_supervision(*last_frame_id_);
    }
    drain_feedback(true);
    if (graph_.num_poses() > 0) graph_.optimize(cfg_.optimizer);

    RunResult result;
    result.map = export_map();
    std::size_t i = 0;
    for (const auto& [key, pose] : graph_.estimate().poses) {
        result.trajectory.push_back(pose_to_record(timestamps_.at(i++), pose));
    }
    result.edit_log = edit_log_;
    result.reports = reports_;
    result.oracle_skips = oracle_skips_;
    return result;
}

RunResult run_pipeline(const std::vector<Frame>& frames, const PipelineConfig& cfg,
                       std::shared_ptr<Oracle> oracle,
                       std::shared_ptr<EmbeddingProvider> embeddings) {
    Pipeline pipeline(cfg, std::move(oracle), std::move(embeddings));
    for (const Frame& f : frames) pipeline.step(f);
    return pipeline.finish();
}

} // namespace semslam
