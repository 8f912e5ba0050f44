#include <doctest.h>

#include <memory>

#include "semslam/errors.hpp"
#include "semslam/io.hpp"
#include "semslam/pipeline.hpp"
#include "semslam/simulator.hpp"

using namespace semslam;

namespace {

Frame empty_frame(std::uint64_t id) {
    Frame f;
    f.id = id;
    f.timestamp = 0.1 * static_cast<double>(id);
    f.odom_increment = Pose::Identity();
    f.odom_cov = 1e-4 * Eigen::Matrix<double, 6, 6>::Identity();
    f.intrinsics = {500.0, 500.0, 320.0, 240.0, 640, 480};
    return f;
}

Detection detection_at(const Eigen::Vector3d& point_cam, const std::string& label) {
    Detection d;
    d.label = label;
    d.confidence = 0.9;
    d.point_cam = point_cam;
    d.pixel_box = {300, 220, 340, 260};
    d.extent = Eigen::Vector3d::Constant(0.2);
    return d;
}

SimOptions quiet_options(std::uint64_t seed, int frames = 30) {
    SimOptions opts;
    opts.seed = seed;
    opts.n_objects = 10;
    opts.n_groups = 2;
    opts.n_frames = frames;
    opts.odom_sigma_rot = 0.0;
    opts.odom_sigma_trans = 0.0;
    opts.point_sigma = 0.0;
    opts.miss_prob = 0.0;
    opts.clutter_rate = 0.0;
    opts.confusion_rate = 0.0;
    return opts;
}

bool run_results_equal(const RunResult& a, const RunResult& b) {
    if (a.map.landmarks.size() != b.map.landmarks.size()) return false;
    for (std::size_t i = 0; i < a.map.landmarks.size(); ++i) {
        const auto& x = a.map.landmarks[i];
        const auto& y = b.map.landmarks[i];
        if (x.id != y.id || x.primary_label != y.primary_label ||
            x.label_set != y.label_set || x.observation_count != y.observation_count)
            return false;
        if ((x.position - y.position).cwiseAbs().maxCoeff() != 0.0) return false;
    }
    if (a.trajectory.size() != b.trajectory.size()) return false;
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
        if ((a.trajectory[i].translation - b.trajectory[i].translation).cwiseAbs().maxCoeff() !=
            0.0)
            return false;
    }
    if (a.edit_log.size() != b.edit_log.size()) return false;
    for (std::size_t i = 0; i < a.edit_log.size(); ++i) {
        if (a.edit_log[i].action != b.edit_log[i].action ||
            a.edit_log[i].landmark_index != b.edit_log[i].landmark_index)
            return false;
    }
    return true;
}

} // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("step with no detections grows only the pose chain") {
    Pipeline p({});
    p.step(empty_frame(0));
    CHECK(p.graph().num_poses() == 1);
    CHECK(p.graph().num_landmarks() == 0);

    Frame f1 = empty_frame(1);
    f1.odom_increment = Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.1, 0, 0));
    const StepReport r = p.step(f1);
    CHECK(p.graph().num_poses() == 2);
    CHECK(p.graph().num_landmarks() == 0);
    CHECK(r.assignments == 0);
    CHECK(r.new_landmarks == 0);
}

TEST_CASE("first frame with one detection spawns one landmark") {
    Pipeline p({});
    Frame f = empty_frame(0);
    f.detections = {detection_at({0, 0, 2}, "vase")};
    const StepReport r = p.step(f);
    CHECK(r.new_landmarks == 1);
    CHECK(p.graph().num_poses() == 1);
    CHECK(p.graph().num_landmarks() == 1);

    int priors = 0;
    int observations = 0;
    for (const auto& [id, fac] : p.graph().factors()) {
        if (std::holds_alternative<PriorPoseFactor>(fac)) ++priors;
        if (std::holds_alternative<ObservationFactor>(fac)) ++observations;
    }
    CHECK(priors == 1);
    CHECK(observations == 1);
    CHECK(p.landmarks().begin()->second.semantics.primary_label == "vase");
}

TEST_CASE("re-observation associates instead of spawning") {
    Pipeline p({});
    Frame f0 = empty_frame(0);
    f0.detections = {detection_at({0, 0, 2}, "vase")};
    p.step(f0);

    Frame f1 = empty_frame(1);
    f1.detections = {detection_at({0, 0, 2}, "vase")};
    const StepReport r = p.step(f1);
    CHECK(r.assignments == 1);
    CHECK(r.new_landmarks == 0);
    CHECK(p.graph().num_landmarks() == 1);
    CHECK(p.landmarks().begin()->second.observation_count == 2);
}

TEST_CASE("out-of-order frames are rejected") {
    Pipeline p({});
    p.step(empty_frame(3));
    CHECK_THROWS_AS(p.step(empty_frame(3)), OutOfOrderFrame);
    CHECK_THROWS_AS(p.step(empty_frame(1)), OutOfOrderFrame);
}

TEST_CASE("empty dataset runs clean") {
    const RunResult result = run_pipeline({}, {});
    CHECK(result.map.landmarks.empty());
    CHECK(result.trajectory.empty());
    CHECK(result.edit_log.empty());
}

TEST_CASE("noise-free dataset with no oracle maps every object once") {
    const SimDataset data = generate_dataset(quiet_options(3));
    PipelineConfig cfg;
    cfg.oracle_mode = OracleMode::None;
    const RunResult result = run_pipeline(data.frames, cfg);

    // expected structure from the zero-noise simulator: all objects seen
    CHECK(result.map.landmarks.size() == data.world.objects.size());
    CHECK(result.trajectory.size() == data.frames.size());
    for (const auto& lm : result.map.landmarks) {
        CHECK(lm.observation_count >= cfg.min_observations);
        // placed on a ground-truth object of the same category
        bool matched = false;
        for (const auto& obj : data.world.objects) {
            if ((lm.position - obj.position).norm() < 0.05 && lm.primary_label == obj.category) {
                matched = true;
            }
        }
        CHECK(matched);
    }
    // ablation invariants: no oracle means no edits and empty matrices
    CHECK(result.edit_log.empty());
    CHECK(result.map.m_matrix.labels.empty());
    CHECK(result.map.d_matrix.labels.empty());
}

TEST_CASE("pose count equals frame count") {
    SimOptions opts = quiet_options(9, 25);
    opts.odom_sigma_rot = 0.005;
    opts.odom_sigma_trans = 0.01;
    opts.point_sigma = 0.02;
    const SimDataset data = generate_dataset(opts);
    PipelineConfig cfg;
    cfg.oracle_mode = OracleMode::Scripted;
    auto oracle = std::make_shared<ScriptedOracle>(data.world);
    const RunResult result = run_pipeline(data.frames, cfg, oracle);
    CHECK(result.trajectory.size() == 25);
    for (std::size_t i = 0; i < result.trajectory.size(); ++i) {
        CHECK(result.trajectory[i].t == doctest::Approx(0.1 * static_cast<double>(i)));
    }
}

TEST_CASE("scripted runs are deterministic") {
    SimOptions opts = quiet_options(11, 25);
    opts.point_sigma = 0.02;
    opts.clutter_rate = 0.3;
    opts.confusion_rate = 0.2;
    opts.odom_sigma_rot = 0.005;
    opts.odom_sigma_trans = 0.01;
    const SimDataset data = generate_dataset(opts);

    PipelineConfig cfg;
    cfg.oracle_mode = OracleMode::Scripted;
    const RunResult a =
        run_pipeline(data.frames, cfg, std::make_shared<ScriptedOracle>(data.world));
    const RunResult b =
        run_pipeline(data.frames, cfg, std::make_shared<ScriptedOracle>(data.world));
    CHECK(run_results_equal(a, b));
}

TEST_CASE("supervision removes stale landmarks after a scene change") {
    SimOptions opts = quiet_options(21, 40);
    // remove whichever object sits closest to the room center mid-run
    SimDataset probe = generate_dataset(opts);
    int victim = 0;
    double best = 1e9;
    for (const auto& o : probe.world.objects) {
        const double r = o.position.head<2>().norm();
        if (r < best) {
            best = r;
            victim = o.id;
        }
    }
    opts.remove_event = {{20, victim}};
    const SimDataset data = generate_dataset(opts);
    const Eigen::Vector3d removed_pos = data.world.find(victim)->position;

    PipelineConfig cfg;
    cfg.oracle_mode = OracleMode::Scripted;
    const RunResult with_oracle =
        run_pipeline(data.frames, cfg, std::make_shared<ScriptedOracle>(data.world));
    PipelineConfig off;
    off.oracle_mode = OracleMode::None;
    const RunResult without = run_pipeline(data.frames, off);

    auto has_near = [&](const RunResult& r) {
        for (const auto& lm : r.map.landmarks) {
            if ((lm.position - removed_pos).norm() < 0.25) return true;
        }
        return false;
    };
    CHECK_FALSE(has_near(with_oracle));
    CHECK(has_near(without));
    // the removal appears in the edit log
    bool logged = false;
    for (const auto& e : with_oracle.edit_log) {
        if (e.action == EditAction::Removed) logged = true;
    }
    CHECK(logged);
}

TEST_CASE("exported landmarks are backed by enough observation factors") {
    SimOptions opts = quiet_options(31, 35);
    opts.point_sigma = 0.02;
    opts.clutter_rate = 0.4;
    opts.confusion_rate = 0.25; // plenty of duplicates to merge
    opts.odom_sigma_rot = 0.005;
    opts.odom_sigma_trans = 0.01;
    const SimDataset data = generate_dataset(opts);

    PipelineConfig cfg;
    cfg.oracle_mode = OracleMode::Scripted;
    Pipeline pipeline(cfg, std::make_shared<ScriptedOracle>(data.world));
    for (const Frame& f : data.frames) pipeline.step(f);
    const RunResult result = pipeline.finish();

    std::map<std::uint32_t, int> support;
    for (const auto& [id, f] : pipeline.graph().factors()) {
        if (const auto* obs = std::get_if<ObservationFactor>(&f)) {
            support[obs->landmark.index] += 1;
        }
    }
    for (const auto& lm : result.map.landmarks) {
        CHECK(support[lm.id] >= cfg.min_observations);
        CHECK(lm.observation_count == support[lm.id]);
    }
    // merged or removed landmarks left no dangling factors
    for (const auto& [id, f] : pipeline.graph().factors()) {
        if (const auto* obs = std::get_if<ObservationFactor>(&f)) {
            CHECK(pipeline.graph().has_variable(obs->landmark));
        }
    }
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(config_from_json({{"nonsense", 1}}), SchemaViolation);
    CHECK_THROWS_AS(config_from_json({{"alpha", 1.5}}), SchemaViolation);
    CHECK_THROWS_AS(config_from_json({{"optimizer", {{"bogus", 1}}}}), SchemaViolation);

    const PipelineConfig cfg = config_from_json(
        {{"alpha", 0.99}, {"semantic_threshold", 0.5}, {"oracle", "scripted"}});
    CHECK(cfg.association.alpha == 0.99);
    CHECK(cfg.oracle_mode == OracleMode::Scripted);
    // defaults survive a round trip
    const PipelineConfig back = config_from_json(config_to_json(PipelineConfig{}));
    CHECK(back.association.alpha == PipelineConfig{}.association.alpha);
    CHECK(back.min_observations == PipelineConfig{}.min_observations);
}

TEST_SUITE_END();
