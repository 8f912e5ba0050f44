#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "semslam/errors.hpp"
#include "semslam/simulator.hpp"

using namespace semslam;

namespace {

bool worlds_equal(const WorldGT& a, const WorldGT& b) {
    if (a.objects.size() != b.objects.size()) return false;
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
        const auto& x = a.objects[i];
        const auto& y = b.objects[i];
        if (x.id != y.id || x.category != y.category || x.descriptive != y.descriptive)
            return false;
        if ((x.position - y.position).norm() != 0.0) return false;
        if ((x.extent - y.extent).norm() != 0.0) return false;
    }
    return true;
}

} // namespace

TEST_SUITE_BEGIN("simulator");

TEST_CASE("generate_world is deterministic and grouped") {
    const WorldGT a = generate_world(42, 20, 3);
    const WorldGT b = generate_world(42, 20, 3);
    CHECK(worlds_equal(a, b));
    CHECK_FALSE(worlds_equal(a, generate_world(43, 20, 3)));

    CHECK(a.objects.size() == 20);
    std::map<std::string, std::vector<const WorldObject*>> by_cat;
    for (const auto& o : a.objects) by_cat[o.category].push_back(&o);

    int grouped = 0;
    int groups = 0;
    for (const auto& [cat, objs] : by_cat) {
        if (objs.size() < 2) continue;
        ++groups;
        grouped += static_cast<int>(objs.size());
        // pairwise distance below 0.5 m, descriptive labels distinct
        std::set<std::string> descriptive;
        for (std::size_t i = 0; i < objs.size(); ++i) {
            descriptive.insert(objs[i]->descriptive);
            for (std::size_t j = i + 1; j < objs.size(); ++j) {
                CHECK((objs[i]->position - objs[j]->position).norm() < 0.5);
                CHECK((objs[i]->position - objs[j]->position).norm() > 0.2);
            }
        }
        CHECK(descriptive.size() == objs.size());
    }
    CHECK(groups == 3);
    CHECK(grouped >= 6);

    std::set<int> ids;
    for (const auto& o : a.objects) {
        ids.insert(o.id);
        CHECK(o.extent.minCoeff() > 0.0);
        CHECK(o.position.head<2>().norm() < 3.0);
        CHECK(o.position.z() >= 0.0);
        CHECK(o.position.z() <= 1.0);
    }
    CHECK(ids.size() == a.objects.size());

    CHECK_THROWS_AS(generate_world(1, 5, 3), Error);
}

TEST_CASE("generate_trajectory basics") {
    const Eigen::Matrix<double, 6, 6> zero = Eigen::Matrix<double, 6, 6>::Zero();
    const TrajectorySim clean = generate_trajectory(7, 40, zero);
    REQUIRE(clean.gt_poses.size() == 40);
    for (int i = 0; i < 40; ++i) {
        CHECK(se3_log(clean.gt_poses[i].inverse() * clean.dead_reckoned[i]).norm() < 1e-9);
        CHECK(is_valid_rotation(clean.gt_poses[i].rotation));
    }

    Eigen::Matrix<double, 6, 6> cov = Eigen::Matrix<double, 6, 6>::Zero();
    cov.topLeftCorner<3, 3>() = 1e-4 * Eigen::Matrix3d::Identity();
    cov.bottomRightCorner<3, 3>() = 4e-4 * Eigen::Matrix3d::Identity();
    const TrajectorySim noisy1 = generate_trajectory(7, 40, cov);
    const TrajectorySim noisy2 = generate_trajectory(7, 40, cov);
    for (int i = 0; i < 40; ++i) {
        CHECK((noisy1.dead_reckoned[i].rotation - noisy2.dead_reckoned[i].rotation)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
        CHECK((noisy1.dead_reckoned[i].translation - noisy2.dead_reckoned[i].translation)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }

    // dead-reckoned error grows with length (in expectation over seeds)
    double short_err = 0.0;
    double long_err = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const TrajectorySim t_short = generate_trajectory(seed, 20, cov);
        const TrajectorySim t_long = generate_trajectory(seed, 80, cov);
        short_err += (t_short.dead_reckoned.back().translation -
                      t_short.gt_poses.back().translation)
                         .norm();
        long_err += (t_long.dead_reckoned.back().translation -
                     t_long.gt_poses.back().translation)
                        .norm();
    }
    CHECK(long_err > short_err);
}

TEST_CASE("simulate_detections noise-free emits exact detections") {
    const WorldGT world = generate_world(5, 12, 2);
    const TrajectorySim traj =
        generate_trajectory(5, 30, Eigen::Matrix<double, 6, 6>::Zero());
    DetectorSim det;
    det.miss_prob = 0.0;
    det.clutter_rate = 0.0;
    det.point_noise = Eigen::Matrix3d::Zero();
    det.conf_correct_a = 50.0; // keep confidences above the floor
    det.conf_correct_b = 2.0;

    int total = 0;
    for (std::uint64_t f = 0; f < 30; ++f) {
        const Pose& pose = traj.gt_poses[f];
        const auto dets = simulate_detections(world, pose, det, 3, f);
        total += static_cast<int>(dets.size());

        // count visible objects by the same range/FOV rule
        int visible = 0;
        for (const auto& obj : world.objects) {
            const Eigen::Vector3d y = transform_to_frame(pose, obj.position);
            const double r = y.norm();
            if (r <= det.range &&
                std::acos(std::clamp(y.z() / r, -1.0, 1.0)) <= det.fov_half_angle) {
                ++visible;
            }
        }
        CHECK(static_cast<int>(dets.size()) == visible);
        for (const auto& d : dets) {
            CHECK(d.point_cam.z() > 0.0);
            // exact point: matches some object's true camera-frame position
            bool matched = false;
            for (const auto& obj : world.objects) {
                if ((transform_to_frame(pose, obj.position) - d.point_cam).norm() < 1e-12 &&
                    d.label == obj.category) {
                    matched = true;
                }
            }
            CHECK(matched);
        }
    }
    CHECK(total > 0);
}

TEST_CASE("deterministic confusion row maps every label") {
    WorldGT world;
    WorldObject obj;
    obj.id = 0;
    obj.position = {0.0, 0.0, 2.0};
    obj.category = "shoe";
    obj.descriptive = "red shoe";
    world.objects.push_back(obj);

    DetectorSim det;
    det.miss_prob = 0.0;
    det.clutter_rate = 0.0;
    det.point_noise = Eigen::Matrix3d::Zero();
    det.confusion.rows["shoe"] = {{"boot", 1.0}};
    det.conf_confused_a = 50.0;
    det.conf_confused_b = 2.0;

    const Pose cam = Pose::Identity();
    for (std::uint64_t f = 0; f < 50; ++f) {
        const auto dets = simulate_detections(world, cam, det, 9, f);
        REQUIRE(dets.size() == 1);
        CHECK(dets[0].label == "boot");
    }
}

TEST_CASE("miss probability one leaves only clutter") {
    const WorldGT world = generate_world(11, 10, 2);
    DetectorSim det;
    det.miss_prob = 1.0;
    det.clutter_rate = 2.0;
    det.conf_confused_a = 50.0;
    det.conf_confused_b = 2.0;
    const Pose cam = Pose::Identity();
    int clutter = 0;
    for (std::uint64_t f = 0; f < 40; ++f) {
        const auto dets = simulate_detections(world, cam, det, 1, f);
        clutter += static_cast<int>(dets.size());
        for (const auto& d : dets) CHECK_FALSE(d.extent.has_value());
    }
    CHECK(clutter > 20); // Poisson(2) over 40 frames
}

TEST_CASE("label confusion statistics match the table") {
    WorldGT world;
    WorldObject obj;
    obj.id = 0;
    obj.position = {0.0, 0.0, 2.0};
    obj.category = "teacup";
    obj.descriptive = "white teacup";
    world.objects.push_back(obj);

    DetectorSim det;
    det.miss_prob = 0.0;
    det.clutter_rate = 0.0;
    det.point_noise = Eigen::Matrix3d::Zero();
    det.confusion = LabelConfusionTable::with_confusers({"teacup"}, 0.2);
    det.min_confidence = 0.0; // keep every sample so the count is exact

    const Pose cam = Pose::Identity();
    const int n = 20000;
    int confused = 0;
    for (int f = 0; f < n; ++f) {
        const auto dets = simulate_detections(world, cam, det, 21, static_cast<std::uint64_t>(f));
        REQUIRE(dets.size() == 1);
        if (dets[0].label != "teacup") ++confused;
    }
    const double p = 0.2;
    const double sigma = std::sqrt(p * (1.0 - p) * n);
    CHECK(std::abs(confused - p * n) < 3.0 * sigma);
}

TEST_CASE("detection noise matches the configured covariance") {
    WorldGT world;
    WorldObject obj;
    obj.id = 0;
    obj.position = {0.3, -0.2, 2.0};
    obj.category = "vase";
    obj.descriptive = "blue vase";
    world.objects.push_back(obj);

    DetectorSim det;
    det.miss_prob = 0.0;
    det.clutter_rate = 0.0;
    det.min_confidence = 0.0;
    Eigen::Matrix3d gamma;
    gamma << 9e-4, 1e-4, 0.0, 1e-4, 6e-4, 0.0, 0.0, 0.0, 4e-4;
    det.point_noise = gamma;

    const Pose cam = Pose::Identity();
    const Eigen::Vector3d exact = transform_to_frame(cam, obj.position);
    const int n = 100000;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Matrix3d second = Eigen::Matrix3d::Zero();
    for (int f = 0; f < n; ++f) {
        const auto dets = simulate_detections(world, cam, det, 33, static_cast<std::uint64_t>(f));
        REQUIRE(dets.size() == 1);
        const Eigen::Vector3d e = dets[0].point_cam - exact;
        mean += e;
        second += e * e.transpose();
    }
    mean /= n;
    const Eigen::Matrix3d cov = second / n - mean * mean.transpose();
    CHECK((cov - gamma).norm() / gamma.norm() < 0.10);
}

TEST_CASE("apply_scene_change") {
    WorldGT world = generate_world(3, 8, 1);
    const int victim = 4;

    SceneChangeEvent ev;
    ev.frame = 10;
    ev.object_id = victim;
    ev.action = SceneChangeEvent::Action::Remove;
    apply_scene_change(world, ev);

    CHECK(world.find(victim)->active_at(9));
    CHECK_FALSE(world.find(victim)->active_at(10));
    CHECK_FALSE(world.find(victim)->active_at(30));

    SceneChangeEvent bad = ev;
    bad.object_id = 999;
    CHECK_THROWS_AS(apply_scene_change(world, bad), UnknownObject);

    // removed objects stop being detected
    DetectorSim det;
    det.miss_prob = 0.0;
    det.clutter_rate = 0.0;
    det.point_noise = Eigen::Matrix3d::Zero();
    det.min_confidence = 0.0;
    det.range = 50.0;
    det.fov_half_angle = M_PI; // everything visible
    const Pose cam(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, -6));
    const auto before = simulate_detections(world, cam, det, 2, 9);
    const auto after = simulate_detections(world, cam, det, 2, 10);
    CHECK(before.size() == after.size() + 1);

    // adding an object restores detections
    SceneChangeEvent add;
    add.frame = 20;
    add.object_id = 100;
    add.action = SceneChangeEvent::Action::Add;
    WorldObject replacement = *world.find(victim);
    replacement.id = 100;
    replacement.active_until.reset();
    add.added = replacement;
    apply_scene_change(world, add);
    CHECK(world.objects.size() == 9);
    const auto resumed = simulate_detections(world, cam, det, 2, 21);
    CHECK(resumed.size() == before.size());
}

TEST_CASE("scripted oracle verdicts at error rate zero") {
    WorldGT world;
    WorldObject cupboard;
    cupboard.id = 0;
    cupboard.position = {0.0, 0.0, 2.0};
    cupboard.category = "teacup";
    cupboard.descriptive = "white teacup";
    world.objects.push_back(cupboard);

    auto entry = [](int number, const Eigen::Vector3d& pos, const std::string& label) {
        OverlayEntry e;
        e.key = landmark_key(static_cast<std::uint32_t>(number));
        e.number = number;
        e.label = label;
        e.label_set = {label};
        e.world_pos = pos;
        e.box = {10, 10, 50, 50};
        return e;
    };

    SUBCASE("consistent landmark is left alone and gets a descriptive label") {
        CompositeSpec spec;
        spec.frame_id = 0;
        spec.entries = {entry(1, {0.0, 0.0, 2.0}, "teacup")};
        ScriptedOracle oracle(world);
        const EvalFeedback fb = parse_landmark_eval(*oracle.landmark_eval(spec, ""));
        CHECK(fb.is_empty());
        const GenFeedback gen = parse_class_label_gen(*oracle.class_label_gen(spec, ""));
        REQUIRE(gen.labels.count(1) == 1);
        CHECK(gen.labels.at(1) == std::vector<std::string>{"white teacup"});
    }

    SUBCASE("landmark far from every object is empty") {
        CompositeSpec spec;
        spec.frame_id = 0;
        spec.entries = {entry(1, {1.5, 0.0, 2.0}, "teacup")};
        ScriptedOracle oracle(world);
        const EvalFeedback fb = parse_landmark_eval(*oracle.landmark_eval(spec, ""));
        CHECK(fb.empty == std::vector<int>{1});
        // it never flags a landmark within the radius of an active object
        CompositeSpec near;
        near.frame_id = 0;
        near.entries = {entry(2, {0.1, 0.0, 2.0}, "teacup")};
        const EvalFeedback fb2 = parse_landmark_eval(*oracle.landmark_eval(near, ""));
        CHECK(fb2.empty.empty());
    }

    SUBCASE("landmark on a removed object becomes empty") {
        WorldGT changed = world;
        SceneChangeEvent ev;
        ev.frame = 5;
        ev.object_id = 0;
        ev.action = SceneChangeEvent::Action::Remove;
        apply_scene_change(changed, ev);
        ScriptedOracle oracle(changed);

        CompositeSpec spec;
        spec.frame_id = 6;
        spec.entries = {entry(1, {0.0, 0.0, 2.0}, "teacup")};
        const EvalFeedback fb = parse_landmark_eval(*oracle.landmark_eval(spec, ""));
        CHECK(fb.empty == std::vector<int>{1});
    }

    SUBCASE("mislabeled landmark is corrected to the category") {
        CompositeSpec spec;
        spec.frame_id = 0;
        spec.entries = {entry(1, {0.05, 0.0, 2.0}, "bowl")};
        ScriptedOracle oracle(world);
        const EvalFeedback fb = parse_landmark_eval(*oracle.landmark_eval(spec, ""));
        CHECK(fb.incorrect == std::vector<int>{1});
        CHECK(fb.corrected == std::vector<std::string>{"teacup"});
    }

    SUBCASE("two landmarks on one object form a duplicated group") {
        CompositeSpec spec;
        spec.frame_id = 0;
        spec.entries = {entry(1, {0.05, 0.0, 2.0}, "cup"),
                        entry(2, {-0.04, 0.0, 2.0}, "white teacup")};
        ScriptedOracle oracle(world);
        const EvalFeedback fb = parse_landmark_eval(*oracle.landmark_eval(spec, ""));
        REQUIRE(fb.duplicated.size() == 1);
        CHECK(fb.duplicated[0] == std::vector<int>{1, 2});
        CHECK(fb.precise_in_duplicated == std::vector<int>{2}); // descriptive label wins
        // generator only labels the precise member
        const GenFeedback gen = parse_class_label_gen(*oracle.class_label_gen(spec, ""));
        CHECK(gen.labels.count(2) == 1);
        CHECK(gen.labels.count(1) == 0);
    }

    SUBCASE("precise falls back to the lowest number without a descriptive match") {
        CompositeSpec spec;
        spec.frame_id = 0;
        spec.entries = {entry(3, {0.05, 0.0, 2.0}, "cup"), entry(4, {-0.04, 0.0, 2.0}, "mug")};
        ScriptedOracle oracle(world);
        const EvalFeedback fb = parse_landmark_eval(*oracle.landmark_eval(spec, ""));
        REQUIRE(fb.precise_in_duplicated.size() == 1);
        CHECK(fb.precise_in_duplicated[0] == 3);
    }
}

TEST_CASE("generate_dataset is deterministic") {
    SimOptions opts;
    opts.seed = 77;
    opts.n_objects = 12;
    opts.n_groups = 2;
    opts.n_frames = 20;
    const SimDataset a = generate_dataset(opts);
    const SimDataset b = generate_dataset(opts);
    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
        CHECK(a.frames[i].detections.size() == b.frames[i].detections.size());
        for (std::size_t j = 0; j < a.frames[i].detections.size(); ++j) {
            CHECK(a.frames[i].detections[j].label == b.frames[i].detections[j].label);
            CHECK((a.frames[i].detections[j].point_cam - b.frames[i].detections[j].point_cam)
                      .norm() == 0.0);
            CHECK(a.frames[i].detections[j].confidence == b.frames[i].detections[j].confidence);
        }
        CHECK((a.frames[i].odom_increment.rotation - b.frames[i].odom_increment.rotation)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
        CHECK((a.frames[i].odom_increment.translation -
               b.frames[i].odom_increment.translation)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
    CHECK(worlds_equal(a.world, b.world));

    // every detection respects the ingestion floor
    for (const auto& f : a.frames) {
        for (const auto& d : f.detections) {
            CHECK(d.confidence >= 0.5);
            CHECK(d.point_cam.z() > 0.0);
        }
    }
}

TEST_SUITE_END();
