#include "semslam/simulator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <set>

#include "semslam/errors.hpp"

namespace semslam {

// ---- deterministic sampling -------------------------------------------------

SimRng::SimRng(std::uint64_t seed) : state_(seed) {}

std::uint64_t SimRng::next_u64() {
    // splitmix64
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t SimRng::mix(std::uint64_t seed, std::uint64_t stream) {
    SimRng r(seed ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
    return r.next_u64();
}

double SimRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SimRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SimRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
}

int SimRng::poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= uniform();
    } while (p > limit);
    return k - 1;
}

double SimRng::gamma(double shape) {
    // Marsaglia-Tsang; valid for shape >= 1
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double SimRng::beta(double a, double b) {
    const double ga = gamma(a);
    const double gb = gamma(b);
    return ga / (ga + gb);
}

int SimRng::uniform_int(int lo, int hi) {
    const int span = hi - lo + 1;
    int v = lo + static_cast<int>(uniform() * span);
    return std::min(v, hi);
}

// ---- world ------------------------------------------------------------------

const WorldObject* WorldGT::find(int id) const {
    for (const auto& o : objects) {
        if (o.id == id) return &o;
    }
    return nullptr;
}

std::vector<const WorldObject*> WorldGT::active_objects(std::uint64_t frame) const {
    std::vector<const WorldObject*> out;
    for (const auto& o : objects) {
        if (o.active_at(frame)) out.push_back(&o);
    }
    return out;
}

std::vector<std::string> WorldGT::categories() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& o : objects) {
        if (seen.insert(o.category).second) out.push_back(o.category);
    }
    return out;
}

namespace {

const std::vector<std::string>& category_pool() {
    static const std::vector<std::string> pool = {
        "shoe",   "teacup",   "book",    "chair",  "bottle", "bag",     "fan",
        "banana", "vase",     "bin",     "football", "snowman", "helmet", "scissors",
        "flower", "racquet",  "monitor", "cup",    "apple",  "bowl",    "hammer",
        "lamp",   "keyboard", "plant",   "clock"};
    return pool;
}

const std::vector<std::string>& color_pool() {
    static const std::vector<std::string> pool = {"red",    "blue",  "green", "white", "black",
                                                  "yellow", "gray",  "brown", "orange",
                                                  "purple"};
    return pool;
}

Eigen::Vector3d sample_room_point(SimRng& rng) {
    // disc inside the 6 x 6 x 1 m room, kept within camera reach
    const double r = 2.4 * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    return {r * std::cos(phi), r * std::sin(phi), rng.uniform(0.15, 0.85)};
}

Eigen::Vector3d sample_extent(SimRng& rng) {
    return {rng.uniform(0.12, 0.28), rng.uniform(0.12, 0.28), rng.uniform(0.12, 0.28)};
}

} // namespace

WorldGT generate_world(std::uint64_t seed, int n_objects, int n_groups) {
    if (n_objects < 2 * n_groups) {
        throw Error("generate_world: need at least two objects per same-category group");
    }
    SimRng rng(SimRng::mix(seed, 17));
    WorldGT world;

    // shuffled category order, deterministic in the seed
    std::vector<std::string> cats = category_pool();
    for (std::size_t i = cats.size(); i > 1; --i) {
        std::swap(cats[i - 1], cats[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }

    std::vector<Eigen::Vector3d> centers;
    auto place_center = [&](double min_sep) {
        for (int attempt = 0; attempt < 400; ++attempt) {
            const Eigen::Vector3d p = sample_room_point(rng);
            bool ok = true;
            for (const auto& c : centers) {
                if ((p - c).head<2>().norm() < min_sep) {
                    ok = false;
                    break;
                }
            }
            if (ok || attempt == 399) {
                centers.push_back(p);
                return p;
            }
        }
        return centers.back();
    };

    int id = 0;
    int remaining = n_objects;
    std::size_t cat_at = 0;

    for (int g = 0; g < n_groups; ++g) {
        const int spare = remaining - 2 * (n_groups - g);
        const int size = (spare >= 1 && rng.uniform() < 0.5) ? 3 : 2;
        remaining -= size;
        const std::string category = cats[cat_at++ % cats.size()];
        const Eigen::Vector3d center = place_center(1.1);

        const double ring = rng.uniform(0.17, 0.24);
        std::vector<int> colors;
        while (static_cast<int>(colors.size()) < size) {
            const int c = rng.uniform_int(0, static_cast<int>(color_pool().size()) - 1);
            if (std::find(colors.begin(), colors.end(), c) == colors.end()) colors.push_back(c);
        }
        for (int m = 0; m < size; ++m) {
            const double ang = 2.0 * M_PI * m / size + rng.uniform(0.0, 0.3);
            WorldObject obj;
            obj.id = id++;
            obj.position = center + Eigen::Vector3d(ring * std::cos(ang), ring * std::sin(ang),
                                                    rng.uniform(-0.05, 0.05));
            obj.extent = sample_extent(rng);
            obj.category = category;
            obj.descriptive = color_pool()[colors[m]] + " " + category;
            world.objects.push_back(obj);
        }
    }

    while (remaining > 0) {
        --remaining;
        const std::string category = cats[cat_at++ % cats.size()];
        WorldObject obj;
        obj.id = id++;
        obj.position = place_center(0.8);
        obj.extent = sample_extent(rng);
        obj.category = category;
        obj.descriptive =
            color_pool()[rng.uniform_int(0, static_cast<int>(color_pool().size()) - 1)] + " " +
            category;
        world.objects.push_back(obj);
    }
    return world;
}

void apply_scene_change(WorldGT& world, const SceneChangeEvent& event) {
    if (event.action == SceneChangeEvent::Action::Remove) {
        for (auto& o : world.objects) {
            if (o.id == event.object_id) {
                o.active_until = event.frame;
                world.events.push_back(event);
                return;
            }
        }
        throw UnknownObject("apply_scene_change: no object with id " +
                            std::to_string(event.object_id));
    }
    if (!event.added) throw Error("apply_scene_change: Add event without an object");
    WorldObject obj = *event.added;
    obj.active_from = event.frame;
    world.objects.push_back(obj);
    world.events.push_back(event);
}

// ---- trajectory ---------------------------------------------------------------

namespace {

// Camera axes in world coordinates: z forward, y down in the image.
Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
    if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = forward;
    return Pose(r, eye);
}

} // namespace

TrajectorySim generate_trajectory(std::uint64_t seed, int n_frames,
                                  const Eigen::Matrix<double, 6, 6>& odom_noise) {
    if (n_frames < 2) throw Error("generate_trajectory: need at least 2 frames");
    SimRng rng(SimRng::mix(seed, 23));

    TrajectorySim out;
    const double radius = 2.3;
    for (int i = 0; i < n_frames; ++i) {
        const double theta = 2.0 * M_PI * i / n_frames;
        const Eigen::Vector3d eye(radius * std::cos(theta), radius * std::sin(theta), 0.5);
        out.gt_poses.push_back(look_at(eye, Eigen::Vector3d(0.0, 0.0, 0.5)));
    }

    Eigen::Matrix<double, 6, 6> l = Eigen::Matrix<double, 6, 6>::Zero();
    const bool noisy = odom_noise.norm() > 0.0;
    if (noisy) {
        Eigen::LLT<Eigen::Matrix<double, 6, 6>> llt(odom_noise);
        if (llt.info() != Eigen::Success) {
            throw Error("generate_trajectory: odometry noise covariance must be PSD");
        }
        l = llt.matrixL();
    }

    for (int i = 0; i < n_frames; ++i) {
        Pose increment;
        if (i == 0) {
            increment = out.gt_poses[0]; // origin -> first pose, exact
        } else {
            increment = out.gt_poses[i - 1].inverse() * out.gt_poses[i];
            if (noisy) {
                Twist eps;
                for (int k = 0; k < 6; ++k) eps(k) = rng.normal();
                increment = increment * se3_exp(l * eps);
            }
        }
        out.odom_increments.push_back(increment);
        out.dead_reckoned.push_back(i == 0 ? increment : out.dead_reckoned.back() * increment);
    }
    return out;
}

// ---- detector -----------------------------------------------------------------

LabelConfusionTable LabelConfusionTable::identity() { return {}; }

namespace {

std::string confuser_for(const std::string& category) {
    static const std::map<std::string, std::string> aliases = {
        {"shoe", "boot"},        {"teacup", "cup"},    {"book", "notebook"},
        {"chair", "stool"},      {"bottle", "jar"},    {"bag", "sack"},
        {"fan", "propeller"},    {"banana", "plantain"}, {"vase", "jar"},
        {"bin", "basket"},       {"football", "ball"}, {"snowman", "doll"},
        {"helmet", "hat"},       {"scissors", "shears"}, {"flower", "plant"},
        {"racquet", "paddle"},   {"monitor", "screen"}, {"cup", "mug"},
        {"apple", "pear"},       {"bowl", "dish"},     {"hammer", "mallet"},
        {"lamp", "lantern"},     {"keyboard", "piano"}, {"plant", "bush"},
        {"clock", "dial"}};
    auto it = aliases.find(category);
    return it == aliases.end() ? category + " like object" : it->second;
}

} // namespace

LabelConfusionTable LabelConfusionTable::with_confusers(
    const std::vector<std::string>& categories, double rate) {
    LabelConfusionTable table;
    for (const auto& c : categories) {
        table.rows[c] = {{c, 1.0 - rate}, {confuser_for(c), rate}};
    }
    return table;
}

const std::string& LabelConfusionTable::sample(const std::string& true_label, double u) const {
    auto it = rows.find(true_label);
    if (it == rows.end()) return true_label;
    double acc = 0.0;
    for (const auto& [label, p] : it->second) {
        acc += p;
        if (u < acc) return label;
    }
    return it->second.back().first;
}

double LabelConfusionTable::prob(const std::string& true_label,
                                 const std::string& observed) const {
    auto it = rows.find(true_label);
    if (it == rows.end()) return observed == true_label ? 1.0 : 0.0;
    for (const auto& [label, p] : it->second) {
        if (label == observed) return p;
    }
    return 0.0;
}

std::vector<Detection> simulate_detections(const WorldGT& world, const Pose& gt_pose,
                                           const DetectorSim& det, std::uint64_t seed,
                                           std::uint64_t frame) {
    SimRng rng(SimRng::mix(seed, SimRng::mix(frame, 5)));
    std::vector<Detection> out;

    Eigen::Matrix3d l = Eigen::Matrix3d::Zero();
    const bool noisy = det.point_noise.norm() > 0.0;
    if (noisy) {
        Eigen::LLT<Eigen::Matrix3d> llt(det.point_noise);
        if (llt.info() != Eigen::Success) {
            throw Error("simulate_detections: point noise covariance must be PSD");
        }
        l = llt.matrixL();
    }

    auto make_box = [&](const Eigen::Vector3d& point_cam, const Eigen::Vector3d& extent) {
        PixelBox box;
        const auto px = project_pinhole(det.intrinsics, point_cam);
        if (!px) return box;
        const double s = 0.5 * extent.maxCoeff();
        const double du = det.intrinsics.fx * s / point_cam.z();
        const double dv = det.intrinsics.fy * s / point_cam.z();
        box = clip_box({px->x() - du, px->y() - dv, px->x() + du, px->y() + dv},
                       det.intrinsics.width, det.intrinsics.height);
        return box;
    };

    for (const auto& obj : world.objects) {
        if (!obj.active_at(frame)) continue;
        const Eigen::Vector3d y = transform_to_frame(gt_pose, obj.position);
        const double range = y.norm();
        if (range < 1e-6 || range > det.range) continue;
        if (std::acos(std::clamp(y.z() / range, -1.0, 1.0)) > det.fov_half_angle) continue;
        if (rng.uniform() < det.miss_prob) continue;

        Eigen::Vector3d noise = Eigen::Vector3d::Zero();
        if (noisy) {
            Eigen::Vector3d n(rng.normal(), rng.normal(), rng.normal());
            noise = l * n;
        }
        const Eigen::Vector3d point = y + noise;
        if (point.z() <= 0.05) continue;

        Detection d;
        d.label = det.confusion.sample(obj.category, rng.uniform());
        const bool correct = d.label == obj.category;
        d.confidence = correct ? rng.beta(det.conf_correct_a, det.conf_correct_b)
                               : rng.beta(det.conf_confused_a, det.conf_confused_b);
        d.point_cam = point;
        d.extent = obj.extent;
        d.pixel_box = make_box(point, obj.extent);
        if (d.confidence < det.min_confidence) continue;
        out.push_back(std::move(d));
    }

    // clutter: spurious detections at uniform in-view points, in-vocabulary labels
    const std::vector<std::string> vocab = world.categories();
    const int n_clutter = rng.poisson(det.clutter_rate);
    for (int i = 0; i < n_clutter && !vocab.empty(); ++i) {
        const double z = rng.uniform(0.5, 0.8 * det.range);
        const double spread = std::tan(det.fov_half_angle) * z;
        Eigen::Vector3d point(rng.uniform(-spread, spread) * 0.8,
                              rng.uniform(-spread, spread) * 0.4, z);
        Detection d;
        d.label = vocab[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(vocab.size()) - 1))];
        d.confidence = rng.beta(det.conf_confused_a, det.conf_confused_b);
        d.point_cam = point;
        d.pixel_box = make_box(point, Eigen::Vector3d::Constant(0.2));
        if (d.confidence < det.min_confidence) continue;
        out.push_back(std::move(d));
    }
    return out;
}

// ---- scripted oracle ------------------------------------------------------------

ScriptedOracle::ScriptedOracle(const WorldGT& world, double error_rate, std::uint64_t seed,
                               double match_radius)
    : world_(&world), error_rate_(error_rate), seed_(seed), match_radius_(match_radius) {}

ScriptedOracle::Verdicts ScriptedOracle::judge(const CompositeSpec& spec) const {
    Verdicts v;
    const auto active = world_->active_objects(spec.frame_id);

    struct Assigned {
        const OverlayEntry* entry;
        const WorldObject* object; // nullptr: empty verdict
    };
    std::vector<Assigned> assigned;
    for (const auto& entry : spec.entries) {
        const WorldObject* nearest = nullptr;
        double best = match_radius_;
        for (const auto* obj : active) {
            const double dist = (entry.world_pos - obj->position).norm();
            if (dist <= best) {
                best = dist;
                nearest = obj;
            }
        }
        assigned.push_back({&entry, nearest});
    }

    // duplicated groups: entries sharing a nearest object
    std::map<int, std::vector<const OverlayEntry*>> by_object;
    for (const auto& a : assigned) {
        if (a.object != nullptr) by_object[a.object->id].push_back(a.entry);
    }
    std::set<int> grouped_numbers;
    for (const auto& [obj_id, entries] : by_object) {
        if (entries.size() < 2) continue;
        const WorldObject* obj = world_->find(obj_id);
        std::vector<int> numbers;
        for (const auto* e : entries) numbers.push_back(e->number);
        std::sort(numbers.begin(), numbers.end());

        int precise = numbers.front();
        for (const auto* e : entries) {
            if (e->label == obj->descriptive) {
                precise = e->number;
                break;
            }
        }
        for (int n : numbers) grouped_numbers.insert(n);
        v.eval.duplicated.push_back(numbers);
        v.eval.precise_in_duplicated.push_back(precise);
        v.gen.labels[precise] = {obj->descriptive};
    }

    for (const auto& a : assigned) {
        if (grouped_numbers.count(a.entry->number) > 0) continue;
        if (a.object == nullptr) {
            v.eval.empty.push_back(a.entry->number);
            continue;
        }
        const bool matches = std::any_of(
            a.entry->label_set.begin(), a.entry->label_set.end(), [&](const std::string& l) {
                return l == a.object->category || l == a.object->descriptive;
            });
        if (!matches) {
            v.eval.incorrect.push_back(a.entry->number);
            v.eval.corrected.push_back(a.object->category);
        } else {
            v.gen.labels[a.entry->number] = {a.object->descriptive};
        }
    }
    return v;
}

std::optional<std::string> ScriptedOracle::landmark_eval(const CompositeSpec& spec,
                                                         const std::string&) {
    Verdicts v = judge(spec);
    if (error_rate_ > 0.0) {
        SimRng rng(SimRng::mix(seed_, SimRng::mix(spec.frame_id, 101)));
        const std::vector<std::string> vocab = world_->categories();
        EvalFeedback corrupted;
        for (int n : v.eval.empty) {
            if (rng.uniform() < error_rate_) {
                if (rng.uniform() < 0.5) continue; // dropped
                corrupted.incorrect.push_back(n);
                corrupted.corrected.push_back(
                    vocab[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(vocab.size()) - 1))]);
                continue;
            }
            corrupted.empty.push_back(n);
        }
        for (std::size_t i = 0; i < v.eval.incorrect.size(); ++i) {
            if (rng.uniform() < error_rate_) {
                if (rng.uniform() < 0.5) continue;
                corrupted.empty.push_back(v.eval.incorrect[i]);
                continue;
            }
            corrupted.incorrect.push_back(v.eval.incorrect[i]);
            corrupted.corrected.push_back(v.eval.corrected[i]);
        }
        for (std::size_t g = 0; g < v.eval.duplicated.size(); ++g) {
            if (rng.uniform() < error_rate_) continue; // group dropped
            corrupted.duplicated.push_back(v.eval.duplicated[g]);
            corrupted.precise_in_duplicated.push_back(v.eval.precise_in_duplicated[g]);
        }
        v.eval = std::move(corrupted);
    }
    return render_landmark_eval_response(v.eval);
}

std::optional<std::string> ScriptedOracle::class_label_gen(const CompositeSpec& spec,
                                                           const std::string&) {
    Verdicts v = judge(spec);
    if (error_rate_ > 0.0) {
        SimRng rng(SimRng::mix(seed_, SimRng::mix(spec.frame_id, 202)));
        GenFeedback corrupted;
        for (const auto& [number, labels] : v.gen.labels) {
            if (rng.uniform() < error_rate_) {
                if (rng.uniform() < 0.5) continue; // dropped
                corrupted.labels[number] = {"odd " + labels.front()};
                continue;
            }
            corrupted.labels[number] = labels;
        }
        v.gen = std::move(corrupted);
    }
    return render_class_label_gen_response(v.gen);
}

// ---- dataset ------------------------------------------------------------------

SimDataset generate_dataset(const SimOptions& opts) {
    SimDataset data;
    data.world = generate_world(opts.seed, opts.n_objects, opts.n_groups);
    if (opts.remove_event) {
        SceneChangeEvent ev;
        ev.frame = opts.remove_event->first;
        ev.object_id = opts.remove_event->second;
        ev.action = SceneChangeEvent::Action::Remove;
        apply_scene_change(data.world, ev);
    }

    Eigen::Matrix<double, 6, 6> odom_cov = Eigen::Matrix<double, 6, 6>::Zero();
    odom_cov.topLeftCorner<3, 3>() =
        opts.odom_sigma_rot * opts.odom_sigma_rot * Eigen::Matrix3d::Identity();
    odom_cov.bottomRightCorner<3, 3>() =
        opts.odom_sigma_trans * opts.odom_sigma_trans * Eigen::Matrix3d::Identity();

    const TrajectorySim traj =
        generate_trajectory(SimRng::mix(opts.seed, 1), opts.n_frames, odom_cov);
    data.gt_poses = traj.gt_poses;
    data.odom_poses = traj.dead_reckoned;

    DetectorSim det;
    det.range = opts.detection_range;
    det.fov_half_angle = opts.fov_half_angle;
    det.miss_prob = opts.miss_prob;
    det.clutter_rate = opts.clutter_rate;
    det.point_noise = opts.point_sigma * opts.point_sigma * Eigen::Matrix3d::Identity();
    det.confusion = opts.confusion_rate > 0.0
                        ? LabelConfusionTable::with_confusers(data.world.categories(),
                                                              opts.confusion_rate)
                        : LabelConfusionTable::identity();
    det.intrinsics = opts.intrinsics;

    // factor noise stays PD even for noise-free datasets
    const Eigen::Matrix<double, 6, 6> file_cov =
        odom_cov + 1e-10 * Eigen::Matrix<double, 6, 6>::Identity();

    for (int i = 0; i < opts.n_frames; ++i) {
        Frame f;
        f.id = static_cast<std::uint64_t>(i);
        f.timestamp = 0.1 * i;
        f.odom_increment = traj.odom_increments[static_cast<std::size_t>(i)];
        f.odom_cov = file_cov;
        f.detections = simulate_detections(data.world, traj.gt_poses[static_cast<std::size_t>(i)],
                                           det, SimRng::mix(opts.seed, 2), f.id);
        f.intrinsics = opts.intrinsics;
        data.frames.push_back(std::move(f));
    }
    return data;
}

} // namespace semslam
