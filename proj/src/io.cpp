#include "semslam/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "semslam/errors.hpp"

namespace semslam {

namespace {

using nlohmann::json;

const json& require_key(const json& j, const char* key, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaViolation(ctx + ": missing key '" + key + "'");
    return *it;
}

Eigen::Vector3d vec3_from(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.size() != 3) throw SchemaViolation(ctx + ": expected 3 floats");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

} // namespace

json frame_to_json(const Frame& frame) {
    const Twist dx = se3_log(frame.odom_increment);
    json cov = json::array();
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) cov.push_back(frame.odom_cov(r, c));
    }
    json dets = json::array();
    for (const auto& d : frame.detections) {
        json jd = {{"label", d.label},
                   {"conf", d.confidence},
                   {"box", json::array({static_cast<int>(std::lround(d.pixel_box.u_min)),
                                        static_cast<int>(std::lround(d.pixel_box.v_min)),
                                        static_cast<int>(std::lround(d.pixel_box.u_max)),
                                        static_cast<int>(std::lround(d.pixel_box.v_max))})},
                   {"point_cam", vec3_to(d.point_cam)}};
        if (d.extent) jd["extent"] = vec3_to(*d.extent);
        dets.push_back(std::move(jd));
    }
    return {{"frame", frame.id},
            {"t", frame.timestamp},
            {"odom", {{"dx", json::array({dx(0), dx(1), dx(2), dx(3), dx(4), dx(5)})},
                      {"cov", std::move(cov)}}},
            {"intrinsics",
             {{"fx", frame.intrinsics.fx},
              {"fy", frame.intrinsics.fy},
              {"cx", frame.intrinsics.cx},
              {"cy", frame.intrinsics.cy},
              {"w", frame.intrinsics.width},
              {"h", frame.intrinsics.height}}},
            {"detections", std::move(dets)}};
}

Frame frame_from_json(const json& j) {
    const std::string ctx =
        "frame " + (j.contains("frame") ? j["frame"].dump() : std::string("?"));
    Frame f;
    f.id = require_key(j, "frame", ctx).get<std::uint64_t>();
    f.timestamp = require_key(j, "t", ctx).get<double>();

    const json& odom = require_key(j, "odom", ctx);
    const json& dx = require_key(odom, "dx", ctx + ".odom");
    if (!dx.is_array() || dx.size() != 6) throw SchemaViolation(ctx + ": odom.dx needs 6 floats");
    Twist xi;
    for (int i = 0; i < 6; ++i) xi(i) = dx[i].get<double>();
    f.odom_increment = se3_exp(xi);
    const json& cov = require_key(odom, "cov", ctx + ".odom");
    if (!cov.is_array() || cov.size() != 36) {
        throw SchemaViolation(ctx + ": odom.cov needs 36 row-major floats");
    }
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) f.odom_cov(r, c) = cov[6 * r + c].get<double>();
    }

    const json& intr = require_key(j, "intrinsics", ctx);
    f.intrinsics.fx = require_key(intr, "fx", ctx + ".intrinsics").get<double>();
    f.intrinsics.fy = require_key(intr, "fy", ctx + ".intrinsics").get<double>();
    f.intrinsics.cx = require_key(intr, "cx", ctx + ".intrinsics").get<double>();
    f.intrinsics.cy = require_key(intr, "cy", ctx + ".intrinsics").get<double>();
    f.intrinsics.width = require_key(intr, "w", ctx + ".intrinsics").get<int>();
    f.intrinsics.height = require_key(intr, "h", ctx + ".intrinsics").get<int>();

    for (const json& jd : require_key(j, "detections", ctx)) {
        Detection d;
        d.label = require_key(jd, "label", ctx + ".detections").get<std::string>();
        d.confidence = require_key(jd, "conf", ctx + ".detections").get<double>();
        if (d.confidence < 0.0 || d.confidence > 1.0) {
            throw SchemaViolation(ctx + ": detection confidence out of [0, 1]");
        }
        const json& box = require_key(jd, "box", ctx + ".detections");
        if (!box.is_array() || box.size() != 4) {
            throw SchemaViolation(ctx + ": detection box needs 4 ints");
        }
        d.pixel_box = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
                       box[3].get<double>()};
        if (d.pixel_box.u_min > d.pixel_box.u_max || d.pixel_box.v_min > d.pixel_box.v_max) {
            throw SchemaViolation(ctx + ": detection box corners out of order");
        }
        d.point_cam = vec3_from(require_key(jd, "point_cam", ctx), ctx + ".point_cam");
        if (d.point_cam.z() <= 0.0) {
            throw SchemaViolation(ctx + ": detection point_cam must have z > 0");
        }
        if (jd.contains("extent")) d.extent = vec3_from(jd["extent"], ctx + ".extent");
        f.detections.push_back(std::move(d));
    }
    return f;
}

void write_dataset_jsonl(const std::string& path, const std::vector<Frame>& frames) {
    std::ofstream out(path);
    if (!out) throw SchemaViolation("cannot open for writing: " + path);
    for (const auto& f : frames) out << frame_to_json(f).dump() << '\n';
}

std::vector<Frame> read_dataset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaViolation("cannot open dataset: " + path);
    std::vector<Frame> frames;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaViolation("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            frames.push_back(frame_from_json(j));
        } catch (const json::exception& e) {
            throw SchemaViolation("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return frames;
}

json world_to_json(const WorldGT& world) {
    json objects = json::array();
    for (const auto& o : world.objects) {
        json jo = {{"id", o.id},
                   {"pos", vec3_to(o.position)},
                   {"extent", vec3_to(o.extent)},
                   {"category", o.category},
                   {"descriptive", o.descriptive},
                   {"active_until",
                    o.active_until ? json(*o.active_until) : json(nullptr)}};
        if (o.active_from != 0) jo["active_from"] = o.active_from;
        objects.push_back(std::move(jo));
    }
    json events = json::array();
    for (const auto& e : world.events) {
        json je = {{"frame", e.frame},
                   {"object_id", e.object_id},
                   {"action", e.action == SceneChangeEvent::Action::Remove ? "remove" : "add"}};
        events.push_back(std::move(je));
    }
    return {{"objects", std::move(objects)}, {"events", std::move(events)}};
}

WorldGT world_from_json(const json& j) {
    WorldGT world;
    for (const json& jo : require_key(j, "objects", "world")) {
        WorldObject o;
        o.id = require_key(jo, "id", "world.objects").get<int>();
        o.position = vec3_from(require_key(jo, "pos", "world.objects"), "world.objects.pos");
        o.extent =
            vec3_from(require_key(jo, "extent", "world.objects"), "world.objects.extent");
        if (o.extent.minCoeff() <= 0.0) {
            throw SchemaViolation("world object " + std::to_string(o.id) +
                                  ": extent must be positive");
        }
        o.category = require_key(jo, "category", "world.objects").get<std::string>();
        o.descriptive = require_key(jo, "descriptive", "world.objects").get<std::string>();
        const json& until = require_key(jo, "active_until", "world.objects");
        if (!until.is_null()) o.active_until = until.get<std::uint64_t>();
        if (jo.contains("active_from")) o.active_from = jo["active_from"].get<std::uint64_t>();
        world.objects.push_back(std::move(o));
    }
    if (j.contains("events")) {
        for (const json& je : j["events"]) {
            SceneChangeEvent e;
            e.frame = require_key(je, "frame", "world.events").get<std::uint64_t>();
            e.object_id = require_key(je, "object_id", "world.events").get<int>();
            const std::string action = require_key(je, "action", "world.events").get<std::string>();
            if (action == "remove") {
                e.action = SceneChangeEvent::Action::Remove;
            } else if (action == "add") {
                e.action = SceneChangeEvent::Action::Add;
            } else {
                throw SchemaViolation("world.events: unknown action " + action);
            }
            world.events.push_back(std::move(e));
        }
    }
    return world;
}

void write_world_json(const std::string& path, const WorldGT& world) {
    std::ofstream out(path);
    if (!out) throw SchemaViolation("cannot open for writing: " + path);
    out << world_to_json(world).dump(2) << '\n';
}

WorldGT read_world_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaViolation("cannot open world file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaViolation("world file " + path + ": " + e.what());
    }
    return world_from_json(j);
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectoryRecord>& records) {
    std::ofstream out(path);
    if (!out) throw SchemaViolation("cannot open for writing: " + path);
    out << "t,tx,ty,tz,qx,qy,qz,qw\n";
    for (const auto& r : records) {
        out << fmt9(r.t) << ',' << fmt9(r.translation.x()) << ',' << fmt9(r.translation.y())
            << ',' << fmt9(r.translation.z()) << ',' << fmt9(r.quaternion(0)) << ','
            << fmt9(r.quaternion(1)) << ',' << fmt9(r.quaternion(2)) << ','
            << fmt9(r.quaternion(3)) << '\n';
    }
}

std::vector<TrajectoryRecord> read_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaViolation("cannot open trajectory: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "t,tx,ty,tz,qx,qy,qz,qw") {
        throw SchemaViolation("trajectory " + path + ": bad or missing header");
    }
    std::vector<TrajectoryRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> vals;
        while (std::getline(ss, field, ',')) {
            try {
                vals.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw SchemaViolation("trajectory line " + std::to_string(line_no) +
                                      ": bad number '" + field + "'");
            }
        }
        if (vals.size() != 8) {
            throw SchemaViolation("trajectory line " + std::to_string(line_no) +
                                  ": expected 8 fields");
        }
        TrajectoryRecord r;
        r.t = vals[0];
        r.translation = {vals[1], vals[2], vals[3]};
        r.quaternion = {vals[4], vals[5], vals[6], vals[7]};
        if (std::abs(r.quaternion.norm() - 1.0) > 1e-6) {
            throw SchemaViolation("trajectory line " + std::to_string(line_no) +
                                  ": quaternion not normalized");
        }
        records.push_back(std::move(r));
    }
    return records;
}

json edit_log_to_json(const EditLog& log) {
    json out = json::array();
    for (const auto& e : log) {
        out.push_back({{"frame", e.frame_id},
                       {"action", to_string(e.action)},
                       {"landmark", e.landmark_index},
                       {"detail", e.detail}});
    }
    return out;
}

EditLog edit_log_from_json(const json& j) {
    EditLog log;
    for (const json& je : j) {
        EditLogEntry e;
        e.frame_id = require_key(je, "frame", "edit_log").get<std::uint64_t>();
        e.action = edit_action_from_string(
            require_key(je, "action", "edit_log").get<std::string>());
        e.landmark_index = require_key(je, "landmark", "edit_log").get<std::uint32_t>();
        e.detail = require_key(je, "detail", "edit_log").get<std::string>();
        log.push_back(std::move(e));
    }
    return log;
}

void write_edit_log_json(const std::string& path, const EditLog& log) {
    std::ofstream out(path);
    if (!out) throw SchemaViolation("cannot open for writing: " + path);
    out << edit_log_to_json(log).dump(2) << '\n';
}

namespace {

json confusion_to_json(const ConfusionExport& m) {
    json counts = json::array();
    for (const auto& row : m.counts) counts.push_back(row);
    return {{"labels", m.labels}, {"counts", std::move(counts)}};
}

ConfusionExport confusion_from_json(const json& j, const std::string& ctx) {
    ConfusionExport out;
    out.labels = require_key(j, "labels", ctx).get<std::vector<std::string>>();
    for (const json& row : require_key(j, "counts", ctx)) {
        out.counts.push_back(row.get<std::vector<std::int64_t>>());
        if (out.counts.back().size() != out.labels.size()) {
            throw SchemaViolation(ctx + ": counts matrix is not square");
        }
    }
    if (out.counts.size() != out.labels.size()) {
        throw SchemaViolation(ctx + ": counts matrix is not square");
    }
    return out;
}

} // namespace

json map_to_json(const MapExport& map) {
    json landmarks = json::array();
    for (const auto& lm : map.landmarks) {
        landmarks.push_back({{"id", lm.id},
                             {"position", vec3_to(lm.position)},
                             {"extent", vec3_to(lm.extent)},
                             {"label_set", lm.label_set},
                             {"primary_label", lm.primary_label},
                             {"status", to_string(lm.status)},
                             {"observation_count", lm.observation_count}});
    }
    return {{"landmarks", std::move(landmarks)},
            {"m_matrix", confusion_to_json(map.m_matrix)},
            {"d_matrix", confusion_to_json(map.d_matrix)},
            {"edit_log", edit_log_to_json(map.edit_log)}};
}

MapExport map_from_json(const json& j) {
    MapExport map;
    std::set<std::uint32_t> ids;
    for (const json& jl : require_key(j, "landmarks", "map")) {
        MapLandmark lm;
        lm.id = require_key(jl, "id", "map.landmarks").get<std::uint32_t>();
        if (!ids.insert(lm.id).second) {
            throw SchemaViolation("map.landmarks: duplicate id " + std::to_string(lm.id));
        }
        lm.position =
            vec3_from(require_key(jl, "position", "map.landmarks"), "map.landmarks.position");
        lm.extent = vec3_from(require_key(jl, "extent", "map.landmarks"), "map.landmarks.extent");
        lm.label_set =
            require_key(jl, "label_set", "map.landmarks").get<std::vector<std::string>>();
        lm.primary_label =
            require_key(jl, "primary_label", "map.landmarks").get<std::string>();
        lm.status = landmark_status_from_string(
            require_key(jl, "status", "map.landmarks").get<std::string>());
        lm.observation_count =
            require_key(jl, "observation_count", "map.landmarks").get<int>();
        map.landmarks.push_back(std::move(lm));
    }
    map.m_matrix = confusion_from_json(require_key(j, "m_matrix", "map"), "map.m_matrix");
    map.d_matrix = confusion_from_json(require_key(j, "d_matrix", "map"), "map.d_matrix");
    map.edit_log = edit_log_from_json(require_key(j, "edit_log", "map"));
    return map;
}

void write_map_json(const std::string& path, const MapExport& map) {
    std::ofstream out(path);
    if (!out) throw SchemaViolation("cannot open for writing: " + path);
    out << map_to_json(map).dump(2) << '\n';
}

MapExport read_map_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaViolation("cannot open map file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaViolation("map file " + path + ": " + e.what());
    }
    return map_from_json(j);
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig cfg;
    static const std::set<std::string> known = {
        "alpha",          "semantic_threshold", "supervision_interval",
        "max_overlays",   "oracle",             "relabel_margin",
        "duplicate_iou",  "duplicate_distance", "measurement_sigma",
        "prior_covariance", "min_observations", "kappa",
        "optimizer",      "oracle_timeout_s",   "error_rate",
        "seed"};
    static const std::set<std::string> known_opt = {"max_iterations", "relative_error_tol",
                                                    "update_norm_tol", "lambda0",
                                                    "lambda_max"};
    for (const auto& [key, value] : j.items()) {
        if (known.count(key) == 0) throw SchemaViolation("config: unknown key '" + key + "'");
    }
    if (j.contains("alpha")) cfg.association.alpha = j["alpha"].get<double>();
    if (j.contains("semantic_threshold")) {
        cfg.association.semantic_threshold = j["semantic_threshold"].get<double>();
    }
    if (j.contains("supervision_interval")) {
        cfg.supervision_interval = j["supervision_interval"].get<int>();
    }
    if (j.contains("max_overlays")) cfg.max_overlays = j["max_overlays"].get<std::size_t>();
    if (j.contains("oracle")) {
        cfg.oracle_mode = oracle_mode_from_string(j["oracle"].get<std::string>());
    }
    if (j.contains("relabel_margin")) cfg.relabel_margin = j["relabel_margin"].get<double>();
    if (j.contains("duplicate_iou")) cfg.duplicate_iou = j["duplicate_iou"].get<double>();
    if (j.contains("duplicate_distance")) {
        cfg.duplicate_distance = j["duplicate_distance"].get<double>();
    }
    if (j.contains("measurement_sigma")) {
        cfg.measurement_sigma = j["measurement_sigma"].get<double>();
    }
    if (j.contains("prior_covariance")) {
        cfg.prior_covariance = j["prior_covariance"].get<double>();
    }
    if (j.contains("min_observations")) cfg.min_observations = j["min_observations"].get<int>();
    if (j.contains("kappa")) cfg.kappa = j["kappa"].get<double>();
    if (j.contains("optimizer")) {
        const json& opt = j["optimizer"];
        for (const auto& [key, value] : opt.items()) {
            if (known_opt.count(key) == 0) {
                throw SchemaViolation("config.optimizer: unknown key '" + key + "'");
            }
        }
        if (opt.contains("max_iterations")) {
            cfg.optimizer.max_iterations = opt["max_iterations"].get<int>();
        }
        if (opt.contains("relative_error_tol")) {
            cfg.optimizer.relative_error_tol = opt["relative_error_tol"].get<double>();
        }
        if (opt.contains("update_norm_tol")) {
            cfg.optimizer.update_norm_tol = opt["update_norm_tol"].get<double>();
        }
        if (opt.contains("lambda0")) cfg.optimizer.lambda0 = opt["lambda0"].get<double>();
        if (opt.contains("lambda_max")) cfg.optimizer.lambda_max = opt["lambda_max"].get<double>();
    }
    if (j.contains("oracle_timeout_s")) cfg.oracle_timeout_s = j["oracle_timeout_s"].get<double>();
    if (j.contains("error_rate")) cfg.error_rate = j["error_rate"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();

    if (cfg.association.alpha <= 0.0 || cfg.association.alpha >= 1.0) {
        throw SchemaViolation("config: alpha must be in (0, 1)");
    }
    if (cfg.association.semantic_threshold < -1.0 || cfg.association.semantic_threshold > 1.0) {
        throw SchemaViolation("config: semantic_threshold must be in [-1, 1]");
    }
    if (cfg.measurement_sigma <= 0.0) {
        throw SchemaViolation("config: measurement_sigma must be positive");
    }
    return cfg;
}

json config_to_json(const PipelineConfig& cfg) {
    return {{"alpha", cfg.association.alpha},
            {"semantic_threshold", cfg.association.semantic_threshold},
            {"supervision_interval", cfg.supervision_interval},
            {"max_overlays", cfg.max_overlays},
            {"oracle", to_string(cfg.oracle_mode)},
            {"relabel_margin", cfg.relabel_margin},
            {"duplicate_iou", cfg.duplicate_iou},
            {"duplicate_distance", cfg.duplicate_distance},
            {"measurement_sigma", cfg.measurement_sigma},
            {"prior_covariance", cfg.prior_covariance},
            {"min_observations", cfg.min_observations},
            {"kappa", cfg.kappa},
            {"optimizer",
             {{"max_iterations", cfg.optimizer.max_iterations},
              {"relative_error_tol", cfg.optimizer.relative_error_tol},
              {"update_norm_tol", cfg.optimizer.update_norm_tol},
              {"lambda0", cfg.optimizer.lambda0},
              {"lambda_max", cfg.optimizer.lambda_max}}},
            {"oracle_timeout_s", cfg.oracle_timeout_s},
            {"error_rate", cfg.error_rate},
            {"seed", cfg.seed}};
}

PipelineConfig read_config_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaViolation("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaViolation("config file " + path + ": " + e.what());
    }
    return config_from_json(j);
}

} // namespace semslam
