#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>

#include "semslam/errors.hpp"
#include "semslam/io.hpp"
#include "semslam/pipeline.hpp"
#include "semslam/simulator.hpp"

namespace {

using namespace semslam;
namespace fs = std::filesystem;

int cmd_sim(const SimOptions& opts, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const SimDataset data = generate_dataset(opts);

    write_dataset_jsonl(out_dir + "/dataset.jsonl", data.frames);
    write_world_json(out_dir + "/world.json", data.world);

    std::vector<TrajectoryRecord> gt;
    std::vector<TrajectoryRecord> odom;
    for (std::size_t i = 0; i < data.gt_poses.size(); ++i) {
        gt.push_back(pose_to_record(data.frames[i].timestamp, data.gt_poses[i]));
        odom.push_back(pose_to_record(data.frames[i].timestamp, data.odom_poses[i]));
    }
    write_trajectory_csv(out_dir + "/gt_traj.csv", gt);
    write_trajectory_csv(out_dir + "/odom_traj.csv", odom);

    std::cout << "wrote " << data.frames.size() << " frames, " << data.world.objects.size()
              << " objects to " << out_dir << "\n";
    return 0;
}

int cmd_run(const std::string& dataset_path, const std::string& config_path,
            const std::string& oracle_name, const std::string& oracle_url,
            const std::string& world_path, double error_rate,
            std::optional<std::uint64_t> seed, const std::string& out_map,
            const std::string& out_traj, const std::string& edit_log_path) {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = read_config_json(config_path);
    if (!oracle_name.empty()) cfg.oracle_mode = oracle_mode_from_string(oracle_name);
    if (error_rate >= 0.0) cfg.error_rate = error_rate;
    if (seed) cfg.seed = *seed;

    const std::vector<Frame> frames = read_dataset_jsonl(dataset_path);

    std::shared_ptr<Oracle> oracle;
    WorldGT world; // must outlive the scripted oracle
    if (cfg.oracle_mode == OracleMode::Scripted) {
        std::string wp = world_path;
        if (wp.empty()) wp = (fs::path(dataset_path).parent_path() / "world.json").string();
        world = read_world_json(wp);
        oracle = std::make_shared<ScriptedOracle>(world, cfg.error_rate, cfg.seed);
    } else if (cfg.oracle_mode == OracleMode::Http) {
        if (oracle_url.empty()) {
            throw SchemaViolation("run: --oracle-url is required with --oracle http");
        }
        oracle = std::make_shared<HttpOracle>(oracle_url, cfg.oracle_timeout_s);
    }

    const RunResult result = run_pipeline(frames, cfg, oracle);

    if (!out_map.empty()) write_map_json(out_map, result.map);
    if (!out_traj.empty()) write_trajectory_csv(out_traj, result.trajectory);
    if (!edit_log_path.empty()) write_edit_log_json(edit_log_path, result.edit_log);

    std::cout << "processed " << result.trajectory.size() << " frames, exported "
              << result.map.landmarks.size() << " landmarks, " << result.edit_log.size()
              << " edits";
    if (result.oracle_skips > 0) std::cout << ", " << result.oracle_skips << " oracle skips";
    std::cout << "\n";
    return 0;
}

int cmd_eval(const std::string& map_path, const std::string& world_path,
             const std::string& traj_path, const std::string& gt_traj_path,
             double match_dist, const std::string& semantic_rule, double tau, bool json_out) {
    MatchConfig match;
    match.distance_threshold = match_dist;
    if (semantic_rule == "embedding") {
        match.rule = MatchConfig::SemanticRule::Embedding;
        match.embedding_tau = tau;
    } else if (semantic_rule != "exact") {
        throw SchemaViolation("eval: --semantic-rule must be exact or embedding");
    }

    nlohmann::json out;
    out["match"] = {{"distance_threshold", match.distance_threshold},
                    {"semantic_rule", semantic_rule},
                    {"embedding_tau", tau}};

    if (!map_path.empty() && !world_path.empty()) {
        const MapExport map = read_map_json(map_path);
        const WorldGT world = read_world_json(world_path);
        const PrfResult prf = landmark_prf(map, world, match);
        out["landmarks"] = {{"precision", prf.precision}, {"recall", prf.recall},
                            {"f1", prf.f1},               {"est", prf.est_count},
                            {"true_pos", prf.true_pos},   {"false_pos", prf.false_pos},
                            {"false_neg", prf.false_neg}, {"gt", prf.gt_count}};
    }
    if (!traj_path.empty() && !gt_traj_path.empty()) {
        const auto est = read_trajectory_csv(traj_path);
        const auto gt = read_trajectory_csv(gt_traj_path);
        const ApeStats stats = ape(est, gt);
        out["ape"] = {{"rmse", stats.rmse},
                      {"mean", stats.mean},
                      {"median", stats.median},
                      {"max", stats.max_error}};
    }
    if (!out.contains("landmarks") && !out.contains("ape")) {
        throw SchemaViolation("eval: need --map/--world and/or --traj/--gt-traj");
    }

    if (json_out) {
        std::cout << out.dump() << "\n";
    } else {
        if (out.contains("landmarks")) {
            const auto& l = out["landmarks"];
            std::cout << "landmarks: P=" << l["precision"].get<double>()
                      << " R=" << l["recall"].get<double>() << " F1=" << l["f1"].get<double>()
                      << " est=" << l["est"].get<int>() << " fp=" << l["false_pos"].get<int>()
                      << " gt=" << l["gt"].get<int>() << "\n";
        }
        if (out.contains("ape")) {
            const auto& a = out["ape"];
            std::cout << "ape: rmse=" << a["rmse"].get<double>()
                      << " mean=" << a["mean"].get<double>()
                      << " median=" << a["median"].get<double>()
                      << " max=" << a["max"].get<double>() << "\n";
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"semantic object SLAM pipeline"};
    app.require_subcommand(1);

    // sim
    auto* sim = app.add_subcommand("sim", "generate a synthetic dataset");
    SimOptions sim_opts;
    std::string sim_out = "sim_out";
    std::uint64_t remove_frame = 0;
    int remove_object = -1;
    sim->add_option("--seed", sim_opts.seed, "rng seed");
    sim->add_option("--objects", sim_opts.n_objects, "object count");
    sim->add_option("--groups", sim_opts.n_groups, "same-category group count");
    sim->add_option("--frames", sim_opts.n_frames, "frame count");
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_option("--odom-sigma-rot", sim_opts.odom_sigma_rot, "odometry rotation noise, rad");
    sim->add_option("--odom-sigma-trans", sim_opts.odom_sigma_trans,
                    "odometry translation noise, m");
    sim->add_option("--point-sigma", sim_opts.point_sigma, "detection point noise, m");
    sim->add_option("--miss", sim_opts.miss_prob, "per-object miss probability");
    sim->add_option("--clutter", sim_opts.clutter_rate, "false detections per frame");
    sim->add_option("--confusion", sim_opts.confusion_rate, "label confusion rate");
    sim->add_option("--range", sim_opts.detection_range, "detector range, m");
    sim->add_option("--fov", sim_opts.fov_half_angle, "detector half FOV, rad");
    sim->add_option("--remove-object", remove_object, "object id removed mid-run");
    sim->add_option("--remove-frame", remove_frame, "frame of the removal");

    // run
    auto* run = app.add_subcommand("run", "run the pipeline over a dataset");
    std::string run_dataset, run_config, run_oracle = "none", run_url, run_world;
    std::string run_out_map, run_out_traj, run_edit_log;
    double run_error_rate = -1.0;
    std::uint64_t run_seed = 0;
    run->add_option("--dataset", run_dataset, "dataset JSONL")->required();
    run->add_option("--config", run_config, "pipeline config JSON");
    run->add_option("--oracle", run_oracle, "scripted | http | none");
    run->add_option("--oracle-url", run_url, "http oracle base url");
    run->add_option("--world", run_world, "world JSON for the scripted oracle");
    run->add_option("--error-rate", run_error_rate, "scripted oracle corruption rate");
    run->add_option("--seed", run_seed, "oracle corruption seed");
    run->add_option("--out-map", run_out_map, "map export path");
    run->add_option("--out-traj", run_out_traj, "trajectory export path");
    run->add_option("--edit-log", run_edit_log, "edit log export path");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a map and/or trajectory");
    std::string eval_map, eval_world, eval_traj, eval_gt_traj, eval_rule = "exact";
    double eval_dist = 0.3, eval_tau = 0.6;
    bool eval_json = false;
    eval->add_option("--map", eval_map, "map export JSON");
    eval->add_option("--world", eval_world, "world ground-truth JSON");
    eval->add_option("--traj", eval_traj, "estimated trajectory CSV");
    eval->add_option("--gt-traj", eval_gt_traj, "ground-truth trajectory CSV");
    eval->add_option("--match-dist", eval_dist, "landmark match distance, m");
    eval->add_option("--semantic-rule", eval_rule, "exact | embedding");
    eval->add_option("--embedding-tau", eval_tau, "similarity cutoff for embedding rule");
    eval->add_flag("--json", eval_json, "emit one JSON metrics object");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim->parsed()) {
            if (remove_object >= 0) {
                sim_opts.remove_event = {{remove_frame, remove_object}};
            }
            return cmd_sim(sim_opts, sim_out);
        }
        if (run->parsed()) {
            std::optional<std::uint64_t> seed;
            if (run->count("--seed") > 0) seed = run_seed;
            return cmd_run(run_dataset, run_config, run_oracle, run_url, run_world,
                           run_error_rate, seed, run_out_map, run_out_traj, run_edit_log);
        }
        return cmd_eval(eval_map, eval_world, eval_traj, eval_gt_traj, eval_dist, eval_rule,
                        eval_tau, eval_json);
    } catch (const SchemaViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
