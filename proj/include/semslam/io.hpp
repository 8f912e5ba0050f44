#ifndef SEMSLAM_IO_HPP
#define SEMSLAM_IO_HPP

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "semslam/eval.hpp"
#include "semslam/frame.hpp"
#include "semslam/pipeline.hpp"
#include "semslam/simulator.hpp"

namespace semslam {

// Dataset frames: one JSON object per line.
// {"frame": int, "t": float,
//  "odom": {"dx": [6 twist floats, rotation first], "cov": [36 row-major]},
//  "intrinsics": {"fx","fy","cx","cy","w","h"},
//  "detections": [{"label", "conf", "box": [4 ints],
//                  "point_cam": [3], "extent": [3, optional]}]}
nlohmann::json frame_to_json(const Frame& frame);
Frame frame_from_json(const nlohmann::json& j);
void write_dataset_jsonl(const std::string& path, const std::vector<Frame>& frames);
std::vector<Frame> read_dataset_jsonl(const std::string& path);

nlohmann::json world_to_json(const WorldGT& world);
WorldGT world_from_json(const nlohmann::json& j);
void write_world_json(const std::string& path, const WorldGT& world);
WorldGT read_world_json(const std::string& path);

// CSV header t,tx,ty,tz,qx,qy,qz,qw; 9 significant digits per field.
void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectoryRecord>& records);
std::vector<TrajectoryRecord> read_trajectory_csv(const std::string& path);

nlohmann::json map_to_json(const MapExport& map);
MapExport map_from_json(const nlohmann::json& j);
void write_map_json(const std::string& path, const MapExport& map);
MapExport read_map_json(const std::string& path);

nlohmann::json edit_log_to_json(const EditLog& log);
EditLog edit_log_from_json(const nlohmann::json& j);
void write_edit_log_json(const std::string& path, const EditLog& log);

/// Strict config parsing: unknown keys raise SchemaViolation.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig read_config_json(const std::string& path);

} // namespace semslam

#endif
