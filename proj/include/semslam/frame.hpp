#ifndef SEMSLAM_FRAME_HPP
#define SEMSLAM_FRAME_HPP

#include <cstdint>
#include <vector>

#include "semslam/association.hpp"
#include "semslam/geometry.hpp"

namespace semslam {

/// One dataset record: odometry increment into this frame plus the frame's
/// detections. Frame 0's increment maps the world origin to the first pose
/// and anchors the gauge.
struct Frame {
    std::uint64_t id = 0;
    double timestamp = 0.0;
    Pose odom_increment;
    Eigen::Matrix<double, 6, 6> odom_cov = Eigen::Matrix<double, 6, 6>::Identity();
    std::vector<Detection> detections;
    CameraIntrinsics intrinsics;
};

} // namespace semslam

#endif
