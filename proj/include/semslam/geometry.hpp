#ifndef SEMSLAM_GEOMETRY_HPP
#define SEMSLAM_GEOMETRY_HPP

#include <Eigen/Core>
#include <optional>

namespace semslam {

/// Tangent-space vector for SE(3), ordered [rotation; translation].
using Twist = Eigen::Matrix<double, 6, 1>;

/// Rigid body transform: maps body-frame points into the world frame,
/// p_world = R * p_body + t. Immutable by convention once constructed.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Pose() = default;
    Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) : rotation(r), translation(t) {}

    static Pose Identity() { return Pose{}; }

    Pose inverse() const {
        return Pose(rotation.transpose(), -(rotation.transpose() * translation));
    }

    /// Maps a body-frame point into the world frame.
    Eigen::Vector3d operator*(const Eigen::Vector3d& p_body) const {
        return rotation * p_body + translation;
    }
};

/// post: rotation = Ra*Rb, translation = Ra*tb + ta
Pose se3_compose(const Pose& a, const Pose& b);

inline Pose operator*(const Pose& a, const Pose& b) { return se3_compose(a, b); }

/// True when R is orthonormal with det +1 within tol.
bool is_valid_rotation(const Eigen::Matrix3d& r, double tol = 1e-9);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega);
Eigen::Vector3d so3_log(const Eigen::Matrix3d& r);

/// Closed-form Rodrigues exponential with the series branch below 1e-6 rad.
Pose se3_exp(const Twist& xi);

/// Inverse of se3_exp. Throws Error at rotation angle pi (branch cut).
Twist se3_log(const Pose& p);

/// Adjoint of p: se3_exp(adj(p) * xi) == p * se3_exp(xi) * p.inverse().
Eigen::Matrix<double, 6, 6> se3_adjoint(const Pose& p);

/// Inverse right Jacobian of SE(3): d/d_eps log(exp(xi) * exp(eps)) at eps = 0.
Eigen::Matrix<double, 6, 6> se3_inverse_right_jacobian(const Twist& xi);

/// Expresses a world point in the sensor frame: R^T (p_world - t).
Eigen::Vector3d transform_to_frame(const Pose& p, const Eigen::Vector3d& point_world);

struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
};

bool is_valid_intrinsics(const CameraIntrinsics& k);

/// Pinhole projection. Returns nullopt when the point is behind the
/// near plane (z <= z_min).
std::optional<Eigen::Vector2d> project_pinhole(const CameraIntrinsics& k,
                                               const Eigen::Vector3d& point_cam,
                                               double z_min = 0.05);

/// Ray through the pixel scaled to the given depth.
Eigen::Vector3d backproject_pinhole(const CameraIntrinsics& k,
                                    const Eigen::Vector2d& pixel,
                                    double depth);

/// Axis-aligned pixel rectangle, corners ordered (u_min <= u_max, v_min <= v_max).
struct PixelBox {
    double u_min = 0.0;
    double v_min = 0.0;
    double u_max = 0.0;
    double v_max = 0.0;

    double width() const { return u_max - u_min; }
    double height() const { return v_max - v_min; }
    double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
    bool empty() const { return u_max <= u_min || v_max <= v_min; }
};

double box_iou(const PixelBox& a, const PixelBox& b);
PixelBox clip_box(const PixelBox& b, int width, int height);

/// Projects the 8 corners of a world-axis-aligned box (center, extent) into
/// the image and returns the clipped hull. nullopt when the center is behind
/// the camera, every corner is behind, or the hull misses the image entirely.
std::optional<PixelBox> project_box(const Pose& camera_pose,
                                    const CameraIntrinsics& k,
                                    const Eigen::Vector3d& center_world,
                                    const Eigen::Vector3d& extent,
                                    double z_min = 0.05);

} // namespace semslam

#endif
