#include "semslam/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

#include "semslam/errors.hpp"

namespace semslam {

namespace {

constexpr double kSmallAngle = 1e-6;

// Scalar coefficients of the Rodrigues formulas with their series branches.
double sin_over_theta(double theta) {
    if (theta < kSmallAngle) return 1.0 - theta * theta / 6.0;
    return std::sin(theta) / theta;
}

double one_minus_cos_over_theta2(double theta) {
    if (theta < kSmallAngle) return 0.5 - theta * theta / 24.0;
    return (1.0 - std::cos(theta)) / (theta * theta);
}

double theta_minus_sin_over_theta3(double theta) {
    if (theta < kSmallAngle) return 1.0 / 6.0 - theta * theta / 120.0;
    return (theta - std::sin(theta)) / (theta * theta * theta);
}

} // namespace

Pose se3_compose(const Pose& a, const Pose& b) {
    return Pose(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
}

bool is_valid_rotation(const Eigen::Matrix3d& r, double tol) {
    const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).norm();
    return ortho <= tol && r.determinant() > 0.0;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
        -v.y(), v.x(), 0.0;
    return m;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
    const double theta = omega.norm();
    const Eigen::Matrix3d w = skew(omega);
    return Eigen::Matrix3d::Identity() + sin_over_theta(theta) * w +
           one_minus_cos_over_theta2(theta) * (w * w);
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
    // Quaternion extraction is well conditioned over the whole angle range.
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Eigen::Vector3d v = q.vec();
    const double n = v.norm();
    const double theta = 2.0 * std::atan2(n, q.w());
    if (theta > M_PI - 1e-9) {
        throw Error("so3_log: rotation angle at pi, logarithm branch cut is ambiguous");
    }
    if (n < 1e-12) return 2.0 * v;
    return v * (theta / n);
}

Pose se3_exp(const Twist& xi) {
    const Eigen::Vector3d omega = xi.head<3>();
    const Eigen::Vector3d rho = xi.tail<3>();
    const double theta = omega.norm();
    const Eigen::Matrix3d w = skew(omega);
    const Eigen::Matrix3d v_mat = Eigen::Matrix3d::Identity() +
                                  one_minus_cos_over_theta2(theta) * w +
                                  theta_minus_sin_over_theta3(theta) * (w * w);
    return Pose(so3_exp(omega), v_mat * rho);
}

Twist se3_log(const Pose& p) {
    const Eigen::Vector3d omega = so3_log(p.rotation);
    const double theta = omega.norm();
    const Eigen::Matrix3d w = skew(omega);

    double coeff;
    if (theta < kSmallAngle) {
        coeff = 1.0 / 12.0 + theta * theta / 720.0;
    } else {
        coeff = 1.0 / (theta * theta) -
                (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    }
    const Eigen::Matrix3d v_inv =
        Eigen::Matrix3d::Identity() - 0.5 * w + coeff * (w * w);

    Twist xi;
    xi.head<3>() = omega;
    xi.tail<3>() = v_inv * p.translation;
    return xi;
}

Eigen::Matrix<double, 6, 6> se3_adjoint(const Pose& p) {
    Eigen::Matrix<double, 6, 6> adj = Eigen::Matrix<double, 6, 6>::Zero();
    adj.topLeftCorner<3, 3>() = p.rotation;
    adj.bottomRightCorner<3, 3>() = p.rotation;
    adj.bottomLeftCorner<3, 3>() = skew(p.translation) * p.rotation;
    return adj;
}

namespace {

Eigen::Matrix3d so3_inverse_left_jacobian(const Eigen::Vector3d& phi) {
    const double theta = phi.norm();
    const Eigen::Matrix3d w = skew(phi);
    double coeff;
    if (theta < kSmallAngle) {
        coeff = 1.0 / 12.0 + theta * theta / 720.0;
    } else {
        coeff = 1.0 / (theta * theta) -
                (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    }
    return Eigen::Matrix3d::Identity() - 0.5 * w + coeff * (w * w);
}

// Translation-rotation coupling block of the SE(3) left Jacobian.
Eigen::Matrix3d se3_left_jacobian_q(const Eigen::Vector3d& phi, const Eigen::Vector3d& rho) {
    const double theta = phi.norm();
    const Eigen::Matrix3d px = skew(phi);
    const Eigen::Matrix3d rx = skew(rho);

    double c1, c2, c3;
    if (theta < 1e-4) {
        const double t2 = theta * theta;
        c1 = 1.0 / 6.0 - t2 / 120.0;
        c2 = -1.0 / 24.0 + t2 / 720.0;
        c3 = -1.0 / 120.0 + t2 / 5040.0;
    } else {
        const double t2 = theta * theta;
        const double t4 = t2 * t2;
        const double st = std::sin(theta);
        const double ct = std::cos(theta);
        c1 = (theta - st) / (t2 * theta);
        c2 = (1.0 - t2 / 2.0 - ct) / t4;
        c3 = (theta - st - theta * t2 / 6.0) / (t4 * theta);
    }

    return 0.5 * rx + c1 * (px * rx + rx * px + px * rx * px) -
           c2 * (px * px * rx + rx * px * px - 3.0 * px * rx * px) -
           0.5 * (c2 - 3.0 * c3) * (px * rx * px * px + px * px * rx * px);
}

Eigen::Matrix<double, 6, 6> se3_inverse_left_jacobian(const Twist& xi) {
    const Eigen::Vector3d phi = xi.head<3>();
    const Eigen::Vector3d rho = xi.tail<3>();
    const Eigen::Matrix3d jinv = so3_inverse_left_jacobian(phi);
    const Eigen::Matrix3d q = se3_left_jacobian_q(phi, rho);

    Eigen::Matrix<double, 6, 6> out = Eigen::Matrix<double, 6, 6>::Zero();
    out.topLeftCorner<3, 3>() = jinv;
    out.bottomRightCorner<3, 3>() = jinv;
    out.bottomLeftCorner<3, 3>() = -jinv * q * jinv;
    return out;
}

} // namespace

Eigen::Matrix<double, 6, 6> se3_inverse_right_jacobian(const Twist& xi) {
    return se3_inverse_left_jacobian(-xi);
}

Eigen::Vector3d transform_to_frame(const Pose& p, const Eigen::Vector3d& point_world) {
    return p.rotation.transpose() * (point_world - p.translation);
}

bool is_valid_intrinsics(const CameraIntrinsics& k) {
    return k.fx > 0.0 && k.fy > 0.0 && k.width > 0 && k.height > 0 &&
           k.cx > 0.0 && k.cx < k.width && k.cy > 0.0 && k.cy < k.height;
}

std::optional<Eigen::Vector2d> project_pinhole(const CameraIntrinsics& k,
                                               const Eigen::Vector3d& point_cam,
                                               double z_min) {
    if (point_cam.z() <= z_min) return std::nullopt;
    return Eigen::Vector2d(k.fx * point_cam.x() / point_cam.z() + k.cx,
                           k.fy * point_cam.y() / point_cam.z() + k.cy);
}

Eigen::Vector3d backproject_pinhole(const CameraIntrinsics& k,
                                    const Eigen::Vector2d& pixel,
                                    double depth) {
    return Eigen::Vector3d((pixel.x() - k.cx) / k.fx * depth,
                           (pixel.y() - k.cy) / k.fy * depth,
                           depth);
}

double box_iou(const PixelBox& a, const PixelBox& b) {
    const double iw = std::min(a.u_max, b.u_max) - std::max(a.u_min, b.u_min);
    const double ih = std::min(a.v_max, b.v_max) - std::max(a.v_min, b.v_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

PixelBox clip_box(const PixelBox& b, int width, int height) {
    PixelBox out;
    out.u_min = std::clamp(b.u_min, 0.0, static_cast<double>(width));
    out.u_max = std::clamp(b.u_max, 0.0, static_cast<double>(width));
    out.v_min = std::clamp(b.v_min, 0.0, static_cast<double>(height));
    out.v_max = std::clamp(b.v_max, 0.0, static_cast<double>(height));
    return out;
}

std::optional<PixelBox> project_box(const Pose& camera_pose,
                                    const CameraIntrinsics& k,
                                    const Eigen::Vector3d& center_world,
                                    const Eigen::Vector3d& extent,
                                    double z_min) {
    const Eigen::Vector3d center_cam = transform_to_frame(camera_pose, center_world);
    if (center_cam.z() <= z_min) return std::nullopt;

    PixelBox hull;
    hull.u_min = hull.v_min = std::numeric_limits<double>::infinity();
    hull.u_max = hull.v_max = -std::numeric_limits<double>::infinity();
    int n_visible = 0;
    for (int i = 0; i < 8; ++i) {
        const Eigen::Vector3d corner =
            center_world + 0.5 * Eigen::Vector3d((i & 1) ? extent.x() : -extent.x(),
                                                 (i & 2) ? extent.y() : -extent.y(),
                                                 (i & 4) ? extent.z() : -extent.z());
        const auto px = project_pinhole(k, transform_to_frame(camera_pose, corner), z_min);
        if (!px) continue;
        ++n_visible;
        hull.u_min = std::min(hull.u_min, px->x());
        hull.u_max = std::max(hull.u_max, px->x());
        hull.v_min = std::min(hull.v_min, px->y());
        hull.v_max = std::max(hull.v_max, px->y());
    }
    if (n_visible == 0) return std::nullopt;

    const PixelBox clipped = clip_box(hull, k.width, k.height);
    if (clipped.empty()) return std::nullopt;
    return clipped;
}

} // namespace semslam
