#ifndef SEMSLAM_GRAPH_HPP
#define SEMSLAM_GRAPH_HPP

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <variant>
#include <vector>

#include "semslam/geometry.hpp"

namespace semslam {

enum class VarKind : std::uint8_t { Pose, Landmark };

struct VariableKey {
    VarKind kind = VarKind::Pose;
    std::uint32_t index = 0;

    friend auto operator<=>(const VariableKey&, const VariableKey&) = default;
};

inline VariableKey pose_key(std::uint32_t i) { return {VarKind::Pose, i}; }
inline VariableKey landmark_key(std::uint32_t i) { return {VarKind::Landmark, i}; }

/// Gaussian noise model held as a covariance; whitening uses the Cholesky
/// factor. Construction rejects asymmetric or non-PD matrices.
class NoiseModel {
public:
    explicit NoiseModel(const Eigen::MatrixXd& covariance);

    static NoiseModel isotropic(int dim, double sigma);

    const Eigen::MatrixXd& covariance() const { return covariance_; }
    int dim() const { return static_cast<int>(covariance_.rows()); }

    /// r -> L^{-1} r with covariance = L L^T.
    Eigen::VectorXd whiten(const Eigen::VectorXd& r) const;
    Eigen::MatrixXd whiten_matrix(const Eigen::MatrixXd& j) const;

private:
    Eigen::MatrixXd covariance_;
    Eigen::MatrixXd sqrt_info_; // L^{-1}
};

struct PriorPoseFactor {
    VariableKey key;
    Pose mean;
    NoiseModel noise; // 6x6
};

struct BetweenFactor {
    VariableKey a;
    VariableKey b;
    Pose relative; // measured a^-1 * b
    NoiseModel noise; // 6x6
};

struct ObservationFactor {
    VariableKey pose;
    VariableKey landmark;
    Eigen::Vector3d measured; // sensor-frame point, meters
    NoiseModel noise; // 3x3
};

using Factor = std::variant<PriorPoseFactor, BetweenFactor, ObservationFactor>;
using FactorId = std::uint64_t;

struct GraphEstimate {
    std::map<VariableKey, Pose> poses;
    std::map<VariableKey, Eigen::Vector3d> landmarks;
};

struct OptimizerConfig {
    int max_iterations = 100;
    double relative_error_tol = 1e-8;
    double update_norm_tol = 1e-8;
    double lambda0 = 1e-4;
    double lambda_max = 1e10;
};

struct OptimizeReport {
    int iterations = 0;
    double initial_error = 0.0;
    double final_error = 0.0;
    bool converged = false;
};

/// 9x9 joint covariance block over (pose tangent, landmark position).
struct JointMarginal {
    Eigen::Matrix<double, 9, 9> matrix = Eigen::Matrix<double, 9, 9>::Zero();

    Eigen::Matrix<double, 6, 6> pose_block() const { return matrix.topLeftCorner<6, 6>(); }
    Eigen::Matrix<double, 6, 3> cross_block() const { return matrix.topRightCorner<6, 3>(); }
    Eigen::Matrix3d landmark_block() const { return matrix.bottomRightCorner<3, 3>(); }
};

/// Batch nonlinear factor graph over SE(3) poses and point landmarks.
/// Single writer; estimate snapshots are plain values and safe to share.
class FactorGraph {
public:
    VariableKey add_pose(const Pose& initial);
    VariableKey add_landmark(const Eigen::Vector3d& initial);

    FactorId add_factor(Factor f);

    /// Deletes the landmark variable and every observation factor that
    /// references it. Returns the number of factors removed.
    std::size_t remove_landmark_factors(VariableKey landmark);

    double total_error() const { return total_error(estimate_); }
    double total_error(const GraphEstimate& e) const;

    /// Levenberg-Marquardt on the tangent space; poses retract through
    /// se3_exp, landmarks additively.
    OptimizeReport optimize(const OptimizerConfig& cfg = {});

    /// Joint covariance of (pose, landmark) from the Gauss-Newton
    /// information matrix linearized at the current estimate.
    JointMarginal joint_marginal_covariance(VariableKey pose, VariableKey landmark) const;

    const GraphEstimate& estimate() const { return estimate_; }
    bool has_variable(VariableKey k) const;
    std::size_t num_poses() const { return estimate_.poses.size(); }
    std::size_t num_landmarks() const { return estimate_.landmarks.size(); }
    std::size_t num_factors() const { return factors_.size(); }
    const std::map<FactorId, Factor>& factors() const { return factors_; }

    /// Residual and (whitened = false) Jacobian blocks of one factor at the
    /// given estimate; exposed for the finite-difference checks.
    static Eigen::VectorXd residual(const Factor& f, const GraphEstimate& e);
    static std::vector<std::pair<VariableKey, Eigen::MatrixXd>> jacobians(
        const Factor& f, const GraphEstimate& e);

private:
    struct Ordering {
        std::map<VariableKey, int> offset;
        int dim = 0;
    };

    Ordering make_ordering() const;
    void linearize(const Ordering& ord, Eigen::SparseMatrix<double>& h,
                   Eigen::VectorXd& g) const;
    void check_well_posed() const;
    void refresh_marginal_cache() const;

    GraphEstimate estimate_;
    std::map<FactorId, Factor> factors_;
    std::uint32_t next_pose_index_ = 0;
    std::uint32_t next_landmark_index_ = 0;
    FactorId next_factor_id_ = 0;

    // Lazily built linearization at estimate_, reused by marginal queries.
    mutable bool cache_valid_ = false;
    mutable Ordering cache_ordering_;
    mutable std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> cache_ldlt_;
};

} // namespace semslam

#endif
