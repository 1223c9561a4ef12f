#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sdi::kinematics {

enum class JointKind { kRevolute, kPrismatic };

/// One actuated joint. `origin` is the fixed transform from the parent link
/// to the joint frame; the joint then rotates about (or slides along) `axis`
/// expressed in that frame.
struct JointSpec {
  std::string name;
  JointKind kind = JointKind::kRevolute;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  double lower = 0.0;
  double upper = 0.0;
  Eigen::Isometry3d origin = Eigen::Isometry3d::Identity();

  Eigen::Isometry3d motion(double q) const;
};

struct KinematicChain {
  std::string name;
  std::vector<JointSpec> joints;
  Eigen::Isometry3d mount = Eigen::Isometry3d::Identity();
  Eigen::Vector3d ee_offset = Eigen::Vector3d::Zero();

  int dof() const { return static_cast<int>(joints.size()); }
  Eigen::VectorXd lower() const;
  Eigen::VectorXd upper() const;

  /// Throws kConfiguration on an empty chain, non-unit axes, inverted limits
  /// or non-rigid transforms.
  void validate() const;
};

/// Mobile-base pose: position and yaw about the world z axis.
struct BaseConfig {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double omega = 0.0;

  Eigen::Vector4d vector() const { return {x, y, z, omega}; }
  static BaseConfig from_vector(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
  Eigen::Isometry3d transform() const;
};

/// Throws kShape on a length mismatch and kLimit when a coordinate leaves
/// its joint interval.
void check_joints(const KinematicChain& chain, const Eigen::Ref<const Eigen::VectorXd>& q);

/// Arm-frame end-effector pose: mount * prod(origin_i * motion_i(q_i)) * ee.
Eigen::Isometry3d local_pose(const KinematicChain& chain, const Eigen::Ref<const Eigen::VectorXd>& q);

Eigen::Isometry3d forward_pose(const KinematicChain& chain,
                               const Eigen::Ref<const Eigen::VectorXd>& q, const BaseConfig& base);
Eigen::Vector3d forward(const KinematicChain& chain, const Eigen::Ref<const Eigen::VectorXd>& q,
                        const BaseConfig& base);

/// d position / d (x, y, z, omega).
Eigen::Matrix<double, 3, 4> base_jacobian(const KinematicChain& chain,
                                          const Eigen::Ref<const Eigen::VectorXd>& q,
                                          const BaseConfig& base);

/// d position / d q in the world frame (3 x dof).
Eigen::MatrixXd joint_jacobian(const KinematicChain& chain,
                               const Eigen::Ref<const Eigen::VectorXd>& q, const BaseConfig& base);

/// Independent uniform draws per joint; one joint vector per column.
Eigen::MatrixXd sample_joints(const KinematicChain& chain, Eigen::Index count, std::uint64_t seed);

/// Arm-frame end-effector positions for a batch of joint vectors (3 x n).
/// Limits are not checked.
Eigen::Matrix3Xd local_positions(const KinematicChain& chain, const Eigen::MatrixXd& joints);

/// Applies the base transform to arm-frame positions.
Eigen::Matrix3Xd to_world(const Eigen::Matrix3Xd& local, const BaseConfig& base);

/// Largest arm-frame end-effector distance from the mount origin over
/// `samples` seeded joint draws.
double sampled_reach(const KinematicChain& chain, Eigen::Index samples = 100000,
                     std::uint64_t seed = 0);

/// Line-oriented chain description:
///
///   chain <name>
///   mount xyz <x y z> rpy <r p y>            (optional)
///   link <name>
///   joint <name> <revolute|prismatic> parent <link> child <link>
///         axis <x y z> xyz <x y z> rpy <r p y> limits <lo hi>
///   end_effector <link> xyz <x y z>
///
/// `joint` entries sit on one line; keywords after the kind may appear in
/// any order. '#' starts a comment. Errors carry "<source>:<line>".
KinematicChain parse_chain(std::string_view text, std::string_view source = "<chain>");
KinematicChain load_chain(const std::filesystem::path& path);

/// Rotation from roll-pitch-yaw angles, Rz(yaw) * Ry(pitch) * Rx(roll).
Eigen::Matrix3d rpy_rotation(double roll, double pitch, double yaw);

/// Path of the bundled six-joint arm description.
std::filesystem::path bundled_arm_path();

}  // namespace sdi::kinematics
