#pragma once

#include <Eigen/Dense>

#include <string>

#include "talkgen/core/tensor.hpp"

namespace talkgen::pose {

// Rigid 6-DoF head pose: axis-angle rotation (radians) and translation in
// units normalized by the image half width.
struct Pose {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  // Wraps the axis-angle magnitude into [0, pi].
  Pose canonicalized() const {
    Pose p = *this;
    double theta = p.rotation.norm();
    if (theta > M_PI) {
      double wrapped = std::fmod(theta + M_PI, 2.0 * M_PI) - M_PI;
      p.rotation *= wrapped / theta;
    }
    return p;
  }

  bool finite() const {
    return rotation.allFinite() && translation.allFinite();
  }

  Eigen::Matrix3d rotation_matrix() const {
    double theta = rotation.norm();
    if (theta < 1e-12) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(theta, rotation / theta).toRotationMatrix();
  }
};

// T x 6 pose matrix at 25 fps; column order rx, ry, rz, tx, ty, tz.
struct PoseSequence {
  Eigen::Matrix<double, Eigen::Dynamic, 6> poses;
  int fps = 25;

  Index size() const { return poses.rows(); }
  Pose at(Index i) const {
    Pose p;
    p.rotation = poses.row(i).head<3>().transpose();
    p.translation = poses.row(i).tail<3>().transpose();
    return p;
  }
  void set(Index i, const Pose& p) {
    poses.row(i).head<3>() = p.rotation.transpose();
    poses.row(i).tail<3>() = p.translation.transpose();
  }
  bool all_finite() const { return poses.allFinite(); }
};

// CSV with header "frame,rx,ry,rz,tx,ty,tz", one row per 25 fps frame.
PoseSequence read_pose_csv(const std::string& path);
void write_pose_csv(const std::string& path, const PoseSequence& seq);

}  // namespace talkgen::pose
