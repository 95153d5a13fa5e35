/*
 * Copyright 2026 The lcpseq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lcpseq {

/// Unit quaternion in the w >= 0 hemisphere. Stored as (w, x, y, z).
class Quaternion {
 public:
  /// Identity rotation.
  Quaternion() : wxyz_(1.0, 0.0, 0.0, 0.0) {}

  double w() const { return wxyz_[0]; }
  double x() const { return wxyz_[1]; }
  double y() const { return wxyz_[2]; }
  double z() const { return wxyz_[3]; }
  const Eigen::Vector4d& coeffs() const { return wxyz_; }

  friend Quaternion quat_canonicalize(const Eigen::Vector4d& raw);

 private:
  explicit Quaternion(const Eigen::Vector4d& wxyz) : wxyz_(wxyz) {}
  Eigen::Vector4d wxyz_;
};

/// Normalizes `raw` (w, x, y, z) and flips it into the w >= 0 hemisphere.
/// Throws ValidationError when the norm is below 1e-8.
Quaternion quat_canonicalize(const Eigen::Vector4d& raw);

/// Rodrigues rotation about v/|v| by |v| radians. Exactly the identity for
/// |v| < 1e-12.
Eigen::Matrix3d expmap_to_rotmat(const Eigen::Vector3d& v);

/// Shepperd's method: picks the branch with the largest of (trace, R00, R11,
/// R22) to avoid cancellation. Throws ValidationError unless R is
/// orthonormal within 1e-4 with det close to +1.
Quaternion rotmat_to_quat(const Eigen::Matrix3d& r);

Eigen::Matrix3d quat_to_rotmat(const Quaternion& q);

/// Intrinsic Z-Y-X angles (alpha about z, beta about y, gamma about x), so
/// that R = Rz(alpha) * Ry(beta) * Rx(gamma).
struct EulerZYX {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

/// Near gimbal lock gamma is pinned to 0 and alpha absorbs the rotation.
EulerZYX quat_to_euler(const Quaternion& q);
EulerZYX rotmat_to_euler(const Eigen::Matrix3d& r);
Eigen::Matrix3d euler_to_rotmat(const EulerZYX& e);

/// |sin(beta)| above this is treated as gimbal lock.
inline constexpr double kGimbalThreshold = 1.0 - 1e-12;

using Pose = std::vector<Quaternion>;

/// T frames of J joint rotations. Each row of frames() is one pose laid out
/// joint-major as (w, x, y, z) per joint. Construction canonicalizes every
/// joint.
class Motion {
 public:
  Motion(Eigen::MatrixXd frames, int joints, double fps = 25.0,
         std::optional<std::string> label = std::nullopt);

  Eigen::Index length() const { return frames_.rows(); }
  int joints() const { return joints_; }
  Eigen::Index channels() const { return frames_.cols(); }
  double fps() const { return fps_; }
  const std::optional<std::string>& label() const { return label_; }
  const Eigen::MatrixXd& frames() const { return frames_; }

  Quaternion joint(Eigen::Index t, int j) const;
  Pose pose(Eigen::Index t) const;

  /// Frames [begin, begin + count). Keeps fps and label.
  Motion slice(Eigen::Index begin, Eigen::Index count) const;

 private:
  struct Trusted {};
  // Skips canonicalization; `frames` must already be canonical.
  Motion(Trusted, Eigen::MatrixXd frames, int joints, double fps,
         std::optional<std::string> label)
      : frames_(std::move(frames)), joints_(joints), fps_(fps), label_(std::move(label)) {}

  Eigen::MatrixXd frames_;
  int joints_;
  double fps_;
  std::optional<std::string> label_;
};

/// Joint-wise canonicalization of one flattened pose row.
Eigen::RowVectorXd canonicalize_pose(const Eigen::RowVectorXd& raw);

}  // namespace lcpseq
