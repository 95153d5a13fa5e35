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

#include "lcpseq/pose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "lcpseq/errors.hpp"

namespace lcpseq {

Quaternion quat_canonicalize(const Eigen::Vector4d& raw) {
  const double n2 = raw.squaredNorm();
  if (!(n2 > 1e-16)) throw ValidationError("quat_canonicalize: near-zero quaternion");
  // Already unit to rounding: keep the bits so canonicalization is idempotent.
  Eigen::Vector4d q = std::abs(n2 - 1.0) <= 8 * std::numeric_limits<double>::epsilon()
                          ? raw
                          : Eigen::Vector4d(raw / std::sqrt(n2));
  if (q[0] < 0.0) q = -q;
  return Quaternion(q);
}

Eigen::Matrix3d expmap_to_rotmat(const Eigen::Vector3d& v) {
  const double theta = v.norm();
  if (theta < 1e-12) return Eigen::Matrix3d::Identity();
  const Eigen::Vector3d k = v / theta;
  Eigen::Matrix3d kx;
  kx << 0.0, -k.z(), k.y(),
        k.z(), 0.0, -k.x(),
        -k.y(), k.x(), 0.0;
  return Eigen::Matrix3d::Identity() + std::sin(theta) * kx +
         (1.0 - std::cos(theta)) * kx * kx;
}

Quaternion rotmat_to_quat(const Eigen::Matrix3d& r) {
  if (!r.allFinite()) throw ValidationError("rotmat_to_quat: non-finite matrix");
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-4 || std::abs(r.determinant() - 1.0) > 1e-4) {
    throw ValidationError("rotmat_to_quat: matrix is not a rotation");
  }
  const double tr = r.trace();
  Eigen::Vector4d q;
  if (tr >= r(0, 0) && tr >= r(1, 1) && tr >= r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    q << 0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s,
        (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) >= r(1, 1) && r(0, 0) >= r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    q << (r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s,
        (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) >= r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    q << (r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s,
        (r(1, 2) + r(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    q << (r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s,
        0.25 * s;
  }
  return quat_canonicalize(q);
}

Eigen::Matrix3d quat_to_rotmat(const Quaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

EulerZYX rotmat_to_euler(const Eigen::Matrix3d& r) {
  EulerZYX e;
  const double sb = std::clamp(-r(2, 0), -1.0, 1.0);
  if (std::abs(sb) > kGimbalThreshold) {
    // R = Rz(alpha - gamma) Ry(+-pi/2) for any gamma; pin gamma.
    e.beta = std::copysign(M_PI / 2.0, sb);
    e.gamma = 0.0;
    e.alpha = std::atan2(-r(0, 1), r(1, 1));
    return e;
  }
  e.beta = std::asin(sb);
  e.alpha = std::atan2(r(1, 0), r(0, 0));
  e.gamma = std::atan2(r(2, 1), r(2, 2));
  return e;
}

EulerZYX quat_to_euler(const Quaternion& q) { return rotmat_to_euler(quat_to_rotmat(q)); }

Eigen::Matrix3d euler_to_rotmat(const EulerZYX& e) {
  return (Eigen::AngleAxisd(e.alpha, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(e.beta, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(e.gamma, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::RowVectorXd canonicalize_pose(const Eigen::RowVectorXd& raw) {
  if (raw.size() % 4 != 0) throw DimensionError("pose width is not a multiple of 4");
  Eigen::RowVectorXd out(raw.size());
  for (Eigen::Index j = 0; j < raw.size() / 4; ++j) {
    out.segment<4>(4 * j) =
        quat_canonicalize(raw.segment<4>(4 * j).transpose()).coeffs().transpose();
  }
  return out;
}

Motion::Motion(Eigen::MatrixXd frames, int joints, double fps,
               std::optional<std::string> label)
    : frames_(std::move(frames)), joints_(joints), fps_(fps), label_(std::move(label)) {
  if (joints_ < 1) throw ValidationError("Motion: joint count must be >= 1");
  if (frames_.rows() < 1) throw ValidationError("Motion: needs at least one frame");
  if (!(fps_ > 0.0)) throw ValidationError("Motion: fps must be > 0");
  if (frames_.cols() != 4 * joints_) {
    throw DimensionError("Motion: expected " + std::to_string(4 * joints_) +
                         " channels, got " + std::to_string(frames_.cols()));
  }
  for (Eigen::Index t = 0; t < frames_.rows(); ++t) {
    frames_.row(t) = canonicalize_pose(frames_.row(t));
  }
}

Quaternion Motion::joint(Eigen::Index t, int j) const {
  return quat_canonicalize(frames_.row(t).segment<4>(4 * j).transpose());
}

Pose Motion::pose(Eigen::Index t) const {
  Pose p;
  p.reserve(joints_);
  for (int j = 0; j < joints_; ++j) p.push_back(joint(t, j));
  return p;
}

Motion Motion::slice(Eigen::Index begin, Eigen::Index count) const {
  if (begin < 0 || count < 1 || begin + count > length()) {
    throw ContractError("Motion::slice: range out of bounds");
  }
  return Motion(Trusted{}, frames_.middleRows(begin, count), joints_, fps_, label_);
}

}  // namespace lcpseq
