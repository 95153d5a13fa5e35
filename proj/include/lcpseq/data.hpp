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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lcpseq/pose.hpp"

namespace lcpseq {

/// Per-channel standardization record.
struct Normalization {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& frames) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& normalized) const;
};

struct MotionDataset {
  std::vector<Motion> motions;
  std::optional<Normalization> normalization;
  std::vector<std::string> class_names;

  /// Throws ValidationError unless all motions share J and fps and the
  /// normalization (if any) has one positive std per channel.
  void validate() const;
  int joints() const;
  double fps() const;
  /// Index of `label` in class_names, or -1.
  int class_index(const std::string& label) const;
};

/// Channel means and stds over every frame; stds below 1e-8 are set to 1.
Normalization compute_normalization(const MotionDataset& ds);

enum class MotionFormat { kQuatCsv, kExpmapCsv, kAuto };

/// Parses one motion. Header: `fps=<int>,joints=<J>,label=<string|none>`;
/// then one frame per line with 4J (quat) or 3J (expmap) reals. kAuto picks
/// the format from the first frame's column count.
Motion parse_motion(std::istream& in, MotionFormat format);

/// One file = one motion; class_names holds the motion's label if any.
MotionDataset load_motion_file(const std::filesystem::path& path, MotionFormat format);

/// Every *.csv in `dir`, in lexicographic order.
MotionDataset load_motion_dir(const std::filesystem::path& dir,
                              MotionFormat format = MotionFormat::kAuto);

/// File or directory, dispatching to the two loaders above.
MotionDataset load_motions(const std::filesystem::path& path,
                           MotionFormat format = MotionFormat::kAuto);

/// Writes quat_csv with shortest round-trip formatting of every value.
void write_quat_csv(const Motion& m, std::ostream& out);
void write_quat_csv(const Motion& m, const std::filesystem::path& path);

/// Contiguous (observation, future) cut from one source motion.
struct SamplePair {
  Motion observation;
  Motion future;
  std::optional<std::string> source_label;
  std::size_t source_index = 0;
  Eigen::Index start = 0;
};

/// Emits floor((T - t_obs - t_fut) / stride) + 1 pairs per motion of length
/// T >= t_obs + t_fut, in motion order then start order.
std::vector<SamplePair> make_windows(const MotionDataset& ds, int t_obs, int t_fut,
                                     int stride);

/// Source indices of each side of a motion-level split, ascending.
struct MotionSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle; round(test_fraction * n) indices (at least one when
/// n >= 2 and the fraction is positive, never all) go to the test side.
MotionSplit split_indices(std::size_t n, std::uint64_t seed, double test_fraction = 0.1);

/// Motion-level split following split_indices.
std::pair<MotionDataset, MotionDataset> split_train_test(const MotionDataset& ds,
                                                         std::uint64_t seed,
                                                         double test_fraction = 0.1);

/// Synthetic multi-modal motion families.
///
/// Every joint's exponential map travels on a circle of fixed radius in a
/// class-specific plane. Up to the seam (frame t_obs - 1) the phase advances
/// at the class rate; afterwards it advances at rate * s_m, with s_m spread
/// evenly over [1, -1] across modes. With two modes that is continuation vs.
/// reversal, and the two futures separate by 2A|sin(w k)| for every starting
/// phase.
struct SynthSpec {
  int n_classes = 3;
  int modes_per_condition = 2;
  int joints = 2;
  int length = 40;
  int n_motions = 1000;
  double noise_std = 0.0;
  int t_obs = 16;
  double fps = 25.0;
};

struct SynthLabel {
  int cls = 0;
  int mode = 0;
  double phase = 0.0;
};

struct SynthClass {
  double rate = 0.0;  // radians per frame
  std::vector<double> radius;
  std::vector<double> offset;
  std::vector<Eigen::Vector3d> axis_u;
  std::vector<Eigen::Vector3d> axis_v;
};

struct SyntheticData {
  SynthSpec spec;
  std::uint64_t seed = 0;
  MotionDataset dataset;
  std::vector<SynthLabel> labels;
  std::vector<SynthClass> classes;

  /// Noise-free frames [begin, begin + count) of a (class, phase, mode)
  /// trajectory.
  Motion render(int cls, double phase, int mode, Eigen::Index begin,
                Eigen::Index count) const;
  /// Noise-free futures (t_obs .. length) of motion `i` under every mode.
  std::vector<Motion> candidate_futures(std::size_t i) const;
};

SyntheticData synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace lcpseq
