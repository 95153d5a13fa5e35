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
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcpseq/data.hpp"
#include "lcpseq/model.hpp"
#include "lcpseq/pose.hpp"
#include "lcpseq/sample.hpp"

namespace lcpseq {

/// Mean L2 distance over all unordered pairs of flattened samples.
double diversity(std::span<const Motion> samples);

struct ClassifierConfig {
  int hidden = 128;
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
};

/// GRU over the frames, dense softmax head on the final state.
class SeqClassifier {
 public:
  SeqClassifier(int channels, int classes, const ClassifierConfig& config, std::uint64_t seed);

  /// Cross-entropy training; labels in [0, classes). All motions must share
  /// one length.
  void fit(std::span<const Motion> motions, std::span<const int> labels, std::uint64_t seed);

  /// N x classes probabilities.
  Eigen::MatrixXd predict_proba(std::span<const Motion> motions) const;
  std::vector<int> predict(std::span<const Motion> motions) const;

  int classes() const { return classes_; }
  int channels() const { return channels_; }

 private:
  ClassifierConfig config_;
  int channels_;
  int classes_;
  GruParams<float> gru_;
  Dense<float> head_;
};

struct QualityResult {
  double score = 0.0;        // held-out generated motions classified real
  double real_recall = 0.0;  // real_test motions classified real
  std::size_t train_per_class = 0;
};

/// Real-vs-generated discriminator. Trains on real_train[0, n) against
/// gen[0, n) with n = min(|real_train|, floor(|gen| / 2)); scores gen[n, end).
QualityResult quality(std::span<const Motion> gen, std::span<const Motion> real_train,
                      std::span<const Motion> real_test, std::uint64_t seed,
                      const ClassifierConfig& config = {});

/// Mean over classes of the per-class argmax accuracy.
double context(std::span<const Motion> gen, std::span<const int> labels,
               const SeqClassifier& clf);
double mean_class_accuracy(std::span<const int> predicted, std::span<const int> labels,
                           int classes);

/// T x 3J intrinsic ZYX angles, (alpha, beta, gamma) per joint.
Eigen::MatrixXd euler_frames(const Motion& m);

enum class MaeReduction {
  kL2,    // Euclidean norm over the active angles of a frame
  kMean,  // mean absolute error over the active angles
};

enum class BestOfK {
  kAtHorizon,   // per horizon, the sample with the least error at that frame
  kCumulative,  // per horizon, the sample with the least summed error up to it
};

struct MaeOptions {
  MaeReduction reduction = MaeReduction::kL2;
  BestOfK selection = BestOfK::kAtHorizon;
  /// Angle dimensions whose ground-truth std is at or below this are
  /// ignored.
  double constant_threshold = 1e-4;
};

/// Frame index (ms * fps / 1000 - 1) of a horizon; ContractError unless it
/// is an integer in [0, t_fut).
int horizon_frame(int ms, double fps, int t_fut);

/// Angle dimensions with ground-truth std above `threshold`.
std::vector<bool> active_angles(std::span<const Motion> gt, double threshold);

/// Best-of-K Euler MAE per horizon (ms), averaged over observations.
/// samples[i] holds the K predictions for gt[i].
std::map<int, double> mae_euler_best_of_k(std::span<const std::vector<Motion>> samples,
                                          std::span<const Motion> gt,
                                          std::span<const int> horizons_ms, double fps,
                                          const MaeOptions& options = {});

/// The last observed pose repeated t_fut times.
Motion zero_velocity(const Motion& observation, int t_fut);

/// Index of the nearest candidate (squared distance over the shared frames).
int nearest_candidate(const Motion& sample, std::span<const Motion> candidates);

/// Fraction of conditions whose samples reach every candidate under
/// nearest-candidate assignment.
double mode_coverage(std::span<const std::vector<Motion>> samples,
                     std::span<const std::vector<Motion>> candidates);

struct TestElbo {
  double mse = 0.0;  // future reconstruction, teacher forced
  double kl = 0.0;   // data-latent KL as in training
};

/// Full encode/decode pass at p_tf = 1 with seeded noise, averaged over
/// windows.
template <typename Scalar>
TestElbo test_elbo(std::span<const SamplePair> windows, const Model<Scalar>& model,
                   std::uint64_t seed, int batch_size = 64);

struct EvalReport {
  std::string scheme;
  int k = 0;
  std::size_t conditions = 0;
  double test_mse = 0.0;
  double test_kl = 0.0;
  double diversity = 0.0;
  std::optional<double> quality;
  std::optional<double> real_recall;
  std::optional<double> context;
  std::optional<double> mode_coverage;
  std::map<int, double> mae;  // horizon ms -> value
  std::string mae_reduction;

  void validate() const;
};

/// Canonical key-sorted JSON.
std::string report_json(const EvalReport& r);
void write_report_json(const EvalReport& r, const std::filesystem::path& path);
/// One header row (sorted keys) and one value row.
void write_report_csv(const EvalReport& r, std::ostream& out);
void write_report_csv(const EvalReport& r, const std::filesystem::path& path);

struct EvalOptions {
  int k = 50;
  std::uint64_t seed = 0;
  /// Window stride on the test motions; 0 means t_obs + t_fut.
  int stride = 0;
  /// Cap on evaluated test windows; 0 means all.
  std::size_t max_conditions = 0;
  std::vector<int> horizons_ms = {80, 160, 320, 400, 560, 1000};
  ClassifierConfig classifier;
  MaeOptions mae;
  bool with_quality = true;
  bool with_context = true;
  /// One mode prediction per window instead of K samples; diversity is 0.
  bool deterministic = false;
};

/// Ground-truth futures of every mode for a test window, or empty when
/// unknown. Receives the window and its test-motion index.
using CandidateFn = std::function<std::vector<Motion>(const SamplePair&)>;

/// Samples K futures per test window and computes the full report. Quality
/// and context classifiers train on windows of `train`. Horizons beyond
/// t_fut (or not on a frame) are skipped.
template <typename Scalar>
EvalReport evaluate(const Model<Scalar>& model, int t_obs, int t_fut,
                    const MotionDataset& train, const MotionDataset& test,
                    const EvalOptions& options, const CandidateFn& candidates = {});

}  // namespace lcpseq
