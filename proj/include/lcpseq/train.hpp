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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lcpseq/data.hpp"
#include "lcpseq/loss.hpp"
#include "lcpseq/model.hpp"

namespace lcpseq {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm ceiling; <= 0 disables clipping.
  double clip_norm = 5.0;
};

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  AdamConfig adam;
  /// Epochs for P_tf to fall linearly from 1 to 0.
  int tf_horizon = 20;
  AnnealSchedule anneal;
  std::uint64_t seed = 0;
  /// 32 or 64.
  int precision = 32;
  int t_obs = 16;
  int t_fut = 60;
  int stride = 1;
  ModelConfig model;

  void validate() const;
};

/// P_tf = max(0, 1 - epoch / horizon).
double teacher_forcing_prob(double epoch, int horizon);

struct ScheduleState {
  int epoch = 0;        // completed epochs
  std::int64_t step = 0;  // completed optimizer steps
  double p_tf = 1.0;
  double lambda = 0.0;
};

/// Everything that is persisted between runs.
template <typename Scalar>
struct Checkpoint {
  Model<Scalar> model;
  ScheduleState schedule;
  std::optional<Normalization> normalization;
  int t_obs = 16;
  int t_fut = 60;
  double fps = 25.0;

  explicit Checkpoint(Model<Scalar> m) : model(std::move(m)) {}
};

/// Adaptive-moment optimizer over a fixed parameter list.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<NamedTensor<Scalar>> params, const AdamConfig& config, double lr);

  /// Clips, checks and applies the current gradients. Throws NumericError
  /// (before touching any parameter) if a gradient is non-finite. Returns
  /// the pre-clip global norm.
  double step();
  std::int64_t steps() const { return t_; }

 private:
  std::vector<NamedTensor<Scalar>> params_;
  std::vector<Matrix<Scalar>> m_, v_;
  AdamConfig config_;
  double lr_;
  std::int64_t t_ = 0;
};

/// One forward pass with noise drawn from `rng`, plus the loss.
template <typename Scalar>
LossTerms<Scalar> compute_loss(Tape<Scalar>& tape, const Model<Scalar>& model,
                               const Batch<Scalar>& batch, double p_tf, double lambda,
                               std::mt19937_64& rng);

/// Throws NumericError naming the first non-finite term of `report`.
void check_finite(const LossReport& report);

template <typename Scalar>
class Trainer {
 public:
  Trainer(Checkpoint<Scalar>& ckpt, const TrainConfig& config);

  /// Forward, loss, backward and one optimizer update at the checkpoint's
  /// current schedule; advances schedule.step. Returns the pre-update loss.
  LossReport train_step(const Batch<Scalar>& batch, std::mt19937_64& rng);

 private:
  Checkpoint<Scalar>& ckpt_;
  TrainConfig config_;
  Adam<Scalar> adam_;
};

struct EpochLog {
  int epoch = 0;
  double lambda = 0.0;  // mean over the epoch's steps
  double p_tf = 0.0;
  LossReport loss;      // batch-size weighted means
};

template <typename Scalar>
struct FitResult {
  Checkpoint<Scalar> checkpoint;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains from scratch on every window of `ds`.
template <typename Scalar>
FitResult<Scalar> fit(const MotionDataset& ds, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

/// Trains from scratch on the given windows.
template <typename Scalar>
FitResult<Scalar> fit(std::span<const SamplePair> windows, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

/// Continues training `ckpt` for config.epochs more epochs.
template <typename Scalar>
std::vector<EpochLog> fit_more(Checkpoint<Scalar>& ckpt, std::span<const SamplePair> windows,
                               const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Header `epoch,lambda,p_tf,kl_cs,kl_lcp,rec_cs,rec_lcp,total`.
void write_metric_log(std::span<const EpochLog> log, std::ostream& out);
void write_metric_log(std::span<const EpochLog> log, const std::filesystem::path& path);

/// Checkpoint file: magic, version, precision, section table, then a
/// trailing length and CRC-32 over everything before it.
template <typename Scalar>
void save_checkpoint(const Checkpoint<Scalar>& ckpt, const std::filesystem::path& path);
template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path);

/// Precision (32 or 64) recorded in a checkpoint file, after full
/// integrity checks.
int checkpoint_precision(const std::filesystem::path& path);

/// Canonical key-sorted text of the checkpoint's configuration.
template <typename Scalar>
std::map<std::string, std::string> checkpoint_config(const Checkpoint<Scalar>& ckpt);

}  // namespace lcpseq
