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

// Inference. The latent comes from the observation alone:
//
//   reparam_z:        z = mu_c + sigma_c * eps  (decoder input z)
//   concat_h / _z:    z = eps ~ N(0, I)         (decoder input [z, h_t] or [z, mu_c])
//
// Each sample is decoded on its own single-row tape with p_tf = 0, so
// results do not depend on K or on the thread count.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "lcpseq/model.hpp"
#include "lcpseq/pose.hpp"

namespace lcpseq {

struct PredictionSet {
  Motion observation;
  std::vector<Motion> samples;
  std::vector<Eigen::VectorXd> epsilon;  // the draw behind each sample
  std::vector<Eigen::VectorXd> z_used;   // latent fed to the decoder
  std::uint64_t seed = 0;
};

/// The condition posterior (mu_c, sigma_c) for one observation.
template <typename Scalar>
GaussianParams<Scalar> condition_posterior(const Motion& obs, const Model<Scalar>& model);

/// K futures with eps_k drawn from `seed`.
template <typename Scalar>
PredictionSet sample_futures(const Motion& obs, const Model<Scalar>& model, int k, int t_fut,
                             std::uint64_t seed);

/// One future per row of `eps` (K x latent); `seed` is only recorded.
template <typename Scalar>
PredictionSet sample_futures(const Motion& obs, const Model<Scalar>& model,
                             const Eigen::MatrixXd& eps, int t_fut, std::uint64_t seed = 0);

/// Deterministic prediction at eps = 0 (z = mu_c under reparam_z).
template <typename Scalar>
Motion sample_mode(const Motion& obs, const Model<Scalar>& model, int t_fut);

/// {meta:{seed,K,t_obs,t_fut,fps,J}, observation, samples, epsilon, z_used};
/// frames are rows of 4J values in (w, x, y, z) joint order.
void write_prediction_json(const PredictionSet& set, std::ostream& out);
void write_prediction_json(const PredictionSet& set, const std::filesystem::path& path);
PredictionSet read_prediction_json(std::istream& in);
PredictionSet read_prediction_json(const std::filesystem::path& path);

/// One quat_csv per sample, named <stem>_<k>.csv; returns the paths written.
std::vector<std::filesystem::path> write_prediction_csv(const PredictionSet& set,
                                                        const std::filesystem::path& dir,
                                                        const std::string& stem);

}  // namespace lcpseq
