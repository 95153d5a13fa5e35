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
#include <span>

#include "lcpseq/model.hpp"
#include "lcpseq/pose.hpp"

namespace lcpseq {

/// Scalar values of every term of one loss evaluation.
struct LossReport {
  double kl_cs = 0.0;
  double kl_lcp = 0.0;  // data-latent KL; against N(0, I) under concat decoders
  double rec_cs = 0.0;
  double rec_lcp = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

// Batched terms below average over rows (batch) and sum within a row.

/// KL(N(mu, diag sigma^2) || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - 1 - log sigma^2).
template <typename Scalar>
Tensor<Scalar> kl_standard(Tape<Scalar>& tape, const GaussianParams<Scalar>& g);

/// KL(N(mu + sigma*mu_c, diag(sigma*sigma_c)^2) || N(mu_c, diag sigma_c^2))
///   = 1/2 sum(sigma^2 - 1 - log sigma^2 + (mu + (sigma - 1) mu_c)^2 / sigma_c^2).
/// (mu_c, sigma_c) enter as constants: no gradient reaches the condition.
template <typename Scalar>
Tensor<Scalar> kl_lcp(Tape<Scalar>& tape, const GaussianParams<Scalar>& data,
                      const GaussianParams<Scalar>& cond);

/// Squared error summed over frames, joints and quaternion components.
template <typename Scalar>
Tensor<Scalar> recon_mse(Tape<Scalar>& tape, std::span<const Tensor<Scalar>> pred,
                         std::span<const Tensor<Scalar>> truth);

double kl_standard(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma);
double kl_lcp(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma,
              const Eigen::VectorXd& mu_c, const Eigen::VectorXd& sigma_c);
double recon_mse(const Motion& pred, const Motion& truth);

struct AnnealSchedule {
  double midpoint = 2500.0;
  double steepness = 1.0 / 250.0;
  double saturate_step = 10000.0;
};

/// Logistic weight, clamped to exactly 1 from saturate_step on.
double anneal_lambda(double step, const AnnealSchedule& schedule);

template <typename Scalar>
struct LossTerms {
  Tensor<Scalar> kl_cs, kl_lcp, rec_cs, rec_lcp, total;
  LossReport report;
};

/// lambda * (kl_cs + kl_data) + rec_cs + rec_lcp. With `conditional_prior`
/// the data KL is kl_lcp against the condition; otherwise kl_standard.
template <typename Scalar>
LossTerms<Scalar> total_loss(Tape<Scalar>& tape, std::span<const Tensor<Scalar>> pred_obs,
                             std::span<const Tensor<Scalar>> gt_obs,
                             std::span<const Tensor<Scalar>> pred_fut,
                             std::span<const Tensor<Scalar>> gt_fut,
                             const GaussianParams<Scalar>& cond,
                             const GaussianParams<Scalar>& data, double lambda,
                             bool conditional_prior);

/// Loss of a full forward pass under the model's conditioning scheme.
template <typename Scalar>
LossTerms<Scalar> total_loss(Tape<Scalar>& tape, const ForwardPass<Scalar>& pass,
                             const Batch<Scalar>& batch, double lambda,
                             const ModelConfig& config);

struct KlEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo KL(p || q) between diagonal Gaussians: mean of
/// log p(x) - log q(x) over n draws x ~ p. Requires n >= 1e4.
KlEstimate mc_kl_oracle(const Eigen::VectorXd& p_mean, const Eigen::VectorXd& p_std,
                        const Eigen::VectorXd& q_mean, const Eigen::VectorXd& q_std,
                        std::int64_t n, std::uint64_t seed);

}  // namespace lcpseq
