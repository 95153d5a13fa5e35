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

// Two-autoencoder sequence model.
//
// The observed window x^{1:t} goes through a GRU encoder to h_t, and a
// Gaussian head (CS-VAE encoder) gives (mu_c, sigma_c). The future window
// goes through its own GRU encoder to h_T; the LCP-VAE encoder sees h_T
// together with a condition and gives (mu, sigma). The latent handed to the
// future decoder depends on the conditioning scheme:
//
//   reparam_z:  z = mu + sigma * z_c,  z_c = mu_c + sigma_c * eps
//   concat_h:   z = mu + sigma * eps,  decoder input [z, h_t]
//   concat_z:   z = mu + sigma * eps,  decoder input [z, z_c]
//
// Each decoder maps its latent input through a dense stack and tanh to the
// initial GRU state, then rolls out autoregressively with teacher forcing.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lcpseq/data.hpp"
#include "lcpseq/diffmath.hpp"

namespace lcpseq {

enum class EncoderMode { kConcatH, kConcatZ };
enum class DecoderMode { kConcatH, kConcatZ, kReparamZ };

struct ConditioningScheme {
  EncoderMode encoder = EncoderMode::kConcatH;
  DecoderMode decoder = DecoderMode::kReparamZ;

  /// "encoder,decoder", e.g. "concat_h,reparam_z".
  std::string to_string() const;
  /// Inverse of to_string(); throws ConfigError on anything else.
  static ConditioningScheme parse(const std::string& text);

  friend bool operator==(const ConditioningScheme&, const ConditioningScheme&) = default;
};

/// The four encoder/decoder pairings compared in the ablation.
std::vector<ConditioningScheme> ablation_schemes();

struct ModelConfig {
  int joints = 32;
  int hidden = 1024;
  int latent = 128;
  int embed = 512;
  double sigma_floor = 1e-4;
  ConditioningScheme scheme;

  int channels() const { return 4 * joints; }
  /// Width of the LCP-VAE encoder input.
  int lcp_encoder_input() const;
  /// Width of the future decoder's latent input.
  int lcp_decoder_input() const;
  void validate() const;
};

template <typename Scalar>
using Tensor = ad::Tensor<Scalar>;
template <typename Scalar>
using Tape = ad::Tape<Scalar>;
template <typename Scalar>
using Matrix = ad::Matrix<Scalar>;

/// Gate weights of one GRU layer. w* act on the input (D_in x H), u* on the
/// previous state (H x H), b* are 1 x H rows.
template <typename Scalar>
struct GruParams {
  Tensor<Scalar> wz, uz, bz;  // update
  Tensor<Scalar> wr, ur, br;  // reset
  Tensor<Scalar> wc, uc, bc;  // candidate

  Eigen::Index input_size() const { return wz.rows(); }
  Eigen::Index hidden_size() const { return uz.rows(); }
};

template <typename Scalar>
struct Dense {
  Tensor<Scalar> w;  // in x out
  Tensor<Scalar> b;  // 1 x out
};

/// Diagonal Gaussian, one row per batch element.
template <typename Scalar>
struct GaussianParams {
  Tensor<Scalar> mu;
  Tensor<Scalar> sigma;
};

/// in -> embed (ReLU) -> (mu, ReLU(raw) + floor).
template <typename Scalar>
struct GaussianEncoderParams {
  Dense<Scalar> hidden;
  Dense<Scalar> mu;
  Dense<Scalar> sigma;
};

/// in -> embed (ReLU) -> H (tanh).
template <typename Scalar>
struct LatentDecoderParams {
  Dense<Scalar> hidden;
  Dense<Scalar> out;
};

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar> tensor;
};

/// Uniform(+-1/sqrt(in)) weights, zero bias.
template <typename Scalar>
Dense<Scalar> init_dense(int in, int out, std::mt19937_64& rng);

/// Uniform(+-1/sqrt(hidden)) weights, zero biases.
template <typename Scalar>
GruParams<Scalar> init_gru(int in, int hidden, std::mt19937_64& rng);

/// All learnable parameters of both autoencoders.
template <typename Scalar>
class Model {
 public:
  /// Seeded initialization: uniform(+-1/sqrt(fan_in)) weights, zero biases,
  /// sigma-head biases at 1 and pose-head biases at the identity quaternion.
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Every parameter under a stable name, in a fixed order.
  std::vector<NamedTensor<Scalar>> parameters() const;
  void zero_grad();

  /// Deep copy (fresh storage for every parameter).
  Model clone() const;

  GruParams<Scalar> obs_encoder, obs_decoder, fut_encoder, fut_decoder;
  Dense<Scalar> obs_head, fut_head;
  GaussianEncoderParams<Scalar> cs_encoder, lcp_encoder;
  LatentDecoderParams<Scalar> cs_decoder, lcp_decoder;

 private:
  ModelConfig config_;
};

template <typename Scalar>
Tensor<Scalar> dense(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Dense<Scalar>& d);

/// h' = (1 - u) * h + u * c with u, r sigmoid gates and
/// c = tanh(x Wc + (r * h) Uc + bc).
template <typename Scalar>
Tensor<Scalar> gru_step(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Tensor<Scalar>& h,
                        const GruParams<Scalar>& p);

/// Folds `frames` (each B x D_in) from a zero state; returns the last state.
template <typename Scalar>
Tensor<Scalar> encode_sequence(Tape<Scalar>& tape, std::span<const Tensor<Scalar>> frames,
                               const GruParams<Scalar>& p);

template <typename Scalar>
GaussianParams<Scalar> gaussian_encode(Tape<Scalar>& tape, const Tensor<Scalar>& input,
                                       const GaussianEncoderParams<Scalar>& p,
                                       double sigma_floor);

/// (mu_c, sigma_c) from the observation summary h_t.
template <typename Scalar>
GaussianParams<Scalar> cs_encode(Tape<Scalar>& tape, const Tensor<Scalar>& h_t,
                                 const Model<Scalar>& model);

/// (mu, sigma) from [h_T, condition]; the condition is h_t or z_c depending
/// on the encoder mode.
template <typename Scalar>
GaussianParams<Scalar> lcp_encode(Tape<Scalar>& tape, const Tensor<Scalar>& h_future,
                                  const Tensor<Scalar>& condition, const Model<Scalar>& model);

/// z_c = mu_c + sigma_c * eps.
template <typename Scalar>
Tensor<Scalar> reparam_standard(Tape<Scalar>& tape, const GaussianParams<Scalar>& g,
                                const Tensor<Scalar>& eps);

/// z = mu + sigma * z_c.
template <typename Scalar>
Tensor<Scalar> reparam_extended(Tape<Scalar>& tape, const GaussianParams<Scalar>& g,
                                const Tensor<Scalar>& z_c);

/// h0 = tanh(dense stack), every component in (-1, 1).
template <typename Scalar>
Tensor<Scalar> latent_to_hidden(Tape<Scalar>& tape, const Tensor<Scalar>& z,
                                const LatentDecoderParams<Scalar>& p);

/// Per-joint normalization and w >= 0 flip, expressed in differentiable
/// primitives. The hemisphere sign is taken from the values and held
/// constant.
template <typename Scalar>
Tensor<Scalar> canonicalize_output(Tape<Scalar>& tape, const Tensor<Scalar>& raw, int joints);

template <typename Scalar>
struct DecodeOptions {
  int steps = 1;
  /// Probability of feeding the ground-truth previous pose.
  double p_tf = 0.0;
  /// One B x C constant per step; required when p_tf > 0.
  const std::vector<Tensor<Scalar>>* target = nullptr;
  /// Coin source; only consumed when 0 < p_tf < 1.
  std::mt19937_64* rng = nullptr;
  /// When set, receives the input fed at every step.
  std::vector<Matrix<Scalar>>* input_trace = nullptr;
};

/// Autoregressive rollout from h0. Step 0 consumes `seed_pose`; step k > 0
/// consumes target[k - 1] with probability p_tf (one coin per row and step)
/// and the previous output otherwise. Outputs are canonical quaternions.
template <typename Scalar>
std::vector<Tensor<Scalar>> decode_motion(Tape<Scalar>& tape, const Tensor<Scalar>& h0,
                                          const Tensor<Scalar>& seed_pose,
                                          const GruParams<Scalar>& gru,
                                          const Dense<Scalar>& head, int joints,
                                          const DecodeOptions<Scalar>& options);

/// Windows laid out for batched evaluation: one B x C matrix per frame.
template <typename Scalar>
struct Batch {
  std::vector<Tensor<Scalar>> observation;
  std::vector<Tensor<Scalar>> future;
  Eigen::Index size = 0;
};

template <typename Scalar>
Batch<Scalar> make_batch(std::span<const SamplePair* const> pairs);
template <typename Scalar>
Batch<Scalar> make_batch(std::span<const SamplePair> pairs);

/// First input of the observation decoder: every joint at identity.
template <typename Scalar>
Tensor<Scalar> rest_pose(Eigen::Index rows, int joints);

/// Everything the losses need from one pass over a batch.
template <typename Scalar>
struct ForwardPass {
  Tensor<Scalar> h_obs, h_future;
  GaussianParams<Scalar> cond;  // (mu_c, sigma_c)
  GaussianParams<Scalar> data;  // (mu, sigma)
  /// Same values as `data`, encoded from a detached condition under the
  /// reparam_z decoder so the data KL cannot reach the CS-VAE.
  GaussianParams<Scalar> data_kl;
  Tensor<Scalar> z_c, z;
  std::vector<Tensor<Scalar>> obs_recon, future_recon;
};

/// Noise draws for one forward pass. Rows = batch.
template <typename Scalar>
struct LatentNoise {
  Matrix<Scalar> cond;  // eps for z_c
  Matrix<Scalar> data;  // eps for z under concat decoders
};

template <typename Scalar>
LatentNoise<Scalar> draw_noise(Eigen::Index rows, int latent, std::mt19937_64& rng);

/// Full training-time pass through both autoencoders.
template <typename Scalar>
ForwardPass<Scalar> forward(Tape<Scalar>& tape, const Model<Scalar>& model,
                            const Batch<Scalar>& batch, double p_tf,
                            const LatentNoise<Scalar>& noise, std::mt19937_64& rng);

}  // namespace lcpseq
