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

#include <random>
#include <vector>

#include "lcpseq/data.hpp"
#include "lcpseq/diffmath.hpp"
#include "lcpseq/loss.hpp"
#include "lcpseq/model.hpp"

namespace lcpseq::testing {

/// Difference step for the tiny instance. Smaller steps drown gradients
/// near 1e-8 in cancellation noise of the O(10) loss.
inline constexpr double kTinyStep = 1e-4;

/// H=8, d=4, J=2, t_obs=3, t_fut=3 at 64-bit. Weights are the seeded
/// initialization plus N(0, 0.3^2) jitter, so no block of parameters sits
/// in the near-zero-gradient regime of a fresh model.
struct TinyInstance {
  Model<double> model;
  std::vector<SamplePair> pairs;
  Batch<double> batch;
  LatentNoise<double> noise;
};

inline TinyInstance make_tiny(ConditioningScheme scheme = {}, std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.joints = 2;
  cfg.hidden = 8;
  cfg.latent = 4;
  cfg.embed = 6;
  cfg.scheme = scheme;
  SynthSpec spec;
  spec.joints = 2;
  spec.length = 6;
  spec.t_obs = 3;
  spec.n_motions = 3;
  spec.noise_std = 0.05;
  const SyntheticData syn = synth_generate(spec, seed);
  std::vector<SamplePair> pairs = make_windows(syn.dataset, 3, 3, 6);
  Batch<double> batch = make_batch<double>(pairs);
  std::mt19937_64 rng(seed + 100);
  LatentNoise<double> noise = draw_noise<double>(batch.size, cfg.latent, rng);
  Model<double> model(cfg, seed);
  std::mt19937_64 jitter_rng(seed + 1000);
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (auto& p : model.parameters()) {
    auto& v = p.tensor.value();
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += jitter(jitter_rng);
  }
  return TinyInstance{std::move(model), std::move(pairs), std::move(batch), std::move(noise)};
}

/// Total loss at fixed noise and fixed teacher-forcing coins.
inline ad::LossFn<double> tiny_loss(const TinyInstance& t, double lambda, double p_tf = 0.5) {
  return [&t, lambda, p_tf](ad::Tape<double>& tape) {
    std::mt19937_64 coins(42);
    const ForwardPass<double> pass = forward(tape, t.model, t.batch, p_tf, t.noise, coins);
    return total_loss(tape, pass, t.batch, lambda, t.model.config()).total;
  };
}

/// Same value as tiny_loss, but inside the data KL both the condition and
/// the LCP-VAE encoder's condition input are frozen at the current
/// parameters. Its true gradient is what the stop-gradient backward pass
/// should produce, so it is the finite-difference oracle.
inline ad::LossFn<double> tiny_surrogate_loss(const TinyInstance& t, double lambda,
                                              double p_tf = 0.5) {
  const bool lcp = t.model.config().scheme.decoder == DecoderMode::kReparamZ;
  const bool enc_h = t.model.config().scheme.encoder == EncoderMode::kConcatH;
  GaussianParams<double> frozen;
  ad::Tensor<double> frozen_input;
  {
    ad::Tape<double> tape(false);
    std::mt19937_64 coins(42);
    const ForwardPass<double> pass = forward(tape, t.model, t.batch, p_tf, t.noise, coins);
    frozen = {pass.cond.mu.detach(), pass.cond.sigma.detach()};
    frozen_input = enc_h ? pass.h_obs.detach() : pass.z_c.detach();
  }
  return [&t, lambda, p_tf, frozen, frozen_input, lcp](ad::Tape<double>& tape) {
    std::mt19937_64 coins(42);
    const ForwardPass<double> pass = forward(tape, t.model, t.batch, p_tf, t.noise, coins);
    const auto kl_cs = kl_standard(tape, pass.cond);
    const auto kl_data =
        lcp ? kl_lcp(tape, lcp_encode(tape, pass.h_future, frozen_input, t.model), frozen)
            : kl_standard(tape, pass.data);
    const auto rec_cs = recon_mse<double>(tape, pass.obs_recon, t.batch.observation);
    const auto rec_lcp = recon_mse<double>(tape, pass.future_recon, t.batch.future);
    return tape.add(tape.scale(tape.add(kl_cs, kl_data), lambda), tape.add(rec_cs, rec_lcp));
  };
}

/// Stop-gradient backward pass against central differences of the
/// surrogate.
inline double tiny_gradient_error(const TinyInstance& t, double lambda, double step) {
  std::vector<ad::Tensor<double>> params;
  for (const auto& p : t.model.parameters()) params.push_back(p.tensor);
  const auto analytic = ad::analytic_gradient<double>(tiny_loss(t, lambda), params);
  const auto numeric = ad::numeric_gradient<double>(tiny_surrogate_loss(t, lambda), params, step);
  return ad::relative_gradient_error<double>(analytic, numeric);
}

inline std::vector<ad::Tensor<double>> parameter_tensors(const Model<double>& m) {
  std::vector<ad::Tensor<double>> out;
  for (const auto& p : m.parameters()) out.push_back(p.tensor);
  return out;
}

/// Smallest |input| seen by any ReLU during one evaluation of `f`.
inline double relu_margin(const ad::LossFn<double>& f) {
  ad::Tape<double> tape;
  f(tape);
  return tape.min_relu_margin();
}

}  // namespace lcpseq::testing
