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

#include "lcpseq/loss.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lcpseq/errors.hpp"

namespace lcpseq {

namespace {

template <typename Scalar>
void require_finite(const GaussianParams<Scalar>& g, const char* where) {
  if (!g.mu.value().allFinite() || !g.sigma.value().allFinite()) {
    throw NumericError(std::string(where) + ": non-finite Gaussian parameters");
  }
}

template <typename Scalar>
Tensor<Scalar> batch_mean_of_sum(Tape<Scalar>& tape, const Tensor<Scalar>& per_element,
                                 Eigen::Index rows, Scalar factor) {
  return tape.mul(tape.sum(per_element),
                  Tensor<Scalar>::scalar(factor / static_cast<Scalar>(rows)));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> kl_standard(Tape<Scalar>& tape, const GaussianParams<Scalar>& g) {
  require_finite(g, "kl_standard");
  const Tensor<Scalar> var = tape.square(g.sigma);
  const Tensor<Scalar> inner =
      tape.sub(tape.add_constant(tape.add(tape.square(g.mu), var), Scalar(-1)), tape.log(var));
  return batch_mean_of_sum(tape, inner, g.mu.rows(), Scalar(0.5));
}

template <typename Scalar>
Tensor<Scalar> kl_lcp(Tape<Scalar>& tape, const GaussianParams<Scalar>& data,
                      const GaussianParams<Scalar>& cond) {
  require_finite(data, "kl_lcp");
  require_finite(cond, "kl_lcp");
  // Stop-gradient: the condition is read as plain values.
  const Tensor<Scalar> mu_c = cond.mu.detach();
  const Tensor<Scalar> inv_var_c(
      Matrix<Scalar>(cond.sigma.value().array().square().inverse().matrix()));
  const Tensor<Scalar> var = tape.square(data.sigma);
  const Tensor<Scalar> shift =
      tape.add(data.mu, tape.mul(tape.add_constant(data.sigma, Scalar(-1)), mu_c));
  const Tensor<Scalar> inner = tape.add(
      tape.sub(tape.add_constant(var, Scalar(-1)), tape.log(var)),
      tape.mul(tape.square(shift), inv_var_c));
  return batch_mean_of_sum(tape, inner, data.mu.rows(), Scalar(0.5));
}

template <typename Scalar>
Tensor<Scalar> recon_mse(Tape<Scalar>& tape, std::span<const Tensor<Scalar>> pred,
                         std::span<const Tensor<Scalar>> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw DimensionError("recon_mse: " + std::to_string(pred.size()) + " predicted vs " +
                         std::to_string(truth.size()) + " ground-truth frames");
  }
  Tensor<Scalar> acc;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred[t].rows() != truth[t].rows() || pred[t].cols() != truth[t].cols()) {
      throw DimensionError("recon_mse: frame shapes differ");
    }
    const Tensor<Scalar> e = tape.sum(tape.square(tape.sub(pred[t], truth[t])));
    acc = acc.defined() ? tape.add(acc, e) : e;
  }
  return tape.mul(acc, Tensor<Scalar>::scalar(Scalar(1) / static_cast<Scalar>(pred[0].rows())));
}

namespace {

GaussianParams<double> row_params(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma) {
  if (mu.size() != sigma.size()) throw DimensionError("Gaussian mean/std lengths differ");
  return {Tensor<double>(Matrix<double>(mu.transpose())),
          Tensor<double>(Matrix<double>(sigma.transpose()))};
}

}  // namespace

double kl_standard(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma) {
  Tape<double> tape(false);
  return kl_standard(tape, row_params(mu, sigma)).item();
}

double kl_lcp(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma,
              const Eigen::VectorXd& mu_c, const Eigen::VectorXd& sigma_c) {
  if (mu.size() != mu_c.size()) throw DimensionError("kl_lcp: latent sizes differ");
  Tape<double> tape(false);
  return kl_lcp(tape, row_params(mu, sigma), row_params(mu_c, sigma_c)).item();
}

double recon_mse(const Motion& pred, const Motion& truth) {
  if (pred.length() != truth.length() || pred.channels() != truth.channels()) {
    throw DimensionError("recon_mse: motion shapes differ");
  }
  return (pred.frames() - truth.frames()).squaredNorm();
}

double anneal_lambda(double step, const AnnealSchedule& s) {
  if (step < 0.0) throw ContractError("anneal_lambda: step must be >= 0");
  if (step >= s.saturate_step) return 1.0;
  return 1.0 / (1.0 + std::exp(-s.steepness * (step - s.midpoint)));
}

template <typename Scalar>
LossTerms<Scalar> total_loss(Tape<Scalar>& tape, std::span<const Tensor<Scalar>> pred_obs,
                             std::span<const Tensor<Scalar>> gt_obs,
                             std::span<const Tensor<Scalar>> pred_fut,
                             std::span<const Tensor<Scalar>> gt_fut,
                             const GaussianParams<Scalar>& cond,
                             const GaussianParams<Scalar>& data, double lambda,
                             bool conditional_prior) {
  LossTerms<Scalar> t;
  t.kl_cs = kl_standard(tape, cond);
  t.kl_lcp = conditional_prior ? kl_lcp(tape, data, cond) : kl_standard(tape, data);
  t.rec_cs = recon_mse(tape, pred_obs, gt_obs);
  t.rec_lcp = recon_mse(tape, pred_fut, gt_fut);
  const Tensor<Scalar> kl = tape.mul(tape.add(t.kl_cs, t.kl_lcp),
                                     Tensor<Scalar>::scalar(static_cast<Scalar>(lambda)));
  t.total = tape.add(tape.add(kl, t.rec_cs), t.rec_lcp);
  t.report.kl_cs = t.kl_cs.item();
  t.report.kl_lcp = t.kl_lcp.item();
  t.report.rec_cs = t.rec_cs.item();
  t.report.rec_lcp = t.rec_lcp.item();
  t.report.lambda = lambda;
  t.report.total = t.total.item();
  return t;
}

template <typename Scalar>
LossTerms<Scalar> total_loss(Tape<Scalar>& tape, const ForwardPass<Scalar>& pass,
                             const Batch<Scalar>& batch, double lambda,
                             const ModelConfig& config) {
  return total_loss<Scalar>(tape, pass.obs_recon, batch.observation, pass.future_recon,
                            batch.future, pass.cond, pass.data_kl, lambda,
                            config.scheme.decoder == DecoderMode::kReparamZ);
}

KlEstimate mc_kl_oracle(const Eigen::VectorXd& p_mean, const Eigen::VectorXd& p_std,
                        const Eigen::VectorXd& q_mean, const Eigen::VectorXd& q_std,
                        std::int64_t n, std::uint64_t seed) {
  if (n < 10000) throw ContractError("mc_kl_oracle: n must be >= 1e4");
  const Eigen::Index d = p_mean.size();
  if (p_std.size() != d || q_mean.size() != d || q_std.size() != d) {
    throw DimensionError("mc_kl_oracle: parameter lengths differ");
  }
  // x = p_mean + p_std * e, so per coordinate
  //   zq^2 - e^2 = a^2 + 2ab e + (b^2 - 1) e^2,  a = (p_mean - q_mean) / q_std, b = p_std / q_std.
  const Eigen::ArrayXd a = (p_mean - q_mean).array() / q_std.array();
  const Eigen::ArrayXd b = p_std.array() / q_std.array();
  const double base = (q_std.array().log() - p_std.array().log()).sum() + 0.5 * a.square().sum();
  const Eigen::RowVectorXd lin = (a * b).matrix().transpose();
  const Eigen::RowVectorXd quad = (0.5 * (b.square() - 1.0)).matrix().transpose();

  // Polar method in blocks of samples; each block is d x cols standard
  // normals. One 64-bit draw gives both 32-bit coordinates of a candidate.
  constexpr std::int64_t kBlock = 2048;
  std::mt19937_64 rng(seed);
  const double scale32 = 2.0 / 4294967296.0;
  Eigen::ArrayXd u(d * kBlock / 2 + 1), v(d * kBlock / 2 + 1);
  Eigen::MatrixXd e(d, kBlock);
  double mean = 0.0;
  double m2 = 0.0;
  std::int64_t seen = 0;
  while (seen < n) {
    const std::int64_t cols = std::min(kBlock, n - seen);
    const Eigen::Index count = d * cols;
    const Eigen::Index pairs = (count + 1) / 2;
    for (Eigen::Index i = 0; i < pairs;) {
      const std::uint64_t bits = rng();
      const double x = static_cast<double>(bits >> 32) * scale32 - 1.0;
      const double y = static_cast<double>(bits & 0xffffffffULL) * scale32 - 1.0;
      const double r2 = x * x + y * y;
      if (r2 < 1.0 && r2 > 0.0) {
        u[i] = x;
        v[i] = y;
        ++i;
      }
    }
    const auto uh = u.head(pairs);
    const auto vh = v.head(pairs);
    const Eigen::ArrayXd r2 = uh.square() + vh.square();
    const Eigen::ArrayXd f = (-2.0 * r2.log() / r2).sqrt();
    Eigen::Map<Eigen::ArrayXd> flat(e.data(), count);
    flat.head(pairs) = uh * f;
    flat.tail(count - pairs) = (vh * f).head(count - pairs);
    const auto block = e.leftCols(cols);
    const Eigen::RowVectorXd lr =
        (lin * block + quad * block.cwiseAbs2()).array() + base;
    for (Eigen::Index j = 0; j < cols; ++j) {
      // Welford update.
      ++seen;
      const double delta = lr[j] - mean;
      mean += delta / static_cast<double>(seen);
      m2 += delta * (lr[j] - mean);
    }
  }
  const double var = m2 / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

#define LCPSEQ_INSTANTIATE_LOSS(S)                                                            \
  template Tensor<S> kl_standard(Tape<S>&, const GaussianParams<S>&);                         \
  template Tensor<S> kl_lcp(Tape<S>&, const GaussianParams<S>&, const GaussianParams<S>&);    \
  template Tensor<S> recon_mse(Tape<S>&, std::span<const Tensor<S>>,                          \
                               std::span<const Tensor<S>>);                                   \
  template LossTerms<S> total_loss(Tape<S>&, std::span<const Tensor<S>>,                      \
                                   std::span<const Tensor<S>>, std::span<const Tensor<S>>,    \
                                   std::span<const Tensor<S>>, const GaussianParams<S>&,      \
                                   const GaussianParams<S>&, double, bool);                   \
  template LossTerms<S> total_loss(Tape<S>&, const ForwardPass<S>&, const Batch<S>&, double,  \
                                   const ModelConfig&);

LCPSEQ_INSTANTIATE_LOSS(float)
LCPSEQ_INSTANTIATE_LOSS(double)

#undef LCPSEQ_INSTANTIATE_LOSS

}  // namespace lcpseq
