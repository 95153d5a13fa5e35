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

#include "lcpseq/model.hpp"

#include <algorithm>
#include <cmath>

#include "lcpseq/errors.hpp"

namespace lcpseq {

std::string ConditioningScheme::to_string() const {
  std::string out = encoder == EncoderMode::kConcatH ? "concat_h" : "concat_z";
  out += ",";
  switch (decoder) {
    case DecoderMode::kConcatH: out += "concat_h"; break;
    case DecoderMode::kConcatZ: out += "concat_z"; break;
    case DecoderMode::kReparamZ: out += "reparam_z"; break;
  }
  return out;
}

ConditioningScheme ConditioningScheme::parse(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) {
    throw ConfigError("scheme must be <encoder>,<decoder>, got '" + text + "'");
  }
  const std::string enc = text.substr(0, comma);
  const std::string dec = text.substr(comma + 1);
  ConditioningScheme s;
  if (enc == "concat_h") s.encoder = EncoderMode::kConcatH;
  else if (enc == "concat_z") s.encoder = EncoderMode::kConcatZ;
  else throw ConfigError("unknown encoder conditioning '" + enc + "'");
  if (dec == "concat_h") s.decoder = DecoderMode::kConcatH;
  else if (dec == "concat_z") s.decoder = DecoderMode::kConcatZ;
  else if (dec == "reparam_z") s.decoder = DecoderMode::kReparamZ;
  else throw ConfigError("unknown decoder conditioning '" + dec + "'");
  return s;
}

std::vector<ConditioningScheme> ablation_schemes() {
  return {
      {EncoderMode::kConcatZ, DecoderMode::kReparamZ},
      {EncoderMode::kConcatH, DecoderMode::kConcatH},
      {EncoderMode::kConcatZ, DecoderMode::kConcatZ},
      {EncoderMode::kConcatH, DecoderMode::kReparamZ},
  };
}

int ModelConfig::lcp_encoder_input() const {
  return hidden + (scheme.encoder == EncoderMode::kConcatH ? hidden : latent);
}

int ModelConfig::lcp_decoder_input() const {
  switch (scheme.decoder) {
    case DecoderMode::kConcatH: return latent + hidden;
    case DecoderMode::kConcatZ: return 2 * latent;
    case DecoderMode::kReparamZ: return latent;
  }
  return latent;
}

void ModelConfig::validate() const {
  if (joints < 1 || hidden < 1 || latent < 1 || embed < 1) {
    throw ConfigError("model dimensions must be >= 1");
  }
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be > 0");
}

namespace {

template <typename Scalar>
Tensor<Scalar> uniform(Eigen::Index rows, Eigen::Index cols, double bound,
                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(u(rng));
  return Tensor<Scalar>(std::move(m), true);
}

template <typename Scalar>
Tensor<Scalar> filled(Eigen::Index rows, Eigen::Index cols, Scalar v) {
  return Tensor<Scalar>(Matrix<Scalar>::Constant(rows, cols, v), true);
}

template <typename Scalar>
Dense<Scalar> make_dense(int in, int out, std::mt19937_64& rng) {
  return {uniform<Scalar>(in, out, 1.0 / std::sqrt(in), rng), filled<Scalar>(1, out, 0)};
}

template <typename Scalar>
GruParams<Scalar> make_gru(int in, int hidden, std::mt19937_64& rng) {
  const double k = 1.0 / std::sqrt(hidden);
  GruParams<Scalar> p;
  p.wz = uniform<Scalar>(in, hidden, k, rng);
  p.uz = uniform<Scalar>(hidden, hidden, k, rng);
  p.bz = filled<Scalar>(1, hidden, 0);
  p.wr = uniform<Scalar>(in, hidden, k, rng);
  p.ur = uniform<Scalar>(hidden, hidden, k, rng);
  p.br = filled<Scalar>(1, hidden, 0);
  p.wc = uniform<Scalar>(in, hidden, k, rng);
  p.uc = uniform<Scalar>(hidden, hidden, k, rng);
  p.bc = filled<Scalar>(1, hidden, 0);
  return p;
}

template <typename Scalar>
GaussianEncoderParams<Scalar> make_gaussian(int in, int embed, int latent,
                                            std::mt19937_64& rng) {
  GaussianEncoderParams<Scalar> p;
  p.hidden = make_dense<Scalar>(in, embed, rng);
  p.mu = make_dense<Scalar>(embed, latent, rng);
  p.sigma = make_dense<Scalar>(embed, latent, rng);
  p.sigma.b.value().setOnes();
  return p;
}

template <typename Scalar>
Dense<Scalar> make_pose_head(int hidden, int joints, std::mt19937_64& rng) {
  Dense<Scalar> d = make_dense<Scalar>(hidden, 4 * joints, rng);
  for (int j = 0; j < joints; ++j) d.b.value()(0, 4 * j) = Scalar(1);
  return d;
}

template <typename Scalar>
Tensor<Scalar> copy(const Tensor<Scalar>& t) {
  return Tensor<Scalar>(t.value(), t.requires_grad());
}

template <typename Scalar>
Dense<Scalar> copy(const Dense<Scalar>& d) {
  return {copy(d.w), copy(d.b)};
}

template <typename Scalar>
GruParams<Scalar> copy(const GruParams<Scalar>& p) {
  return {copy(p.wz), copy(p.uz), copy(p.bz), copy(p.wr), copy(p.ur),
          copy(p.br), copy(p.wc), copy(p.uc), copy(p.bc)};
}

template <typename Scalar>
void add_gru(std::vector<NamedTensor<Scalar>>& out, const std::string& prefix,
             const GruParams<Scalar>& p) {
  out.push_back({prefix + ".wz", p.wz});
  out.push_back({prefix + ".uz", p.uz});
  out.push_back({prefix + ".bz", p.bz});
  out.push_back({prefix + ".wr", p.wr});
  out.push_back({prefix + ".ur", p.ur});
  out.push_back({prefix + ".br", p.br});
  out.push_back({prefix + ".wc", p.wc});
  out.push_back({prefix + ".uc", p.uc});
  out.push_back({prefix + ".bc", p.bc});
}

template <typename Scalar>
void add_dense(std::vector<NamedTensor<Scalar>>& out, const std::string& prefix,
               const Dense<Scalar>& d) {
  out.push_back({prefix + ".w", d.w});
  out.push_back({prefix + ".b", d.b});
}

}  // namespace

template <typename Scalar>
Dense<Scalar> init_dense(int in, int out, std::mt19937_64& rng) {
  return make_dense<Scalar>(in, out, rng);
}

template <typename Scalar>
GruParams<Scalar> init_gru(int in, int hidden, std::mt19937_64& rng) {
  return make_gru<Scalar>(in, hidden, rng);
}

template <typename Scalar>
Model<Scalar>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int c = config_.channels();
  const int h = config_.hidden;
  const int d = config_.latent;
  const int e = config_.embed;
  obs_encoder = make_gru<Scalar>(c, h, rng);
  obs_decoder = make_gru<Scalar>(c, h, rng);
  fut_encoder = make_gru<Scalar>(c, h, rng);
  fut_decoder = make_gru<Scalar>(c, h, rng);
  obs_head = make_pose_head<Scalar>(h, config_.joints, rng);
  fut_head = make_pose_head<Scalar>(h, config_.joints, rng);
  cs_encoder = make_gaussian<Scalar>(h, e, d, rng);
  lcp_encoder = make_gaussian<Scalar>(config_.lcp_encoder_input(), e, d, rng);
  cs_decoder = {make_dense<Scalar>(d, e, rng), make_dense<Scalar>(e, h, rng)};
  lcp_decoder = {make_dense<Scalar>(config_.lcp_decoder_input(), e, rng),
                 make_dense<Scalar>(e, h, rng)};
}

template <typename Scalar>
std::vector<NamedTensor<Scalar>> Model<Scalar>::parameters() const {
  std::vector<NamedTensor<Scalar>> out;
  add_gru(out, "obs_encoder", obs_encoder);
  add_gru(out, "obs_decoder", obs_decoder);
  add_gru(out, "fut_encoder", fut_encoder);
  add_gru(out, "fut_decoder", fut_decoder);
  add_dense(out, "obs_head", obs_head);
  add_dense(out, "fut_head", fut_head);
  add_dense(out, "cs_encoder.hidden", cs_encoder.hidden);
  add_dense(out, "cs_encoder.mu", cs_encoder.mu);
  add_dense(out, "cs_encoder.sigma", cs_encoder.sigma);
  add_dense(out, "lcp_encoder.hidden", lcp_encoder.hidden);
  add_dense(out, "lcp_encoder.mu", lcp_encoder.mu);
  add_dense(out, "lcp_encoder.sigma", lcp_encoder.sigma);
  add_dense(out, "cs_decoder.hidden", cs_decoder.hidden);
  add_dense(out, "cs_decoder.out", cs_decoder.out);
  add_dense(out, "lcp_decoder.hidden", lcp_decoder.hidden);
  add_dense(out, "lcp_decoder.out", lcp_decoder.out);
  return out;
}

template <typename Scalar>
void Model<Scalar>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename Scalar>
Model<Scalar> Model<Scalar>::clone() const {
  Model out = *this;
  out.obs_encoder = copy(obs_encoder);
  out.obs_decoder = copy(obs_decoder);
  out.fut_encoder = copy(fut_encoder);
  out.fut_decoder = copy(fut_decoder);
  out.obs_head = copy(obs_head);
  out.fut_head = copy(fut_head);
  out.cs_encoder = {copy(cs_encoder.hidden), copy(cs_encoder.mu), copy(cs_encoder.sigma)};
  out.lcp_encoder = {copy(lcp_encoder.hidden), copy(lcp_encoder.mu), copy(lcp_encoder.sigma)};
  out.cs_decoder = {copy(cs_decoder.hidden), copy(cs_decoder.out)};
  out.lcp_decoder = {copy(lcp_decoder.hidden), copy(lcp_decoder.out)};
  return out;
}

template <typename Scalar>
Tensor<Scalar> dense(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Dense<Scalar>& d) {
  return tape.add(tape.matmul(x, d.w), d.b);
}

template <typename Scalar>
Tensor<Scalar> gru_step(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Tensor<Scalar>& h,
                        const GruParams<Scalar>& p) {
  if (x.cols() != p.input_size() || h.cols() != p.hidden_size() || x.rows() != h.rows()) {
    throw DimensionError("gru_step: input " + ad::detail::shape_str(x) + " / state " +
                         ad::detail::shape_str(h) + " do not match parameters");
  }
  auto gate = [&](const Tensor<Scalar>& w, const Tensor<Scalar>& u, const Tensor<Scalar>& b,
                  const Tensor<Scalar>& state) {
    return tape.add(tape.add(tape.matmul(x, w), tape.matmul(state, u)), b);
  };
  const Tensor<Scalar> update = tape.sigmoid(gate(p.wz, p.uz, p.bz, h));
  const Tensor<Scalar> reset = tape.sigmoid(gate(p.wr, p.ur, p.br, h));
  const Tensor<Scalar> cand = tape.tanh(gate(p.wc, p.uc, p.bc, tape.mul(reset, h)));
  // (1 - u) * h + u * c
  const Tensor<Scalar> keep = tape.add_constant(tape.scale(update, Scalar(-1)), Scalar(1));
  return tape.add(tape.mul(keep, h), tape.mul(update, cand));
}

template <typename Scalar>
Tensor<Scalar> encode_sequence(Tape<Scalar>& tape, std::span<const Tensor<Scalar>> frames,
                               const GruParams<Scalar>& p) {
  if (frames.empty()) throw ContractError("encode_sequence: empty input");
  Tensor<Scalar> h = Tensor<Scalar>::zeros(frames.front().rows(), p.hidden_size());
  for (const auto& x : frames) h = gru_step(tape, x, h, p);
  return h;
}

template <typename Scalar>
GaussianParams<Scalar> gaussian_encode(Tape<Scalar>& tape, const Tensor<Scalar>& input,
                                       const GaussianEncoderParams<Scalar>& p,
                                       double sigma_floor) {
  const Tensor<Scalar> e = tape.relu(dense(tape, input, p.hidden));
  GaussianParams<Scalar> g;
  g.mu = dense(tape, e, p.mu);
  g.sigma = tape.add_constant(tape.relu(dense(tape, e, p.sigma)),
                              static_cast<Scalar>(sigma_floor));
  return g;
}

template <typename Scalar>
GaussianParams<Scalar> cs_encode(Tape<Scalar>& tape, const Tensor<Scalar>& h_t,
                                 const Model<Scalar>& model) {
  return gaussian_encode(tape, h_t, model.cs_encoder, model.config().sigma_floor);
}

template <typename Scalar>
GaussianParams<Scalar> lcp_encode(Tape<Scalar>& tape, const Tensor<Scalar>& h_future,
                                  const Tensor<Scalar>& condition, const Model<Scalar>& model) {
  return gaussian_encode(tape, tape.concat(h_future, condition), model.lcp_encoder,
                         model.config().sigma_floor);
}

template <typename Scalar>
Tensor<Scalar> reparam_standard(Tape<Scalar>& tape, const GaussianParams<Scalar>& g,
                                const Tensor<Scalar>& eps) {
  return tape.add(g.mu, tape.mul(g.sigma, eps));
}

template <typename Scalar>
Tensor<Scalar> reparam_extended(Tape<Scalar>& tape, const GaussianParams<Scalar>& g,
                                const Tensor<Scalar>& z_c) {
  return tape.add(g.mu, tape.mul(g.sigma, z_c));
}

template <typename Scalar>
Tensor<Scalar> latent_to_hidden(Tape<Scalar>& tape, const Tensor<Scalar>& z,
                                const LatentDecoderParams<Scalar>& p) {
  return tape.tanh(dense(tape, tape.relu(dense(tape, z, p.hidden)), p.out));
}

template <typename Scalar>
Tensor<Scalar> canonicalize_output(Tape<Scalar>& tape, const Tensor<Scalar>& raw, int joints) {
  if (raw.cols() != 4 * joints) throw DimensionError("canonicalize_output: width != 4J");
  Matrix<Scalar> group = Matrix<Scalar>::Zero(4 * joints, joints);
  for (int j = 0; j < joints; ++j) group.block(4 * j, j, 4, 1).setOnes();
  const Tensor<Scalar> sum_rows(group);
  const Tensor<Scalar> spread(Matrix<Scalar>(group.transpose()));
  const Tensor<Scalar> norm2 = tape.add_constant(tape.matmul(tape.square(raw), sum_rows),
                                                 static_cast<Scalar>(1e-12));
  const Tensor<Scalar> inv = tape.matmul(tape.rsqrt(norm2), spread);
  Matrix<Scalar> sign(raw.rows(), raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (int j = 0; j < joints; ++j) {
      sign.block(r, 4 * j, 1, 4).setConstant(raw.value()(r, 4 * j) < Scalar(0) ? -1 : 1);
    }
  }
  return tape.mul(raw, tape.mul(inv, Tensor<Scalar>(std::move(sign))));
}

template <typename Scalar>
std::vector<Tensor<Scalar>> decode_motion(Tape<Scalar>& tape, const Tensor<Scalar>& h0,
                                          const Tensor<Scalar>& seed_pose,
                                          const GruParams<Scalar>& gru,
                                          const Dense<Scalar>& head, int joints,
                                          const DecodeOptions<Scalar>& options) {
  if (options.steps < 1) throw ContractError("decode_motion: steps must be >= 1");
  const bool forcing = options.p_tf > 0.0;
  if (forcing && (options.target == nullptr ||
                  options.target->size() + 1 < static_cast<std::size_t>(options.steps))) {
    throw ContractError("decode_motion: teacher forcing requested without a target");
  }
  const bool coin = forcing && options.p_tf < 1.0;
  if (coin && options.rng == nullptr) {
    throw ContractError("decode_motion: teacher forcing with 0 < p_tf < 1 needs an rng");
  }
  std::bernoulli_distribution flip(std::clamp(options.p_tf, 0.0, 1.0));
  const Eigen::Index rows = h0.rows();

  std::vector<Tensor<Scalar>> out;
  out.reserve(options.steps);
  Tensor<Scalar> h = h0;
  Tensor<Scalar> input = seed_pose;
  for (int t = 0; t < options.steps; ++t) {
    if (options.input_trace) options.input_trace->push_back(input.value());
    h = gru_step(tape, input, h, gru);
    out.push_back(canonicalize_output(tape, dense(tape, h, head), joints));
    if (t + 1 == options.steps) break;
    if (!forcing) {
      input = out.back();
      continue;
    }
    const Tensor<Scalar>& truth = (*options.target)[t];
    if (!coin) {
      input = truth;
      continue;
    }
    Matrix<Scalar> mask(rows, truth.cols());
    Eigen::Index forced = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const bool use_truth = flip(*options.rng);
      forced += use_truth;
      mask.row(r).setConstant(use_truth ? Scalar(1) : Scalar(0));
    }
    if (forced == rows) {
      input = truth;
    } else if (forced == 0) {
      input = out.back();
    } else {
      Matrix<Scalar> keep = Matrix<Scalar>::Ones(rows, truth.cols()) - mask;
      Matrix<Scalar> fixed = mask.cwiseProduct(truth.value());
      input = tape.add(tape.mul(out.back(), Tensor<Scalar>(std::move(keep))),
                       Tensor<Scalar>(std::move(fixed)));
    }
  }
  return out;
}

template <typename Scalar>
Batch<Scalar> make_batch(std::span<const SamplePair* const> pairs) {
  if (pairs.empty()) throw ContractError("make_batch: empty batch");
  const SamplePair& first = *pairs.front();
  const Eigen::Index t_obs = first.observation.length();
  const Eigen::Index t_fut = first.future.length();
  const Eigen::Index c = first.observation.channels();
  const auto b = static_cast<Eigen::Index>(pairs.size());
  Batch<Scalar> out;
  out.size = b;
  for (Eigen::Index t = 0; t < t_obs; ++t) {
    Matrix<Scalar> m(b, c);
    for (Eigen::Index i = 0; i < b; ++i) {
      const SamplePair& p = *pairs[i];
      if (p.observation.length() != t_obs || p.observation.channels() != c) {
        throw DimensionError("make_batch: observation shapes differ");
      }
      m.row(i) = p.observation.frames().row(t).template cast<Scalar>();
    }
    out.observation.emplace_back(std::move(m));
  }
  for (Eigen::Index t = 0; t < t_fut; ++t) {
    Matrix<Scalar> m(b, c);
    for (Eigen::Index i = 0; i < b; ++i) {
      const SamplePair& p = *pairs[i];
      if (p.future.length() != t_fut || p.future.channels() != c) {
        throw DimensionError("make_batch: future shapes differ");
      }
      m.row(i) = p.future.frames().row(t).template cast<Scalar>();
    }
    out.future.emplace_back(std::move(m));
  }
  return out;
}

template <typename Scalar>
Batch<Scalar> make_batch(std::span<const SamplePair> pairs) {
  std::vector<const SamplePair*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(&p);
  return make_batch<Scalar>(std::span<const SamplePair* const>(ptrs));
}

template <typename Scalar>
Tensor<Scalar> rest_pose(Eigen::Index rows, int joints) {
  Matrix<Scalar> m = Matrix<Scalar>::Zero(rows, 4 * joints);
  for (int j = 0; j < joints; ++j) m.col(4 * j).setOnes();
  return Tensor<Scalar>(std::move(m));
}

template <typename Scalar>
LatentNoise<Scalar> draw_noise(Eigen::Index rows, int latent, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  LatentNoise<Scalar> n;
  n.cond.resize(rows, latent);
  n.data.resize(rows, latent);
  for (Eigen::Index i = 0; i < n.cond.size(); ++i) n.cond.data()[i] = static_cast<Scalar>(gauss(rng));
  for (Eigen::Index i = 0; i < n.data.size(); ++i) n.data.data()[i] = static_cast<Scalar>(gauss(rng));
  return n;
}

template <typename Scalar>
ForwardPass<Scalar> forward(Tape<Scalar>& tape, const Model<Scalar>& model,
                            const Batch<Scalar>& batch, double p_tf,
                            const LatentNoise<Scalar>& noise, std::mt19937_64& rng) {
  const ModelConfig& cfg = model.config();
  if (batch.observation.empty() || batch.future.empty()) {
    throw ContractError("forward: batch needs observation and future frames");
  }
  if (batch.observation.front().cols() != cfg.channels()) {
    throw ConfigError("forward: data has " + std::to_string(batch.observation.front().cols()) +
                      " channels, model expects " + std::to_string(cfg.channels()));
  }
  ForwardPass<Scalar> f;
  f.h_obs = encode_sequence<Scalar>(tape, batch.observation, model.obs_encoder);
  f.cond = cs_encode(tape, f.h_obs, model);
  f.z_c = reparam_standard(tape, f.cond, Tensor<Scalar>(noise.cond));

  DecodeOptions<Scalar> obs_opts;
  obs_opts.steps = static_cast<int>(batch.observation.size());
  obs_opts.p_tf = p_tf;
  obs_opts.target = &batch.observation;
  obs_opts.rng = &rng;
  f.obs_recon = decode_motion(tape, latent_to_hidden(tape, f.z_c, model.cs_decoder),
                              rest_pose<Scalar>(batch.size, cfg.joints), model.obs_decoder,
                              model.obs_head, cfg.joints, obs_opts);

  f.h_future = encode_sequence<Scalar>(tape, batch.future, model.fut_encoder);
  const Tensor<Scalar>& enc_cond = cfg.scheme.encoder == EncoderMode::kConcatH ? f.h_obs : f.z_c;
  f.data = lcp_encode(tape, f.h_future, enc_cond, model);
  f.data_kl = cfg.scheme.decoder == DecoderMode::kReparamZ
                  ? lcp_encode(tape, f.h_future, enc_cond.detach(), model)
                  : f.data;

  Tensor<Scalar> dec_in;
  switch (cfg.scheme.decoder) {
    case DecoderMode::kReparamZ:
      f.z = reparam_extended(tape, f.data, f.z_c);
      dec_in = f.z;
      break;
    case DecoderMode::kConcatH:
      f.z = reparam_standard(tape, f.data, Tensor<Scalar>(noise.data));
      dec_in = tape.concat(f.z, f.h_obs);
      break;
    case DecoderMode::kConcatZ:
      f.z = reparam_standard(tape, f.data, Tensor<Scalar>(noise.data));
      dec_in = tape.concat(f.z, f.z_c);
      break;
  }

  DecodeOptions<Scalar> fut_opts;
  fut_opts.steps = static_cast<int>(batch.future.size());
  fut_opts.p_tf = p_tf;
  fut_opts.target = &batch.future;
  fut_opts.rng = &rng;
  f.future_recon = decode_motion(tape, latent_to_hidden(tape, dec_in, model.lcp_decoder),
                                 batch.observation.back(), model.fut_decoder, model.fut_head,
                                 cfg.joints, fut_opts);
  return f;
}

#define LCPSEQ_INSTANTIATE_MODEL(S)                                                           \
  template class Model<S>;                                                                    \
  template Dense<S> init_dense(int, int, std::mt19937_64&);                                   \
  template GruParams<S> init_gru(int, int, std::mt19937_64&);                                 \
  template Tensor<S> dense(Tape<S>&, const Tensor<S>&, const Dense<S>&);                      \
  template Tensor<S> gru_step(Tape<S>&, const Tensor<S>&, const Tensor<S>&,                   \
                              const GruParams<S>&);                                           \
  template Tensor<S> encode_sequence(Tape<S>&, std::span<const Tensor<S>>,                    \
                                     const GruParams<S>&);                                    \
  template GaussianParams<S> gaussian_encode(Tape<S>&, const Tensor<S>&,                      \
                                             const GaussianEncoderParams<S>&, double);        \
  template GaussianParams<S> cs_encode(Tape<S>&, const Tensor<S>&, const Model<S>&);          \
  template GaussianParams<S> lcp_encode(Tape<S>&, const Tensor<S>&, const Tensor<S>&,         \
                                        const Model<S>&);                                     \
  template Tensor<S> reparam_standard(Tape<S>&, const GaussianParams<S>&, const Tensor<S>&);  \
  template Tensor<S> reparam_extended(Tape<S>&, const GaussianParams<S>&, const Tensor<S>&);  \
  template Tensor<S> latent_to_hidden(Tape<S>&, const Tensor<S>&,                             \
                                      const LatentDecoderParams<S>&);                         \
  template Tensor<S> canonicalize_output(Tape<S>&, const Tensor<S>&, int);                    \
  template std::vector<Tensor<S>> decode_motion(Tape<S>&, const Tensor<S>&, const Tensor<S>&, \
                                                const GruParams<S>&, const Dense<S>&, int,    \
                                                const DecodeOptions<S>&);                     \
  template Batch<S> make_batch(std::span<const SamplePair* const>);                           \
  template Batch<S> make_batch(std::span<const SamplePair>);                                  \
  template Tensor<S> rest_pose(Eigen::Index, int);                                            \
  template LatentNoise<S> draw_noise(Eigen::Index, int, std::mt19937_64&);                    \
  template ForwardPass<S> forward(Tape<S>&, const Model<S>&, const Batch<S>&, double,         \
                                  const LatentNoise<S>&, std::mt19937_64&);

LCPSEQ_INSTANTIATE_MODEL(float)
LCPSEQ_INSTANTIATE_MODEL(double)

#undef LCPSEQ_INSTANTIATE_MODEL

}  // namespace lcpseq
