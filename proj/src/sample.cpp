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

#include "lcpseq/sample.hpp"

#include <fstream>
#include <optional>
#include <random>

#include <json.hpp>

#include "lcpseq/errors.hpp"
#include "lcpseq/util.hpp"

namespace lcpseq {

namespace {

template <typename Scalar>
std::vector<Tensor<Scalar>> frames_of(const Motion& m) {
  std::vector<Tensor<Scalar>> out;
  out.reserve(static_cast<std::size_t>(m.length()));
  for (Eigen::Index t = 0; t < m.length(); ++t) {
    out.emplace_back(Matrix<Scalar>(m.frames().row(t).template cast<Scalar>()));
  }
  return out;
}

template <typename Scalar>
void check_shapes(const Motion& obs, const Model<Scalar>& model, int t_fut) {
  if (obs.length() < 1) throw ContractError("sample: empty observation");
  if (t_fut < 1) throw ContractError("sample: t_fut must be >= 1");
  if (obs.joints() != model.config().joints) {
    throw ConfigError("sample: observation has " + std::to_string(obs.joints()) +
                      " joints, checkpoint expects " + std::to_string(model.config().joints));
  }
}

/// Observation summary shared by every sample.
template <typename Scalar>
struct Conditioned {
  Tensor<Scalar> h_obs;
  GaussianParams<Scalar> cond;
  Tensor<Scalar> seed_pose;
};

template <typename Scalar>
Conditioned<Scalar> condition(const Motion& obs, const Model<Scalar>& model) {
  Tape<Scalar> tape(false);
  const auto frames = frames_of<Scalar>(obs);
  Conditioned<Scalar> c;
  c.h_obs = encode_sequence<Scalar>(tape, frames, model.obs_encoder);
  c.cond = cs_encode(tape, c.h_obs, model);
  c.seed_pose = frames.back();
  return c;
}

template <typename Scalar>
Motion decode_one(const Conditioned<Scalar>& c, const Model<Scalar>& model,
                  const Eigen::VectorXd& eps, int t_fut, double fps, Eigen::VectorXd& z_used) {
  const ModelConfig& cfg = model.config();
  Tape<Scalar> tape(false);
  const Tensor<Scalar> e(Matrix<Scalar>(eps.transpose().template cast<Scalar>()));
  Tensor<Scalar> z;
  Tensor<Scalar> dec_in;
  switch (cfg.scheme.decoder) {
    case DecoderMode::kReparamZ:
      z = reparam_standard(tape, c.cond, e);
      dec_in = z;
      break;
    case DecoderMode::kConcatH:
      z = e;
      dec_in = tape.concat(z, c.h_obs);
      break;
    case DecoderMode::kConcatZ:
      z = e;
      dec_in = tape.concat(z, c.cond.mu);
      break;
  }
  z_used = z.value().row(0).transpose().template cast<double>();
  DecodeOptions<Scalar> opts;
  opts.steps = t_fut;
  const auto out = decode_motion(tape, latent_to_hidden(tape, dec_in, model.lcp_decoder),
                                 c.seed_pose, model.fut_decoder, model.fut_head, cfg.joints, opts);
  Eigen::MatrixXd frames(t_fut, cfg.channels());
  for (int t = 0; t < t_fut; ++t) frames.row(t) = out[t].value().row(0).template cast<double>();
  return Motion(std::move(frames), cfg.joints, fps);
}

}  // namespace

template <typename Scalar>
GaussianParams<Scalar> condition_posterior(const Motion& obs, const Model<Scalar>& model) {
  check_shapes(obs, model, 1);
  return condition(obs, model).cond;
}

template <typename Scalar>
PredictionSet sample_futures(const Motion& obs, const Model<Scalar>& model,
                             const Eigen::MatrixXd& eps, int t_fut, std::uint64_t seed) {
  check_shapes(obs, model, t_fut);
  if (eps.rows() < 1) throw ContractError("sample: K must be >= 1");
  if (eps.cols() != model.config().latent) {
    throw DimensionError("sample: eps has " + std::to_string(eps.cols()) +
                         " columns, latent size is " + std::to_string(model.config().latent));
  }
  const Conditioned<Scalar> c = condition(obs, model);
  const auto k = static_cast<std::size_t>(eps.rows());
  PredictionSet set{obs, {}, {}, {}, seed};
  std::vector<std::optional<Motion>> samples(k);
  set.z_used.resize(k);
  set.epsilon.resize(k);
  parallel_for(k, [&](std::size_t i) {
    set.epsilon[i] = eps.row(static_cast<Eigen::Index>(i)).transpose();
    samples[i] = decode_one(c, model, set.epsilon[i], t_fut, obs.fps(), set.z_used[i]);
  });
  for (auto& s : samples) set.samples.push_back(std::move(*s));
  return set;
}

template <typename Scalar>
PredictionSet sample_futures(const Motion& obs, const Model<Scalar>& model, int k, int t_fut,
                             std::uint64_t seed) {
  if (k < 1) throw ContractError("sample: K must be >= 1");
  std::mt19937_64 rng = make_rng(seed, kStreamSample);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd eps(k, model.config().latent);
  for (Eigen::Index r = 0; r < eps.rows(); ++r) {
    for (Eigen::Index c = 0; c < eps.cols(); ++c) eps(r, c) = gauss(rng);
  }
  return sample_futures(obs, model, eps, t_fut, seed);
}

template <typename Scalar>
Motion sample_mode(const Motion& obs, const Model<Scalar>& model, int t_fut) {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, model.config().latent);
  return std::move(sample_futures(obs, model, zero, t_fut, 0).samples.front());
}

// ---------------------------------------------------------------------------
// Export

namespace {

using nlohmann::json;

json frames_json(const Motion& m) {
  json rows = json::array();
  for (Eigen::Index t = 0; t < m.length(); ++t) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.channels(); ++c) row.push_back(m.frames()(t, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::MatrixXd frames_from_json(const json& rows, int channels) {
  if (!rows.is_array() || rows.empty()) throw ParseError("prediction JSON: empty frame list", 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), channels);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (!rows[t].is_array() || rows[t].size() != static_cast<std::size_t>(channels)) {
      throw SchemaError("prediction JSON: frame " + std::to_string(t) + " does not have " +
                            std::to_string(channels) + " values",
                        0);
    }
    for (int c = 0; c < channels; ++c) m(static_cast<Eigen::Index>(t), c) = rows[t][c].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace

void write_prediction_json(const PredictionSet& set, std::ostream& out) {
  if (set.samples.empty()) throw ContractError("prediction set has no samples");
  json doc;
  doc["meta"] = {{"seed", set.seed},
                 {"K", set.samples.size()},
                 {"t_obs", set.observation.length()},
                 {"t_fut", set.samples.front().length()},
                 {"fps", set.observation.fps()},
                 {"J", set.observation.joints()}};
  doc["observation"] = frames_json(set.observation);
  json samples = json::array();
  for (const Motion& m : set.samples) samples.push_back(frames_json(m));
  doc["samples"] = std::move(samples);
  json eps = json::array();
  json z = json::array();
  for (const auto& v : set.epsilon) eps.push_back(vector_json(v));
  for (const auto& v : set.z_used) z.push_back(vector_json(v));
  doc["epsilon"] = std::move(eps);
  doc["z_used"] = std::move(z);
  out << doc.dump() << '\n';
}

void write_prediction_json(const PredictionSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_prediction_json(set, out);
  if (!out) throw Error("write failed: " + path.string());
}

PredictionSet read_prediction_json(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("prediction JSON: ") + e.what(), 0);
  }
  try {
    const json& meta = doc.at("meta");
    const int joints = meta.at("J").get<int>();
    const double fps = meta.at("fps").get<double>();
    if (joints < 1) throw SchemaError("prediction JSON: J must be >= 1", 0);
    PredictionSet set{Motion(frames_from_json(doc.at("observation"), 4 * joints), joints, fps),
                      {}, {}, {}, meta.at("seed").get<std::uint64_t>()};
    for (const json& s : doc.at("samples")) {
      set.samples.emplace_back(frames_from_json(s, 4 * joints), joints, fps);
    }
    if (set.samples.size() != meta.at("K").get<std::size_t>()) {
      throw SchemaError("prediction JSON: meta.K does not match the sample count", 0);
    }
    if (doc.contains("epsilon")) {
      for (const json& v : doc["epsilon"]) set.epsilon.push_back(vector_from_json(v));
    }
    if (doc.contains("z_used")) {
      for (const json& v : doc["z_used"]) set.z_used.push_back(vector_from_json(v));
    }
    return set;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("prediction JSON: ") + e.what(), 0);
  }
}

PredictionSet read_prediction_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_prediction_json(in);
}

std::vector<std::filesystem::path> write_prediction_csv(const PredictionSet& set,
                                                        const std::filesystem::path& dir,
                                                        const std::string& stem) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  for (std::size_t k = 0; k < set.samples.size(); ++k) {
    const auto path = dir / (stem + "_" + std::to_string(k) + ".csv");
    write_quat_csv(set.samples[k], path);
    out.push_back(path);
  }
  return out;
}

#define LCPSEQ_INSTANTIATE_SAMPLE(S)                                                          \
  template GaussianParams<S> condition_posterior(const Motion&, const Model<S>&);             \
  template PredictionSet sample_futures(const Motion&, const Model<S>&, int, int,             \
                                        std::uint64_t);                                       \
  template PredictionSet sample_futures(const Motion&, const Model<S>&,                       \
                                        const Eigen::MatrixXd&, int, std::uint64_t);          \
  template Motion sample_mode(const Motion&, const Model<S>&, int);

LCPSEQ_INSTANTIATE_SAMPLE(float)
LCPSEQ_INSTANTIATE_SAMPLE(double)

#undef LCPSEQ_INSTANTIATE_SAMPLE

}  // namespace lcpseq
