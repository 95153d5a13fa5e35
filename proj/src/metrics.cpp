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

#include "lcpseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include <json.hpp>

#include "lcpseq/errors.hpp"
#include "lcpseq/train.hpp"
#include "lcpseq/util.hpp"

namespace lcpseq {

double diversity(std::span<const Motion> samples) {
  if (samples.size() < 2) throw ContractError("diversity needs K >= 2 samples");
  const auto& first = samples.front().frames();
  for (const Motion& m : samples) {
    if (m.frames().rows() != first.rows() || m.frames().cols() != first.cols()) {
      throw DimensionError("diversity: samples differ in shape");
    }
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      total += (samples[i].frames() - samples[j].frames()).norm();
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Sequence classifier

namespace {

using FTensor = Tensor<float>;
using FMatrix = Matrix<float>;

Eigen::Index common_length(std::span<const Motion> motions, int channels) {
  if (motions.empty()) throw ContractError("classifier: no motions");
  const Eigen::Index t = motions.front().length();
  for (const Motion& m : motions) {
    if (m.length() != t) throw ContractError("classifier: motions must share one length");
    if (m.channels() != channels) {
      throw DimensionError("classifier: motion has " + std::to_string(m.channels()) +
                           " channels, expected " + std::to_string(channels));
    }
  }
  return t;
}

std::vector<FTensor> batch_frames(std::span<const Motion> motions,
                                  std::span<const std::size_t> idx, Eigen::Index length) {
  std::vector<FTensor> frames;
  const auto rows = static_cast<Eigen::Index>(idx.size());
  for (Eigen::Index t = 0; t < length; ++t) {
    FMatrix m(rows, motions[idx[0]].channels());
    for (Eigen::Index r = 0; r < rows; ++r) {
      m.row(r) = motions[idx[static_cast<std::size_t>(r)]].frames().row(t).cast<float>();
    }
    frames.emplace_back(std::move(m));
  }
  return frames;
}

}  // namespace

SeqClassifier::SeqClassifier(int channels, int classes, const ClassifierConfig& config,
                             std::uint64_t seed)
    : config_(config), channels_(channels), classes_(classes) {
  if (channels < 1 || classes < 2) {
    throw ContractError("classifier needs >= 1 channel and >= 2 classes");
  }
  if (config.hidden < 1 || config.epochs < 0 || config.batch_size < 1 ||
      !(config.learning_rate > 0.0)) {
    throw ConfigError("invalid classifier configuration");
  }
  std::mt19937_64 rng(seed);
  gru_ = init_gru<float>(channels, config.hidden, rng);
  head_ = init_dense<float>(config.hidden, classes, rng);
}

void SeqClassifier::fit(std::span<const Motion> motions, std::span<const int> labels,
                        std::uint64_t seed) {
  if (motions.size() != labels.size()) throw ContractError("classifier: label count mismatch");
  const Eigen::Index length = common_length(motions, channels_);
  for (int y : labels) {
    if (y < 0 || y >= classes_) throw ContractError("classifier: label out of range");
  }
  if (config_.epochs == 0) return;

  std::vector<NamedTensor<float>> params;
  for (const FTensor* t : {&gru_.wz, &gru_.uz, &gru_.bz, &gru_.wr, &gru_.ur, &gru_.br,
                           &gru_.wc, &gru_.uc, &gru_.bc, &head_.w, &head_.b}) {
    params.push_back({"clf", *t});
  }
  Adam<float> adam(params, AdamConfig{}, config_.learning_rate);
  std::mt19937_64 rng = make_rng(seed, kStreamClassifier);
  std::vector<std::size_t> order(motions.size());
  const FTensor ones_c(FMatrix::Ones(classes_, 1));

  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config_.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(config_.batch_size));
      const std::span<const std::size_t> idx(order.data() + b, e - b);
      const auto rows = static_cast<Eigen::Index>(idx.size());
      Tape<float> tape;
      const auto frames = batch_frames(motions, idx, length);
      const FTensor logits = dense(tape, encode_sequence<float>(tape, frames, gru_), head_);
      // Cross-entropy: logsumexp(l) - l_y, shifted by the (constant) row max.
      FMatrix shift(rows, classes_);
      FMatrix onehot = FMatrix::Zero(rows, classes_);
      for (Eigen::Index r = 0; r < rows; ++r) {
        shift.row(r).setConstant(logits.value().row(r).maxCoeff());
        onehot(r, labels[idx[static_cast<std::size_t>(r)]]) = 1.0f;
      }
      const FTensor centered = tape.sub(logits, FTensor(std::move(shift)));
      const FTensor lse = tape.log(tape.matmul(tape.exp(centered), ones_c));
      const FTensor picked = tape.matmul(tape.mul(centered, FTensor(std::move(onehot))), ones_c);
      const FTensor loss = tape.mean(tape.sub(lse, picked));
      for (auto& p : params) p.tensor.zero_grad();
      tape.backward(loss);
      adam.step();
    }
  }
}

Eigen::MatrixXd SeqClassifier::predict_proba(std::span<const Motion> motions) const {
  const Eigen::Index length = common_length(motions, channels_);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(motions.size()), classes_);
  constexpr std::size_t kChunk = 256;
  for (std::size_t b = 0; b < motions.size(); b += kChunk) {
    const std::size_t e = std::min(motions.size(), b + kChunk);
    std::vector<std::size_t> idx(e - b);
    std::iota(idx.begin(), idx.end(), b);
    Tape<float> tape(false);
    const auto frames = batch_frames(motions, idx, length);
    const Eigen::MatrixXd logits =
        dense(tape, encode_sequence<float>(tape, frames, gru_), head_).value().cast<double>();
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const Eigen::RowVectorXd ex = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
      out.row(static_cast<Eigen::Index>(b) + r) = ex / ex.sum();
    }
  }
  return out;
}

std::vector<int> SeqClassifier::predict(std::span<const Motion> motions) const {
  const Eigen::MatrixXd p = predict_proba(motions);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index arg;
    p.row(r).maxCoeff(&arg);
    out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return out;
}

QualityResult quality(std::span<const Motion> gen, std::span<const Motion> real_train,
                      std::span<const Motion> real_test, std::uint64_t seed,
                      const ClassifierConfig& config) {
  if (gen.empty() || real_train.empty() || real_test.empty()) {
    throw ContractError("quality: every motion set must be nonempty");
  }
  const std::size_t n = std::min(real_train.size(), gen.size() / 2);
  if (n == 0) {
    throw ContractError("quality: cannot form balanced real/generated training classes");
  }
  std::vector<Motion> train;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    train.push_back(real_train[i]);
    labels.push_back(1);
    train.push_back(gen[i]);
    labels.push_back(0);
  }
  SeqClassifier clf(gen.front().channels(), 2, config, seed);
  clf.fit(train, labels, seed);

  const auto held = gen.subspan(n);
  const Eigen::MatrixXd p_gen = clf.predict_proba(held);
  const Eigen::MatrixXd p_real = clf.predict_proba(real_test);
  QualityResult r;
  r.train_per_class = n;
  r.score = (p_gen.col(1).array() > 0.5).cast<double>().mean();
  r.real_recall = (p_real.col(1).array() > 0.5).cast<double>().mean();
  return r;
}

double mean_class_accuracy(std::span<const int> predicted, std::span<const int> labels,
                           int classes) {
  if (predicted.size() != labels.size() || labels.empty()) {
    throw ContractError("mean_class_accuracy: sizes differ or empty");
  }
  std::vector<double> hits(static_cast<std::size_t>(classes), 0.0);
  std::vector<double> seen(static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ContractError("unknown label " + std::to_string(labels[i]));
    }
    const auto y = static_cast<std::size_t>(labels[i]);
    seen[y] += 1.0;
    hits[y] += predicted[i] == labels[i] ? 1.0 : 0.0;
  }
  double acc = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (seen[c] == 0.0) continue;
    acc += hits[c] / seen[c];
    ++present;
  }
  return acc / present;
}

double context(std::span<const Motion> gen, std::span<const int> labels,
               const SeqClassifier& clf) {
  if (gen.size() != labels.size()) throw ContractError("context: label count mismatch");
  for (int y : labels) {
    if (y < 0 || y >= clf.classes()) throw ContractError("context: unknown label");
  }
  const std::vector<int> pred = clf.predict(gen);
  return mean_class_accuracy(pred, labels, clf.classes());
}

// ---------------------------------------------------------------------------
// Euler MAE

Eigen::MatrixXd euler_frames(const Motion& m) {
  Eigen::MatrixXd out(m.length(), 3 * m.joints());
  for (Eigen::Index t = 0; t < m.length(); ++t) {
    for (int j = 0; j < m.joints(); ++j) {
      const EulerZYX e = quat_to_euler(m.joint(t, j));
      out(t, 3 * j) = e.alpha;
      out(t, 3 * j + 1) = e.beta;
      out(t, 3 * j + 2) = e.gamma;
    }
  }
  return out;
}

int horizon_frame(int ms, double fps, int t_fut) {
  const double x = ms * fps / 1000.0 - 1.0;
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-9) {
    throw ContractError("horizon " + std::to_string(ms) + " ms is not a whole frame at " +
                        format_double(fps) + " fps");
  }
  if (r < 0 || r >= t_fut) {
    throw ContractError("horizon " + std::to_string(ms) + " ms is beyond t_fut = " +
                        std::to_string(t_fut) + " frames");
  }
  return static_cast<int>(r);
}

std::vector<bool> active_angles(std::span<const Motion> gt, double threshold) {
  if (gt.empty()) throw ContractError("active_angles: no ground truth");
  const Eigen::Index dims = 3 * gt.front().joints();
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(dims);
  Eigen::ArrayXd sum2 = Eigen::ArrayXd::Zero(dims);
  double n = 0.0;
  for (const Motion& m : gt) {
    const Eigen::MatrixXd e = euler_frames(m);
    if (e.cols() != dims) throw DimensionError("active_angles: joint counts differ");
    sum += e.colwise().sum().transpose().array();
    sum2 += e.array().square().colwise().sum().transpose();
    n += static_cast<double>(e.rows());
  }
  const Eigen::ArrayXd mean = sum / n;
  const Eigen::ArrayXd var = (sum2 / n - mean.square()).max(0.0);
  std::vector<bool> out(static_cast<std::size_t>(dims));
  for (Eigen::Index d = 0; d < dims; ++d) out[static_cast<std::size_t>(d)] = std::sqrt(var[d]) > threshold;
  return out;
}

std::map<int, double> mae_euler_best_of_k(std::span<const std::vector<Motion>> samples,
                                          std::span<const Motion> gt,
                                          std::span<const int> horizons_ms, double fps,
                                          const MaeOptions& options) {
  if (samples.size() != gt.size() || gt.empty()) {
    throw ContractError("mae: need one sample set per ground-truth motion");
  }
  if (horizons_ms.empty()) throw ContractError("mae: no horizons");
  const int t_fut = static_cast<int>(gt.front().length());
  std::vector<int> frames;
  for (int ms : horizons_ms) frames.push_back(horizon_frame(ms, fps, t_fut));
  const int last = *std::max_element(frames.begin(), frames.end());

  std::vector<bool> mask = active_angles(gt, options.constant_threshold);
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    mask.assign(mask.size(), true);  // nothing moves: compare every angle
  }
  Eigen::ArrayXd weight(static_cast<Eigen::Index>(mask.size()));
  for (std::size_t d = 0; d < mask.size(); ++d) weight[static_cast<Eigen::Index>(d)] = mask[d];
  const double active = weight.sum();

  std::vector<std::vector<double>> per_obs(gt.size(), std::vector<double>(frames.size()));
  parallel_for(gt.size(), [&](std::size_t i) {
    if (samples[i].empty()) throw ContractError("mae: empty sample set");
    const Eigen::MatrixXd truth = euler_frames(gt[i]).topRows(last + 1);
    // err(k, t): error of sample k at frame t.
    Eigen::MatrixXd err(static_cast<Eigen::Index>(samples[i].size()), last + 1);
    for (std::size_t k = 0; k < samples[i].size(); ++k) {
      if (samples[i][k].length() <= last || samples[i][k].joints() != gt[i].joints()) {
        throw DimensionError("mae: sample shorter than the last horizon or joint mismatch");
      }
      const Eigen::MatrixXd e = euler_frames(samples[i][k]).topRows(last + 1);
      for (int t = 0; t <= last; ++t) {
        const Eigen::ArrayXd d = (e.row(t) - truth.row(t)).transpose().array() * weight;
        err(static_cast<Eigen::Index>(k), t) = options.reduction == MaeReduction::kL2
                                                   ? std::sqrt(d.square().sum())
                                                   : d.abs().sum() / active;
      }
    }
    for (std::size_t h = 0; h < frames.size(); ++h) {
      const int f = frames[h];
      Eigen::Index best;
      if (options.selection == BestOfK::kAtHorizon) {
        err.col(f).minCoeff(&best);
      } else {
        err.leftCols(f + 1).rowwise().sum().minCoeff(&best);
      }
      per_obs[i][h] = err(best, f);
    }
  });

  std::map<int, double> out;
  for (std::size_t h = 0; h < frames.size(); ++h) {
    double s = 0.0;
    for (const auto& v : per_obs) s += v[h];
    out[horizons_ms[h]] = s / static_cast<double>(gt.size());
  }
  return out;
}

Motion zero_velocity(const Motion& observation, int t_fut) {
  if (t_fut < 1) throw ContractError("zero_velocity: t_fut must be >= 1");
  const Eigen::RowVectorXd last = observation.frames().row(observation.length() - 1);
  Eigen::MatrixXd frames = last.replicate(t_fut, 1);
  return Motion(std::move(frames), observation.joints(), observation.fps(), observation.label());
}

int nearest_candidate(const Motion& sample, std::span<const Motion> candidates) {
  if (candidates.empty()) throw ContractError("nearest_candidate: no candidates");
  int best = -1;
  double best_d = 0.0;
  for (std::size_t m = 0; m < candidates.size(); ++m) {
    const Eigen::Index t = std::min(sample.length(), candidates[m].length());
    if (sample.channels() != candidates[m].channels()) {
      throw DimensionError("nearest_candidate: channel counts differ");
    }
    const double d =
        (sample.frames().topRows(t) - candidates[m].frames().topRows(t)).squaredNorm();
    if (best < 0 || d < best_d) {
      best = static_cast<int>(m);
      best_d = d;
    }
  }
  return best;
}

double mode_coverage(std::span<const std::vector<Motion>> samples,
                     std::span<const std::vector<Motion>> candidates) {
  if (samples.size() != candidates.size()) {
    throw ContractError("mode_coverage: one candidate set per condition required");
  }
  std::size_t counted = 0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (candidates[i].empty()) continue;
    std::set<int> hit;
    for (const Motion& s : samples[i]) hit.insert(nearest_candidate(s, candidates[i]));
    ++counted;
    covered += hit.size() == candidates[i].size() ? 1 : 0;
  }
  if (counted == 0) throw ContractError("mode_coverage: no condition has known modes");
  return static_cast<double>(covered) / static_cast<double>(counted);
}

template <typename Scalar>
TestElbo test_elbo(std::span<const SamplePair> windows, const Model<Scalar>& model,
                   std::uint64_t seed, int batch_size) {
  if (windows.empty()) throw ContractError("test_elbo: no windows");
  if (batch_size < 1) throw ContractError("test_elbo: batch_size must be >= 1");
  std::mt19937_64 rng = make_rng(seed, kStreamEval);
  TestElbo out;
  double weight = 0.0;
  for (std::size_t b = 0; b < windows.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(windows.size(), b + static_cast<std::size_t>(batch_size));
    const Batch<Scalar> batch = make_batch<Scalar>(windows.subspan(b, e - b));
    Tape<Scalar> tape(false);
    const LossTerms<Scalar> terms = compute_loss(tape, model, batch, 1.0, 1.0, rng);
    const double w = static_cast<double>(e - b);
    out.mse += w * terms.report.rec_lcp;
    out.kl += w * terms.report.kl_lcp;
    weight += w;
  }
  out.mse /= weight;
  out.kl /= weight;
  return out;
}

// ---------------------------------------------------------------------------
// Report

void EvalReport::validate() const {
  auto finite = [](double v, const char* name) {
    if (!std::isfinite(v)) throw NumericError(std::string("report field ") + name + " is not finite");
  };
  auto unit = [&](const std::optional<double>& v, const char* name) {
    if (!v) return;
    finite(*v, name);
    if (*v < 0.0 || *v > 1.0) throw ValidationError(std::string(name) + " outside [0, 1]");
  };
  finite(test_mse, "test_mse");
  finite(test_kl, "test_kl");
  finite(diversity, "diversity");
  if (diversity < 0.0) throw ValidationError("diversity < 0");
  unit(quality, "quality");
  unit(real_recall, "real_recall");
  unit(context, "context");
  unit(mode_coverage, "mode_coverage");
  for (const auto& [ms, v] : mae) finite(v, "mae");
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string optional_text(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string report_json(const EvalReport& r) {
  r.validate();
  nlohmann::json mae = nlohmann::json::object();
  for (const auto& [ms, v] : r.mae) mae[std::to_string(ms)] = v;
  const nlohmann::json doc = {
      {"conditions", r.conditions},
      {"context", optional_json(r.context)},
      {"diversity", r.diversity},
      {"k", r.k},
      {"mae_ms", mae},
      {"mae_reduction", r.mae_reduction},
      {"mode_coverage", optional_json(r.mode_coverage)},
      {"quality", optional_json(r.quality)},
      {"real_recall", optional_json(r.real_recall)},
      {"scheme", r.scheme},
      {"test_kl", r.test_kl},
      {"test_mse", r.test_mse},
  };
  return doc.dump(2) + "\n";
}

void write_report_json(const EvalReport& r, const std::filesystem::path& path) {
  const std::string text = report_json(r);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void write_report_csv(const EvalReport& r, std::ostream& out) {
  r.validate();
  std::map<std::string, std::string> row = {
      {"conditions", std::to_string(r.conditions)},
      {"context", optional_text(r.context)},
      {"diversity", format_double(r.diversity)},
      {"k", std::to_string(r.k)},
      {"mae_reduction", r.mae_reduction},
      {"mode_coverage", optional_text(r.mode_coverage)},
      {"quality", optional_text(r.quality)},
      {"real_recall", optional_text(r.real_recall)},
      {"scheme", r.scheme},
      {"test_kl", format_double(r.test_kl)},
      {"test_mse", format_double(r.test_mse)},
  };
  for (const auto& [ms, v] : r.mae) row["mae_" + std::to_string(ms) + "ms"] = format_double(v);
  std::string header, values;
  bool first = true;
  for (const auto& [k, v] : row) {
    if (!first) {
      header += ',';
      values += ',';
    }
    first = false;
    header += k;
    values += csv_field(v);
  }
  out << header << '\n' << values << '\n';
}

void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_report_csv(r, out);
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Full evaluation

template <typename Scalar>
EvalReport evaluate(const Model<Scalar>& model, int t_obs, int t_fut,
                    const MotionDataset& train, const MotionDataset& test,
                    const EvalOptions& options, const CandidateFn& candidates) {
  if (!options.deterministic && options.k < 2) {
    throw ContractError("evaluate: K must be >= 2 for diversity");
  }
  const int stride = options.stride > 0 ? options.stride : t_obs + t_fut;
  std::vector<SamplePair> windows = make_windows(test, t_obs, t_fut, stride);
  if (windows.empty()) throw ContractError("evaluate: no test window of t_obs + t_fut frames");
  if (options.max_conditions > 0 && windows.size() > options.max_conditions) {
    windows.erase(windows.begin() + static_cast<std::ptrdiff_t>(options.max_conditions), windows.end());
  }

  EvalReport r;
  r.scheme = model.config().scheme.to_string();
  r.k = options.deterministic ? 1 : options.k;
  r.conditions = windows.size();
  r.mae_reduction = options.mae.reduction == MaeReduction::kL2 ? "l2" : "mean";

  std::vector<std::vector<Motion>> samples;
  std::vector<Motion> truth;
  std::vector<Motion> generated;
  double div = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const std::uint64_t s = options.seed ^ (0x9E3779B97F4A7C15ULL * (i + 1));
    std::vector<Motion> drawn;
    if (options.deterministic) {
      drawn.push_back(sample_mode(windows[i].observation, model, t_fut));
    } else {
      drawn = sample_futures(windows[i].observation, model, options.k, t_fut, s).samples;
      div += diversity(drawn);
    }
    for (const Motion& m : drawn) generated.push_back(m);
    samples.push_back(std::move(drawn));
    truth.push_back(windows[i].future);
  }
  r.diversity = div / static_cast<double>(windows.size());

  const TestElbo elbo = test_elbo<Scalar>(windows, model, options.seed);
  r.test_mse = elbo.mse;
  r.test_kl = elbo.kl;

  std::vector<int> horizons;
  for (int ms : options.horizons_ms) {
    try {
      horizon_frame(ms, test.fps(), t_fut);
      horizons.push_back(ms);
    } catch (const ContractError&) {
    }
  }
  if (!horizons.empty()) {
    r.mae = mae_euler_best_of_k(samples, truth, horizons, test.fps(), options.mae);
  }

  const std::vector<SamplePair> train_windows =
      train.motions.empty() ? std::vector<SamplePair>{}
                            : make_windows(train, t_obs, t_fut, t_obs + t_fut);
  std::vector<Motion> train_futures;
  for (const auto& w : train_windows) train_futures.push_back(w.future);

  if (options.with_quality && !train_futures.empty() && generated.size() >= 2) {
    const QualityResult q =
        quality(generated, train_futures, truth, options.seed, options.classifier);
    r.quality = q.score;
    r.real_recall = q.real_recall;
  }

  const int classes = static_cast<int>(test.class_names.size());
  if (options.with_context && classes >= 2 && !train_windows.empty()) {
    std::vector<Motion> clf_x;
    std::vector<int> clf_y;
    for (const auto& w : train_windows) {
      const int y = w.source_label ? test.class_index(*w.source_label) : -1;
      if (y < 0) continue;
      clf_x.push_back(w.future);
      clf_y.push_back(y);
    }
    std::vector<Motion> gen_x;
    std::vector<int> gen_y;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const auto& label = windows[i].source_label;
      if (!label) continue;
      const int y = test.class_index(*label);
      if (y < 0) throw ContractError("evaluate: unknown label '" + *label + "'");
      for (const Motion& m : samples[i]) {
        gen_x.push_back(m);
        gen_y.push_back(y);
      }
    }
    if (!clf_x.empty() && !gen_x.empty()) {
      SeqClassifier clf(model.config().channels(), classes, options.classifier, options.seed);
      clf.fit(clf_x, clf_y, options.seed);
      r.context = context(gen_x, gen_y, clf);
    }
  }

  if (candidates) {
    std::vector<std::vector<Motion>> cands;
    bool any = false;
    for (const auto& w : windows) {
      cands.push_back(candidates(w));
      any = any || !cands.back().empty();
    }
    if (any) r.mode_coverage = mode_coverage(samples, cands);
  }
  r.validate();
  return r;
}

#define LCPSEQ_INSTANTIATE_METRICS(S)                                                         \
  template TestElbo test_elbo(std::span<const SamplePair>, const Model<S>&, std::uint64_t,    \
                              int);                                                           \
  template EvalReport evaluate(const Model<S>&, int, int, const MotionDataset&,               \
                               const MotionDataset&, const EvalOptions&, const CandidateFn&);

LCPSEQ_INSTANTIATE_METRICS(float)
LCPSEQ_INSTANTIATE_METRICS(double)

#undef LCPSEQ_INSTANTIATE_METRICS

}  // namespace lcpseq
