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

#include "lcpseq/train.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <set>

#include "lcpseq/errors.hpp"
#include "lcpseq/util.hpp"

namespace lcpseq {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (tf_horizon < 1) throw ConfigError("tf_horizon must be >= 1");
  if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
  if (t_obs < 1 || t_fut < 1 || stride < 1) throw ConfigError("window sizes must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  model.validate();
}

double teacher_forcing_prob(double epoch, int horizon) {
  if (horizon < 1) throw ContractError("teacher-forcing horizon must be >= 1");
  return std::max(0.0, 1.0 - epoch / static_cast<double>(horizon));
}

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<NamedTensor<Scalar>> params, const AdamConfig& config, double lr)
    : params_(std::move(params)), config_(config), lr_(lr) {
  for (const auto& p : params_) {
    m_.push_back(Matrix<Scalar>::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.push_back(Matrix<Scalar>::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

template <typename Scalar>
double Adam<Scalar>::step() {
  double norm2 = 0.0;
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    const auto& g = p.tensor.grad();
    if (!g.allFinite()) throw NumericError("non-finite gradient in parameter " + p.name);
    norm2 += static_cast<double>(g.squaredNorm());
  }
  const double norm = std::sqrt(norm2);
  if (!std::isfinite(norm)) throw NumericError("gradient norm overflowed");
  const double clip =
      (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<Scalar>(config_.beta1);
  const auto b2 = static_cast<Scalar>(config_.beta2);
  const auto step_size = static_cast<Scalar>(lr_ / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  const auto eps = static_cast<Scalar>(config_.epsilon);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<Scalar> p = params_[i].tensor;
    Matrix<Scalar> g = p.grad_or_zeros();
    if (clip != 1.0) g *= static_cast<Scalar>(clip);
    m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
    v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
    p.value().array() -=
        step_size * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
  }
  return norm;
}

template <typename Scalar>
LossTerms<Scalar> compute_loss(Tape<Scalar>& tape, const Model<Scalar>& model,
                               const Batch<Scalar>& batch, double p_tf, double lambda,
                               std::mt19937_64& rng) {
  const LatentNoise<Scalar> noise =
      draw_noise<Scalar>(batch.size, model.config().latent, rng);
  const ForwardPass<Scalar> pass = forward(tape, model, batch, p_tf, noise, rng);
  return total_loss(tape, pass, batch, lambda, model.config());
}

void check_finite(const LossReport& r) {
  const std::pair<const char*, double> terms[] = {
      {"kl_cs", r.kl_cs}, {"kl_lcp", r.kl_lcp}, {"rec_cs", r.rec_cs},
      {"rec_lcp", r.rec_lcp}, {"total", r.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite loss term ") + name + " = " + format_double(v));
    }
  }
}

template <typename Scalar>
Trainer<Scalar>::Trainer(Checkpoint<Scalar>& ckpt, const TrainConfig& config)
    : ckpt_(ckpt),
      config_(config),
      adam_(ckpt.model.parameters(), config.adam, config.learning_rate) {
  config_.validate();
}

template <typename Scalar>
LossReport Trainer<Scalar>::train_step(const Batch<Scalar>& batch, std::mt19937_64& rng) {
  ScheduleState& s = ckpt_.schedule;
  const double lambda = anneal_lambda(static_cast<double>(s.step), config_.anneal);
  Tape<Scalar> tape;
  LossTerms<Scalar> terms = compute_loss(tape, ckpt_.model, batch, s.p_tf, lambda, rng);
  check_finite(terms.report);
  ckpt_.model.zero_grad();
  tape.backward(terms.total);
  adam_.step();
  ++s.step;
  s.lambda = lambda;
  return terms.report;
}

template <typename Scalar>
std::vector<EpochLog> fit_more(Checkpoint<Scalar>& ckpt, std::span<const SamplePair> windows,
                               const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (windows.empty()) throw ContractError("fit: no training windows");
  if (windows.front().observation.channels() != ckpt.model.config().channels()) {
    throw ConfigError("fit: data has " +
                      std::to_string(windows.front().observation.channels()) +
                      " channels, model expects " +
                      std::to_string(ckpt.model.config().channels()));
  }
  Trainer<Scalar> trainer(ckpt, config);
  std::mt19937_64 rng =
      make_rng(config.seed, kStreamTrain + (static_cast<std::uint64_t>(ckpt.schedule.epoch) << 8));
  std::vector<std::size_t> order(windows.size());
  std::vector<EpochLog> log;
  for (int e = 0; e < config.epochs; ++e) {
    const int epoch = ckpt.schedule.epoch;
    ckpt.schedule.p_tf = teacher_forcing_prob(epoch, config.tf_horizon);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog entry;
    entry.epoch = epoch;
    entry.p_tf = ckpt.schedule.p_tf;
    double weight = 0.0;
    std::size_t n_steps = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<const SamplePair*> members;
      for (std::size_t i = begin; i < end; ++i) members.push_back(&windows[order[i]]);
      const Batch<Scalar> batch = make_batch<Scalar>(std::span<const SamplePair* const>(members));
      const LossReport r = trainer.train_step(batch, rng);
      const double w = static_cast<double>(members.size());
      entry.loss.kl_cs += w * r.kl_cs;
      entry.loss.kl_lcp += w * r.kl_lcp;
      entry.loss.rec_cs += w * r.rec_cs;
      entry.loss.rec_lcp += w * r.rec_lcp;
      entry.loss.total += w * r.total;
      entry.lambda += r.lambda;
      weight += w;
      ++n_steps;
    }
    entry.loss.kl_cs /= weight;
    entry.loss.kl_lcp /= weight;
    entry.loss.rec_cs /= weight;
    entry.loss.rec_lcp /= weight;
    entry.loss.total /= weight;
    entry.lambda /= static_cast<double>(n_steps);
    entry.loss.lambda = entry.lambda;
    ++ckpt.schedule.epoch;
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

template <typename Scalar>
FitResult<Scalar> fit(std::span<const SamplePair> windows, const TrainConfig& config,
                      const EpochCallback& on_epoch) {
  config.validate();
  if (windows.empty()) throw ContractError("fit: no training windows");
  FitResult<Scalar> out{Checkpoint<Scalar>(Model<Scalar>(config.model, config.seed)), {}};
  out.checkpoint.t_obs = config.t_obs;
  out.checkpoint.t_fut = config.t_fut;
  out.checkpoint.fps = windows.front().observation.fps();
  out.log = fit_more(out.checkpoint, windows, config, on_epoch);
  return out;
}

template <typename Scalar>
FitResult<Scalar> fit(const MotionDataset& ds, const TrainConfig& config,
                      const EpochCallback& on_epoch) {
  config.validate();
  if (ds.motions.empty()) throw ContractError("fit: empty dataset");
  ds.validate();
  if (ds.joints() != config.model.joints) {
    throw ConfigError("fit: dataset has " + std::to_string(ds.joints()) +
                      " joints, model configured for " + std::to_string(config.model.joints));
  }
  const std::vector<SamplePair> windows =
      make_windows(ds, config.t_obs, config.t_fut, config.stride);
  if (windows.empty()) {
    throw ContractError("fit: no motion is long enough for t_obs + t_fut = " +
                        std::to_string(config.t_obs + config.t_fut) + " frames");
  }
  FitResult<Scalar> out = fit<Scalar>(std::span<const SamplePair>(windows), config, on_epoch);
  out.checkpoint.normalization = compute_normalization(ds);
  return out;
}

void write_metric_log(std::span<const EpochLog> log, std::ostream& out) {
  out << "epoch,lambda,p_tf,kl_cs,kl_lcp,rec_cs,rec_lcp,total\n";
  for (const EpochLog& e : log) {
    out << e.epoch << ',' << format_double(e.lambda) << ',' << format_double(e.p_tf) << ','
        << format_double(e.loss.kl_cs) << ',' << format_double(e.loss.kl_lcp) << ','
        << format_double(e.loss.rec_cs) << ',' << format_double(e.loss.rec_lcp) << ','
        << format_double(e.loss.total) << '\n';
  }
}

void write_metric_log(std::span<const EpochLog> log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_metric_log(log, out);
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kMagic[8] = {'L', 'C', 'P', 'V', 'A', 'E', '1', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kSectionText = 0;
constexpr std::uint32_t kSectionTensor = 1;
constexpr std::size_t kTrailer = sizeof(std::uint64_t) + sizeof(std::uint32_t);

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (n > size_ - pos_) throw IntegrityError("checkpoint section runs past end of file");
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    return std::string(take(n), n);
  }
  bool done() const { return pos_ == size_; }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

template <typename Scalar, typename Derived>
void put_tensor(Writer& w, const std::string& name, const Eigen::MatrixBase<Derived>& m) {
  Writer body;
  body.put(static_cast<std::uint32_t>(sizeof(Scalar) * 8));
  body.put(static_cast<std::uint64_t>(m.rows()));
  body.put(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) body.put(static_cast<Scalar>(m(r, c)));
  }
  w.put_string(name);
  w.put(kSectionTensor);
  w.put(static_cast<std::uint64_t>(body.bytes().size()));
  w.put_bytes(body.bytes().data(), body.bytes().size());
}

struct RawTensor {
  std::uint32_t bits = 0;
  std::uint64_t rows = 0, cols = 0;
  const char* data = nullptr;
};

RawTensor read_tensor(const char* payload, std::uint64_t size) {
  Reader r(payload, size);
  RawTensor t;
  t.bits = r.get<std::uint32_t>();
  t.rows = r.get<std::uint64_t>();
  t.cols = r.get<std::uint64_t>();
  if (t.bits != 32 && t.bits != 64) throw FormatError("tensor section with " +
                                                      std::to_string(t.bits) + "-bit values");
  const std::uint64_t n = t.rows * t.cols;
  if (t.cols != 0 && n / t.cols != t.rows) throw IntegrityError("tensor extent overflow");
  t.data = r.take(n * (t.bits / 8));
  if (!r.done()) throw IntegrityError("tensor section has trailing bytes");
  return t;
}

template <typename Scalar>
Matrix<Scalar> to_matrix(const RawTensor& t, const std::string& name) {
  if (t.bits != sizeof(Scalar) * 8) {
    throw FormatError("tensor " + name + " stores " + std::to_string(t.bits) + "-bit values");
  }
  Matrix<Scalar> m(static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  const char* p = t.data;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      Scalar v;
      std::memcpy(&v, p, sizeof(Scalar));
      p += sizeof(Scalar);
      m(r, c) = v;
    }
  }
  return m;
}

std::uint32_t crc32_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Verifies magic, trailer length and checksum; returns the body reader
/// positioned after the magic.
Reader open_body(const std::vector<char>& bytes, std::uint32_t& precision) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  if (bytes.size() < sizeof(kMagic) + kTrailer) throw IntegrityError("checkpoint truncated");
  const std::size_t body = bytes.size() - kTrailer;
  std::uint64_t length;
  std::uint32_t crc;
  std::memcpy(&length, bytes.data() + body, sizeof(length));
  std::memcpy(&crc, bytes.data() + body + sizeof(length), sizeof(crc));
  if (length != body) {
    throw IntegrityError("checkpoint length mismatch: trailer says " + std::to_string(length) +
                         " bytes, found " + std::to_string(body));
  }
  if (crc32_of(bytes.data(), body) != crc) throw IntegrityError("checkpoint checksum mismatch");
  Reader r(bytes.data() + sizeof(kMagic), body - sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  precision = r.get<std::uint32_t>();
  if (precision != 32 && precision != 64) {
    throw FormatError("unsupported checkpoint precision " + std::to_string(precision));
  }
  return r;
}

std::string config_text(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string line = text.substr(pos, end == std::string::npos ? end : end - pos);
    pos = end == std::string::npos ? text.size() : end + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad checkpoint config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint config lacks '" + key + "'");
  return it->second;
}

template <typename T>
T parse_number(const std::map<std::string, std::string>& kv, const std::string& key) {
  const std::string& s = need(kv, key);
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("checkpoint config '" + key + "' is not a number: " + s);
  }
  return v;
}

}  // namespace

template <typename Scalar>
std::map<std::string, std::string> checkpoint_config(const Checkpoint<Scalar>& ckpt) {
  const ModelConfig& m = ckpt.model.config();
  return {
      {"model.embed", std::to_string(m.embed)},
      {"model.hidden", std::to_string(m.hidden)},
      {"model.joints", std::to_string(m.joints)},
      {"model.latent", std::to_string(m.latent)},
      {"model.scheme", m.scheme.to_string()},
      {"model.sigma_floor", format_double(m.sigma_floor)},
      {"normalization", ckpt.normalization ? "1" : "0"},
      {"schedule.epoch", std::to_string(ckpt.schedule.epoch)},
      {"schedule.lambda", format_double(ckpt.schedule.lambda)},
      {"schedule.p_tf", format_double(ckpt.schedule.p_tf)},
      {"schedule.step", std::to_string(ckpt.schedule.step)},
      {"window.fps", format_double(ckpt.fps)},
      {"window.t_fut", std::to_string(ckpt.t_fut)},
      {"window.t_obs", std::to_string(ckpt.t_obs)},
  };
}

template <typename Scalar>
void save_checkpoint(const Checkpoint<Scalar>& ckpt, const std::filesystem::path& path) {
  const auto params = ckpt.model.parameters();
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(sizeof(Scalar) * 8));
  const std::size_t n_sections = 1 + params.size() + (ckpt.normalization ? 2 : 0);
  w.put(static_cast<std::uint32_t>(n_sections));

  const std::string text = config_text(checkpoint_config(ckpt));
  w.put_string("config");
  w.put(kSectionText);
  w.put(static_cast<std::uint64_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  for (const auto& p : params) put_tensor<Scalar>(w, "param/" + p.name, p.tensor.value());
  if (ckpt.normalization) {
    put_tensor<double>(w, "norm/mean", ckpt.normalization->mean);
    put_tensor<double>(w, "norm/std", ckpt.normalization->std);
  }

  std::vector<char>& bytes = w.bytes();
  const auto length = static_cast<std::uint64_t>(bytes.size());
  const std::uint32_t crc = crc32_of(bytes.data(), bytes.size());
  w.put(length);
  w.put(crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

int checkpoint_precision(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_file(path);
  std::uint32_t precision = 0;
  open_body(bytes, precision);
  return static_cast<int>(precision);
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_file(path);
  std::uint32_t precision = 0;
  Reader r = open_body(bytes, precision);
  if (precision != sizeof(Scalar) * 8) {
    throw FormatError("checkpoint stores " + std::to_string(precision) +
                      "-bit parameters, loader expects " + std::to_string(sizeof(Scalar) * 8));
  }
  const auto n_sections = r.get<std::uint32_t>();
  std::map<std::string, std::string> kv;
  std::map<std::string, RawTensor> tensors;
  bool have_config = false;
  for (std::uint32_t i = 0; i < n_sections; ++i) {
    const std::string name = r.get_string();
    const auto kind = r.get<std::uint32_t>();
    const auto size = r.get<std::uint64_t>();
    const char* payload = r.take(size);
    if (kind == kSectionText && name == "config") {
      kv = parse_config_text(std::string(payload, size));
      have_config = true;
    } else if (kind == kSectionTensor) {
      if (!tensors.emplace(name, read_tensor(payload, size)).second) {
        throw FormatError("duplicate checkpoint section " + name);
      }
    } else {
      throw FormatError("unknown checkpoint section " + name);
    }
  }
  if (!r.done()) throw IntegrityError("checkpoint has bytes after its last section");
  if (!have_config) throw FormatError("checkpoint has no config section");

  ModelConfig mc;
  mc.joints = parse_number<int>(kv, "model.joints");
  mc.hidden = parse_number<int>(kv, "model.hidden");
  mc.latent = parse_number<int>(kv, "model.latent");
  mc.embed = parse_number<int>(kv, "model.embed");
  mc.sigma_floor = parse_number<double>(kv, "model.sigma_floor");
  try {
    mc.scheme = ConditioningScheme::parse(need(kv, "model.scheme"));
    mc.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }

  Checkpoint<Scalar> ckpt{Model<Scalar>(mc, 0)};
  ckpt.schedule.epoch = parse_number<int>(kv, "schedule.epoch");
  ckpt.schedule.step = parse_number<std::int64_t>(kv, "schedule.step");
  ckpt.schedule.p_tf = parse_number<double>(kv, "schedule.p_tf");
  ckpt.schedule.lambda = parse_number<double>(kv, "schedule.lambda");
  ckpt.t_obs = parse_number<int>(kv, "window.t_obs");
  ckpt.t_fut = parse_number<int>(kv, "window.t_fut");
  ckpt.fps = parse_number<double>(kv, "window.fps");

  std::set<std::string> used;
  for (auto& p : ckpt.model.parameters()) {
    const std::string key = "param/" + p.name;
    const auto it = tensors.find(key);
    if (it == tensors.end()) throw FormatError("checkpoint lacks parameter " + p.name);
    Matrix<Scalar> m = to_matrix<Scalar>(it->second, p.name);
    if (m.rows() != p.tensor.rows() || m.cols() != p.tensor.cols()) {
      throw FormatError("parameter " + p.name + " has shape " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", config implies " +
                        std::to_string(p.tensor.rows()) + "x" + std::to_string(p.tensor.cols()));
    }
    p.tensor.value() = std::move(m);
    used.insert(key);
  }
  if (need(kv, "normalization") == "1") {
    const auto mean = tensors.find("norm/mean");
    const auto sd = tensors.find("norm/std");
    if (mean == tensors.end() || sd == tensors.end()) {
      throw FormatError("checkpoint lacks normalization tensors");
    }
    Normalization n;
    n.mean = to_matrix<double>(mean->second, "norm/mean");
    n.std = to_matrix<double>(sd->second, "norm/std");
    ckpt.normalization = std::move(n);
    used.insert("norm/mean");
    used.insert("norm/std");
  }
  for (const auto& [name, t] : tensors) {
    if (!used.count(name)) throw FormatError("unexpected checkpoint section " + name);
  }
  return ckpt;
}

#define LCPSEQ_INSTANTIATE_TRAIN(S)                                                           \
  template class Adam<S>;                                                                     \
  template class Trainer<S>;                                                                  \
  template LossTerms<S> compute_loss(Tape<S>&, const Model<S>&, const Batch<S>&, double,      \
                                     double, std::mt19937_64&);                               \
  template std::vector<EpochLog> fit_more(Checkpoint<S>&, std::span<const SamplePair>,        \
                                          const TrainConfig&, const EpochCallback&);          \
  template FitResult<S> fit(std::span<const SamplePair>, const TrainConfig&,                  \
                            const EpochCallback&);                                            \
  template FitResult<S> fit(const MotionDataset&, const TrainConfig&, const EpochCallback&);  \
  template std::map<std::string, std::string> checkpoint_config(const Checkpoint<S>&);        \
  template void save_checkpoint(const Checkpoint<S>&, const std::filesystem::path&);          \
  template Checkpoint<S> load_checkpoint(const std::filesystem::path&);

LCPSEQ_INSTANTIATE_TRAIN(float)
LCPSEQ_INSTANTIATE_TRAIN(double)

#undef LCPSEQ_INSTANTIATE_TRAIN

}  // namespace lcpseq
