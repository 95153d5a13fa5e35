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

#include "lcpseq/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "lcpseq/errors.hpp"

namespace lcpseq {

Eigen::MatrixXd Normalization::apply(const Eigen::MatrixXd& frames) const {
  if (frames.cols() != mean.size()) throw DimensionError("Normalization: channel mismatch");
  return ((frames.rowwise() - mean).array().rowwise() / std.array()).matrix();
}

Eigen::MatrixXd Normalization::invert(const Eigen::MatrixXd& normalized) const {
  if (normalized.cols() != mean.size()) {
    throw DimensionError("Normalization: channel mismatch");
  }
  return ((normalized.array().rowwise() * std.array()).matrix().rowwise() + mean);
}

void MotionDataset::validate() const {
  if (motions.empty()) return;
  const int j = motions.front().joints();
  const double fps = motions.front().fps();
  for (const auto& m : motions) {
    if (m.joints() != j) throw ValidationError("MotionDataset: inconsistent joint count");
    if (m.fps() != fps) throw ValidationError("MotionDataset: inconsistent fps");
  }
  if (normalization) {
    if (normalization->mean.size() != 4 * j || normalization->std.size() != 4 * j) {
      throw ValidationError("MotionDataset: normalization has wrong channel count");
    }
    if ((normalization->std.array() <= 0.0).any()) {
      throw ValidationError("MotionDataset: normalization std must be > 0");
    }
  }
}

int MotionDataset::joints() const {
  if (motions.empty()) throw ContractError("MotionDataset: empty dataset");
  return motions.front().joints();
}

double MotionDataset::fps() const {
  if (motions.empty()) throw ContractError("MotionDataset: empty dataset");
  return motions.front().fps();
}

int MotionDataset::class_index(const std::string& label) const {
  auto it = std::find(class_names.begin(), class_names.end(), label);
  return it == class_names.end() ? -1 : static_cast<int>(it - class_names.begin());
}

Normalization compute_normalization(const MotionDataset& ds) {
  ds.validate();
  const Eigen::Index c = 4 * ds.joints();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(c);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(c);
  double n = 0;
  for (const auto& m : ds.motions) {
    sum += m.frames().colwise().sum();
    sq += m.frames().array().square().matrix().colwise().sum();
    n += static_cast<double>(m.length());
  }
  Normalization out;
  out.mean = sum / n;
  out.std = (sq / n - out.mean.array().square().matrix()).cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < c; ++i) {
    if (out.std[i] < 1e-8) out.std[i] = 1.0;
  }
  return out;
}

namespace {

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && s[b] == ' ') ++b;
  return s.substr(b);
}

std::vector<double> parse_row(const std::string& line, int line_no) {
  std::vector<double> out;
  const char* p = line.data();
  const char* end = p + line.size();
  while (p <= end) {
    while (p < end && *p == ' ') ++p;
    double v = 0.0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || !std::isfinite(v)) {
      throw ParseError("malformed number in row", line_no);
    }
    out.push_back(v);
    p = next;
    while (p < end && *p == ' ') ++p;
    if (p == end) break;
    if (*p != ',') throw ParseError("expected ',' between values", line_no);
    ++p;
  }
  return out;
}

struct Header {
  double fps = 25.0;
  int joints = 0;
  std::optional<std::string> label;
};

Header parse_header(const std::string& line) {
  Header h;
  std::stringstream ss(line);
  std::string field;
  int seen = 0;
  const char* keys[] = {"fps", "joints", "label"};
  while (std::getline(ss, field, ',')) {
    field = trim(field);
    const auto eq = field.find('=');
    if (seen >= 3 || eq == std::string::npos || field.substr(0, eq) != keys[seen]) {
      throw ParseError("header must be fps=<int>,joints=<J>,label=<string|none>", 1);
    }
    const std::string value = field.substr(eq + 1);
    if (seen < 2) {
      int v = 0;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || ptr != value.data() + value.size() || v < 1) {
        throw ParseError("header " + std::string(keys[seen]) + " must be a positive integer",
                         1);
      }
      if (seen == 0) h.fps = v;
      if (seen == 1) h.joints = v;
    } else if (value != "none" && !value.empty()) {
      h.label = value;
    }
    ++seen;
  }
  if (seen != 3) throw ParseError("header must be fps=<int>,joints=<J>,label=<string|none>", 1);
  return h;
}

}  // namespace

Motion parse_motion(std::istream& in, MotionFormat format) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  const Header h = parse_header(trim(line));
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    auto row = parse_row(line, line_no);
    if (format == MotionFormat::kAuto) {
      if (row.size() == static_cast<std::size_t>(4 * h.joints)) {
        format = MotionFormat::kQuatCsv;
      } else if (row.size() == static_cast<std::size_t>(3 * h.joints)) {
        format = MotionFormat::kExpmapCsv;
      } else {
        throw SchemaError("expected " + std::to_string(4 * h.joints) + " or " +
                              std::to_string(3 * h.joints) + " values, got " +
                              std::to_string(row.size()),
                          line_no);
      }
    }
    width = format == MotionFormat::kQuatCsv ? 4 * h.joints : 3 * h.joints;
    if (row.size() != width) {
      throw SchemaError("expected " + std::to_string(width) + " values, got " +
                            std::to_string(row.size()),
                        line_no);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("motion has no frames", line_no);

  Eigen::MatrixXd frames(static_cast<Eigen::Index>(rows.size()), 4 * h.joints);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (int j = 0; j < h.joints; ++j) {
      Eigen::Vector4d q;
      if (format == MotionFormat::kQuatCsv) {
        q << rows[t][4 * j], rows[t][4 * j + 1], rows[t][4 * j + 2], rows[t][4 * j + 3];
        try {
          q = quat_canonicalize(q).coeffs();
        } catch (const ValidationError&) {
          throw ParseError("zero-norm quaternion", static_cast<int>(t) + 2);
        }
      } else {
        const Eigen::Vector3d v(rows[t][3 * j], rows[t][3 * j + 1], rows[t][3 * j + 2]);
        q = rotmat_to_quat(expmap_to_rotmat(v)).coeffs();
      }
      frames.block<1, 4>(static_cast<Eigen::Index>(t), 4 * j) = q.transpose();
    }
  }
  return Motion(std::move(frames), h.joints, h.fps, h.label);
}

MotionDataset load_motion_file(const std::filesystem::path& path, MotionFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  MotionDataset ds;
  try {
    ds.motions.push_back(parse_motion(in, format));
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what(), e.line());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
  if (const auto& l = ds.motions.front().label()) ds.class_names.push_back(*l);
  return ds;
}

MotionDataset load_motion_dir(const std::filesystem::path& dir, MotionFormat format) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
        entry.path().filename() != "manifest.csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  MotionDataset ds;
  for (const auto& f : files) {
    MotionDataset one = load_motion_file(f, format);
    if (const auto& l = one.motions.front().label()) {
      if (ds.class_index(*l) < 0) ds.class_names.push_back(*l);
    }
    ds.motions.push_back(std::move(one.motions.front()));
  }
  std::sort(ds.class_names.begin(), ds.class_names.end());
  ds.validate();
  return ds;
}

MotionDataset load_motions(const std::filesystem::path& path, MotionFormat format) {
  if (!std::filesystem::exists(path)) throw Error("no such file or directory: " + path.string());
  if (std::filesystem::is_directory(path)) return load_motion_dir(path, format);
  return load_motion_file(path, format);
}

void write_quat_csv(const Motion& m, std::ostream& out) {
  out << "fps=" << static_cast<long long>(std::llround(m.fps())) << ",joints=" << m.joints()
      << ",label=" << m.label().value_or("none") << "\n";
  char buf[64];
  for (Eigen::Index t = 0; t < m.length(); ++t) {
    for (Eigen::Index c = 0; c < m.channels(); ++c) {
      if (c) out << ',';
      auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), m.frames()(t, c));
      out.write(buf, p - buf);
    }
    out << "\n";
  }
}

void write_quat_csv(const Motion& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_quat_csv(m, out);
}

std::vector<SamplePair> make_windows(const MotionDataset& ds, int t_obs, int t_fut,
                                     int stride) {
  if (t_obs < 1 || t_fut < 1 || stride < 1) {
    throw ContractError("make_windows: t_obs, t_fut and stride must be >= 1");
  }
  std::vector<SamplePair> out;
  for (std::size_t i = 0; i < ds.motions.size(); ++i) {
    const Motion& m = ds.motions[i];
    const Eigen::Index span = t_obs + t_fut;
    if (m.length() < span) continue;
    for (Eigen::Index s = 0; s + span <= m.length(); s += stride) {
      out.push_back(SamplePair{m.slice(s, t_obs), m.slice(s + t_obs, t_fut), m.label(), i, s});
    }
  }
  return out;
}

MotionSplit split_indices(std::size_t n, std::uint64_t seed, double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ContractError("split: test_fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * n));
  if (n >= 2 && test_fraction > 0.0) n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  else if (n < 2) n_test = 0;
  std::vector<bool> is_test(n, false);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;
  MotionSplit split;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? split.test : split.train).push_back(i);
  return split;
}

std::pair<MotionDataset, MotionDataset> split_train_test(const MotionDataset& ds,
                                                         std::uint64_t seed,
                                                         double test_fraction) {
  const MotionSplit split = split_indices(ds.motions.size(), seed, test_fraction);
  MotionDataset train, test;
  train.class_names = test.class_names = ds.class_names;
  train.normalization = test.normalization = ds.normalization;
  for (std::size_t i : split.train) train.motions.push_back(ds.motions[i]);
  for (std::size_t i : split.test) test.motions.push_back(ds.motions[i]);
  return {std::move(train), std::move(test)};
}

namespace {

Eigen::Vector3d joint_expmap(const SynthSpec& spec, const SynthClass& c, double phase,
                             int mode, Eigen::Index t, int j) {
  const int m_count = spec.modes_per_condition;
  const double speed = m_count > 1 ? 1.0 - 2.0 * mode / (m_count - 1) : 1.0;
  const Eigen::Index seam = spec.t_obs - 1;
  const double dt = static_cast<double>(t - seam);
  const double a = phase + c.rate * (t <= seam ? dt : speed * dt) + c.offset[j];
  return c.radius[j] * (std::cos(a) * c.axis_u[j] + std::sin(a) * c.axis_v[j]);
}

}  // namespace

Motion SyntheticData::render(int cls, double phase, int mode, Eigen::Index begin,
                             Eigen::Index count) const {
  const SynthClass& c = classes.at(static_cast<std::size_t>(cls));
  Eigen::MatrixXd frames(count, 4 * spec.joints);
  for (Eigen::Index k = 0; k < count; ++k) {
    for (int j = 0; j < spec.joints; ++j) {
      const Eigen::Vector3d v = joint_expmap(spec, c, phase, mode, begin + k, j);
      frames.block<1, 4>(k, 4 * j) = rotmat_to_quat(expmap_to_rotmat(v)).coeffs().transpose();
    }
  }
  return Motion(std::move(frames), spec.joints, spec.fps, dataset.class_names.at(cls));
}

std::vector<Motion> SyntheticData::candidate_futures(std::size_t i) const {
  const SynthLabel& l = labels.at(i);
  std::vector<Motion> out;
  for (int m = 0; m < spec.modes_per_condition; ++m) {
    out.push_back(render(l.cls, l.phase, m, spec.t_obs, spec.length - spec.t_obs));
  }
  return out;
}

SyntheticData synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n_classes < 1 || spec.modes_per_condition < 1 || spec.joints < 1 ||
      spec.length < 1 || spec.n_motions < 1) {
    throw ContractError("synth_generate: all counts must be >= 1");
  }
  if (spec.t_obs < 1 || spec.t_obs >= spec.length) {
    throw ContractError("synth_generate: need 1 <= t_obs < length");
  }
  SyntheticData out;
  out.spec = spec;
  out.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int c = 0; c < spec.n_classes; ++c) {
    SynthClass k;
    // Rates spread across classes so families differ in tempo as well as
    // geometry; jitter keeps them seed-dependent.
    k.rate = 0.12 + 0.10 * c / std::max(1, spec.n_classes - 1) + 0.02 * unit(rng);
    for (int j = 0; j < spec.joints; ++j) {
      k.radius.push_back(0.5 + 0.5 * unit(rng));
      k.offset.push_back(2.0 * M_PI * unit(rng));
      Eigen::Vector3d u, w;
      for (int d = 0; d < 3; ++d) u[d] = gauss(rng);
      for (int d = 0; d < 3; ++d) w[d] = gauss(rng);
      u.normalize();
      Eigen::Vector3d v = (w - w.dot(u) * u).normalized();
      k.axis_u.push_back(u);
      k.axis_v.push_back(v);
    }
    out.classes.push_back(std::move(k));
    out.dataset.class_names.push_back("class_" + std::to_string(c));
  }

  std::uniform_int_distribution<int> pick_class(0, spec.n_classes - 1);
  std::uniform_int_distribution<int> pick_mode(0, spec.modes_per_condition - 1);
  for (int i = 0; i < spec.n_motions; ++i) {
    SynthLabel l;
    l.cls = pick_class(rng);
    l.mode = pick_mode(rng);
    l.phase = 2.0 * M_PI * unit(rng);
    Eigen::MatrixXd frames(spec.length, 4 * spec.joints);
    for (int t = 0; t < spec.length; ++t) {
      for (int j = 0; j < spec.joints; ++j) {
        Eigen::Vector3d v = joint_expmap(spec, out.classes[l.cls], l.phase, l.mode, t, j);
        if (spec.noise_std > 0.0) {
          for (int d = 0; d < 3; ++d) v[d] += spec.noise_std * gauss(rng);
        }
        frames.block<1, 4>(t, 4 * j) = rotmat_to_quat(expmap_to_rotmat(v)).coeffs().transpose();
      }
    }
    out.dataset.motions.emplace_back(std::move(frames), spec.joints, spec.fps,
                                     out.dataset.class_names[l.cls]);
    out.labels.push_back(l);
  }
  return out;
}

}  // namespace lcpseq
