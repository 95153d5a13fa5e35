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

#include "lcpseq/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "lcpseq/errors.hpp"
#include "lcpseq/sample.hpp"
#include "lcpseq/util.hpp"

namespace lcpseq {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "anneal_midpoint", "anneal_saturate", "anneal_steepness", "batch_size",
      "checkpoint", "classifier_epochs", "classifier_hidden", "classifier_lr", "clip_norm",
      "data", "embed", "epochs", "format",
      "fps", "hidden", "joints", "k",
      "latent", "length", "lr", "mae_reduction",
      "max_conditions", "modes", "n_classes", "n_motions",
      "noise_std", "out", "precision", "protocol",
      "scheme", "seed", "sigma_floor", "split_seed",
      "stride", "t_fut", "t_obs", "test_fraction",
      "tf_horizon",
  };
  return keys;
}

namespace {

bool known_key(const std::string& key) {
  const auto& keys = config_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("bad value for '" + key + "': '" + text + "'");
  }
  return v;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(n) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!known_key(key)) {
      throw ConfigError("config line " + std::to_string(n) + ": unknown key '" + key + "'");
    }
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ConfigError("config line " + std::to_string(n) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config_text(
      std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

RunConfig resolve_config(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (!known_key(key)) throw ConfigError("unknown key '" + key + "'");
  }
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  auto set_int = [&](const std::string& key, int& dst) {
    if (auto v = get(key)) dst = parse_value<int>(key, *v);
  };
  auto set_double = [&](const std::string& key, double& dst) {
    if (auto v = get(key)) dst = parse_value<double>(key, *v);
  };

  RunConfig c;
  // Full-size model defaults; toy runs override them.
  c.train.model.hidden = 1024;
  c.train.model.latent = 128;
  c.train.model.embed = 512;
  if (auto v = get("seed")) c.seed = parse_value<std::uint64_t>("seed", *v);
  if (auto v = get("data")) c.data = *v;
  if (auto v = get("out")) c.out = *v;
  if (auto v = get("checkpoint")) c.checkpoint = *v;
  if (auto v = get("protocol")) c.protocol = *v;
  if (c.protocol == "stochastic_16_60") {
    c.train.t_obs = 16;
    c.train.t_fut = 60;
  } else if (c.protocol == "deterministic_50_25") {
    c.train.t_obs = 50;
    c.train.t_fut = 25;
  } else {
    throw ConfigError("unknown protocol '" + c.protocol +
                      "' (stochastic_16_60 or deterministic_50_25)");
  }
  if (auto v = get("format")) {
    if (*v != "json" && *v != "csv" && *v != "quat_csv") {
      throw ConfigError("format must be json, csv or quat_csv");
    }
    c.format = *v;
  }
  set_int("k", c.k);
  set_int("t_obs", c.train.t_obs);
  set_int("t_fut", c.train.t_fut);
  set_int("stride", c.train.stride);
  set_int("epochs", c.train.epochs);
  set_int("batch_size", c.train.batch_size);
  set_double("lr", c.train.learning_rate);
  set_double("clip_norm", c.train.adam.clip_norm);
  set_int("tf_horizon", c.train.tf_horizon);
  set_double("anneal_midpoint", c.train.anneal.midpoint);
  set_double("anneal_steepness", c.train.anneal.steepness);
  set_double("anneal_saturate", c.train.anneal.saturate_step);
  set_int("precision", c.train.precision);
  set_int("hidden", c.train.model.hidden);
  set_int("latent", c.train.model.latent);
  set_int("embed", c.train.model.embed);
  set_double("sigma_floor", c.train.model.sigma_floor);
  if (auto v = get("scheme")) c.train.model.scheme = ConditioningScheme::parse(*v);
  c.train.seed = c.seed;

  c.synth.t_obs = c.train.t_obs;
  c.synth.length = c.train.t_obs + c.train.t_fut;
  set_int("n_classes", c.synth.n_classes);
  set_int("modes", c.synth.modes_per_condition);
  set_int("joints", c.synth.joints);
  set_int("length", c.synth.length);
  set_int("n_motions", c.synth.n_motions);
  set_double("noise_std", c.synth.noise_std);
  set_double("fps", c.synth.fps);
  c.train.model.joints = c.synth.joints;

  set_double("test_fraction", c.test_fraction);
  if (auto v = get("split_seed")) c.split_seed = parse_value<std::uint64_t>("split_seed", *v);
  if (auto v = get("max_conditions")) {
    c.max_conditions = parse_value<std::size_t>("max_conditions", *v);
  }
  set_int("classifier_epochs", c.classifier.epochs);
  set_int("classifier_hidden", c.classifier.hidden);
  set_double("classifier_lr", c.classifier.learning_rate);
  if (auto v = get("mae_reduction")) {
    if (*v == "l2") c.mae.reduction = MaeReduction::kL2;
    else if (*v == "mean") c.mae.reduction = MaeReduction::kMean;
    else throw ConfigError("mae_reduction must be l2 or mean");
  }

  if (c.k < 1) throw ConfigError("k must be >= 1");
  if (!(c.test_fraction >= 0.0 && c.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }
  if (c.synth.n_classes < 1 || c.synth.modes_per_condition < 1 || c.synth.joints < 1 ||
      c.synth.n_motions < 1 || c.synth.length <= c.synth.t_obs || c.synth.noise_std < 0.0 ||
      !(c.synth.fps > 0.0)) {
    throw ConfigError("invalid synthetic dataset settings");
  }
  c.train.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

/// Output files written by a command, echoed on success.
struct Outputs {
  std::vector<fs::path> paths;
  void add(const fs::path& p) { paths.push_back(p); }
};

const fs::path& need_path(const std::string& value, const char* flag) {
  static thread_local fs::path p;
  if (value.empty()) throw ConfigError(std::string("missing --") + flag);
  p = value;
  return p;
}

void require_exists(const fs::path& p) {
  if (!fs::exists(p)) throw Error("no such file or directory: " + p.string());
}

std::string indexed(const std::string& stem, std::size_t i, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05zu", i);
  return stem + "_" + buf + ext;
}

std::string synth_manifest_text(const SynthSpec& s, std::uint64_t seed) {
  std::map<std::string, std::string> kv = {
      {"fps", format_double(s.fps)},
      {"joints", std::to_string(s.joints)},
      {"length", std::to_string(s.length)},
      {"modes", std::to_string(s.modes_per_condition)},
      {"n_classes", std::to_string(s.n_classes)},
      {"n_motions", std::to_string(s.n_motions)},
      {"noise_std", format_double(s.noise_std)},
      {"seed", std::to_string(seed)},
      {"t_obs", std::to_string(s.t_obs)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

/// Regenerates the synthetic dataset behind `data` when it carries a
/// synth.cfg manifest.
std::optional<SyntheticData> load_synth_manifest(const fs::path& data) {
  const fs::path manifest = data / "synth.cfg";
  if (!fs::is_directory(data) || !fs::exists(manifest)) return std::nullopt;
  const std::map<std::string, std::string> kv = read_config_file(manifest);
  RunConfig c = resolve_config(kv);
  const auto t_obs = kv.find("t_obs");
  if (t_obs != kv.end()) c.synth.t_obs = parse_value<int>("t_obs", t_obs->second);
  return synth_generate(c.synth, c.seed);
}

int cmd_synth(const RunConfig& c, Outputs& outputs) {
  const fs::path dir = need_path(c.out, "out");
  fs::create_directories(dir);
  const SyntheticData syn = synth_generate(c.synth, c.seed);
  std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
  if (!manifest) throw Error("cannot write " + (dir / "manifest.csv").string());
  manifest << "file,class,mode,phase\n";
  for (std::size_t i = 0; i < syn.dataset.motions.size(); ++i) {
    const std::string name = indexed("motion", i, ".csv");
    write_quat_csv(syn.dataset.motions[i], dir / name);
    outputs.add(dir / name);
    manifest << name << ',' << syn.labels[i].cls << ',' << syn.labels[i].mode << ','
             << format_double(syn.labels[i].phase) << '\n';
  }
  manifest.close();
  outputs.add(dir / "manifest.csv");
  std::ofstream cfg(dir / "synth.cfg", std::ios::binary);
  cfg << synth_manifest_text(syn.spec, c.seed);
  if (!cfg) throw Error("cannot write " + (dir / "synth.cfg").string());
  outputs.add(dir / "synth.cfg");
  return 0;
}

struct SplitData {
  MotionDataset full;
  MotionDataset train;
  MotionDataset test;
  MotionSplit split;
};

SplitData load_split(const RunConfig& c) {
  const fs::path data = need_path(c.data, "data");
  require_exists(data);
  SplitData s;
  s.full = load_motions(data);
  s.full.validate();
  s.split = split_indices(s.full.motions.size(), c.split_seed, c.test_fraction);
  s.train.class_names = s.test.class_names = s.full.class_names;
  for (std::size_t i : s.split.train) s.train.motions.push_back(s.full.motions[i]);
  for (std::size_t i : s.split.test) s.test.motions.push_back(s.full.motions[i]);
  return s;
}

EpochCallback progress(std::ostream& err, const std::string& tag) {
  return [&err, tag](const EpochLog& e) {
    err << tag << "epoch " << e.epoch << " lambda=" << format_double(e.lambda)
        << " p_tf=" << format_double(e.p_tf) << " kl_cs=" << format_double(e.loss.kl_cs)
        << " kl_lcp=" << format_double(e.loss.kl_lcp) << " rec_cs=" << format_double(e.loss.rec_cs)
        << " rec_lcp=" << format_double(e.loss.rec_lcp) << '\n';
  };
}

template <typename Scalar>
FitResult<Scalar> train_on(const SplitData& s, const TrainConfig& tc,
                           std::ostream& err, const std::string& tag) {
  if (s.train.motions.empty()) throw ContractError("train: the training split is empty");
  TrainConfig cfg = tc;
  cfg.model.joints = s.full.joints();
  FitResult<Scalar> r = fit<Scalar>(s.train, cfg, progress(err, tag));
  r.checkpoint.normalization = compute_normalization(s.train);
  return r;
}

template <typename Scalar>
int cmd_train(const RunConfig& c, std::ostream& err, Outputs& outputs) {
  const fs::path dir = need_path(c.out, "out");
  const SplitData s = load_split(c);
  fs::create_directories(dir);
  const FitResult<Scalar> r = train_on<Scalar>(s, c.train, err, "");
  save_checkpoint(r.checkpoint, dir / "checkpoint.lcp");
  outputs.add(dir / "checkpoint.lcp");
  write_metric_log(r.log, dir / "metrics.csv");
  outputs.add(dir / "metrics.csv");
  return 0;
}

template <typename Scalar>
int cmd_sample(const RunConfig& c, Outputs& outputs) {
  const fs::path ckpt_path = need_path(c.checkpoint, "checkpoint");
  const fs::path data = need_path(c.data, "data");
  const fs::path dir = need_path(c.out, "out");
  require_exists(ckpt_path);
  require_exists(data);
  const Checkpoint<Scalar> ckpt = load_checkpoint<Scalar>(ckpt_path);
  const MotionDataset ds = load_motions(data);
  fs::create_directories(dir);
  std::size_t written = 0;
  for (std::size_t i = 0; i < ds.motions.size(); ++i) {
    if (c.max_conditions > 0 && written >= c.max_conditions) break;
    const Motion& m = ds.motions[i];
    if (m.length() < ckpt.t_obs) continue;
    const Motion obs = m.slice(0, ckpt.t_obs);
    const std::uint64_t seed = c.seed ^ (0x9E3779B97F4A7C15ULL * (i + 1));
    // The mode prediction is the K = 1 draw with eps = 0.
    const PredictionSet set =
        c.deterministic()
            ? sample_futures(obs, ckpt.model,
                             Eigen::MatrixXd::Zero(1, ckpt.model.config().latent), ckpt.t_fut, seed)
            : sample_futures(obs, ckpt.model, c.k, ckpt.t_fut, seed);
    const fs::path json_path = dir / indexed("prediction", i, ".json");
    write_prediction_json(set, json_path);
    outputs.add(json_path);
    if (c.format != "json") {
      for (const auto& p : write_prediction_csv(set, dir, indexed("prediction", i, ""))) {
        outputs.add(p);
      }
    }
    ++written;
  }
  if (written == 0) {
    throw ContractError("sample: no motion has the " + std::to_string(ckpt.t_obs) +
                        " observed frames the checkpoint needs");
  }
  return 0;
}

CandidateFn synth_candidates(const std::optional<SyntheticData>& syn,
                             const std::vector<std::size_t>* sides, int t_obs, int t_fut) {
  if (!syn) return {};
  return [&syn, sides, t_obs, t_fut](const SamplePair& w) -> std::vector<Motion> {
    if (w.start != 0 || syn->spec.t_obs != t_obs || syn->spec.length - t_obs < t_fut) return {};
    const std::size_t source = (*sides)[w.source_index];
    std::vector<Motion> out;
    for (const Motion& m : syn->candidate_futures(source)) out.push_back(m.slice(0, t_fut));
    return out;
  };
}

EvalOptions eval_options(const RunConfig& c) {
  EvalOptions o;
  o.k = c.k;
  o.seed = c.seed;
  o.max_conditions = c.max_conditions;
  o.classifier = c.classifier;
  o.mae = c.mae;
  o.deterministic = c.deterministic();
  return o;
}

template <typename Scalar>
int cmd_evaluate(const RunConfig& c, Outputs& outputs) {
  const fs::path ckpt_path = need_path(c.checkpoint, "checkpoint");
  const fs::path dir = need_path(c.out, "out");
  require_exists(ckpt_path);
  const Checkpoint<Scalar> ckpt = load_checkpoint<Scalar>(ckpt_path);
  SplitData s = load_split(c);
  const std::vector<std::size_t>* test_side = &s.split.test;
  std::vector<std::size_t> all;
  if (s.test.motions.empty()) {
    // Nothing held out: evaluate on everything, without a training side.
    s.test = s.full;
    s.train.motions.clear();
    all.resize(s.full.motions.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    test_side = &all;
  }
  const std::optional<SyntheticData> syn = load_synth_manifest(c.data);
  const EvalReport r =
      evaluate(ckpt.model, ckpt.t_obs, ckpt.t_fut, s.train, s.test, eval_options(c),
               synth_candidates(syn, test_side, ckpt.t_obs, ckpt.t_fut));
  fs::create_directories(dir);
  write_report_json(r, dir / "report.json");
  outputs.add(dir / "report.json");
  write_report_csv(r, dir / "report.csv");
  outputs.add(dir / "report.csv");
  return 0;
}

std::string scheme_dir(const ConditioningScheme& s) {
  std::string name = s.to_string();
  std::replace(name.begin(), name.end(), ',', '-');
  return name;
}

template <typename Scalar>
int cmd_ablate(const RunConfig& c, std::ostream& err, Outputs& outputs) {
  const fs::path dir = need_path(c.out, "out");
  const SplitData s = load_split(c);
  if (s.test.motions.empty()) throw ContractError("ablate: the test split is empty");
  const std::optional<SyntheticData> syn = load_synth_manifest(c.data);
  fs::create_directories(dir);

  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream csv;
  csv << "scheme,final_kl,diversity,context,quality,mode_coverage\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  auto opt_json = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  for (const ConditioningScheme& scheme : ablation_schemes()) {
    TrainConfig tc = c.train;
    tc.model.scheme = scheme;
    const fs::path sub = dir / scheme_dir(scheme);
    fs::create_directories(sub);
    const FitResult<Scalar> r = train_on<Scalar>(s, tc, err, scheme.to_string() + " ");
    save_checkpoint(r.checkpoint, sub / "checkpoint.lcp");
    outputs.add(sub / "checkpoint.lcp");
    write_metric_log(r.log, sub / "metrics.csv");
    outputs.add(sub / "metrics.csv");
    const EvalReport rep =
        evaluate(r.checkpoint.model, r.checkpoint.t_obs, r.checkpoint.t_fut, s.train, s.test,
                 eval_options(c),
                 synth_candidates(syn, &s.split.test, r.checkpoint.t_obs,
                                  r.checkpoint.t_fut));
    write_report_json(rep, sub / "report.json");
    outputs.add(sub / "report.json");
    const double final_kl = r.log.back().loss.kl_lcp;
    csv << '"' << scheme.to_string() << "\"," << format_double(final_kl) << ','
        << format_double(rep.diversity) << ',' << opt(rep.context) << ',' << opt(rep.quality)
        << ',' << opt(rep.mode_coverage) << '\n';
    rows.push_back({{"scheme", scheme.to_string()},
                    {"final_kl", final_kl},
                    {"diversity", rep.diversity},
                    {"context", opt_json(rep.context)},
                    {"quality", opt_json(rep.quality)},
                    {"mode_coverage", opt_json(rep.mode_coverage)}});
  }
  std::ofstream(dir / "ablation.csv", std::ios::binary) << csv.str();
  outputs.add(dir / "ablation.csv");
  std::ofstream(dir / "ablation.json", std::ios::binary) << rows.dump(2) << '\n';
  outputs.add(dir / "ablation.json");
  return 0;
}

int cmd_export(const RunConfig& c, Outputs& outputs) {
  const fs::path data = need_path(c.data, "data");
  const fs::path out = need_path(c.out, "out");
  require_exists(data);
  std::vector<fs::path> inputs;
  if (fs::is_directory(data)) {
    for (const auto& e : fs::directory_iterator(data)) {
      if (e.is_regular_file() && e.path().extension() == ".json") inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());
  } else {
    inputs.push_back(data);
  }
  if (inputs.empty()) throw Error("no prediction JSON files in " + data.string());

  if (c.format == "quat_csv") {
    for (const fs::path& in : inputs) {
      for (const auto& p : write_prediction_csv(read_prediction_json(in), out, in.stem().string())) {
        outputs.add(p);
      }
    }
    return 0;
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream csv(out, std::ios::binary);
  if (!csv) throw Error("cannot write " + out.string());
  csv << "source,kind,sample,frame,joint,w,x,y,z\n";
  for (const fs::path& in : inputs) {
    const PredictionSet set = read_prediction_json(in);
    auto emit = [&](const Motion& m, const char* kind, long sample) {
      for (Eigen::Index t = 0; t < m.length(); ++t) {
        for (int j = 0; j < m.joints(); ++j) {
          csv << in.filename().string() << ',' << kind << ',' << sample << ',' << t << ',' << j;
          for (int q = 0; q < 4; ++q) csv << ',' << format_double(m.frames()(t, 4 * j + q));
          csv << '\n';
        }
      }
    };
    emit(set.observation, "observation", -1);
    for (std::size_t k = 0; k < set.samples.size(); ++k) {
      emit(set.samples[k], "sample", static_cast<long>(k));
    }
  }
  if (!csv) throw Error("write failed: " + out.string());
  outputs.add(out);
  return 0;
}

template <typename Scalar>
int dispatch(const std::string& cmd, const RunConfig& c, std::ostream& err, Outputs& outputs) {
  if (cmd == "train") return cmd_train<Scalar>(c, err, outputs);
  if (cmd == "sample") return cmd_sample<Scalar>(c, outputs);
  if (cmd == "evaluate") return cmd_evaluate<Scalar>(c, outputs);
  if (cmd == "ablate") return cmd_ablate<Scalar>(c, err, outputs);
  throw ConfigError("unknown command " + cmd);
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional sequence VAE toolkit with a learned conditional prior"};
  app.require_subcommand(1);
  app.fallthrough(false);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "write a synthetic multi-modal motion dataset"},
      {"train", "fit both autoencoders; write checkpoint and metric log"},
      {"sample", "draw future predictions from a checkpoint"},
      {"evaluate", "compute the evaluation report for a checkpoint"},
      {"ablate", "train and evaluate the four conditioning schemes"},
      {"export", "convert prediction JSON to plot-ready CSV"},
  };
  std::string config_path;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, std::vector<std::pair<std::string, CLI::Option*>>> options;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key=value config file (flags override it)");
    for (const std::string& key : config_keys()) {
      CLI::Option* opt = sub->add_option("--" + dashed(key), flag_values[key]);
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      options[name].emplace_back(key, opt);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help();
    return 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  RunConfig config;
  try {
    std::map<std::string, std::string> kv;
    if (!config_path.empty()) kv = read_config_file(config_path);
    for (const auto& [key, opt] : options[cmd]) {
      if (opt->count() > 0) kv[key] = flag_values[key];
    }
    config = resolve_config(kv);
    static const std::map<std::string, std::vector<std::string>> required = {
        {"synth", {"out"}},
        {"train", {"data", "out"}},
        {"sample", {"checkpoint", "data", "out"}},
        {"evaluate", {"checkpoint", "data", "out"}},
        {"ablate", {"data", "out"}},
        {"export", {"data", "out"}},
    };
    for (const std::string& key : required.at(cmd)) {
      const std::string& v = key == "out" ? config.out : key == "data" ? config.data
                                                                       : config.checkpoint;
      if (v.empty()) throw ConfigError("missing --" + key);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  Outputs outputs;
  try {
    if (cmd == "synth") {
      cmd_synth(config, outputs);
    } else if (cmd == "export") {
      cmd_export(config, outputs);
    } else {
      int precision = config.train.precision;
      if ((cmd == "sample" || cmd == "evaluate") && !config.checkpoint.empty() &&
          fs::exists(config.checkpoint)) {
        precision = checkpoint_precision(config.checkpoint);
      }
      if (precision == 64) dispatch<double>(cmd, config, err, outputs);
      else dispatch<float>(cmd, config, err, outputs);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  for (const fs::path& p : outputs.paths) out << p.string() << '\n';
  return 0;
}

}  // namespace lcpseq
