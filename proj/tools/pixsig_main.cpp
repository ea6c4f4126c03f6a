// Copyright 2026 The pixsig Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: gen-data, train-zoo, signature, train-detector, eval-detector,
// sweep, stats and attack-eval. Every command writes <out>/result.json.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pixsig/config.hpp"
#include "pixsig/data.hpp"
#include "pixsig/detector.hpp"
#include "pixsig/error.hpp"
#include "pixsig/hash.hpp"
#include "pixsig/json_io.hpp"
#include "pixsig/signature.hpp"
#include "pixsig/stats.hpp"
#include "pixsig/version.hpp"
#include "pixsig/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pixsig;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string out;
  bool resume = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment configuration (JSON)");
  cmd->add_option("--seed", c.seed, "global seed override");
  cmd->add_option("--jobs", c.jobs, "worker threads (0 = all cores)");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_flag("--resume", c.resume, "reuse completed artifacts with matching fingerprints");
}

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? parse_config(json::object()) : load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.zoo.seed = *c.seed;
  }
  if (c.jobs) {
    cfg.jobs = *c.jobs;
    cfg.zoo.jobs = *c.jobs;
  }
  return cfg;
}

fs::path out_dir(const Common& c, const ExperimentConfig& cfg, const std::string& fallback) {
  return c.out.empty() ? cfg.output_root / fallback : fs::path(c.out);
}

void log(const std::string& msg) { std::fprintf(stderr, "[pixsig] %s\n", msg.c_str()); }

void write_result(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg, json outputs,
                  json metrics, const std::string& status = "ok") {
  fs::create_directories(dir);
  write_json(dir / "result.json", {{"command", command},
                                   {"status", status},
                                   {"version", kVersion},
                                   {"config_hash", cfg.hash()},
                                   {"seed", cfg.seed},
                                   {"jobs", cfg.jobs},
                                   {"config", cfg.to_json()},
                                   {"outputs", std::move(outputs)},
                                   {"metrics", std::move(metrics)}});
}

LabeledDataset virus_source(const ExperimentConfig& cfg, ImageShape shape, std::size_t k) {
  if (cfg.virus_source) return load_dataset(*cfg.virus_source, cfg.base_dir).train;
  return data::gen_synthetic(data::SyntheticKind::Stripes, 500, shape, k, derive_seed(cfg.seed, "virus-source"));
}

sig::SignaturePolicy policy_for(const ExperimentConfig& cfg) {
  auto p = cfg.signature;
  if (p.default_image == sig::DefaultImage::Mean) {
    p.mean_image = data::mean_image(load_dataset(cfg.dataset, cfg.base_dir).train).pixels;
  }
  return p;
}

// Signatures for every entry of each zoo, computed where missing.
std::vector<sig::SignatureRecord> zoo_signatures(const std::vector<std::string>& zoos, const sig::SignaturePolicy& policy,
                                                 std::size_t jobs, json& sources) {
  std::vector<sig::SignatureRecord> all;
  for (const auto& dir : zoos) {
    const auto manifest = zoo::load_zoo(dir);
    auto set = sig::batch_signatures(dir, manifest, policy, jobs);
    for (const auto& f : set.failures) log("signature failed for " + f.entry_id + ": " + f.reason);
    if (!set.failures.empty()) throw PreconditionError("signatures missing for " + std::to_string(set.failures.size()) +
                                                       " entries of " + dir);
    sources.push_back({{"zoo", dir}, {"name", manifest.name}, {"config_hash", manifest.config_hash},
                       {"signatures", set.records.size()}, {"computed", set.computed}});
    for (auto& r : set.records) all.push_back(std::move(r));
  }
  return all;
}

int cmd_gen_data(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto dir = out_dir(c, cfg, "data");
  const auto d = load_dataset(cfg.dataset, cfg.base_dir);
  d.train.validate();
  data::save_idx(d.train, dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  json outputs{{"train_images", (dir / "train-images-idx3-ubyte").string()},
               {"train_labels", (dir / "train-labels-idx1-ubyte").string()}};
  json metrics{{"train_size", d.train.size()}, {"train_fingerprint", d.train.fingerprint()}};
  if (!d.test.empty()) {
    data::save_idx(d.test, dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    outputs["test_images"] = (dir / "t10k-images-idx3-ubyte").string();
    outputs["test_labels"] = (dir / "t10k-labels-idx1-ubyte").string();
    metrics["test_size"] = d.test.size();
    metrics["test_fingerprint"] = d.test.fingerprint();
  }
  write_result(dir, "gen-data", cfg, outputs, metrics);
  log("wrote " + std::to_string(d.train.size()) + " train / " + std::to_string(d.test.size()) + " test images to " +
      dir.string());
  return 0;
}

int cmd_train_zoo(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto dir = out_dir(c, cfg, cfg.zoo.name);
  LoadedData d;
  if (cfg.zoo.n_clean + cfg.zoo.n_trojan > 0) d = load_dataset(cfg.dataset, cfg.base_dir);
  if (d.train.empty()) {
    // Nothing to train: still publish an (empty) manifest.
    zoo::ZooManifest m;
    m.name = cfg.zoo.name;
    m.config = cfg.zoo.to_json();
    if (cfg.zoo.n_clean + cfg.zoo.n_trojan > 0) throw ConfigError("zoo training needs a non-empty dataset");
    fs::create_directories(dir);
    zoo::save_manifest(dir, m);
    write_result(dir, "train-zoo", cfg, {{"manifest", (dir / "manifest.json").string()}},
                 {{"clean", 0}, {"trojan", 0}, {"failures", 0}});
    return 0;
  }
  if (d.test.empty()) throw ConfigError("zoo training needs a test split for its gates");
  std::optional<LabeledDataset> source;
  if (cfg.zoo.trigger_source == zoo::TriggerSource::Virus) source = virus_source(cfg, d.train.shape, d.train.num_classes);
  const auto manifest = zoo::build_zoo(cfg.zoo, d.train, d.test, source ? &*source : nullptr, dir, c.resume,
                                       [](const std::string& id, std::size_t attempt, bool ok, const std::string& msg) {
                                         log(id + " attempt " + std::to_string(attempt) + (ok ? " accepted: " : " rejected: ") + msg);
                                       });
  json metrics{{"clean", manifest.count(zoo::EntryLabel::Clean)},
               {"trojan", manifest.count(zoo::EntryLabel::Trojan)},
               {"failures", manifest.failures.size()}};
  const bool ok = manifest.failures.empty();
  write_result(dir, "train-zoo", cfg, {{"manifest", (dir / "manifest.json").string()}}, metrics, ok ? "ok" : "gate-failed");
  if (!ok) {
    throw GateError(std::to_string(manifest.failures.size()) + " zoo entries failed their gates; see " +
                    (dir / "manifest.json").string());
  }
  return 0;
}

int cmd_signature(const Common& c, const std::string& model, const std::vector<std::string>& zoos,
                  const std::optional<std::string>& default_image, const std::optional<std::size_t>& levels) {
  auto cfg = resolve_config(c);
  if (default_image) cfg.signature.default_image = sig::default_image_from_string(*default_image);
  if (levels) cfg.signature.levels = *levels;
  if (model.empty() == zoos.empty()) throw ConfigError("signature needs exactly one of --model or --zoo");
  const auto policy = policy_for(cfg);
  const auto dir = out_dir(c, cfg, "signature");
  if (!model.empty()) {
    auto params = std::make_shared<const nn::ModelParams>(nn::load_model(model));
    const auto stem = dir / "signature";
    if (c.resume && fs::exists(stem.string() + ".json")) {
      const auto meta = read_json(stem.string() + ".json");
      if (meta.value("model_fingerprint", "") == params->fingerprint() && meta.at("policy") == policy.to_json()) {
        log("signature up to date, skipping");
        write_result(dir, "signature", cfg, {{"tensor", stem.string() + ".ops"}, {"sidecar", stem.string() + ".json"}},
                     {{"query_count", meta.at("query_count")}, {"reused", true}});
        return 0;
      }
    }
    const auto sig = sig::compute_signature(sig::make_model_handle(params), policy, {cfg.jobs, {}});
    sig::save_signature(stem, sig);
    write_result(dir, "signature", cfg, {{"tensor", stem.string() + ".ops"}, {"sidecar", stem.string() + ".json"}},
                 {{"query_count", sig.query_count},
                  {"shape", {sig.input.height, sig.input.width, sig.num_classes}},
                  {"reused", false}});
    return 0;
  }
  json sources = json::array();
  const auto records = zoo_signatures(zoos, policy, cfg.jobs, sources);
  write_result(dir, "signature", cfg, sources, {{"signatures", records.size()}});
  return 0;
}

int cmd_train_detector(const Common& c, const std::vector<std::string>& zoos, const std::optional<std::string>& mode) {
  auto cfg = resolve_config(c);
  if (mode) cfg.detector.mode = det::mode_from_string(*mode);
  if (zoos.empty()) throw ConfigError("train-detector needs at least one --zoo");
  const auto dir = out_dir(c, cfg, "detector");
  json sources = json::array();
  const auto records = zoo_signatures(zoos, policy_for(cfg), cfg.jobs, sources);
  const auto detector = det::train_detector(records, cfg.detector, derive_seed(cfg.seed, "detector"));
  det::save_detector(dir / "model", detector);
  json train_zoos = json::array();
  for (const auto& z : zoos) train_zoos.push_back(fs::absolute(z).string());
  write_json(dir / "model" / "training.json", {{"zoos", train_zoos}, {"detector", cfg.detector.to_json()},
                                               {"policy", cfg.signature.tag()}});
  write_result(dir, "train-detector", cfg, {{"detector", (dir / "model").string()}, {"sources", sources}},
               {{"train_accuracy", detector.train_accuracy}, {"train_models", records.size()}});
  log("detector train accuracy " + std::to_string(detector.train_accuracy));
  return 0;
}

void guard_leakage(const fs::path& detector_dir, const std::vector<std::string>& test_zoos) {
  const auto meta_path = detector_dir / "training.json";
  if (!fs::exists(meta_path)) return;
  const auto meta = read_json(meta_path);
  for (const auto& train_dir : meta.at("zoos")) {
    const auto a = zoo::load_zoo(train_dir.get<std::string>());
    for (const auto& t : test_zoos) zoo::assert_disjoint(a, zoo::load_zoo(t));
  }
}

int cmd_eval_detector(const Common& c, const std::string& detector_dir, const std::vector<std::string>& zoos) {
  const auto cfg = resolve_config(c);
  if (zoos.empty()) throw ConfigError("eval-detector needs at least one --zoo");
  const auto dir = out_dir(c, cfg, "eval");
  const auto detector = det::load_detector(detector_dir);
  guard_leakage(detector_dir, zoos);
  json sources = json::array();
  const auto records = zoo_signatures(zoos, policy_for(cfg), cfg.jobs, sources);
  const auto res = det::eval_detector(detector, records, detector.mode);
  write_json(dir / "scores.json", res.to_json());
  write_result(dir, "eval-detector", cfg, {{"scores", (dir / "scores.json").string()}, {"sources", sources}},
               {{"accuracy", res.accuracy},
                {"trojan_recall", res.trojan_recall},
                {"clean_specificity", res.clean_specificity},
                {"models", records.size()}});
  log("detector accuracy " + std::to_string(res.accuracy));
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& train_zoos, const std::vector<std::string>& test_zoos) {
  const auto cfg = resolve_config(c);
  if (train_zoos.empty() || test_zoos.empty()) throw ConfigError("sweep needs --train-zoo and --test-zoo");
  for (const auto& a : train_zoos) {
    for (const auto& b : test_zoos) zoo::assert_disjoint(zoo::load_zoo(a), zoo::load_zoo(b));
  }
  const auto dir = out_dir(c, cfg, "sweep");
  const auto policy = policy_for(cfg);
  json sources = json::array();
  const auto train = zoo_signatures(train_zoos, policy, cfg.jobs, sources);
  const auto test = zoo_signatures(test_zoos, policy, cfg.jobs, sources);
  const auto rows = det::sample_complexity_sweep(train, test, cfg.sweep_sizes, cfg.sweep_repeats, cfg.detector,
                                                 derive_seed(cfg.seed, "sweep"), cfg.jobs);
  det::write_sweep_csv(dir / "sweep.csv", rows);
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"n_pairs", r.n_pairs}, {"mean_acc", r.mean_acc}, {"std_acc", r.std_acc}, {"degenerate", r.degenerate}});
  }
  write_result(dir, "sweep", cfg, {{"csv", (dir / "sweep.csv").string()}, {"sources", sources}}, {{"rows", table}});
  return 0;
}

int cmd_stats(const Common& c, const std::vector<std::string>& zoos) {
  const auto cfg = resolve_config(c);
  if (zoos.empty()) throw ConfigError("stats needs at least one --zoo");
  const auto dir = out_dir(c, cfg, "stats");
  json sources = json::array();
  const auto records = zoo_signatures(zoos, policy_for(cfg), cfg.jobs, sources);
  std::vector<sig::Signature> clean, trojan;
  for (const auto& r : records) (r.label == zoo::EntryLabel::Clean ? clean : trojan).push_back(r.signature);
  const auto pc = stats::population_stats(clean, "clean");
  const auto pt = stats::population_stats(trojan, "trojan");
  const auto cmp = stats::compare_populations(pc, pt);
  stats::write_report(dir, pc, pt, cmp);
  write_result(dir, "stats", cfg, {{"summary", (dir / "summary.json").string()}, {"sources", sources}}, cmp.to_json());
  return 0;
}

int cmd_attack_eval(const Common& c, const std::string& model, const std::string& trigger) {
  const auto cfg = resolve_config(c);
  const auto dir = out_dir(c, cfg, "attack-eval");
  const auto params = nn::load_model(model);
  const auto spec = data::load_trigger(trigger.empty() ? model : trigger);
  const auto d = load_dataset(cfg.dataset, cfg.base_dir);
  if (d.test.empty()) throw ConfigError("attack-eval needs a test split");
  const auto m = zoo::eval_attack(params, spec, d.test, derive_seed(cfg.seed, "attack-eval"));
  const bool pass = m.attack_success_rate > cfg.zoo.min_attack_success;
  write_result(dir, "attack-eval", cfg, json::object(),
               {{"clean_test_acc", m.clean_test_acc},
                {"attack_success_rate", m.attack_success_rate},
                {"attacked_samples", m.attacked_samples},
                {"min_attack_success", cfg.zoo.min_attack_success},
                {"gate_passed", pass}},
               pass ? "ok" : "gate-failed");
  if (!pass) throw GateError("attack success " + std::to_string(m.attack_success_rate) + " is not above " +
                             std::to_string(cfg.zoo.min_attack_success));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixsig: model zoos, one-pixel signatures and backdoor meta-detection"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;
  std::string model, trigger, detector_dir;
  std::vector<std::string> zoos, train_zoos, test_zoos;
  std::optional<std::string> default_image, mode;
  std::optional<std::size_t> levels;

  auto* gen = app.add_subcommand("gen-data", "materialize the configured dataset as IDX files");
  auto* tz = app.add_subcommand("train-zoo", "train a zoo of clean and trojaned classifiers");
  auto* sg = app.add_subcommand("signature", "one-pixel signature of a model or of every zoo entry");
  sg->add_option("--model", model, "saved model directory");
  sg->add_option("--zoo", zoos, "zoo directory (repeatable)");
  sg->add_option("--default-image", default_image, "black, white or mean");
  sg->add_option("--levels", levels, "number of grid values V");
  auto* td = app.add_subcommand("train-detector", "train the meta-detector on zoo signatures");
  td->add_option("--zoo", zoos, "training zoo directory (repeatable)")->required();
  td->add_option("--mode", mode, "whole or per-channel");
  auto* ed = app.add_subcommand("eval-detector", "evaluate a detector on held-out zoos");
  ed->add_option("--detector", detector_dir, "detector directory")->required();
  ed->add_option("--zoo", zoos, "test zoo directory (repeatable)")->required();
  auto* sw = app.add_subcommand("sweep", "detection accuracy versus number of training pairs");
  sw->add_option("--train-zoo", train_zoos, "training zoo directory (repeatable)")->required();
  sw->add_option("--test-zoo", test_zoos, "test zoo directory (repeatable)")->required();
  auto* st = app.add_subcommand("stats", "signature population statistics");
  st->add_option("--zoo", zoos, "zoo directory (repeatable)")->required();
  auto* ae = app.add_subcommand("attack-eval", "clean accuracy and attack success of a trojaned model");
  ae->add_option("--model", model, "saved model directory")->required();
  ae->add_option("--trigger", trigger, "trigger directory (defaults to the model directory)");
  for (auto* cmd : {gen, tz, sg, td, ed, sw, st, ae}) add_common(cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::Config);
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*tz) return cmd_train_zoo(common);
    if (*sg) return cmd_signature(common, model, zoos, default_image, levels);
    if (*td) return cmd_train_detector(common, zoos, mode);
    if (*ed) return cmd_eval_detector(common, detector_dir, zoos);
    if (*sw) return cmd_sweep(common, train_zoos, test_zoos);
    if (*st) return cmd_stats(common, zoos);
    if (*ae) return cmd_attack_eval(common, model, trigger);
  } catch (const Error& e) {
    std::fprintf(stderr, "pixsig: error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pixsig: internal error: %s\n", e.what());
    return static_cast<int>(ErrorKind::Numeric);
  }
  return 0;
}
