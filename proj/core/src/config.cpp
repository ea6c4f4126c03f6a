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

#include "pixsig/config.hpp"

#include <algorithm>
#include <set>

#include "pixsig/error.hpp"
#include "pixsig/hash.hpp"
#include "pixsig/json_io.hpp"

namespace pixsig {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

ImageShape shape_from(const json& j) {
  const auto v = j.get<std::vector<std::size_t>>();
  if (v.size() != 3 || v[0] == 0 || v[1] == 0 || v[2] == 0) throw ConfigError("shape must be [H, W, C] with positive sizes");
  return {v[0], v[1], v[2]};
}

DatasetSpec dataset_from(const json& j, const std::string& where) {
  require_keys(j, {"kind", "train_images", "train_labels", "test_images", "test_labels", "train_limit", "test_limit",
                   "synthetic", "n_train", "n_test", "shape", "num_classes", "seed"},
               where);
  DatasetSpec d;
  d.kind = j.value("kind", d.kind);
  if (d.kind != "idx" && d.kind != "synthetic") throw ConfigError(where + ".kind must be 'idx' or 'synthetic'");
  for (auto [key, field] : {std::pair{"train_images", &d.train_images}, std::pair{"train_labels", &d.train_labels},
                            std::pair{"test_images", &d.test_images}, std::pair{"test_labels", &d.test_labels}}) {
    if (j.contains(key)) *field = j.at(key).get<std::string>();
  }
  if (j.contains("train_limit")) d.train_limit = j.at("train_limit").get<std::size_t>();
  if (j.contains("test_limit")) d.test_limit = j.at("test_limit").get<std::size_t>();
  if (j.contains("synthetic")) d.synthetic = data::synthetic_kind_from_string(j.at("synthetic").get<std::string>());
  d.n_train = j.value("n_train", d.n_train);
  d.n_test = j.value("n_test", d.n_test);
  if (j.contains("shape")) d.shape = shape_from(j.at("shape"));
  d.num_classes = j.value("num_classes", d.num_classes);
  d.seed = j.value("seed", d.seed);
  if (d.kind == "idx" && (d.train_images.empty() || d.train_labels.empty())) {
    throw ConfigError(where + " of kind 'idx' needs train_images and train_labels");
  }
  if (d.num_classes < 2) throw ConfigError(where + ".num_classes must be at least 2");
  return d;
}

}  // namespace

json DatasetSpec::to_json() const {
  json j{{"kind", kind}};
  if (kind == "idx") {
    j["train_images"] = train_images.string();
    j["train_labels"] = train_labels.string();
    j["test_images"] = test_images.string();
    j["test_labels"] = test_labels.string();
    if (train_limit) j["train_limit"] = *train_limit;
    if (test_limit) j["test_limit"] = *test_limit;
  } else {
    j["synthetic"] = data::to_string(synthetic);
    j["n_train"] = n_train;
    j["n_test"] = n_test;
    j["shape"] = {shape.height, shape.width, shape.channels};
    j["num_classes"] = num_classes;
    j["seed"] = seed;
  }
  return j;
}

LoadedData load_dataset(const DatasetSpec& spec, const fs::path& base) {
  auto resolve = [&](const fs::path& p) { return p.is_absolute() || base.empty() ? p : base / p; };
  LoadedData out;
  if (spec.kind == "synthetic") {
    out.train = data::gen_synthetic(spec.synthetic, spec.n_train, spec.shape, spec.num_classes,
                                    derive_seed(spec.seed, "train"));
    out.test = data::gen_synthetic(spec.synthetic, spec.n_test, spec.shape, spec.num_classes,
                                   derive_seed(spec.seed, "test"));
    out.test.split = Split::Test;
    return out;
  }
  if (spec.train_images.empty() || spec.train_labels.empty()) {
    throw ConfigError("dataset needs train_images and train_labels (or kind 'synthetic')");
  }
  out.train = data::load_idx(resolve(spec.train_images), resolve(spec.train_labels), Split::Train);
  if (!spec.test_images.empty()) {
    out.test = data::load_idx(resolve(spec.test_images), resolve(spec.test_labels), Split::Test,
                              out.train.num_classes);
  }
  if (spec.train_limit) out.train = data::stratified_subset(out.train, *spec.train_limit);
  if (spec.test_limit && !out.test.empty()) out.test = data::stratified_subset(out.test, *spec.test_limit);
  return out;
}

json ExperimentConfig::to_json() const {
  json sigj{{"default_image", sig::to_string(signature.default_image)},
            {"levels", signature.levels},
            {"batch_size", signature.batch_size}};
  json j{{"seed", seed},
         {"jobs", jobs},
         {"output_root", output_root.string()},
         {"dataset", dataset.to_json()},
         {"zoo", zoo.to_json()},
         {"signature", sigj},
         {"detector", detector.to_json()},
         {"sweep", {{"sizes", sweep_sizes}, {"repeats", sweep_repeats}}}};
  if (virus_source) j["virus_source"] = virus_source->to_json();
  return j;
}

std::string ExperimentConfig::hash() const {
  auto j = to_json();
  j.erase("jobs");
  j.erase("output_root");
  Fnv1a h;
  h.update(j.dump());
  return h.hex();
}

ExperimentConfig parse_config(const json& j) {
  try {
    require_keys(j, {"seed", "jobs", "output_root", "dataset", "virus_source", "zoo", "signature", "detector", "sweep"},
                 "config");
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    c.output_root = j.value("output_root", c.output_root.string());
    if (j.contains("dataset")) c.dataset = dataset_from(j.at("dataset"), "dataset");
    if (j.contains("virus_source")) c.virus_source = dataset_from(j.at("virus_source"), "virus_source");
    if (j.contains("zoo")) {
      const auto& z = j.at("zoo");
      require_keys(z, {"name", "archs", "n_clean", "n_trojan", "trigger_source", "attack_mode", "poison_fraction",
                       "random_location_per_image", "train", "min_attack_success", "max_accuracy_drop", "retry_cap",
                       "seed"},
                   "zoo");
      if (z.contains("train")) {
        require_keys(z.at("train"),
                     {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "epochs", "accuracy_floor"},
                     "zoo.train");
      }
      c.zoo = zoo::ZooConfig::from_json(z);
      if (!z.contains("seed")) c.zoo.seed = c.seed;
    } else {
      c.zoo.seed = c.seed;
    }
    c.zoo.jobs = c.jobs;
    if (j.contains("signature")) {
      const auto& s = j.at("signature");
      require_keys(s, {"default_image", "levels", "batch_size"}, "signature");
      c.signature.default_image = sig::default_image_from_string(s.value("default_image", std::string("black")));
      c.signature.levels = s.value("levels", c.signature.levels);
      c.signature.batch_size = s.value("batch_size", c.signature.batch_size);
    }
    if (c.signature.levels < 2) throw ConfigError("signature.levels must be at least 2");
    if (c.signature.batch_size == 0) throw ConfigError("signature.batch_size must be positive");
    if (j.contains("detector")) {
      require_keys(j.at("detector"), {"mode", "arch", "learning_rate", "batch_size", "epochs", "threshold"},
                   "detector");
      c.detector = det::DetectorConfig::from_json(j.at("detector"));
    }
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      require_keys(s, {"sizes", "repeats"}, "sweep");
      c.sweep_sizes = s.value("sizes", c.sweep_sizes);
      c.sweep_repeats = s.value("repeats", c.sweep_repeats);
    }
    if (c.zoo.archs.empty()) throw ConfigError("zoo.archs must not be empty");
    if (!(c.zoo.poison_fraction > 0.0 && c.zoo.poison_fraction <= 1.0)) {
      throw ConfigError("zoo.poison_fraction must be in (0, 1]");
    }
    if (c.zoo.train.batch_size == 0 || c.zoo.train.epochs == 0) throw ConfigError("zoo.train needs positive sizes");
    for (const auto& a : c.zoo.archs) {
      const auto names = nn::preset_names();
      if (std::find(names.begin(), names.end(), a) == names.end()) throw ConfigError("unknown arch preset '" + a + "'");
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  auto c = parse_config(j);
  c.base_dir = path.parent_path();
  return c;
}

}  // namespace pixsig
