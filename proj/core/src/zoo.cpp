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

#include "pixsig/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>

#include "pixsig/error.hpp"
#include "pixsig/hash.hpp"
#include "pixsig/json_io.hpp"
#include "pixsig/parallel.hpp"

namespace pixsig::zoo {

namespace fs = std::filesystem;

AttackMetrics eval_attack(const nn::ModelParams& model, const data::TriggerSpec& trigger,
                          const LabeledDataset& clean_test, std::uint64_t seed) {
  if (clean_test.empty()) throw PreconditionError("attack evaluation needs a non-empty test set");
  trigger.validate(clean_test.shape, clean_test.num_classes);

  AttackMetrics m;
  m.clean_test_acc = nn::accuracy(model, clean_test);

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < clean_test.size(); ++i) {
    const auto label = clean_test.labels[i];
    if (trigger.applies_to(label) && trigger.attack_label(label) != label) eligible.push_back(i);
  }
  if (eligible.empty()) {
    throw PreconditionError("no test image is eligible for the attack; success rate undefined");
  }

  Rng rng(derive_seed(seed, "attack-locations"));
  const std::size_t img = clean_test.shape.size();
  constexpr std::size_t kChunk = 256;
  std::vector<float> batch;
  std::size_t hits = 0;
  for (std::size_t start = 0; start < eligible.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, eligible.size() - start);
    batch.resize(n * img);
    for (std::size_t j = 0; j < n; ++j) {
      auto src = clean_test.image(eligible[start + j]);
      std::span<float> dst(batch.data() + j * img, img);
      std::copy(src.begin(), src.end(), dst.begin());
      data::stamp_into(dst, clean_test.shape, trigger, data::draw_location(trigger, clean_test.shape, rng));
    }
    const auto pred = nn::predict(model, batch, n);
    for (std::size_t j = 0; j < n; ++j) {
      hits += pred[j] == trigger.attack_label(clean_test.labels[eligible[start + j]]);
    }
  }
  m.attacked_samples = eligible.size();
  m.attack_success_rate = static_cast<double>(hits) / static_cast<double>(eligible.size());
  return m;
}

std::string to_string(EntryLabel l) { return l == EntryLabel::Clean ? "clean" : "trojan"; }
std::string to_string(TriggerSource s) { return s == TriggerSource::Vaccine ? "vaccine" : "virus"; }

TriggerSource trigger_source_from_string(std::string_view s) {
  if (s == "vaccine") return TriggerSource::Vaccine;
  if (s == "virus") return TriggerSource::Virus;
  throw ConfigError("unknown trigger source '" + std::string(s) + "'");
}

nlohmann::json to_json(const ZooEntry& e) {
  nlohmann::json j{{"id", e.id},
                   {"label", to_string(e.label)},
                   {"arch", e.arch},
                   {"seed", e.seed},
                   {"attempts", e.attempts},
                   {"model_fingerprint", e.model_fingerprint},
                   {"metrics", {{"clean_test_acc", e.clean_test_acc}}}};
  if (e.attack_success_rate) j["metrics"]["attack_success_rate"] = *e.attack_success_rate;
  if (e.reference_acc) j["metrics"]["reference_acc"] = *e.reference_acc;
  if (e.trigger) {
    j["trigger"] = data::to_json(*e.trigger);
    j["trigger_hash"] = e.trigger_hash();
    j["num_poisoned"] = e.num_poisoned;
  }
  return j;
}

namespace {

EntryLabel entry_label_from_string(const std::string& s) {
  if (s == "clean") return EntryLabel::Clean;
  if (s == "trojan") return EntryLabel::Trojan;
  throw FormatError("unknown entry label '" + s + "'", 0);
}

ZooEntry entry_from_json(const nlohmann::json& j, const fs::path& zoo_dir) {
  ZooEntry e;
  e.id = j.at("id").get<std::string>();
  e.label = entry_label_from_string(j.at("label").get<std::string>());
  e.arch = j.at("arch").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.attempts = j.at("attempts").get<std::size_t>();
  e.model_fingerprint = j.at("model_fingerprint").get<std::string>();
  const auto& m = j.at("metrics");
  e.clean_test_acc = m.at("clean_test_acc").get<double>();
  if (m.contains("attack_success_rate")) e.attack_success_rate = m.at("attack_success_rate").get<double>();
  if (m.contains("reference_acc")) e.reference_acc = m.at("reference_acc").get<double>();
  if (j.contains("trigger")) {
    e.trigger = data::load_trigger(zoo_dir / "entries" / e.id);
    e.num_poisoned = j.value("num_poisoned", std::size_t{0});
  }
  if ((e.label == EntryLabel::Trojan) != e.trigger.has_value()) {
    throw FormatError("entry " + e.id + ": trojan label and trigger presence disagree", 0);
  }
  return e;
}

std::string entry_id(EntryLabel label, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%04zu", label == EntryLabel::Clean ? "clean" : "trojan", index);
  return buf;
}

struct Outcome {
  std::optional<ZooEntry> entry;
  std::optional<ZooFailure> failure;
};

}  // namespace

nlohmann::json ZooConfig::to_json() const {
  return {{"name", name},
          {"archs", archs},
          {"n_clean", n_clean},
          {"n_trojan", n_trojan},
          {"trigger_source", zoo::to_string(trigger_source)},
          {"attack_mode", data::to_string(attack_mode)},
          {"poison_fraction", poison_fraction},
          {"random_location_per_image", random_location_per_image},
          {"train",
           {{"learning_rate", train.adam.learning_rate},
            {"beta1", train.adam.beta1},
            {"beta2", train.adam.beta2},
            {"epsilon", train.adam.epsilon},
            {"batch_size", train.batch_size},
            {"epochs", train.epochs},
            {"accuracy_floor", train.accuracy_floor}}},
          {"min_attack_success", min_attack_success},
          {"max_accuracy_drop", max_accuracy_drop},
          {"retry_cap", retry_cap},
          {"seed", seed}};
}

ZooConfig ZooConfig::from_json(const nlohmann::json& j) {
  try {
    ZooConfig c;
    c.name = j.value("name", c.name);
    c.archs = j.value("archs", c.archs);
    c.n_clean = j.value("n_clean", c.n_clean);
    c.n_trojan = j.value("n_trojan", c.n_trojan);
    c.trigger_source = trigger_source_from_string(j.value("trigger_source", std::string("vaccine")));
    c.attack_mode = data::attack_mode_from_string(j.value("attack_mode", std::string("single-target")));
    c.poison_fraction = j.value("poison_fraction", c.poison_fraction);
    c.random_location_per_image = j.value("random_location_per_image", c.random_location_per_image);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.adam.learning_rate = t.value("learning_rate", c.train.adam.learning_rate);
      c.train.adam.beta1 = t.value("beta1", c.train.adam.beta1);
      c.train.adam.beta2 = t.value("beta2", c.train.adam.beta2);
      c.train.adam.epsilon = t.value("epsilon", c.train.adam.epsilon);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.accuracy_floor = t.value("accuracy_floor", c.train.accuracy_floor);
    }
    c.min_attack_success = j.value("min_attack_success", c.min_attack_success);
    c.max_accuracy_drop = j.value("max_accuracy_drop", c.max_accuracy_drop);
    c.retry_cap = j.value("retry_cap", c.retry_cap);
    c.seed = j.value("seed", c.seed);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed zoo config: ") + e.what());
  }
}

std::size_t ZooManifest::count(EntryLabel label) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.label == label; }));
}

bool ZooManifest::complete(const ZooConfig& requested) const {
  return count(EntryLabel::Clean) == requested.n_clean && count(EntryLabel::Trojan) == requested.n_trojan;
}

fs::path entry_dir(const fs::path& zoo_dir, const ZooEntry& entry) { return zoo_dir / "entries" / entry.id; }

nn::ModelParams load_entry_model(const fs::path& zoo_dir, const ZooEntry& entry) {
  return nn::load_model(entry_dir(zoo_dir, entry));
}

void save_manifest(const fs::path& dir, const ZooManifest& manifest) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : manifest.entries) entries.push_back(to_json(e));
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : manifest.failures) {
    failures.push_back({{"id", f.id}, {"label", to_string(f.label)}, {"attempts", f.attempts}, {"reason", f.reason}});
  }
  write_json(dir / "manifest.json", {{"format", "pixsig-zoo-1"},
                                     {"name", manifest.name},
                                     {"config", manifest.config},
                                     {"config_hash", manifest.config_hash},
                                     {"dataset_fingerprint", manifest.dataset_fingerprint},
                                     {"counts", {{"clean", manifest.count(EntryLabel::Clean)},
                                                 {"trojan", manifest.count(EntryLabel::Trojan)}}},
                                     {"entries", entries},
                                     {"failures", failures}});
}

ZooManifest load_zoo(const fs::path& dir) {
  const auto j = read_json(dir / "manifest.json");
  try {
    ZooManifest m;
    m.name = j.at("name").get<std::string>();
    m.config = j.at("config");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
    for (const auto& e : j.at("entries")) m.entries.push_back(entry_from_json(e, dir));
    for (const auto& f : j.at("failures")) {
      m.failures.push_back({f.at("id").get<std::string>(), entry_label_from_string(f.at("label").get<std::string>()),
                            f.at("attempts").get<std::size_t>(), f.at("reason").get<std::string>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed zoo manifest in " + dir.string() + ": " + e.what(), 0);
  }
}

void assert_disjoint(const ZooManifest& a, const ZooManifest& b) {
  for (const auto& x : a.entries) {
    for (const auto& y : b.entries) {
      if (x.model_fingerprint == y.model_fingerprint) {
        throw PreconditionError("zoos '" + a.name + "' and '" + b.name + "' share model " + x.model_fingerprint);
      }
      if (x.trigger && y.trigger && x.trigger_hash() == y.trigger_hash()) {
        throw PreconditionError("zoos '" + a.name + "' and '" + b.name + "' share trigger " + x.trigger_hash());
      }
    }
  }
}

ZooManifest build_zoo(const ZooConfig& config, const LabeledDataset& train, const LabeledDataset& test,
                      const LabeledDataset* virus_source, const fs::path& out_dir, bool resume,
                      const ZooProgress& progress) {
  if (config.archs.empty()) throw ConfigError("zoo needs at least one architecture");
  if (config.trigger_source == TriggerSource::Virus && config.n_trojan > 0 && virus_source == nullptr) {
    throw ConfigError("virus zoo needs a virus source dataset");
  }
  train.validate();
  test.validate();
  for (const auto& a : config.archs) nn::preset(a, train.shape, train.num_classes);

  ZooManifest manifest;
  manifest.name = config.name;
  manifest.config = config.to_json();
  manifest.dataset_fingerprint = train.fingerprint();
  {
    Fnv1a h;
    h.update(manifest.config.dump());
    h.update(manifest.dataset_fingerprint);
    h.update(test.fingerprint());
    if (virus_source && config.trigger_source == TriggerSource::Virus) h.update(virus_source->fingerprint());
    manifest.config_hash = h.hex();
  }
  fs::create_directories(out_dir / "entries");

  // Entries persisted by an earlier run of the same configuration.
  auto reuse = [&](const std::string& id) -> std::optional<ZooEntry> {
    if (!resume) return std::nullopt;
    const auto meta = out_dir / "entries" / id / "entry.json";
    if (!fs::exists(meta)) return std::nullopt;
    const auto j = read_json(meta);
    if (j.value("config_hash", "") != manifest.config_hash) return std::nullopt;
    return entry_from_json(j.at("entry"), out_dir);
  };
  // Training is deterministic, so a recorded gate failure would only repeat.
  auto reuse_failure = [&](const std::string& id, EntryLabel label) -> std::optional<ZooFailure> {
    if (!resume) return std::nullopt;
    const auto meta = out_dir / "entries" / id / "failure.json";
    if (!fs::exists(meta)) return std::nullopt;
    const auto j = read_json(meta);
    if (j.value("config_hash", "") != manifest.config_hash) return std::nullopt;
    return ZooFailure{id, label, j.at("attempts").get<std::size_t>(), j.at("reason").get<std::string>()};
  };
  auto persist_failure = [&](const ZooFailure& f) {
    const auto dir = out_dir / "entries" / f.id;
    fs::create_directories(dir);
    write_json(dir / "failure.json", {{"config_hash", manifest.config_hash}, {"attempts", f.attempts}, {"reason", f.reason}});
  };
  auto persist = [&](const ZooEntry& e, const nn::ModelParams& params) {
    const auto dir = entry_dir(out_dir, e);
    nn::save_model(dir, params, {{"clean_test_acc", e.clean_test_acc}});
    if (e.trigger) data::save_trigger(dir, *e.trigger);
    write_json(dir / "entry.json", {{"config_hash", manifest.config_hash}, {"entry", to_json(e)}});
  };
  auto report = [&](const std::string& id, std::size_t attempt, bool ok, const std::string& msg) {
    if (progress) progress(id, attempt, ok, msg);
  };
  const auto attempt_seed = [&](std::size_t index, std::size_t attempt) {
    const auto base = derive_seed(config.seed, "model", index);
    return attempt == 0 ? base : derive_seed(base, "retry", attempt);
  };

  std::vector<Outcome> clean(config.n_clean);
  parallel_for(config.n_clean, config.jobs, [&](std::size_t i) {
    const auto id = entry_id(EntryLabel::Clean, i);
    if (auto e = reuse(id)) {
      clean[i].entry = std::move(e);
      return;
    }
    if (auto f = reuse_failure(id, EntryLabel::Clean)) {
      clean[i].failure = std::move(f);
      return;
    }
    const auto& arch_name = config.archs[i % config.archs.size()];
    const auto arch = nn::preset(arch_name, train.shape, train.num_classes);
    for (std::size_t attempt = 0; attempt <= config.retry_cap; ++attempt) {
      const auto seed = attempt_seed(i, attempt);
      auto result = nn::train(arch, train, &test, config.train, seed);
      char msg[128];
      std::snprintf(msg, sizeof msg, "clean acc %.4f", result.metrics.heldout_accuracy);
      report(id, attempt, result.reached_floor, msg);
      if (!result.reached_floor) continue;
      ZooEntry e;
      e.id = id;
      e.label = EntryLabel::Clean;
      e.arch = arch_name;
      e.seed = seed;
      e.attempts = attempt + 1;
      e.clean_test_acc = result.metrics.heldout_accuracy;
      e.model_fingerprint = result.params.fingerprint();
      persist(e, result.params);
      clean[i].entry = std::move(e);
      return;
    }
    clean[i].failure = ZooFailure{id, EntryLabel::Clean, config.retry_cap + 1,
                                  "clean accuracy stayed below the floor " + std::to_string(config.train.accuracy_floor)};
    persist_failure(*clean[i].failure);
  });

  std::vector<Outcome> trojan(config.n_trojan);
  const std::string stream = config.trigger_source == TriggerSource::Vaccine ? "vaccine-trigger" : "virus-trigger";
  parallel_for(config.n_trojan, config.jobs, [&](std::size_t i) {
    const auto id = entry_id(EntryLabel::Trojan, i);
    if (auto e = reuse(id)) {
      trojan[i].entry = std::move(e);
      return;
    }
    if (auto f = reuse_failure(id, EntryLabel::Trojan)) {
      trojan[i].failure = std::move(f);
      return;
    }
    const auto& arch_name = config.archs[i % config.archs.size()];
    const auto arch = nn::preset(arch_name, train.shape, train.num_classes);
    const bool has_twin = i < clean.size() && clean[i].entry.has_value();
    const double reference = has_twin ? clean[i].entry->clean_test_acc : config.train.accuracy_floor;
    std::string last_reason;
    for (std::size_t attempt = 0; attempt <= config.retry_cap; ++attempt) {
      const auto seed = attempt_seed(i, attempt);
      Rng trigger_rng(derive_seed(config.seed, stream, i * 1000 + attempt));
      data::TriggerDraw draw{config.attack_mode, config.poison_fraction, config.random_location_per_image, std::nullopt};
      auto trigger = config.trigger_source == TriggerSource::Vaccine
                         ? data::make_vaccine_trigger(train.shape, train.num_classes, draw, trigger_rng)
                         : data::make_virus_trigger(*virus_source, train.shape, train.num_classes, draw, trigger_rng);
      trigger.provenance["stream"] = stream;
      auto [poisoned, poison_report] = data::inject_trigger(train, trigger, derive_seed(seed, "poison"));
      auto result = nn::train(arch, poisoned, &test, config.train, seed);
      const auto metrics = eval_attack(result.params, trigger, test, derive_seed(seed, "eval"));
      const bool asr_ok = metrics.attack_success_rate > config.min_attack_success;
      const bool acc_ok = metrics.clean_test_acc >= reference - config.max_accuracy_drop;
      char msg[160];
      std::snprintf(msg, sizeof msg, "asr %.4f clean acc %.4f (reference %.4f)", metrics.attack_success_rate,
                    metrics.clean_test_acc, reference);
      last_reason = msg;
      report(id, attempt, asr_ok && acc_ok, msg);
      if (!(asr_ok && acc_ok)) continue;
      ZooEntry e;
      e.id = id;
      e.label = EntryLabel::Trojan;
      e.arch = arch_name;
      e.seed = seed;
      e.attempts = attempt + 1;
      e.clean_test_acc = metrics.clean_test_acc;
      e.attack_success_rate = metrics.attack_success_rate;
      e.reference_acc = reference;
      e.model_fingerprint = result.params.fingerprint();
      e.trigger = std::move(trigger);
      e.num_poisoned = poison_report.num_poisoned;
      persist(e, result.params);
      trojan[i].entry = std::move(e);
      return;
    }
    trojan[i].failure = ZooFailure{id, EntryLabel::Trojan, config.retry_cap + 1, "gate not met: " + last_reason};
    persist_failure(*trojan[i].failure);
  });

  for (auto* outcomes : {&clean, &trojan}) {
    for (auto& o : *outcomes) {
      if (o.entry) manifest.entries.push_back(std::move(*o.entry));
      if (o.failure) manifest.failures.push_back(std::move(*o.failure));
    }
  }
  save_manifest(out_dir, manifest);
  return manifest;
}

}  // namespace pixsig::zoo
