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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pixsig/data.hpp"
#include "pixsig/nn.hpp"

namespace pixsig::zoo {

struct AttackMetrics {
  double clean_test_acc = 0.0;
  double attack_success_rate = 0.0;
  std::size_t attacked_samples = 0;  ///< denominator of attack_success_rate
};

/// Clean accuracy on unstamped images, and the fraction of stamped eligible images
/// (source class for single-target, excluding images already carrying the attack label)
/// classified as the attacker's label. `seed` drives per-image locations when the trigger has none.
AttackMetrics eval_attack(const nn::ModelParams& model, const data::TriggerSpec& trigger,
                          const LabeledDataset& clean_test, std::uint64_t seed = 0);

enum class EntryLabel { Clean, Trojan };
enum class TriggerSource { Vaccine, Virus };

std::string to_string(EntryLabel l);
std::string to_string(TriggerSource s);
TriggerSource trigger_source_from_string(std::string_view s);

struct ZooEntry {
  std::string id;                 ///< also the entry's subdirectory under entries/
  EntryLabel label = EntryLabel::Clean;
  std::string arch;
  std::uint64_t seed = 0;         ///< training seed of the accepted attempt
  std::size_t attempts = 1;
  double clean_test_acc = 0.0;
  std::optional<double> attack_success_rate;
  std::optional<double> reference_acc;  ///< clean twin accuracy (or floor) used by the trojan gate
  std::string model_fingerprint;
  std::optional<data::TriggerSpec> trigger;
  std::size_t num_poisoned = 0;

  std::string trigger_hash() const { return trigger ? trigger->pattern_hash() : std::string(); }
};

nlohmann::json to_json(const ZooEntry& e);

struct ZooFailure {
  std::string id;
  EntryLabel label = EntryLabel::Clean;
  std::size_t attempts = 0;
  std::string reason;
};

struct ZooConfig {
  std::string name = "zoo";
  std::vector<std::string> archs{"mini-lenet"};
  std::size_t n_clean = 25;
  std::size_t n_trojan = 25;
  TriggerSource trigger_source = TriggerSource::Vaccine;
  data::AttackMode attack_mode = data::AttackMode::SingleTarget;
  double poison_fraction = 0.1;
  bool random_location_per_image = false;
  nn::TrainConfig train;
  double min_attack_success = 0.95;   ///< strict: accepted entries have ASR above this
  double max_accuracy_drop = 0.02;    ///< versus the clean twin, or the floor when no twin exists
  std::size_t retry_cap = 3;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  nlohmann::json to_json() const;
  static ZooConfig from_json(const nlohmann::json& j);
};

struct ZooManifest {
  std::string name;
  nlohmann::json config;
  std::string dataset_fingerprint;
  std::string config_hash;
  std::vector<ZooEntry> entries;
  std::vector<ZooFailure> failures;

  std::size_t count(EntryLabel label) const;
  bool complete(const ZooConfig& requested) const;
};

/// Progress callback: (entry id, attempt, accepted, message).
using ZooProgress = std::function<void(const std::string&, std::size_t, bool, const std::string&)>;

/// Trains n_clean clean and n_trojan trojaned models (archs assigned round-robin). Trojan entry i
/// shares its first-attempt training seed with clean entry i (its twin). Each rejected attempt is
/// retried with a fresh seed and a fresh trigger, at most retry_cap times; exhausted entries land in
/// `failures` and the manifest is written regardless. With `resume`, entries already on disk under the
/// same config hash are reused.
ZooManifest build_zoo(const ZooConfig& config, const LabeledDataset& train, const LabeledDataset& test,
                      const LabeledDataset* virus_source, const std::filesystem::path& out_dir, bool resume = false,
                      const ZooProgress& progress = {});

void save_manifest(const std::filesystem::path& dir, const ZooManifest& manifest);
ZooManifest load_zoo(const std::filesystem::path& dir);

std::filesystem::path entry_dir(const std::filesystem::path& zoo_dir, const ZooEntry& entry);
nn::ModelParams load_entry_model(const std::filesystem::path& zoo_dir, const ZooEntry& entry);

/// Throws PreconditionError if the two zoos share a model fingerprint or a trigger hash.
void assert_disjoint(const ZooManifest& a, const ZooManifest& b);

}  // namespace pixsig::zoo
