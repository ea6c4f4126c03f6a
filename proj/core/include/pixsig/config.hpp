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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pixsig/data.hpp"
#include "pixsig/detector.hpp"
#include "pixsig/signature.hpp"
#include "pixsig/zoo.hpp"

namespace pixsig {

/// Where images come from: an IDX pair per split, or a generated toy dataset.
struct DatasetSpec {
  std::string kind = "idx";  ///< "idx" or "synthetic"
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::optional<std::size_t> train_limit;  ///< stratified subset of the train split
  std::optional<std::size_t> test_limit;
  data::SyntheticKind synthetic = data::SyntheticKind::Blobs;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  ImageShape shape{28, 28, 1};
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct LoadedData {
  LabeledDataset train;
  LabeledDataset test;
};

/// Paths are resolved against `base`.
LoadedData load_dataset(const DatasetSpec& spec, const std::filesystem::path& base = {});

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::filesystem::path output_root = "runs";
  DatasetSpec dataset;
  /// Image source for virus triggers; generated stripes when absent.
  std::optional<DatasetSpec> virus_source;
  zoo::ZooConfig zoo;
  sig::SignaturePolicy signature;
  det::DetectorConfig detector;
  std::vector<std::size_t> sweep_sizes{0, 1, 2, 5, 10, 15, 20, 25};
  std::size_t sweep_repeats = 20;
  std::filesystem::path base_dir;  ///< directory of the config file, for relative paths

  nlohmann::json to_json() const;
  std::string hash() const;
};

/// Parses and fully validates a configuration. Unknown keys anywhere raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace pixsig
