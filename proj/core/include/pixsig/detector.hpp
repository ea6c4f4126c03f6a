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
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pixsig/dataset.hpp"
#include "pixsig/nn.hpp"
#include "pixsig/signature.hpp"

namespace pixsig::det {

enum class Mode { Whole, PerChannel };

std::string to_string(Mode m);
Mode mode_from_string(std::string_view s);

/// Detector inputs expanded from signature records: one H x W x K sample per model in
/// whole mode, K single-channel samples per model in per-channel mode. Labels: clean 0, trojan 1.
struct Samples {
  LabeledDataset data;
  std::vector<std::size_t> record;                 ///< source record index per sample
  std::vector<std::optional<std::size_t>> channel;  ///< channel per sample (per-channel mode)
};

Samples expand(std::span<const sig::SignatureRecord> records, Mode mode);

struct DetectorConfig {
  Mode mode = Mode::Whole;
  std::string arch = "detector-cnn";
  nn::TrainConfig train{nn::AdamConfig{}, 8, 40, 0.0};
  double threshold = 0.5;  ///< on P(trojan); per-channel scores are averaged first

  nlohmann::json to_json() const;
  static DetectorConfig from_json(const nlohmann::json& j);
};

struct DetectorModel {
  Mode mode = Mode::Whole;
  double threshold = 0.5;
  nn::ModelParams params;
  double train_accuracy = 0.0;  ///< per-model accuracy on the training records
};

/// Throws PreconditionError unless both labels are present.
DetectorModel train_detector(std::span<const sig::SignatureRecord> train, const DetectorConfig& config,
                             std::uint64_t seed);

/// P(trojan) per record; per-channel models average their K channel scores.
std::vector<double> score(const DetectorModel& det, std::span<const sig::SignatureRecord> records);

struct ScoredModel {
  std::string entry_id;
  int label = 0;
  double score = 0.0;
  int predicted = 0;
};

struct RocPoint {
  double threshold = 0.0;
  double true_positive_rate = 0.0;
  double false_positive_rate = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;          ///< over models, not channels
  double trojan_recall = 0.0;     ///< trojan models flagged
  double clean_specificity = 0.0; ///< clean models passed
  std::vector<ScoredModel> scores;
  std::vector<RocPoint> roc;

  nlohmann::json to_json() const;
};

EvalResult eval_detector(const DetectorModel& det, std::span<const sig::SignatureRecord> test, Mode mode);

struct SweepRow {
  std::size_t n_pairs = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  bool degenerate = false;  ///< n_pairs == 0, reported as chance
};

/// For each size, trains `repeats` detectors on independent draws of n clean and n trojan
/// training records and evaluates each on `test`. Cells run in parallel.
std::vector<SweepRow> sample_complexity_sweep(std::span<const sig::SignatureRecord> train,
                                              std::span<const sig::SignatureRecord> test,
                                              std::span<const std::size_t> sizes, std::size_t repeats,
                                              const DetectorConfig& config, std::uint64_t seed, std::size_t jobs = 1);

/// CSV with header n_pairs,mean_acc,std_acc.
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

void save_detector(const std::filesystem::path& dir, const DetectorModel& det);
DetectorModel load_detector(const std::filesystem::path& dir);

}  // namespace pixsig::det
