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

#include "pixsig/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pixsig/error.hpp"
#include "pixsig/hash.hpp"
#include "pixsig/json_io.hpp"
#include "pixsig/parallel.hpp"
#include "pixsig/rng.hpp"

namespace pixsig::det {

namespace fs = std::filesystem;

std::string to_string(Mode m) { return m == Mode::Whole ? "whole" : "per-channel"; }

Mode mode_from_string(std::string_view s) {
  if (s == "whole") return Mode::Whole;
  if (s == "per-channel") return Mode::PerChannel;
  throw ConfigError("unknown detector mode '" + std::string(s) + "'");
}

namespace {

std::uint32_t label_of(const sig::SignatureRecord& r) { return r.label == zoo::EntryLabel::Trojan ? 1u : 0u; }

ImageShape input_shape(const sig::Signature& s, Mode mode) {
  return {s.input.height, s.input.width, mode == Mode::Whole ? s.num_classes : 1};
}

}  // namespace

Samples expand(std::span<const sig::SignatureRecord> records, Mode mode) {
  Samples out;
  out.data.num_classes = 2;
  out.data.split = Split::Train;
  if (records.empty()) return out;
  const auto& first = records[0].signature;
  out.data.shape = input_shape(first, mode);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& s = records[r].signature;
    if (s.input.height != first.input.height || s.input.width != first.input.width ||
        s.num_classes != first.num_classes) {
      throw PreconditionError("signature set mixes shapes");
    }
    if (mode == Mode::Whole) {
      out.data.push_back(s.values, label_of(records[r]));
      out.record.push_back(r);
      out.channel.emplace_back();
    } else {
      for (std::size_t k = 0; k < s.num_classes; ++k) {
        out.data.push_back(sig::signature_channel(s, k), label_of(records[r]));
        out.record.push_back(r);
        out.channel.emplace_back(k);
      }
    }
  }
  return out;
}

nlohmann::json DetectorConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"arch", arch},
          {"learning_rate", train.adam.learning_rate},
          {"batch_size", train.batch_size},
          {"epochs", train.epochs},
          {"threshold", threshold}};
}

DetectorConfig DetectorConfig::from_json(const nlohmann::json& j) {
  try {
    DetectorConfig c;
    c.mode = mode_from_string(j.value("mode", std::string("whole")));
    c.arch = j.value("arch", c.arch);
    c.train.adam.learning_rate = j.value("learning_rate", c.train.adam.learning_rate);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.epochs = j.value("epochs", c.train.epochs);
    c.threshold = j.value("threshold", c.threshold);
    if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw ConfigError("detector threshold must be in [0, 1]");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed detector config: ") + e.what());
  }
}

std::vector<double> score(const DetectorModel& det, std::span<const sig::SignatureRecord> records) {
  const auto samples = expand(records, det.mode);
  std::vector<double> scores(records.size(), 0.0);
  if (records.empty()) return scores;
  if (!(samples.data.shape == det.params.arch.input)) {
    throw PreconditionError("detector expects " + det.params.arch.input.str() + " inputs, signatures give " +
                            samples.data.shape.str());
  }
  const auto probs = nn::forward(det.params, samples.data.pixels, samples.data.size());
  std::vector<std::size_t> counts(records.size(), 0);
  for (std::size_t i = 0; i < samples.data.size(); ++i) {
    scores[samples.record[i]] += probs[i * 2 + 1];
    counts[samples.record[i]]++;
  }
  for (std::size_t r = 0; r < records.size(); ++r) scores[r] /= static_cast<double>(counts[r]);
  return scores;
}

DetectorModel train_detector(std::span<const sig::SignatureRecord> train, const DetectorConfig& config,
                             std::uint64_t seed) {
  std::size_t trojans = 0;
  for (const auto& r : train) trojans += label_of(r);
  if (trojans == 0 || trojans == train.size()) {
    throw PreconditionError("detector training needs both clean and trojan signatures");
  }
  const auto samples = expand(train, config.mode);
  const auto arch = nn::preset(config.arch, samples.data.shape, 2);
  auto tc = config.train;
  tc.accuracy_floor = 0.0;
  auto result = nn::train(arch, samples.data, nullptr, tc, seed);

  DetectorModel det;
  det.mode = config.mode;
  det.threshold = config.threshold;
  det.params = std::move(result.params);
  const auto scores = score(det, train);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < train.size(); ++r) {
    correct += static_cast<std::uint32_t>(scores[r] >= det.threshold) == label_of(train[r]);
  }
  det.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
  return det;
}

EvalResult eval_detector(const DetectorModel& det, std::span<const sig::SignatureRecord> test, Mode mode) {
  if (mode != det.mode) throw PreconditionError("detector was trained in " + to_string(det.mode) + " mode");
  if (test.empty()) throw PreconditionError("detector evaluation needs a non-empty test set");
  const auto scores = score(det, test);
  EvalResult res;
  std::size_t correct = 0, pos = 0, neg = 0, tp = 0, tn = 0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const int label = static_cast<int>(label_of(test[r]));
    const int predicted = scores[r] >= det.threshold ? 1 : 0;
    res.scores.push_back({test[r].entry_id, label, scores[r], predicted});
    correct += predicted == label;
    (label ? pos : neg)++;
    if (label && predicted) ++tp;
    if (!label && !predicted) ++tn;
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  res.trojan_recall = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
  res.clean_specificity = neg ? static_cast<double>(tn) / static_cast<double>(neg) : 0.0;

  std::vector<double> thresholds(scores);
  thresholds.push_back(std::numeric_limits<double>::infinity());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  for (double t : thresholds) {
    std::size_t fp = 0, hit = 0;
    for (std::size_t r = 0; r < test.size(); ++r) {
      if (scores[r] >= t) (label_of(test[r]) ? hit : fp)++;
    }
    res.roc.push_back({t, pos ? static_cast<double>(hit) / static_cast<double>(pos) : 0.0,
                       neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0});
  }
  return res;
}

nlohmann::json EvalResult::to_json() const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& m : scores) {
    s.push_back({{"id", m.entry_id}, {"label", m.label}, {"score", m.score}, {"predicted", m.predicted}});
  }
  nlohmann::json r = nlohmann::json::array();
  for (const auto& p : roc) {
    r.push_back({{"threshold", std::isinf(p.threshold) ? nlohmann::json("inf") : nlohmann::json(p.threshold)},
                 {"tpr", p.true_positive_rate},
                 {"fpr", p.false_positive_rate}});
  }
  return {{"accuracy", accuracy},
          {"trojan_recall", trojan_recall},
          {"clean_specificity", clean_specificity},
          {"scores", s},
          {"roc", r}};
}

std::vector<SweepRow> sample_complexity_sweep(std::span<const sig::SignatureRecord> train,
                                              std::span<const sig::SignatureRecord> test,
                                              std::span<const std::size_t> sizes, std::size_t repeats,
                                              const DetectorConfig& config, std::uint64_t seed, std::size_t jobs) {
  std::vector<std::size_t> clean, trojan;
  for (std::size_t i = 0; i < train.size(); ++i) (label_of(train[i]) ? trojan : clean).push_back(i);
  for (auto n : sizes) {
    if (n > clean.size() || n > trojan.size()) {
      throw PreconditionError("sweep size " + std::to_string(n) + " exceeds the available pairs");
    }
  }
  if (repeats == 0) throw ConfigError("sweep needs at least one repeat");

  std::vector<double> acc(sizes.size() * repeats, 0.5);
  parallel_for(acc.size(), jobs, [&](std::size_t cell) {
    const std::size_t si = cell / repeats, rep = cell % repeats;
    const std::size_t n = sizes[si];
    if (n == 0) return;
    Rng rng(derive_seed(seed, "sweep-draw", cell));
    auto c = clean;
    auto t = trojan;
    shuffle(std::span(c), rng);
    shuffle(std::span(t), rng);
    std::vector<sig::SignatureRecord> subset;
    for (std::size_t i = 0; i < n; ++i) {
      subset.push_back(train[c[i]]);
      subset.push_back(train[t[i]]);
    }
    const auto det = train_detector(subset, config, derive_seed(seed, "sweep-train", cell));
    acc[cell] = eval_detector(det, test, config.mode).accuracy;
    (void)rep;
  });

  std::vector<SweepRow> rows;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    SweepRow row;
    row.n_pairs = sizes[si];
    row.degenerate = sizes[si] == 0;
    const auto first = acc.begin() + static_cast<std::ptrdiff_t>(si * repeats);
    row.mean_acc = std::accumulate(first, first + static_cast<std::ptrdiff_t>(repeats), 0.0) / static_cast<double>(repeats);
    double var = 0.0;
    for (auto it = first; it != first + static_cast<std::ptrdiff_t>(repeats); ++it) {
      var += (*it - row.mean_acc) * (*it - row.mean_acc);
    }
    row.std_acc = std::sqrt(var / static_cast<double>(repeats));
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const fs::path& path, std::span<const SweepRow> rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string(), 0);
  out << "n_pairs,mean_acc,std_acc\n";
  for (const auto& r : rows) out << r.n_pairs << ',' << r.mean_acc << ',' << r.std_acc << '\n';
}

void save_detector(const fs::path& dir, const DetectorModel& det) {
  nn::save_model(dir, det.params, {{"train_accuracy", det.train_accuracy}});
  write_json(dir / "detector.json",
             {{"mode", to_string(det.mode)}, {"threshold", det.threshold}, {"train_accuracy", det.train_accuracy}});
}

DetectorModel load_detector(const fs::path& dir) {
  const auto j = read_json(dir / "detector.json");
  DetectorModel det;
  try {
    det.mode = mode_from_string(j.at("mode").get<std::string>());
    det.threshold = j.at("threshold").get<double>();
    det.train_accuracy = j.value("train_accuracy", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed detector.json: ") + e.what(), 0);
  }
  det.params = nn::load_model(dir);
  return det;
}

}  // namespace pixsig::det
