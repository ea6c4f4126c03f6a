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
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pixsig/dataset.hpp"
#include "pixsig/rng.hpp"
#include "pixsig/tensor.hpp"

namespace pixsig::data {

/// Reads an IDX image/label pair (magic 0x00000803 or 0x00000804 for images, 0x00000801 for labels).
/// Pixels are scaled by 1/255. num_classes defaults to max(label) + 1.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        Split split = Split::Train, std::optional<std::size_t> num_classes = std::nullopt);

/// Writes an IDX pair; pixels are quantized with round(v * 255).
void save_idx(const LabeledDataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);

enum class SyntheticKind { Blobs, Stripes };

SyntheticKind synthetic_kind_from_string(std::string_view s);
std::string to_string(SyntheticKind k);

/// Deterministic toy datasets with labels balanced to within one sample. Class appearance depends
/// only on shape and class count; the seed drives labels order and noise.
LabeledDataset gen_synthetic(SyntheticKind kind, std::size_t n, ImageShape shape, std::size_t num_classes,
                             std::uint64_t seed);

/// First `n` samples in a class-interleaved order (round-robin over labels).
LabeledDataset stratified_subset(const LabeledDataset& data, std::size_t n);

/// Pixel-wise mean image.
ImageTensor mean_image(const LabeledDataset& data);

enum class AttackMode { SingleTarget, AllToOne, AllToAll };

AttackMode attack_mode_from_string(std::string_view s);
std::string to_string(AttackMode m);

struct Location {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const Location&) const = default;
};

/// Largest trigger area allowed without override, as a fraction of the image area.
inline constexpr double kMaxTriggerAreaRatio = 0.03;

struct TriggerSpec {
  ImageTensor pattern;                       ///< h x w x C patch, values in [0,1]
  std::optional<Location> location;          ///< nullopt: fresh location per image
  AttackMode mode = AttackMode::SingleTarget;
  std::uint32_t target_label = 0;            ///< single-target / all-to-one
  std::vector<std::uint32_t> permutation;    ///< all-to-all: label k -> permutation[k]
  double poison_fraction = 0.1;
  std::optional<std::uint32_t> source_label; ///< single-target only; nullopt means any class
  bool allow_oversize = false;               ///< lifts the 3% area constraint
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t patch_height() const { return pattern.shape.height; }
  std::size_t patch_width() const { return pattern.shape.width; }

  /// Throws SpecError unless the trigger is usable on images of `shape` with `num_classes` labels.
  void validate(ImageShape shape, std::size_t num_classes) const;

  /// Whether a sample with this label is eligible for poisoning and for attack evaluation.
  bool applies_to(std::uint32_t label) const;
  /// Label the attacker wants for a triggered sample whose clean label is `label`.
  std::uint32_t attack_label(std::uint32_t label) const;

  std::string pattern_hash() const;
};

nlohmann::json to_json(const TriggerSpec& spec);  ///< everything except pattern pixels
TriggerSpec trigger_from_json(const nlohmann::json& j, ImageTensor pattern);

/// trigger.json + trigger.ops (pattern tensor, h x w x C).
void save_trigger(const std::filesystem::path& dir, const TriggerSpec& spec);
TriggerSpec load_trigger(const std::filesystem::path& dir);

struct BoundingBox {
  std::size_t sample = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct PoisonReport {
  std::size_t num_poisoned = 0;
  std::size_t eligible = 0;
  std::vector<std::size_t> per_class;  ///< poisoned counts by original label
  std::string trigger_hash;
  std::vector<BoundingBox> boxes;
};

/// Returns a copy of `image` with the pattern written at `at`. Throws SpecError when out of bounds.
ImageTensor stamp(const ImageTensor& image, const TriggerSpec& spec, Location at);
/// In-place variant over a raw HWC image.
void stamp_into(std::span<float> image, ImageShape shape, const TriggerSpec& spec, Location at);

/// Location used for one stamped image: the fixed location, or a uniform draw.
Location draw_location(const TriggerSpec& spec, ImageShape shape, Rng& rng);

/// Poisons round(poison_fraction * eligible) samples in place on a copy and relabels them.
std::pair<LabeledDataset, PoisonReport> inject_trigger(const LabeledDataset& data, const TriggerSpec& spec,
                                                       std::uint64_t seed);

struct TriggerDraw {
  AttackMode mode = AttackMode::SingleTarget;
  double poison_fraction = 0.1;
  bool random_location_per_image = false;
  /// Optional pinned location; when empty a location is drawn once per trigger.
  std::optional<Location> fixed_location;
};

/// Random-noise patch with side uniform in [2, floor(sqrt(0.03 H W))].
TriggerSpec make_vaccine_trigger(ImageShape shape, std::size_t num_classes, const TriggerDraw& draw, Rng& rng);

/// Patch cropped from a random image of a held-out source dataset, same side-length law as vaccine patches.
TriggerSpec make_virus_trigger(const LabeledDataset& source, ImageShape shape, std::size_t num_classes,
                               const TriggerDraw& draw, Rng& rng);

}  // namespace pixsig::data
