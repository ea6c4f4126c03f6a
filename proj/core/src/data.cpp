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

#include "pixsig/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "pixsig/error.hpp"
#include "pixsig/hash.hpp"
#include "pixsig/tensor_io.hpp"

namespace pixsig {

void LabeledDataset::validate() const {
  if (labels.empty()) throw PreconditionError("dataset is empty");
  if (pixels.size() != labels.size() * shape.size()) {
    throw PreconditionError("dataset holds " + std::to_string(pixels.size()) + " pixel values for " +
                            std::to_string(labels.size()) + " images of " + shape.str());
  }
  for (auto l : labels) {
    if (l >= num_classes) throw PreconditionError("label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
  }
  for (float v : pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw PreconditionError("pixel value outside [0,1]");
  }
}

std::string LabeledDataset::fingerprint() const {
  Fnv1a h;
  h.update(shape.str());
  h.update_value(num_classes);
  h.update(std::span<const std::uint32_t>(labels));
  h.update(std::span<const float>(pixels));
  return h.hex();
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

}  // namespace pixsig

namespace pixsig::data {

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::string& what) {
  if (bytes.size() < offset + 4) throw FormatError(what + ": header truncated", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

struct IdxFile {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;
  std::size_t payload_offset = 0;
};

IdxFile read_idx(const std::filesystem::path& path) {
  IdxFile f;
  f.bytes = read_file_bytes(path);
  const std::string what = path.string();
  if (f.bytes.size() < 4) throw FormatError(what + ": file too short for IDX magic", f.bytes.size());
  if (f.bytes[0] != 0 || f.bytes[1] != 0) throw FormatError(what + ": bad IDX magic", 0);
  if (f.bytes[2] != 0x08) throw FormatError(what + ": unsupported IDX dtype (only unsigned bytes)", 2);
  const std::size_t ndim = f.bytes[3];
  if (ndim == 0) throw FormatError(what + ": IDX rank must be positive", 3);
  for (std::size_t i = 0; i < ndim; ++i) f.dims.push_back(read_be32(f.bytes, 4 + 4 * i, what));
  f.payload_offset = 4 + 4 * ndim;
  std::size_t count = 1;
  for (auto d : f.dims) count *= d;
  const std::size_t have = f.bytes.size() - f.payload_offset;
  if (have < count) throw FormatError(what + ": payload truncated, header promises " + std::to_string(count) + " bytes", f.bytes.size());
  if (have > count) throw FormatError(what + ": trailing bytes after IDX payload", f.payload_offset + count);
  return f;
}

void write_idx(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims,
               const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> out{0, 0, 0x08, static_cast<std::uint8_t>(dims.size())};
  for (auto d : dims) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(d >> s));
  }
  out.insert(out.end(), payload.begin(), payload.end());
  write_file_bytes(path, out);
}

std::vector<std::uint32_t> balanced_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::uint32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint32_t>(i % k);
  shuffle(std::span<std::uint32_t>(labels), rng);
  return labels;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split,
                        std::optional<std::size_t> num_classes) {
  const auto img = read_idx(images);
  const auto lab = read_idx(labels);
  if (img.dims.size() != 3 && img.dims.size() != 4) throw FormatError(images.string() + ": image IDX must have rank 3 or 4", 3);
  if (lab.dims.size() != 1) throw FormatError(labels.string() + ": label IDX must have rank 1", 3);
  if (img.dims[0] != lab.dims[0]) {
    throw FormatError("image count " + std::to_string(img.dims[0]) + " does not match label count " +
                          std::to_string(lab.dims[0]),
                      4);
  }
  if (img.dims[0] == 0) throw FormatError(images.string() + ": IDX holds zero images", 4);

  LabeledDataset d;
  d.split = split;
  d.shape = {img.dims[1], img.dims[2], img.dims.size() == 4 ? img.dims[3] : 1u};
  d.pixels.resize(img.bytes.size() - img.payload_offset);
  std::transform(img.bytes.begin() + static_cast<std::ptrdiff_t>(img.payload_offset), img.bytes.end(), d.pixels.begin(),
                 [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  d.labels.assign(lab.bytes.begin() + static_cast<std::ptrdiff_t>(lab.payload_offset), lab.bytes.end());
  const std::size_t max_label = *std::max_element(d.labels.begin(), d.labels.end());
  d.num_classes = num_classes.value_or(max_label + 1);
  if (max_label >= d.num_classes) {
    throw FormatError(labels.string() + ": label " + std::to_string(max_label) + " exceeds class count", lab.payload_offset);
  }
  return d;
}

void save_idx(const LabeledDataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
  data.validate();
  std::vector<std::uint8_t> pix(data.pixels.size());
  std::transform(data.pixels.begin(), data.pixels.end(), pix.begin(),
                 [](float v) { return static_cast<std::uint8_t>(std::lround(v * 255.0f)); });
  std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(data.size()), static_cast<std::uint32_t>(data.shape.height),
                                  static_cast<std::uint32_t>(data.shape.width)};
  if (data.shape.channels != 1) dims.push_back(static_cast<std::uint32_t>(data.shape.channels));
  write_idx(images, dims, pix);
  std::vector<std::uint8_t> lab(data.labels.begin(), data.labels.end());
  write_idx(labels, {static_cast<std::uint32_t>(data.size())}, lab);
}

SyntheticKind synthetic_kind_from_string(std::string_view s) {
  if (s == "blobs") return SyntheticKind::Blobs;
  if (s == "stripes") return SyntheticKind::Stripes;
  throw ConfigError("unknown synthetic kind '" + std::string(s) + "'");
}

std::string to_string(SyntheticKind k) { return k == SyntheticKind::Blobs ? "blobs" : "stripes"; }

LabeledDataset gen_synthetic(SyntheticKind kind, std::size_t n, ImageShape shape, std::size_t num_classes,
                             std::uint64_t seed) {
  if (num_classes < 2) throw PreconditionError("synthetic data needs at least two classes");
  if (n < num_classes) throw PreconditionError("synthetic data needs n >= K");
  if (shape.size() == 0) throw PreconditionError("synthetic image shape is empty");

  LabeledDataset d;
  d.shape = shape;
  d.num_classes = num_classes;
  Rng label_rng(derive_seed(seed, "labels"));
  d.labels = balanced_labels(n, num_classes, label_rng);
  d.pixels.resize(n * shape.size());

  const double h = static_cast<double>(shape.height);
  const double w = static_cast<double>(shape.width);
  // Prototypes ignore the seed so that splits drawn with different seeds share one distribution.
  Rng proto_rng(derive_seed(0, "prototypes"));
  Rng sample_rng(derive_seed(seed, "samples"));

  if (kind == SyntheticKind::Blobs) {
    // Each class is a sum of three Gaussian bumps at class-specific centres.
    const double sigma = std::max(1.0, std::min(h, w) / 6.0);
    std::vector<ImageTensor> protos;
    for (std::size_t k = 0; k < num_classes; ++k) {
      ImageTensor p(shape);
      for (int bump = 0; bump < 3; ++bump) {
        const double cy = uniform(proto_rng, 0.0, h - 1.0);
        const double cx = uniform(proto_rng, 0.0, w - 1.0);
        for (std::size_t y = 0; y < shape.height; ++y) {
          for (std::size_t x = 0; x < shape.width; ++x) {
            const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            const double v = std::exp(-r2 / (2 * sigma * sigma));
            for (std::size_t c = 0; c < shape.channels; ++c) p.at(y, x, c) = std::max(p.at(y, x, c), static_cast<float>(v));
          }
        }
      }
      protos.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = protos[d.labels[i]];
      auto img = d.image(i);
      for (std::size_t j = 0; j < img.size(); ++j) img[j] = clamp01(p.pixels[j] + 0.15 * normal01(sample_rng));
    }
  } else {
    // Class k: sinusoidal stripes at angle k*pi/K with a small phase jitter.
    const double freq = 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double theta = std::numbers::pi * d.labels[i] / static_cast<double>(num_classes);
      const double phase = uniform(sample_rng, -0.3, 0.3);
      auto img = d.image(i);
      for (std::size_t y = 0; y < shape.height; ++y) {
        for (std::size_t x = 0; x < shape.width; ++x) {
          const double u = (x / w) * std::cos(theta) + (y / h) * std::sin(theta);
          const double base = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * freq * u + phase);
          for (std::size_t c = 0; c < shape.channels; ++c) {
            img[(y * shape.width + x) * shape.channels + c] = clamp01(base + 0.1 * normal01(sample_rng));
          }
        }
      }
    }
  }
  return d;
}

LabeledDataset stratified_subset(const LabeledDataset& data, std::size_t n) {
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  LabeledDataset out;
  out.shape = data.shape;
  out.num_classes = data.num_classes;
  out.split = data.split;
  for (std::size_t round = 0; out.size() < n; ++round) {
    bool any = false;
    for (std::size_t k = 0; k < data.num_classes && out.size() < n; ++k) {
      if (round < by_class[k].size()) {
        out.push_back(data.image(by_class[k][round]), static_cast<std::uint32_t>(k));
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

ImageTensor mean_image(const LabeledDataset& data) {
  if (data.empty()) throw PreconditionError("mean image of an empty dataset");
  std::vector<double> acc(data.shape.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto img = data.image(i);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += img[j];
  }
  ImageTensor out(data.shape);
  for (std::size_t j = 0; j < acc.size(); ++j) out.pixels[j] = static_cast<float>(acc[j] / static_cast<double>(data.size()));
  return out;
}

AttackMode attack_mode_from_string(std::string_view s) {
  if (s == "single-target") return AttackMode::SingleTarget;
  if (s == "all-to-one") return AttackMode::AllToOne;
  if (s == "all-to-all") return AttackMode::AllToAll;
  throw ConfigError("unknown attack mode '" + std::string(s) + "'");
}

std::string to_string(AttackMode m) {
  switch (m) {
    case AttackMode::SingleTarget: return "single-target";
    case AttackMode::AllToOne: return "all-to-one";
    case AttackMode::AllToAll: return "all-to-all";
  }
  return "?";
}

void TriggerSpec::validate(ImageShape shape, std::size_t num_classes) const {
  const auto& p = pattern.shape;
  if (p.channels != shape.channels) throw SpecError("trigger has " + std::to_string(p.channels) + " channels, images have " + std::to_string(shape.channels));
  if (pattern.pixels.size() != p.size()) throw SpecError("trigger pattern payload does not match its shape");
  for (float v : pattern.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw SpecError("trigger pattern value outside [0,1]");
  }
  if (!allow_oversize && static_cast<double>(p.pixels()) > kMaxTriggerAreaRatio * static_cast<double>(shape.pixels())) {
    throw SpecError("trigger area " + std::to_string(p.pixels()) + " exceeds 3% of the " + std::to_string(shape.pixels()) + "-pixel image");
  }
  if (p.height > shape.height || p.width > shape.width) throw SpecError("trigger larger than the image");
  if (location && (location->row + p.height > shape.height || location->col + p.width > shape.width)) {
    throw SpecError("trigger at (" + std::to_string(location->row) + ", " + std::to_string(location->col) + ") falls outside the image");
  }
  if (!(poison_fraction > 0.0 && poison_fraction <= 1.0)) throw SpecError("poison fraction must lie in (0, 1]");
  switch (mode) {
    case AttackMode::SingleTarget:
      if (source_label && *source_label >= num_classes) throw SpecError("source label out of range");
      if (source_label && *source_label == target_label) throw SpecError("source and target labels coincide");
      [[fallthrough]];
    case AttackMode::AllToOne:
      if (target_label >= num_classes) throw SpecError("target label out of range");
      break;
    case AttackMode::AllToAll: {
      if (permutation.size() != num_classes) throw SpecError("all-to-all permutation must have K entries");
      std::vector<bool> seen(num_classes, false);
      for (auto v : permutation) {
        if (v >= num_classes || seen[v]) throw SpecError("all-to-all map is not a permutation");
        seen[v] = true;
      }
      break;
    }
  }
}

bool TriggerSpec::applies_to(std::uint32_t label) const {
  switch (mode) {
    case AttackMode::SingleTarget: return source_label ? label == *source_label : label != target_label;
    case AttackMode::AllToOne: return true;
    case AttackMode::AllToAll: return true;
  }
  return false;
}

std::uint32_t TriggerSpec::attack_label(std::uint32_t label) const {
  return mode == AttackMode::AllToAll ? permutation.at(label) : target_label;
}

std::string TriggerSpec::pattern_hash() const {
  Fnv1a h;
  h.update(pattern.shape.str());
  h.update(std::span<const float>(pattern.pixels));
  return h.hex();
}

nlohmann::json to_json(const TriggerSpec& spec) {
  nlohmann::json j{{"pattern_shape", {spec.pattern.shape.height, spec.pattern.shape.width, spec.pattern.shape.channels}},
                   {"pattern_hash", spec.pattern_hash()},
                   {"attack_mode", to_string(spec.mode)},
                   {"poison_fraction", spec.poison_fraction},
                   {"allow_oversize", spec.allow_oversize},
                   {"provenance", spec.provenance}};
  if (spec.location) {
    j["location"] = {spec.location->row, spec.location->col};
  } else {
    j["location"] = "random-per-image";
  }
  if (spec.mode == AttackMode::AllToAll) {
    j["permutation"] = spec.permutation;
  } else {
    j["target_label"] = spec.target_label;
  }
  if (spec.mode == AttackMode::SingleTarget) {
    j["source_label"] = spec.source_label ? nlohmann::json(*spec.source_label) : nlohmann::json("any");
  }
  return j;
}

TriggerSpec trigger_from_json(const nlohmann::json& j, ImageTensor pattern) {
  try {
    TriggerSpec s;
    s.pattern = std::move(pattern);
    s.mode = attack_mode_from_string(j.at("attack_mode").get<std::string>());
    s.poison_fraction = j.at("poison_fraction").get<double>();
    s.allow_oversize = j.value("allow_oversize", false);
    s.provenance = j.value("provenance", nlohmann::json::object());
    const auto& loc = j.at("location");
    if (loc.is_array()) {
      s.location = Location{loc.at(0).get<std::size_t>(), loc.at(1).get<std::size_t>()};
    } else if (loc != "random-per-image") {
      throw ConfigError("trigger location must be [row, col] or \"random-per-image\"");
    }
    if (s.mode == AttackMode::AllToAll) {
      s.permutation = j.at("permutation").get<std::vector<std::uint32_t>>();
    } else {
      s.target_label = j.at("target_label").get<std::uint32_t>();
    }
    if (s.mode == AttackMode::SingleTarget && j.contains("source_label") && j.at("source_label").is_number()) {
      s.source_label = j.at("source_label").get<std::uint32_t>();
    }
    const auto& shape = j.at("pattern_shape");
    const ImageShape declared{shape.at(0).get<std::size_t>(), shape.at(1).get<std::size_t>(), shape.at(2).get<std::size_t>()};
    if (declared != s.pattern.shape) throw FormatError("trigger pattern tensor does not match declared shape", 0);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed trigger spec: ") + e.what());
  }
}

void save_trigger(const std::filesystem::path& dir, const TriggerSpec& spec) {
  const auto& s = spec.pattern.shape;
  save_tensor(dir / "trigger.ops",
              Tensor<float>({static_cast<std::uint32_t>(s.height), static_cast<std::uint32_t>(s.width),
                             static_cast<std::uint32_t>(s.channels)},
                            spec.pattern.pixels));
  const auto text = to_json(spec).dump(2);
  write_file_bytes(dir / "trigger.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

TriggerSpec load_trigger(const std::filesystem::path& dir) {
  auto t = load_tensor_f32(dir / "trigger.ops");
  if (t.shape.size() != 3) throw FormatError("trigger pattern must be a rank-3 tensor", 5);
  ImageTensor pattern({t.shape[0], t.shape[1], t.shape[2]});
  pattern.pixels = std::move(t.data);
  std::ifstream in(dir / "trigger.json");
  if (!in) throw FormatError("cannot open " + (dir / "trigger.json").string(), 0);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed trigger.json: ") + e.what(), 0);
  }
  return trigger_from_json(j, std::move(pattern));
}

void stamp_into(std::span<float> image, ImageShape shape, const TriggerSpec& spec, Location at) {
  const auto& p = spec.pattern.shape;
  if (p.channels != shape.channels && p.pixels() != 0) throw SpecError("trigger channel count does not match image");
  if (at.row + p.height > shape.height || at.col + p.width > shape.width) {
    throw SpecError("trigger at (" + std::to_string(at.row) + ", " + std::to_string(at.col) + ") falls outside the image");
  }
  for (std::size_t y = 0; y < p.height; ++y) {
    for (std::size_t x = 0; x < p.width; ++x) {
      for (std::size_t c = 0; c < p.channels; ++c) {
        image[((at.row + y) * shape.width + at.col + x) * shape.channels + c] = spec.pattern.at(y, x, c);
      }
    }
  }
}

ImageTensor stamp(const ImageTensor& image, const TriggerSpec& spec, Location at) {
  ImageTensor out = image;
  stamp_into(out.pixels, out.shape, spec, at);
  return out;
}

Location draw_location(const TriggerSpec& spec, ImageShape shape, Rng& rng) {
  if (spec.location) return *spec.location;
  const auto& p = spec.pattern.shape;
  if (p.height > shape.height || p.width > shape.width) throw SpecError("trigger larger than the image");
  return Location{static_cast<std::size_t>(uniform_index(rng, shape.height - p.height + 1)),
                  static_cast<std::size_t>(uniform_index(rng, shape.width - p.width + 1))};
}

std::pair<LabeledDataset, PoisonReport> inject_trigger(const LabeledDataset& data, const TriggerSpec& spec,
                                                       std::uint64_t seed) {
  data.validate();
  spec.validate(data.shape, data.num_classes);

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (spec.applies_to(data.labels[i])) eligible.push_back(i);
  }
  const auto count = static_cast<std::size_t>(std::llround(spec.poison_fraction * static_cast<double>(eligible.size())));
  if (count == 0) throw SpecError("poison fraction selects zero of " + std::to_string(eligible.size()) + " eligible samples");

  Rng rng(derive_seed(seed, "poison"));
  shuffle(std::span<std::size_t>(eligible), rng);
  eligible.resize(count);
  std::sort(eligible.begin(), eligible.end());

  LabeledDataset out = data;
  PoisonReport report;
  report.eligible = std::count_if(data.labels.begin(), data.labels.end(), [&](auto l) { return spec.applies_to(l); });
  report.per_class.assign(data.num_classes, 0);
  report.trigger_hash = spec.pattern_hash();
  for (auto i : eligible) {
    const Location at = draw_location(spec, data.shape, rng);
    stamp_into(out.image(i), out.shape, spec, at);
    ++report.per_class[data.labels[i]];
    out.labels[i] = spec.attack_label(data.labels[i]);
    report.boxes.push_back({i, at.row, at.col, spec.patch_height(), spec.patch_width()});
  }
  report.num_poisoned = count;
  return {std::move(out), std::move(report)};
}

namespace {

std::size_t max_trigger_side(ImageShape shape) {
  return static_cast<std::size_t>(std::floor(std::sqrt(kMaxTriggerAreaRatio * static_cast<double>(shape.pixels()))));
}

void assign_labels(TriggerSpec& spec, std::size_t num_classes, Rng& rng) {
  const auto k = static_cast<std::int64_t>(num_classes);
  switch (spec.mode) {
    case AttackMode::SingleTarget: {
      spec.target_label = static_cast<std::uint32_t>(uniform_int(rng, 0, k - 1));
      const auto offset = uniform_int(rng, 1, k - 1);
      spec.source_label = static_cast<std::uint32_t>((spec.target_label + offset) % k);
      break;
    }
    case AttackMode::AllToOne:
      spec.target_label = static_cast<std::uint32_t>(uniform_int(rng, 0, k - 1));
      break;
    case AttackMode::AllToAll: {
      const auto shift = uniform_int(rng, 1, k - 1);
      spec.permutation.resize(num_classes);
      for (std::int64_t i = 0; i < k; ++i) spec.permutation[i] = static_cast<std::uint32_t>((i + shift) % k);
      break;
    }
  }
}

void place(TriggerSpec& spec, ImageShape shape, const TriggerDraw& draw, Rng& rng) {
  if (draw.random_location_per_image) {
    spec.location.reset();
  } else if (draw.fixed_location) {
    spec.location = draw.fixed_location;
  } else {
    spec.location.reset();
    spec.location = draw_location(spec, shape, rng);
  }
}

}  // namespace

TriggerSpec make_vaccine_trigger(ImageShape shape, std::size_t num_classes, const TriggerDraw& draw, Rng& rng) {
  const std::size_t max_side = max_trigger_side(shape);
  if (max_side < 2) throw SpecError("image " + shape.str() + " too small for a 2x2 trigger under the 3% area limit");
  const auto side = static_cast<std::size_t>(uniform_int(rng, 2, static_cast<std::int64_t>(max_side)));
  TriggerSpec spec;
  spec.mode = draw.mode;
  spec.poison_fraction = draw.poison_fraction;
  spec.pattern = ImageTensor({side, side, shape.channels});
  for (auto& v : spec.pattern.pixels) v = static_cast<float>(uniform01(rng));
  assign_labels(spec, num_classes, rng);
  place(spec, shape, draw, rng);
  spec.provenance = {{"source", "vaccine"}, {"generator", "uniform-noise"}};
  return spec;
}

TriggerSpec make_virus_trigger(const LabeledDataset& source, ImageShape shape, std::size_t num_classes,
                               const TriggerDraw& draw, Rng& rng) {
  if (source.empty()) throw PreconditionError("virus source dataset is empty");
  const std::size_t max_side = max_trigger_side(shape);
  if (max_side < 2) throw SpecError("image " + shape.str() + " too small for a 2x2 trigger under the 3% area limit");
  const auto side = static_cast<std::size_t>(uniform_int(rng, 2, static_cast<std::int64_t>(max_side)));
  const auto& s = source.shape;
  if (side > s.height || side > s.width) throw SpecError("virus source images smaller than the trigger");

  TriggerSpec spec;
  spec.mode = draw.mode;
  spec.poison_fraction = draw.poison_fraction;
  spec.pattern = ImageTensor({side, side, shape.channels});
  std::size_t index = 0, row = 0, col = 0;
  // Crops that are almost entirely background carry no pattern; redraw a bounded number of times.
  for (int attempt = 0; attempt < 16; ++attempt) {
    index = uniform_index(rng, source.size());
    row = uniform_index(rng, s.height - side + 1);
    col = uniform_index(rng, s.width - side + 1);
    auto img = source.image(index);
    float peak = 0.0f;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        for (std::size_t c = 0; c < shape.channels; ++c) {
          const float v = img[((row + y) * s.width + col + x) * s.channels + std::min(c, s.channels - 1)];
          spec.pattern.at(y, x, c) = v;
          peak = std::max(peak, v);
        }
      }
    }
    if (peak >= 0.25f) break;
  }
  assign_labels(spec, num_classes, rng);
  place(spec, shape, draw, rng);
  spec.provenance = {{"source", "virus"},
                     {"dataset_fingerprint", source.fingerprint()},
                     {"image_index", index},
                     {"crop", {row, col}}};
  return spec;
}

}  // namespace pixsig::data
