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

#include "pixsig/signature.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "pixsig/error.hpp"
#include "pixsig/hash.hpp"
#include "pixsig/json_io.hpp"
#include "pixsig/parallel.hpp"
#include "pixsig/tensor_io.hpp"

namespace pixsig::sig {

namespace fs = std::filesystem;

ClassifierHandle make_model_handle(std::shared_ptr<const nn::ModelParams> params) {
  if (!params) throw PreconditionError("model handle needs parameters");
  ClassifierHandle h;
  h.shape = params->arch.input;
  h.num_classes = params->arch.num_classes;
  h.fingerprint = params->fingerprint();
  h.query = [params](std::span<const float> images, std::size_t count) {
    return nn::forward(*params, images, count);
  };
  return h;
}

LookupTable::LookupTable(ImageShape shape, std::size_t num_classes, std::size_t levels)
    : shape_(shape), num_classes_(num_classes), levels_(levels) {
  if (levels == 0 || levels > 65535) throw ConfigError("lookup table levels must be in [1, 65535]");
}

std::vector<std::uint16_t> LookupTable::key(std::span<const float> image) const {
  if (image.size() != shape_.size()) throw PreconditionError("lookup image has the wrong size");
  std::vector<std::uint16_t> k(image.size());
  const double scale = static_cast<double>(levels_);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double x = static_cast<double>(image[i]) * scale;
    const double r = std::round(x);
    if (!(r >= 0.0 && r <= scale) || std::abs(x - r) > 1e-3) {
      throw PreconditionError("lookup image value " + std::to_string(image[i]) + " is off the grid");
    }
    k[i] = static_cast<std::uint16_t>(r);
  }
  return k;
}

void LookupTable::insert(std::span<const float> image, std::vector<float> probabilities) {
  if (probabilities.size() != num_classes_) throw PreconditionError("lookup row has the wrong class count");
  table_[key(image)] = std::move(probabilities);
}

std::span<const float> LookupTable::find(std::span<const float> image) const {
  const auto it = table_.find(key(image));
  if (it == table_.end()) throw PreconditionError("image not present in lookup table");
  return it->second;
}

ClassifierHandle make_lookup_handle(std::shared_ptr<const LookupTable> table, std::string fingerprint) {
  ClassifierHandle h;
  h.shape = table->shape();
  h.num_classes = table->num_classes();
  h.fingerprint = std::move(fingerprint);
  h.query = [table](std::span<const float> images, std::size_t count) {
    const std::size_t img = table->shape().size();
    const std::size_t k = table->num_classes();
    std::vector<float> out(count * k);
    for (std::size_t n = 0; n < count; ++n) {
      const auto row = table->find(images.subspan(n * img, img));
      std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(n * k));
    }
    return out;
  };
  return h;
}

std::string to_string(DefaultImage d) {
  switch (d) {
    case DefaultImage::Black: return "black";
    case DefaultImage::White: return "white";
    case DefaultImage::Mean: return "mean";
  }
  return "?";
}

DefaultImage default_image_from_string(std::string_view s) {
  if (s == "black") return DefaultImage::Black;
  if (s == "white") return DefaultImage::White;
  if (s == "mean") return DefaultImage::Mean;
  throw ConfigError("unknown default image policy '" + std::string(s) + "'");
}

void SignaturePolicy::validate(ImageShape shape) const {
  if (levels < 2) throw ConfigError("signature levels must be at least 2");
  if (batch_size == 0) throw ConfigError("signature batch size must be positive");
  if (default_image == DefaultImage::Mean) {
    if (mean_image.empty()) throw ConfigError("mean default image needs a dataset reference");
    if (mean_image.size() != shape.size()) {
      throw ConfigError("mean image has " + std::to_string(mean_image.size()) + " values, classifier expects " +
                        shape.str());
    }
  }
}

std::vector<float> SignaturePolicy::base_image(ImageShape shape) const {
  switch (default_image) {
    case DefaultImage::Black: return std::vector<float>(shape.size(), 0.0f);
    case DefaultImage::White: return std::vector<float>(shape.size(), 1.0f);
    case DefaultImage::Mean: return mean_image;
  }
  return {};
}

std::string SignaturePolicy::tag() const { return to_string(default_image) + "-v" + std::to_string(levels); }

nlohmann::json SignaturePolicy::to_json() const {
  nlohmann::json j{{"default_image", to_string(default_image)}, {"levels", levels}, {"channel_mode", "simultaneous"}};
  if (default_image == DefaultImage::Mean) {
    Fnv1a h;
    h.update(std::span<const float>(mean_image));
    j["mean_image_hash"] = h.hex();
  }
  return j;
}

Tensor<float> Signature::tensor() const {
  return Tensor<float>({static_cast<std::uint32_t>(input.height), static_cast<std::uint32_t>(input.width),
                        static_cast<std::uint32_t>(num_classes)},
                       values);
}

namespace {

void check_rows(std::span<const float> out, std::size_t count, std::size_t k) {
  if (out.size() != count * k) {
    throw SpecError("classifier returned " + std::to_string(out.size()) + " values for " + std::to_string(count) +
                    " images of " + std::to_string(k) + " classes");
  }
  for (std::size_t n = 0; n < count; ++n) {
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const float p = out[n * k + c];
      if (!std::isfinite(p) || p < -1e-6f || p > 1.0f + 1e-6f) {
        throw SpecError("classifier output row " + std::to_string(n) + " is not a probability vector");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-4) {
      throw SpecError("classifier output row " + std::to_string(n) + " sums to " + std::to_string(sum));
    }
  }
}

}  // namespace

Signature compute_signature(const ClassifierHandle& classifier, const SignaturePolicy& policy,
                            const ComputeOptions& options) {
  const ImageShape shape = classifier.shape;
  const std::size_t k = classifier.num_classes;
  if (shape.size() == 0 || k == 0 || !classifier.query) throw ConfigError("classifier handle is incomplete");
  policy.validate(shape);

  const std::size_t npix = shape.pixels();
  std::vector<std::size_t> order = options.pixel_order;
  if (order.empty()) {
    order.resize(npix);
    for (std::size_t p = 0; p < npix; ++p) order[p] = p;
  } else {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t p = 0; p < sorted.size(); ++p) {
      if (sorted[p] != p || sorted.size() != npix) throw ConfigError("pixel order is not a permutation of the pixels");
    }
  }

  const std::vector<float> base = policy.base_image(shape);
  const std::size_t levels = policy.levels;
  const std::size_t img = shape.size();
  const std::size_t jobs = std::min(resolve_jobs(options.jobs), npix);
  const std::size_t tasks = jobs <= 1 ? 1 : jobs * 4;
  const std::size_t per_task = (npix + tasks - 1) / tasks;

  Signature sig;
  sig.input = shape;
  sig.num_classes = k;
  sig.policy = policy;
  sig.model_fingerprint = classifier.fingerprint;
  sig.values.assign(npix * k, -std::numeric_limits<float>::infinity());
  std::atomic<std::size_t> queries{0};

  parallel_for(tasks, jobs, [&](std::size_t t) {
    const std::size_t begin = std::min(npix, t * per_task);
    const std::size_t end = std::min(npix, begin + per_task);
    const std::size_t probes = (end - begin) * levels;
    std::vector<float> batch;
    std::vector<std::size_t> slots;  // pixel index per image in the batch
    for (std::size_t start = 0; start < probes; start += policy.batch_size) {
      const std::size_t n = std::min(policy.batch_size, probes - start);
      batch.resize(n * img);
      slots.resize(n);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t probe = start + b;
        const std::size_t pixel = order[begin + probe / levels];
        const float v = static_cast<float>(probe % levels) / static_cast<float>(levels);
        float* dst = batch.data() + b * img;
        std::copy(base.begin(), base.end(), dst);
        std::fill_n(dst + pixel * shape.channels, shape.channels, v);
        slots[b] = pixel;
      }
      const auto out = classifier.query(batch, n);
      check_rows(out, n, k);
      queries += n;
      for (std::size_t b = 0; b < n; ++b) {
        float* dst = sig.values.data() + slots[b] * k;
        // |p| = p for probabilities, so the maximum is taken over the raw outputs.
        for (std::size_t c = 0; c < k; ++c) dst[c] = std::max(dst[c], out[b * k + c]);
      }
    }
  });
  sig.query_count = queries.load();
  return sig;
}

std::vector<float> signature_channel(const Signature& sig, std::size_t k) {
  if (k >= sig.num_classes) {
    throw PreconditionError("channel " + std::to_string(k) + " out of range for " + std::to_string(sig.num_classes) +
                            " classes");
  }
  const std::size_t npix = sig.input.pixels();
  std::vector<float> plane(npix);
  for (std::size_t p = 0; p < npix; ++p) plane[p] = sig.values[p * sig.num_classes + k];
  return plane;
}

namespace {

fs::path with_ext(const fs::path& stem, const char* ext) { return fs::path(stem.string() + ext); }

nlohmann::json sidecar(const Signature& sig) {
  return {{"format", "pixsig-signature-1"},
          {"policy", sig.policy.to_json()},
          {"query_count", sig.query_count},
          {"model_fingerprint", sig.model_fingerprint},
          {"input_shape", {sig.input.height, sig.input.width, sig.input.channels}},
          {"num_classes", sig.num_classes},
          {"value_grid", "v/V for v in 0..V-1"}};
}

}  // namespace

void save_signature(const fs::path& stem, const Signature& sig) {
  save_tensor(with_ext(stem, ".ops"), sig.tensor());
  write_json(with_ext(stem, ".json"), sidecar(sig));
}

Signature load_signature(const fs::path& stem) {
  const auto meta = read_json(with_ext(stem, ".json"));
  auto t = load_tensor_f32(with_ext(stem, ".ops"));
  try {
    Signature sig;
    const auto dims = meta.at("input_shape").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw FormatError("signature input_shape must have 3 dims", 0);
    sig.input = {dims[0], dims[1], dims[2]};
    sig.num_classes = meta.at("num_classes").get<std::size_t>();
    sig.query_count = meta.at("query_count").get<std::size_t>();
    sig.model_fingerprint = meta.at("model_fingerprint").get<std::string>();
    const auto& p = meta.at("policy");
    sig.policy.default_image = default_image_from_string(p.at("default_image").get<std::string>());
    sig.policy.levels = p.at("levels").get<std::size_t>();
    const std::vector<std::uint32_t> expect{static_cast<std::uint32_t>(sig.input.height),
                                            static_cast<std::uint32_t>(sig.input.width),
                                            static_cast<std::uint32_t>(sig.num_classes)};
    if (t.shape != expect) throw FormatError("signature tensor shape disagrees with its sidecar", 0);
    sig.values = std::move(t.data);
    return sig;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed signature sidecar: ") + e.what(), 0);
  }
}

fs::path signature_dir(const fs::path& zoo_dir, const SignaturePolicy& policy) {
  return zoo_dir / "signatures" / policy.tag();
}

namespace {

bool reusable(const fs::path& stem, const zoo::ZooEntry& entry, const SignaturePolicy& policy) {
  if (!fs::exists(with_ext(stem, ".json")) || !fs::exists(with_ext(stem, ".ops"))) return false;
  try {
    const auto meta = read_json(with_ext(stem, ".json"));
    return meta.value("model_fingerprint", "") == entry.model_fingerprint && meta.at("policy") == policy.to_json();
  } catch (const std::exception&) {
    return false;
  }
}

SignatureSet collect(const zoo::ZooManifest& zoo, std::vector<std::optional<Signature>>& sigs,
                     std::vector<std::string>& errors) {
  SignatureSet set;
  for (std::size_t i = 0; i < zoo.entries.size(); ++i) {
    const auto& e = zoo.entries[i];
    if (sigs[i]) {
      set.records.push_back({e.id, e.arch, e.label, e.model_fingerprint, std::move(*sigs[i])});
    } else {
      set.failures.push_back({e.id, errors[i]});
    }
  }
  return set;
}

}  // namespace

SignatureSet batch_signatures(const fs::path& zoo_dir, const zoo::ZooManifest& zoo, const SignaturePolicy& policy,
                              std::size_t jobs) {
  const fs::path dir = signature_dir(zoo_dir, policy);
  fs::create_directories(dir);
  const std::size_t n = zoo.entries.size();
  std::vector<std::optional<Signature>> sigs(n);
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> computed{0};

  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& entry = zoo.entries[i];
    const fs::path stem = dir / entry.id;
    try {
      if (reusable(stem, entry, policy)) {
        sigs[i] = load_signature(stem);
        sigs[i]->policy = policy;
        return;
      }
      auto params = std::make_shared<const nn::ModelParams>(zoo::load_entry_model(zoo_dir, entry));
      auto handle = make_model_handle(params);
      if (handle.fingerprint != entry.model_fingerprint) {
        throw FormatError("stored model does not match manifest fingerprint " + entry.model_fingerprint, 0);
      }
      auto sig = compute_signature(handle, policy, {});
      save_signature(stem, sig);
      sigs[i] = std::move(sig);
      ++computed;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  auto set = collect(zoo, sigs, errors);
  set.computed = computed.load();
  nlohmann::json index = nlohmann::json::array();
  for (const auto& r : set.records) {
    index.push_back({{"id", r.entry_id}, {"label", zoo::to_string(r.label)}, {"arch", r.arch},
                     {"model_fingerprint", r.model_fingerprint}});
  }
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& f : set.failures) failed.push_back({{"id", f.entry_id}, {"reason", f.reason}});
  write_json(dir / "index.json", {{"zoo", zoo.name}, {"policy", policy.to_json()}, {"signatures", index},
                                  {"failures", failed}});
  return set;
}

SignatureSet load_signature_set(const fs::path& zoo_dir, const zoo::ZooManifest& zoo, const SignaturePolicy& policy) {
  const fs::path dir = signature_dir(zoo_dir, policy);
  const std::size_t n = zoo.entries.size();
  std::vector<std::optional<Signature>> sigs(n);
  std::vector<std::string> errors(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& entry = zoo.entries[i];
    const fs::path stem = dir / entry.id;
    if (!reusable(stem, entry, policy)) {
      errors[i] = "no signature for this model and policy under " + dir.string();
      continue;
    }
    try {
      sigs[i] = load_signature(stem);
      sigs[i]->policy = policy;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  return collect(zoo, sigs, errors);
}

}  // namespace pixsig::sig
