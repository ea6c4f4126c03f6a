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
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pixsig/nn.hpp"
#include "pixsig/tensor.hpp"
#include "pixsig/zoo.hpp"

namespace pixsig::sig {

/// Black-box query: `count` HWC images laid out contiguously in, count x K probabilities out.
using QueryFn = std::function<std::vector<float>(std::span<const float> images, std::size_t count)>;

/// The only view of a classifier the signature generator gets. `query` must be safe to
/// call concurrently.
struct ClassifierHandle {
  ImageShape shape;
  std::size_t num_classes = 0;
  QueryFn query;
  std::string fingerprint;  ///< identifies the classifier in sidecar metadata; may be empty
};

/// Handle over a trained model. The params are shared read-only.
ClassifierHandle make_model_handle(std::shared_ptr<const nn::ModelParams> params);

/// Exact-match table from grid images to probability vectors, for external black boxes at
/// toy scale. Pixel values must lie on the grid {0, 1/levels, ..., 1}.
class LookupTable {
 public:
  LookupTable(ImageShape shape, std::size_t num_classes, std::size_t levels);

  void insert(std::span<const float> image, std::vector<float> probabilities);
  /// Throws PreconditionError for images that are off-grid or absent from the table.
  std::span<const float> find(std::span<const float> image) const;
  std::size_t size() const { return table_.size(); }

  ImageShape shape() const { return shape_; }
  std::size_t num_classes() const { return num_classes_; }

 private:
  std::vector<std::uint16_t> key(std::span<const float> image) const;

  ImageShape shape_;
  std::size_t num_classes_;
  std::size_t levels_;
  std::map<std::vector<std::uint16_t>, std::vector<float>> table_;
};

ClassifierHandle make_lookup_handle(std::shared_ptr<const LookupTable> table, std::string fingerprint = "lookup");

enum class DefaultImage { Black, White, Mean };

std::string to_string(DefaultImage d);
DefaultImage default_image_from_string(std::string_view s);

struct SignaturePolicy {
  DefaultImage default_image = DefaultImage::Black;
  std::size_t levels = 256;       ///< grid {0/V, ..., (V-1)/V}
  std::size_t batch_size = 256;   ///< images per query call
  std::vector<float> mean_image;  ///< reference image for the Mean policy (HWC)

  /// Throws ConfigError when the policy cannot be applied to images of `shape`.
  void validate(ImageShape shape) const;
  /// The image every one-pixel probe starts from.
  std::vector<float> base_image(ImageShape shape) const;
  /// Short directory-safe tag such as "black-v256".
  std::string tag() const;
  nlohmann::json to_json() const;
};

struct Signature {
  ImageShape input;             ///< classifier input shape; values are H x W x K
  std::size_t num_classes = 0;
  std::vector<float> values;    ///< row-major [row][col][class]
  SignaturePolicy policy;
  std::size_t query_count = 0;
  std::string model_fingerprint;

  float at(std::size_t row, std::size_t col, std::size_t k) const {
    return values[(row * input.width + col) * num_classes + k];
  }
  Tensor<float> tensor() const;
};

struct ComputeOptions {
  std::size_t jobs = 1;
  /// Visit order over flattened pixel indices; empty means raster order.
  std::vector<std::size_t> pixel_order;
};

/// For every pixel (i, j) and class k, the largest probability of class k over the grid
/// values v assigned to all channels of pixel (i, j) of the default image.
Signature compute_signature(const ClassifierHandle& classifier, const SignaturePolicy& policy,
                            const ComputeOptions& options = {});

/// Copy of class plane k as an H x W row-major array.
std::vector<float> signature_channel(const Signature& sig, std::size_t k);

/// Writes `<stem>.ops` (H x W x K, f32) and `<stem>.json`.
void save_signature(const std::filesystem::path& stem, const Signature& sig);
Signature load_signature(const std::filesystem::path& stem);

struct SignatureRecord {
  std::string entry_id;
  std::string arch;
  zoo::EntryLabel label = zoo::EntryLabel::Clean;
  std::string model_fingerprint;
  Signature signature;
};

struct SignatureFailure {
  std::string entry_id;
  std::string reason;
};

struct SignatureSet {
  std::vector<SignatureRecord> records;
  std::vector<SignatureFailure> failures;
  std::size_t computed = 0;  ///< signatures produced by this call (the rest were reused)
};

/// Directory under the zoo holding the signatures for a policy.
std::filesystem::path signature_dir(const std::filesystem::path& zoo_dir, const SignaturePolicy& policy);

/// Computes (or reuses, when the stored sidecar names the same model fingerprint and policy)
/// one signature per zoo entry. Entries run in parallel, each single-threaded.
/// Failing entries are reported and skipped.
SignatureSet batch_signatures(const std::filesystem::path& zoo_dir, const zoo::ZooManifest& zoo,
                              const SignaturePolicy& policy, std::size_t jobs = 1);

/// Loads an existing signature set; missing entries are reported as failures.
SignatureSet load_signature_set(const std::filesystem::path& zoo_dir, const zoo::ZooManifest& zoo,
                                const SignaturePolicy& policy);

}  // namespace pixsig::sig
