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
#include <span>
#include <string>
#include <vector>

#include "pixsig/tensor.hpp"

namespace pixsig {

enum class Split { Train, Test };

/// Uniformly shaped labelled images stored contiguously (image-major, HWC).
struct LabeledDataset {
  ImageShape shape;
  std::size_t num_classes = 0;
  Split split = Split::Train;
  std::vector<float> pixels;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const float> image(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * shape.size(), shape.size());
  }
  std::span<float> image(std::size_t i) {
    return std::span<float>(pixels).subspan(i * shape.size(), shape.size());
  }
  ImageTensor image_tensor(std::size_t i) const {
    ImageTensor t(shape);
    auto src = image(i);
    t.pixels.assign(src.begin(), src.end());
    return t;
  }
  void push_back(std::span<const float> img, std::uint32_t label) {
    pixels.insert(pixels.end(), img.begin(), img.end());
    labels.push_back(label);
  }

  /// Throws PreconditionError unless sizes agree, labels are in range and pixels lie in [0,1].
  void validate() const;

  /// Fingerprint over shape, labels and pixel bytes.
  std::string fingerprint() const;
};

std::string to_string(Split s);

}  // namespace pixsig
