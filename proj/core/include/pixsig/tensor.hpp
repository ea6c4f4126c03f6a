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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pixsig/error.hpp"

namespace pixsig {

/// Height, width and channel count of an HWC image.
struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
  }
};

/// Dense row-major array with a runtime shape.
template <typename T>
struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::uint32_t> dims, T fill = T{})
      : shape(std::move(dims)), data(element_count(shape), fill) {}
  Tensor(std::vector<std::uint32_t> dims, std::vector<T> values)
      : shape(std::move(dims)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
      throw ConfigError("tensor payload of " + std::to_string(data.size()) +
                        " elements does not match its shape");
    }
  }

  static std::size_t element_count(const std::vector<std::uint32_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::span<T> span() { return data; }
  std::span<const T> span() const { return data; }
  bool operator==(const Tensor&) const = default;
};

/// HxWxC image with values in [0,1], row-major, channels innermost.
struct ImageTensor {
  ImageShape shape;
  std::vector<float> pixels;

  ImageTensor() = default;
  explicit ImageTensor(ImageShape s, float fill = 0.0f) : shape(s), pixels(s.size(), fill) {}

  float& at(std::size_t row, std::size_t col, std::size_t ch) {
    return pixels[(row * shape.width + col) * shape.channels + ch];
  }
  float at(std::size_t row, std::size_t col, std::size_t ch) const {
    return pixels[(row * shape.width + col) * shape.channels + ch];
  }
  bool operator==(const ImageTensor&) const = default;
};

}  // namespace pixsig
