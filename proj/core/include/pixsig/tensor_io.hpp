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
#include <span>
#include <string>
#include <vector>

#include "pixsig/tensor.hpp"

namespace pixsig {

// Binary tensor container ("OPS1"):
//   bytes 0..3   magic "OPS1"
//   byte  4      dtype code (1 = f32, 2 = f64)
//   byte  5      ndim
//   then ndim little-endian u32 dims, then the row-major little-endian payload.

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

inline constexpr char kTensorMagic[4] = {'O', 'P', 'S', '1'};

std::vector<std::uint8_t> encode_tensor(const Tensor<float>& t);
std::vector<std::uint8_t> encode_tensor(const Tensor<double>& t);

/// Decoded container. Exactly one of f32/f64 is populated, per dtype.
struct DecodedTensor {
  DType dtype = DType::F32;
  Tensor<float> f32;
  Tensor<double> f64;
};

DecodedTensor decode_tensor(std::span<const std::uint8_t> bytes);

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t);
void save_tensor(const std::filesystem::path& path, const Tensor<double>& t);
DecodedTensor load_tensor(const std::filesystem::path& path);

/// Loads a container and requires it to hold f32 data.
Tensor<float> load_tensor_f32(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace pixsig
