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

#include "pixsig/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pixsig {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename Word>
void put_word(std::vector<std::uint8_t>& out, Word w) {
  for (std::size_t i = 0; i < sizeof(Word); ++i) out.push_back(static_cast<std::uint8_t>(w >> (8 * i)));
}

template <typename Word>
Word get_word(const std::uint8_t* p) {
  Word w = 0;
  for (std::size_t i = 0; i < sizeof(Word); ++i) w |= static_cast<Word>(p[i]) << (8 * i);
  return w;
}

template <typename T, typename Word>
std::vector<std::uint8_t> encode(const Tensor<T>& t, DType dtype) {
  if (t.shape.size() > 255) throw ConfigError("tensor rank exceeds 255");
  if (t.data.size() != Tensor<T>::element_count(t.shape)) {
    throw ConfigError("tensor payload does not match its shape");
  }
  std::vector<std::uint8_t> out;
  out.reserve(6 + 4 * t.shape.size() + sizeof(T) * t.data.size());
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(t.shape.size()));
  for (auto d : t.shape) put_u32(out, d);
  for (T v : t.data) put_word<Word>(out, std::bit_cast<Word>(v));
  return out;
}

template <typename T, typename Word>
Tensor<T> decode_payload(std::span<const std::uint8_t> bytes, std::size_t offset,
                         std::vector<std::uint32_t> shape) {
  const std::size_t count = Tensor<T>::element_count(shape);
  const std::size_t need = count * sizeof(T);
  const std::size_t have = bytes.size() - offset;
  if (have < need) throw FormatError("tensor payload truncated", bytes.size());
  if (have > need) throw FormatError("trailing bytes after tensor payload", offset + need);
  std::vector<T> data(count);
  const std::uint8_t* p = bytes.data() + offset;
  for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<T>(get_word<Word>(p + i * sizeof(T)));
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor<float>& t) {
  return encode<float, std::uint32_t>(t, DType::F32);
}

std::vector<std::uint8_t> encode_tensor(const Tensor<double>& t) {
  return encode<double, std::uint64_t>(t, DType::F64);
}

DecodedTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("tensor container shorter than its magic", bytes.size());
  if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) throw FormatError("bad tensor magic", 0);
  if (bytes.size() < 6) throw FormatError("tensor header truncated", bytes.size());
  const std::uint8_t code = bytes[4];
  if (code != 1 && code != 2) throw FormatError("unknown dtype code " + std::to_string(code), 4);
  const std::size_t ndim = bytes[5];
  std::size_t offset = 6;
  if (bytes.size() < offset + 4 * ndim) throw FormatError("tensor dims truncated", bytes.size());
  std::vector<std::uint32_t> shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i, offset += 4) shape[i] = get_word<std::uint32_t>(bytes.data() + offset);

  DecodedTensor out;
  out.dtype = static_cast<DType>(code);
  if (out.dtype == DType::F32) {
    out.f32 = decode_payload<float, std::uint32_t>(bytes, offset, std::move(shape));
  } else {
    out.f64 = decode_payload<double, std::uint64_t>(bytes, offset, std::move(shape));
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling temp file and rename so an interrupted run never leaves a partial artifact.
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing", 0);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp.string(), 0);
  }
  std::filesystem::rename(tmp, path);
}

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
  write_file_bytes(path, encode_tensor(t));
}

void save_tensor(const std::filesystem::path& path, const Tensor<double>& t) {
  write_file_bytes(path, encode_tensor(t));
}

DecodedTensor load_tensor(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return decode_tensor(bytes);
}

Tensor<float> load_tensor_f32(const std::filesystem::path& path) {
  auto decoded = load_tensor(path);
  if (decoded.dtype != DType::F32) throw FormatError(path.string() + ": expected f32 tensor", 4);
  return std::move(decoded.f32);
}

}  // namespace pixsig
