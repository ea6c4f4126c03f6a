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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pixsig/dataset.hpp"
#include "pixsig/tensor.hpp"

namespace pixsig::nn {

// Layer descriptors. Convolutions use zero padding of kernel/2 on each side.
struct Conv {
  std::uint32_t out_channels = 0;
  std::uint32_t kernel = 3;
  std::uint32_t stride = 1;
};
struct Dense {
  std::uint32_t units = 0;
};
struct Relu {};
struct MaxPool {
  std::uint32_t size = 2;
};
struct Flatten {};
/// relu(x + conv(relu(conv(x)))) with two 3x3 convolutions; needs `channels` input channels.
struct Residual {
  std::uint32_t channels = 0;
};

using Layer = std::variant<Conv, Dense, Relu, MaxPool, Flatten, Residual>;

std::string layer_name(const Layer& layer);

struct ArchSpec {
  std::string name;
  std::vector<Layer> layers;
  ImageShape input;
  std::size_t num_classes = 0;
};

/// Output shape after every layer; element 0 is the input shape. Dense and
/// flattened outputs are reported as 1x1xN. Throws ConfigError if shapes do not chain
/// or the last layer does not produce num_classes outputs.
std::vector<ImageShape> infer_shapes(const ArchSpec& arch);

/// "mini-lenet", "mini-resnet", "mini-vgg", "mlp", or "detector-cnn".
ArchSpec preset(std::string_view name, ImageShape input, std::size_t num_classes);
std::vector<std::string> preset_names();

nlohmann::json to_json(const ArchSpec& arch);
ArchSpec arch_from_json(const nlohmann::json& j);

struct ParamTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;
};

struct ModelParams {
  ArchSpec arch;
  std::uint64_t seed = 0;
  std::vector<ParamTensor> tensors;

  std::size_t parameter_count() const;
  /// Fingerprint over architecture and weight bytes.
  std::string fingerprint() const;
};

/// Shapes of every parameter tensor, in storage order.
std::vector<ParamTensor> parameter_layout(const ArchSpec& arch);

/// Uniform fan-in scaled weights (He-uniform), zero biases.
ModelParams init_params(const ArchSpec& arch, std::uint64_t seed);

/// Class probabilities for `count` images laid out contiguously (HWC each).
/// Returns a count x K row-major matrix. Safe to call concurrently on shared params.
std::vector<float> forward(const ModelParams& params, std::span<const float> batch, std::size_t count);

std::vector<std::uint32_t> predict(const ModelParams& params, std::span<const float> batch, std::size_t count);

/// Fraction of correctly classified samples, evaluated in chunks.
double accuracy(const ModelParams& params, const LabeledDataset& data, std::size_t chunk = 256);

struct LossGrad {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;  // one per parameter tensor
};

/// Mean softmax cross-entropy and its gradient, evaluated in 64-bit arithmetic.
LossGrad loss_and_gradients(const ModelParams& params, std::span<const float> batch,
                            std::span<const std::uint32_t> labels);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;

  static OptimizerState for_params(const ModelParams& params, AdamConfig config);
};

/// One bias-corrected Adam update. `grads` must shape-match params.tensors.
void adam_step(ModelParams& params, std::span<const std::vector<float>> grads, OptimizerState& state);

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double accuracy_floor = 0.95;
};

struct TrainMetrics {
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  double final_loss = 0.0;
  std::size_t epochs = 0;
};

struct TrainResult {
  ModelParams params;
  TrainMetrics metrics;
  /// heldout_accuracy >= accuracy_floor. When false the params are still returned.
  bool reached_floor = false;
};

/// Deterministic given (arch, data, config, seed). The held-out set gates the floor;
/// without one the training accuracy is used.
TrainResult train(const ArchSpec& arch, const LabeledDataset& data, const LabeledDataset* heldout,
                  const TrainConfig& config, std::uint64_t seed);

struct GradCheckOptions {
  double step = 1e-5;  // small enough to rarely straddle a ReLU or max-pool switch
  std::size_t samples_per_tensor = 16;
  std::uint64_t seed = 0;
  /// Test hook applied to the analytic gradient before comparison.
  std::function<void(std::vector<std::vector<double>>&)> tamper;
};

/// Max over sampled parameters of |analytic - central difference| / (|analytic| + |numeric| + 1e-8).
double grad_check(const ModelParams& params, std::span<const float> batch,
                  std::span<const std::uint32_t> labels, const GradCheckOptions& options = {});

/// Writes <dir>/model.json and <dir>/model.ops (all tensors concatenated, f32).
void save_model(const std::filesystem::path& dir, const ModelParams& params, const nlohmann::json& metrics = {});
ModelParams load_model(const std::filesystem::path& dir);

}  // namespace pixsig::nn
