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

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "pixsig/nn.hpp"
#include "pixsig/rng.hpp"
#include "pixsig/signature.hpp"
#include "pixsig/stats.hpp"

using namespace pixsig;

namespace {

std::vector<float> random_images(std::size_t count, ImageShape shape) {
  Rng rng(1);
  std::vector<float> v(count * shape.size());
  for (auto& x : v) x = static_cast<float>(uniform(rng, 0.0, 1.0));
  return v;
}

void BM_Forward(benchmark::State& state) {
  const ImageShape shape{28, 28, 1};
  const auto params = nn::init_params(nn::preset("mini-lenet", shape, 10), 1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto batch = random_images(n, shape);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(params, batch, n));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(64)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
  const ImageShape shape{28, 28, 1};
  const auto params = nn::init_params(nn::preset("mini-lenet", shape, 10), 1);
  const auto batch = random_images(64, shape);
  std::vector<std::uint32_t> labels(64);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint32_t>(i % 10);
  for (auto _ : state) benchmark::DoNotOptimize(nn::loss_and_gradients(params, batch, labels));
}
BENCHMARK(BM_TrainStep);

void BM_Signature(benchmark::State& state) {
  const ImageShape shape{28, 28, 1};
  auto params = std::make_shared<const nn::ModelParams>(nn::init_params(nn::preset("mini-lenet", shape, 10), 1));
  const auto handle = sig::make_model_handle(params);
  sig::SignaturePolicy policy;
  policy.levels = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sig::compute_signature(handle, policy));
  state.SetItemsProcessed(state.iterations() * 784 * state.range(0));
}
BENCHMARK(BM_Signature)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Spectrum(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  std::vector<double> plane(n * n);
  for (auto& x : plane) x = uniform(rng, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(stats::spectrum(plane, n, n));
}
BENCHMARK(BM_Spectrum)->Arg(28)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
