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

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "pixsig/error.hpp"
#include "pixsig/stats.hpp"
#include "pixsig/tensor_io.hpp"

using namespace pixsig;
using namespace pixsig::stats;

namespace {

// O(N^4) DFT magnitude, zero frequency moved to (H/2, W/2).
std::vector<double> direct_spectrum(const std::vector<double>& x, std::size_t h, std::size_t w) {
  std::vector<double> out(h * w);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<double> s = 0.0;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const double ang = -2.0 * std::numbers::pi *
                             (static_cast<double>(u * r) / static_cast<double>(h) +
                              static_cast<double>(v * c) / static_cast<double>(w));
          s += x[r * w + c] * std::polar(1.0, ang);
        }
      }
      out[((u + h / 2) % h) * w + (v + w / 2) % w] = std::abs(s);
    }
  }
  return out;
}

std::vector<double> random_plane(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

sig::Signature make_sig(std::size_t h, std::size_t w, std::size_t k, std::vector<float> values) {
  sig::Signature s;
  s.input = {h, w, 1};
  s.num_classes = k;
  s.values = std::move(values);
  return s;
}

sig::Signature random_sig(std::size_t h, std::size_t w, std::size_t k, unsigned seed, float scale) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, scale);
  std::vector<float> v(h * w * k);
  for (auto& x : v) x = u(rng);
  return make_sig(h, w, k, v);
}

}  // namespace

TEST(Spectrum, MatchesDirectDftUpTo16) {
  for (std::size_t h : {1u, 2u, 3u, 5u, 7u, 8u, 12u, 16u}) {
    for (std::size_t w : {1u, 4u, 6u, 11u, 16u}) {
      const auto x = random_plane(h * w, static_cast<unsigned>(h * 31 + w));
      const auto fast = spectrum(x, h, w);
      const auto slow = direct_spectrum(x, h, w);
      for (std::size_t i = 0; i < h * w; ++i) ASSERT_NEAR(fast[i], slow[i], 1e-9) << h << "x" << w;
    }
  }
}

TEST(Spectrum, ParsevalOnSignatureSizedPlane) {
  for (std::size_t n : {28u, 32u, 17u}) {
    const auto x = random_plane(n * n, static_cast<unsigned>(n));
    const auto mag = spectrum(x, n, n);
    double ex = 0.0, ef = 0.0;
    for (double v : x) ex += v * v;
    for (double v : mag) ef += v * v;
    EXPECT_LT(std::abs(ef - static_cast<double>(n * n) * ex) / (static_cast<double>(n * n) * ex), 1e-6);
  }
}

TEST(Spectrum, ConstantPlaneHasOnlyCenterBin) {
  const std::size_t h = 28, w = 28;
  const auto mag = spectrum(std::vector<double>(h * w, 0.5), h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (r == h / 2 && c == w / 2) {
        EXPECT_NEAR(mag[r * w + c], 0.5 * h * w, 1e-9);
      } else {
        EXPECT_NEAR(mag[r * w + c], 0.0, 1e-9);
      }
    }
  }
}

TEST(Spectrum, SingleCycleCosineGivesTwoSymmetricBins) {
  const std::size_t h = 10, w = 12;
  std::vector<double> x(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) x[r * w + c] = std::cos(2.0 * std::numbers::pi * static_cast<double>(r) / h);
  }
  const auto mag = spectrum(x, h, w);
  const auto ref = direct_spectrum(x, h, w);
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    EXPECT_NEAR(mag[i], ref[i], 1e-9);
    if (mag[i] > 1e-6) ++nonzero;
  }
  EXPECT_EQ(nonzero, 2u);
  EXPECT_NEAR(mag[(h / 2 + 1) * w + w / 2], h * w / 2.0, 1e-9);
  EXPECT_NEAR(mag[(h / 2 - 1) * w + w / 2], h * w / 2.0, 1e-9);
}

TEST(Spectrum, FftMatchesDirectOneDimensional) {
  for (std::size_t n : {1u, 2u, 3u, 5u, 9u, 28u, 64u, 100u}) {
    const auto x = random_plane(n, static_cast<unsigned>(n + 3));
    std::vector<std::complex<double>> a(x.begin(), x.end());
    fft(a);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        s += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n));
      }
      EXPECT_NEAR(std::abs(a[k] - s), 0.0, 1e-9) << "n=" << n;
    }
  }
}

TEST(Spectrum, RejectsEmptyPlanes) { EXPECT_THROW(spectrum(std::vector<double>{}, 0, 3), PreconditionError); }

TEST(HighFrequency, WindowSplitsEnergy) {
  // Energy only at the center bin: ratio 0. Energy only in a corner: ratio 1.
  std::vector<double> mag(28 * 28, 0.0);
  mag[14 * 28 + 14] = 3.0;
  EXPECT_DOUBLE_EQ(high_frequency_ratio(mag, 28, 28), 0.0);
  mag.assign(28 * 28, 0.0);
  mag[0] = 2.0;
  EXPECT_DOUBLE_EQ(high_frequency_ratio(mag, 28, 28), 1.0);
  // Uniform magnitude: the window holds a quarter of the bins.
  mag.assign(28 * 28, 1.0);
  EXPECT_DOUBLE_EQ(high_frequency_ratio(mag, 28, 28), 0.75);
}

TEST(Population, SingleSignatureMeanEqualsIt) {
  const auto s = random_sig(4, 5, 3, 1, 1.0f);
  const auto p = population_stats(std::vector{s}, "clean");
  ASSERT_EQ(p.variances.size(), 1u);
  for (std::size_t i = 0; i < s.values.size(); ++i) EXPECT_DOUBLE_EQ(p.mean_signature[i], s.values[i]);
  EXPECT_DOUBLE_EQ(p.max_of_mean, *std::max_element(s.values.begin(), s.values.end()));
}

TEST(Population, ConstantSignatureHasZeroVariance) {
  const auto p = population_stats(std::vector{make_sig(3, 3, 2, std::vector<float>(18, 0.25f))}, "x");
  EXPECT_EQ(p.variances[0], 0.0);
}

TEST(Population, VarianceIsOverAllValues) {
  const auto s = make_sig(1, 2, 2, {0.0f, 1.0f, 0.0f, 1.0f});
  EXPECT_DOUBLE_EQ(signature_variance(s), 0.25);
}

TEST(Population, PermutationInvariant) {
  std::vector<sig::Signature> sigs;
  for (unsigned i = 0; i < 6; ++i) sigs.push_back(random_sig(7, 6, 3, i, 1.0f));
  const auto a = population_stats(sigs, "a");
  std::reverse(sigs.begin(), sigs.end());
  std::swap(sigs[1], sigs[4]);
  const auto b = population_stats(sigs, "a");
  for (std::size_t i = 0; i < a.mean_signature.size(); ++i) EXPECT_NEAR(a.mean_signature[i], b.mean_signature[i], 1e-12);
  for (std::size_t i = 0; i < a.mean_spectrum.size(); ++i) EXPECT_NEAR(a.mean_spectrum[i], b.mean_spectrum[i], 1e-9);
  EXPECT_NEAR(a.mean_variance(), b.mean_variance(), 1e-15);
  EXPECT_NEAR(a.high_frequency_ratio, b.high_frequency_ratio, 1e-12);
  for (double v : a.mean_spectrum) EXPECT_GE(v, 0.0);
}

TEST(Population, EmptyOrMixedShapesAreErrors) {
  EXPECT_THROW(population_stats(std::vector<sig::Signature>{}, "x"), PreconditionError);
  EXPECT_THROW(population_stats(std::vector{random_sig(3, 3, 2, 1, 1.0f), random_sig(3, 4, 2, 1, 1.0f)}, "x"),
               PreconditionError);
}

TEST(Compare, IdenticalPopulationsAreSymmetric) {
  std::vector<sig::Signature> sigs;
  for (unsigned i = 0; i < 5; ++i) sigs.push_back(random_sig(6, 6, 2, i, 1.0f));
  const auto a = population_stats(sigs, "clean");
  const auto b = population_stats(sigs, "trojan");
  const auto c = compare_populations(a, b);
  EXPECT_DOUBLE_EQ(c.variance_rank_statistic, 0.5);
  EXPECT_DOUBLE_EQ(c.clean_high_frequency_ratio, c.trojan_high_frequency_ratio);
  EXPECT_DOUBLE_EQ(c.clean_max, c.trojan_max);
}

TEST(Compare, RankStatisticCountsWinsAndTies) {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{2.0, 4.0};
  // Pairs (a, b): (1,2) win, (1,4) win, (2,2) tie, (2,4) win, (3,2) loss, (3,4) win.
  EXPECT_DOUBLE_EQ(rank_statistic(a, b), 4.5 / 6.0);
  EXPECT_DOUBLE_EQ(rank_statistic(b, a), 1.5 / 6.0);
}

TEST(Compare, NoisierPopulationHasHigherVarianceAndHighFrequencyShare) {
  std::vector<sig::Signature> smooth, noisy;
  for (unsigned i = 0; i < 8; ++i) {
    smooth.push_back(make_sig(8, 8, 1, std::vector<float>(64, 0.1f + 0.01f * static_cast<float>(i))));
    noisy.push_back(random_sig(8, 8, 1, i, 0.5f));
  }
  const auto c = compare_populations(population_stats(smooth, "clean"), population_stats(noisy, "trojan"));
  EXPECT_GT(c.trojan_mean_variance, c.clean_mean_variance);
  EXPECT_GT(c.trojan_high_frequency_ratio, c.clean_high_frequency_ratio);
  EXPECT_DOUBLE_EQ(c.variance_rank_statistic, 1.0);
}

TEST(Report, WritesAllArtifacts) {
  const auto dir = std::filesystem::temp_directory_path() / "pixsig_stats_report";
  std::filesystem::remove_all(dir);
  std::vector<sig::Signature> a, b;
  for (unsigned i = 0; i < 3; ++i) {
    a.push_back(random_sig(5, 5, 2, i, 0.3f));
    b.push_back(random_sig(5, 5, 2, i + 10, 0.9f));
  }
  const auto pa = population_stats(a, "clean"), pb = population_stats(b, "trojan");
  write_report(dir, pa, pb, compare_populations(pa, pb), 4);
  for (const char* f : {"variances.csv", "variance_histogram.csv", "summary.json", "mean_signature_clean.ops",
                        "mean_spectrum_trojan.ops"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto t = load_tensor(dir / "mean_signature_clean.ops");
  EXPECT_EQ(t.dtype, DType::F64);
  EXPECT_EQ(t.f64.shape, (std::vector<std::uint32_t>{5, 5, 2}));
  std::filesystem::remove_all(dir);
}
