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

#include <complex>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pixsig/signature.hpp"

namespace pixsig::stats {

/// In-place 1D discrete Fourier transform of any length (sign -1, unnormalized).
void fft(std::vector<std::complex<double>>& x);

/// Magnitude of the 2D DFT of an H x W row-major plane with the zero frequency moved
/// to (H/2, W/2).
std::vector<double> spectrum(std::span<const double> plane, std::size_t height, std::size_t width);

/// Fraction of spectral energy (squared magnitude) outside the centered
/// ceil(H/2) x ceil(W/2) low-frequency window of a shifted spectrum.
double high_frequency_ratio(std::span<const double> shifted_magnitude, std::size_t height, std::size_t width);

/// Scalar variance over every value of a signature.
double signature_variance(const sig::Signature& s);

struct PopulationStats {
  std::string label;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<double> mean_signature;  ///< H x W x K
  std::vector<double> variances;       ///< one per signature, in input order
  std::vector<double> mean_spectrum;   ///< H x W, averaged over channels and signatures
  double max_of_mean = 0.0;
  double high_frequency_ratio = 0.0;   ///< of mean_spectrum

  double mean_variance() const;
};

/// Throws PreconditionError on an empty set or mixed shapes.
PopulationStats population_stats(std::span<const sig::Signature> sigs, std::string label);

struct Comparison {
  double clean_max = 0.0;
  double trojan_max = 0.0;
  double clean_mean_variance = 0.0;
  double trojan_mean_variance = 0.0;
  /// P(trojan variance > clean variance) + 0.5 P(tie), over all cross pairs.
  double variance_rank_statistic = 0.5;
  double clean_high_frequency_ratio = 0.0;
  double trojan_high_frequency_ratio = 0.0;

  nlohmann::json to_json() const;
};

Comparison compare_populations(const PopulationStats& clean, const PopulationStats& trojan);

/// Mann-Whitney U / (n m): probability that a draw from `b` exceeds a draw from `a`, ties counting half.
double rank_statistic(std::span<const double> a, std::span<const double> b);

/// Writes variances.csv, variance_histogram.csv, mean_signature_<label>.ops,
/// mean_spectrum_<label>.ops and summary.json into `dir`.
void write_report(const std::filesystem::path& dir, const PopulationStats& clean, const PopulationStats& trojan,
                  const Comparison& cmp, std::size_t histogram_bins = 20);

}  // namespace pixsig::stats
