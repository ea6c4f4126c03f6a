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

#include "pixsig/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <unsupported/Eigen/FFT>

#include "pixsig/error.hpp"
#include "pixsig/json_io.hpp"
#include "pixsig/tensor_io.hpp"

namespace pixsig::stats {

namespace fs = std::filesystem;
using cd = std::complex<double>;

void fft(std::vector<cd>& x) {
  if (x.size() <= 1) return;
  thread_local Eigen::FFT<double> engine;
  std::vector<cd> out;
  engine.fwd(out, x);
  x.swap(out);
}

std::vector<double> spectrum(std::span<const double> plane, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || plane.size() != height * width) {
    throw PreconditionError("spectrum needs an H x W plane with H, W >= 1");
  }
  std::vector<cd> grid(plane.begin(), plane.end());
  std::vector<cd> line(width);
  for (std::size_t r = 0; r < height; ++r) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(r * width), width, line.begin());
    fft(line);
    std::copy(line.begin(), line.end(), grid.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  line.resize(height);
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t r = 0; r < height; ++r) line[r] = grid[r * width + c];
    fft(line);
    for (std::size_t r = 0; r < height; ++r) grid[r * width + c] = line[r];
  }
  std::vector<double> out(height * width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      out[((r + height / 2) % height) * width + (c + width / 2) % width] = std::abs(grid[r * width + c]);
    }
  }
  return out;
}

double high_frequency_ratio(std::span<const double> mag, std::size_t height, std::size_t width) {
  const std::size_t win_h = (height + 1) / 2, win_w = (width + 1) / 2;
  const std::size_t r0 = height / 2 - win_h / 2, c0 = width / 2 - win_w / 2;
  double total = 0.0, low = 0.0;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double e = mag[r * width + c] * mag[r * width + c];
      total += e;
      if (r >= r0 && r < r0 + win_h && c >= c0 && c < c0 + win_w) low += e;
    }
  }
  return total > 0.0 ? (total - low) / total : 0.0;
}

double signature_variance(const sig::Signature& s) {
  if (s.values.empty()) return 0.0;
  double mean = 0.0;
  for (float v : s.values) mean += v;
  mean /= static_cast<double>(s.values.size());
  double acc = 0.0;
  for (float v : s.values) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(s.values.size());
}

double PopulationStats::mean_variance() const {
  if (variances.empty()) return 0.0;
  double s = 0.0;
  for (double v : variances) s += v;
  return s / static_cast<double>(variances.size());
}

PopulationStats population_stats(std::span<const sig::Signature> sigs, std::string label) {
  if (sigs.empty()) throw PreconditionError("population '" + label + "' has no signatures");
  PopulationStats p;
  p.label = std::move(label);
  p.height = sigs[0].input.height;
  p.width = sigs[0].input.width;
  p.num_classes = sigs[0].num_classes;
  const std::size_t npix = p.height * p.width;
  const std::size_t len = npix * p.num_classes;
  p.mean_signature.assign(len, 0.0);
  p.mean_spectrum.assign(npix, 0.0);
  std::vector<double> plane(npix);
  for (const auto& s : sigs) {
    if (s.input.height != p.height || s.input.width != p.width || s.num_classes != p.num_classes ||
        s.values.size() != len) {
      throw PreconditionError("population '" + p.label + "' mixes signature shapes");
    }
    for (std::size_t i = 0; i < len; ++i) p.mean_signature[i] += s.values[i];
    p.variances.push_back(signature_variance(s));
    for (std::size_t k = 0; k < p.num_classes; ++k) {
      for (std::size_t q = 0; q < npix; ++q) plane[q] = s.values[q * p.num_classes + k];
      const auto mag = spectrum(plane, p.height, p.width);
      for (std::size_t q = 0; q < npix; ++q) p.mean_spectrum[q] += mag[q];
    }
  }
  const double n = static_cast<double>(sigs.size());
  for (auto& v : p.mean_signature) v /= n;
  for (auto& v : p.mean_spectrum) v /= n * static_cast<double>(p.num_classes);
  p.max_of_mean = *std::max_element(p.mean_signature.begin(), p.mean_signature.end());
  p.high_frequency_ratio = high_frequency_ratio(p.mean_spectrum, p.height, p.width);
  return p;
}

double rank_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return 0.5;
  double wins = 0.0;
  for (double x : a) {
    for (double y : b) wins += y > x ? 1.0 : (y == x ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

Comparison compare_populations(const PopulationStats& clean, const PopulationStats& trojan) {
  if (clean.height != trojan.height || clean.width != trojan.width || clean.num_classes != trojan.num_classes) {
    throw PreconditionError("populations have different signature shapes");
  }
  Comparison c;
  c.clean_max = clean.max_of_mean;
  c.trojan_max = trojan.max_of_mean;
  c.clean_mean_variance = clean.mean_variance();
  c.trojan_mean_variance = trojan.mean_variance();
  c.variance_rank_statistic = rank_statistic(clean.variances, trojan.variances);
  c.clean_high_frequency_ratio = clean.high_frequency_ratio;
  c.trojan_high_frequency_ratio = trojan.high_frequency_ratio;
  return c;
}

nlohmann::json Comparison::to_json() const {
  return {{"max_of_mean", {{"clean", clean_max}, {"trojan", trojan_max}}},
          {"mean_variance", {{"clean", clean_mean_variance}, {"trojan", trojan_mean_variance}}},
          {"variance_rank_statistic", variance_rank_statistic},
          {"high_frequency_ratio", {{"clean", clean_high_frequency_ratio}, {"trojan", trojan_high_frequency_ratio}}}};
}

void write_report(const fs::path& dir, const PopulationStats& clean, const PopulationStats& trojan,
                  const Comparison& cmp, std::size_t histogram_bins) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "variances.csv");
    out << "population,index,variance\n";
    for (const auto* p : {&clean, &trojan}) {
      for (std::size_t i = 0; i < p->variances.size(); ++i) out << p->label << ',' << i << ',' << p->variances[i] << '\n';
    }
  }
  {
    double lo = std::min(*std::min_element(clean.variances.begin(), clean.variances.end()),
                         *std::min_element(trojan.variances.begin(), trojan.variances.end()));
    double hi = std::max(*std::max_element(clean.variances.begin(), clean.variances.end()),
                         *std::max_element(trojan.variances.begin(), trojan.variances.end()));
    if (hi <= lo) hi = lo + 1e-12;
    const std::size_t bins = std::max<std::size_t>(1, histogram_bins);
    const double width = (hi - lo) / static_cast<double>(bins);
    std::ofstream out(dir / "variance_histogram.csv");
    out << "population,bin_lo,bin_hi,count\n";
    for (const auto* p : {&clean, &trojan}) {
      std::vector<std::size_t> counts(bins, 0);
      for (double v : p->variances) {
        counts[std::min(bins - 1, static_cast<std::size_t>((v - lo) / width))]++;
      }
      for (std::size_t b = 0; b < bins; ++b) {
        out << p->label << ',' << lo + width * static_cast<double>(b) << ',' << lo + width * static_cast<double>(b + 1)
            << ',' << counts[b] << '\n';
      }
    }
  }
  for (const auto* p : {&clean, &trojan}) {
    const auto h = static_cast<std::uint32_t>(p->height), w = static_cast<std::uint32_t>(p->width);
    save_tensor(dir / ("mean_signature_" + p->label + ".ops"),
                Tensor<double>({h, w, static_cast<std::uint32_t>(p->num_classes)}, p->mean_signature));
    save_tensor(dir / ("mean_spectrum_" + p->label + ".ops"), Tensor<double>({h, w}, p->mean_spectrum));
  }
  auto summary = cmp.to_json();
  summary["populations"] = {{"clean", clean.variances.size()}, {"trojan", trojan.variances.size()}};
  summary["definitions"] = {
      {"variance", "population variance over all H*W*K values of one signature"},
      {"spectrum", "|2D DFT| per class plane, zero frequency centered, averaged over planes and signatures"},
      {"high_frequency_ratio", "squared-magnitude energy outside the centered ceil(H/2) x ceil(W/2) window"},
      {"variance_rank_statistic", "P(trojan variance > clean variance) + 0.5 P(tie)"}};
  write_json(dir / "summary.json", summary);
}

}  // namespace pixsig::stats
