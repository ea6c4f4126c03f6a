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

// Acceptance gate: one PASS/FAIL line per criterion. Zoos and signatures are cached under
// --cache so reruns only re-evaluate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pixsig/data.hpp"
#include "pixsig/detector.hpp"
#include "pixsig/error.hpp"
#include "pixsig/hash.hpp"
#include "pixsig/json_io.hpp"
#include "pixsig/nn.hpp"
#include "pixsig/parallel.hpp"
#include "pixsig/rng.hpp"
#include "pixsig/signature.hpp"
#include "pixsig/stats.hpp"
#include "pixsig/tensor_io.hpp"
#include "pixsig/zoo.hpp"

using namespace pixsig;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Pinned tolerances and gates.
constexpr double kLinearTol = 1e-6;
constexpr double kChannelSumTol = 1e-5;
constexpr double kBatchTol = 1e-6;
constexpr float kBoundTol = 1e-6f;  // batched and single-image forwards may round differently
constexpr std::size_t kMinTrojans = 20;
constexpr double kMinAttackSuccess = 0.95;
constexpr double kMaxAccuracyDrop = 0.02;
constexpr double kDetectionGate = 0.85;
constexpr double kPerChannelSlack = 0.03;
constexpr double kCrossArchGate = 0.65;
constexpr double kGradTol = 1e-3;
constexpr double kParsevalTol = 1e-6;
constexpr std::size_t kDetectorSeeds = 5;
constexpr std::size_t kPairs = 25;
constexpr std::size_t kPerChannelPairs = 15;
constexpr std::size_t kCrossArchPairs = 15;
constexpr std::size_t kLevels = 256;

struct Verdict {
  int id;
  bool pass;
  std::string summary;
  json detail;
};

std::vector<Verdict> g_verdicts;

void report(int id, bool pass, const std::string& summary, json detail = json::object()) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", summary.c_str());
  std::fflush(stdout);
  g_verdicts.push_back({id, pass, summary, std::move(detail)});
}

void note(const std::string& msg) {
  std::fprintf(stderr, "[acceptance] %s\n", msg.c_str());
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- criterion 1

std::vector<float> random_probs(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> raw(k);
  double s = 0.0;
  for (auto& r : raw) s += (r = u(rng));
  std::vector<float> p(k);
  for (std::size_t i = 0; i < k; ++i) p[i] = static_cast<float>(raw[i] / s);
  return p;
}

bool lookup_oracle(std::string& why) {
  const ImageShape shape{4, 4, 1};
  const std::size_t k = 3, levels = 8;
  auto table = std::make_shared<sig::LookupTable>(shape, k, levels);
  std::mt19937_64 rng(2024);
  std::vector<float> img(shape.size(), 0.0f);
  table->insert(img, random_probs(rng, k));
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    for (std::size_t v = 1; v < levels; ++v) {
      img[p] = static_cast<float>(v) / static_cast<float>(levels);
      table->insert(img, random_probs(rng, k));
    }
    img[p] = 0.0f;
  }
  sig::SignaturePolicy policy;
  policy.levels = levels;
  const auto s = sig::compute_signature(sig::make_lookup_handle(table), policy);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t c = 0; c < k; ++c) {
        float best = -1.0f;
        for (std::size_t v = 0; v < levels; ++v) {
          std::vector<float> probe(16, 0.0f);
          probe[i * 4 + j] = static_cast<float>(v) / static_cast<float>(levels);
          best = std::max(best, table->find(probe)[c]);
        }
        mismatches += s.at(i, j, c) != best;
      }
    }
  }
  why = "lookup mismatches=" + std::to_string(mismatches);
  return mismatches == 0;
}

double linear_oracle_error() {
  const ImageShape shape{6, 6, 1};
  const std::size_t k = 5, levels = kLevels, pixels = shape.pixels();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 2.0);
  auto w = std::make_shared<std::vector<double>>(k * pixels);
  auto b = std::make_shared<std::vector<double>>(k);
  for (auto& v : *w) v = n(rng);
  for (auto& v : *b) v = n(rng);
  sig::ClassifierHandle h;
  h.shape = shape;
  h.num_classes = k;
  h.query = [w, b, k, pixels](std::span<const float> images, std::size_t count) {
    std::vector<float> out(count * k);
    for (std::size_t r = 0; r < count; ++r) {
      std::vector<double> z(*b);
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t p = 0; p < pixels; ++p) z[c] += (*w)[c * pixels + p] * images[r * pixels + p];
      }
      const double m = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (auto& v : z) s += (v = std::exp(v - m));
      for (std::size_t c = 0; c < k; ++c) out[r * k + c] = static_cast<float>(z[c] / s);
    }
    return out;
  };
  sig::SignaturePolicy policy;
  policy.levels = levels;
  const auto s = sig::compute_signature(h, policy);

  // log p_c(v) is concave along one pixel: bisect the slope, then check the two bracketing grid values.
  const double vmax = static_cast<double>(levels - 1) / static_cast<double>(levels);
  double worst = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    auto logits = [&](double v) {
      std::vector<double> z(*b);
      for (std::size_t c = 0; c < k; ++c) z[c] += v * (*w)[c * pixels + p];
      return z;
    };
    for (std::size_t c = 0; c < k; ++c) {
      auto prob = [&](double v) {
        const auto z = logits(v);
        double s2 = 0.0;
        for (double x : z) s2 += std::exp(x - z[c]);
        return 1.0 / s2;
      };
      auto slope = [&](double v) {
        const auto z = logits(v);
        const double m = *std::max_element(z.begin(), z.end());
        double s2 = 0.0, e = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const double q = std::exp(z[j] - m);
          s2 += q;
          e += q * (*w)[j * pixels + p];
        }
        return (*w)[c * pixels + p] - e / s2;
      };
      double vstar = 0.0;
      if (slope(0.0) <= 0.0) {
        vstar = 0.0;
      } else if (slope(vmax) >= 0.0) {
        vstar = vmax;
      } else {
        double lo = 0.0, hi = vmax;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          (slope(mid) > 0.0 ? lo : hi) = mid;
        }
        vstar = 0.5 * (lo + hi);
      }
      const double g_lo = std::floor(vstar * levels) / levels;
      const double g_hi = std::min(vmax, std::ceil(vstar * levels) / levels);
      const double expect = std::max(prob(g_lo), prob(g_hi));
      worst = std::max(worst, std::abs(static_cast<double>(s.at(p / shape.width, p % shape.width, c)) - expect));
    }
  }
  return worst;
}

void criterion1() {
  std::string why;
  const bool lookup_ok = lookup_oracle(why);
  const double err = linear_oracle_error();
  report(1, lookup_ok && err <= kLinearTol,
         why + ", linear-softmax V=256 max abs error=" + fmt(err, 9) + " (tol " + fmt(kLinearTol, 9) + ")",
         {{"lookup_exact", lookup_ok}, {"linear_max_abs_error", err}});
}

// ---------------------------------------------------------------- criterion 2

void criterion2(std::size_t jobs) {
  const ImageShape shape{28, 28, 1};
  auto params = std::make_shared<const nn::ModelParams>(nn::init_params(nn::preset("mini-lenet", shape, 10), 31));
  const auto handle = sig::make_model_handle(params);
  sig::SignaturePolicy policy;
  policy.levels = 16;
  const auto ref = sig::compute_signature(handle, policy);

  bool range_ok = true, sums_ok = true, bound_ok = true;
  const auto base = nn::forward(*params, policy.base_image(shape), 1);
  double min_sum = 1e9;
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 10; ++c) {
      const float v = ref.values[p * 10 + c];
      range_ok &= v >= 0.0f && v <= 1.0f;
      bound_ok &= v >= base[c] - kBoundTol;
      sum += v;
    }
    min_sum = std::min(min_sum, sum);
  }
  sums_ok = min_sum >= 1.0 - kChannelSumTol;

  std::vector<std::size_t> order(shape.pixels());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(9);
  shuffle(std::span<std::size_t>(order), rng);
  const bool order_ok = sig::compute_signature(handle, policy, {jobs, order}).values == ref.values;

  double batch_err = 0.0;
  for (std::size_t bs : {1u, 7u, 1000u}) {
    auto p = policy;
    p.batch_size = bs;
    const auto s = sig::compute_signature(handle, p);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      batch_err = std::max(batch_err, static_cast<double>(std::abs(s.values[i] - ref.values[i])));
    }
  }
  const bool batch_ok = batch_err <= kBatchTol;

  auto full = policy;
  full.levels = kLevels;
  const auto big = sig::compute_signature(handle, full, {jobs, {}});
  const bool count_ok = ref.query_count == 28u * 28u * 16u && big.query_count == 200704u;

  const bool ok = range_ok && sums_ok && bound_ok && order_ok && batch_ok && count_ok;
  report(2, ok,
         std::string("range=") + (range_ok ? "ok" : "bad") + " min channel sum=" + fmt(min_sum, 6) +
             " black lower bound=" + (bound_ok ? "ok" : "bad") + " pixel order=" + (order_ok ? "exact" : "differs") +
             " batch max diff=" + fmt(batch_err, 9) + " query_count(V=256)=" + std::to_string(big.query_count),
         {{"min_channel_sum", min_sum}, {"batch_max_diff", batch_err}, {"query_count_v256", big.query_count}});
}

// ---------------------------------------------------------------- zoos

struct Env {
  fs::path cache;
  std::size_t jobs = 1;
  LabeledDataset train, test, virus_source;
};

zoo::ZooConfig base_zoo(const std::string& name, std::uint64_t seed, std::size_t jobs) {
  zoo::ZooConfig c;
  c.name = name;
  c.archs = {"mini-lenet"};
  c.n_clean = kPairs;
  c.n_trojan = kPairs;
  c.poison_fraction = 0.1;
  c.train.epochs = 10;
  c.train.accuracy_floor = 0.92;
  c.min_attack_success = kMinAttackSuccess;
  c.max_accuracy_drop = kMaxAccuracyDrop;
  c.retry_cap = 6;
  c.seed = seed;
  c.jobs = jobs;
  return c;
}

struct BuiltZoo {
  fs::path dir;
  zoo::ZooManifest manifest;
};

BuiltZoo build(const Env& env, const zoo::ZooConfig& cfg) {
  const auto dir = env.cache / "zoos" / cfg.name;
  const auto t0 = std::chrono::steady_clock::now();
  note("zoo " + cfg.name + ": building or resuming");
  const auto* source = cfg.trigger_source == zoo::TriggerSource::Virus ? &env.virus_source : nullptr;
  auto m = zoo::build_zoo(cfg, env.train, env.test, source, dir, true,
                          [&](const std::string& id, std::size_t attempt, bool ok, const std::string& msg) {
                            note(cfg.name + "/" + id + " attempt " + std::to_string(attempt) +
                                 (ok ? " accepted: " : " rejected: ") + msg);
                          });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  note("zoo " + cfg.name + ": " + std::to_string(m.entries.size()) + " entries, " +
       std::to_string(m.failures.size()) + " failures, " + fmt(secs, 1) + " s");
  return {dir, std::move(m)};
}

std::vector<sig::SignatureRecord> signatures(const Env& env, const BuiltZoo& z, const sig::SignaturePolicy& policy) {
  const auto t0 = std::chrono::steady_clock::now();
  auto set = sig::batch_signatures(z.dir, z.manifest, policy, env.jobs);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  note("signatures " + z.manifest.name + "/" + policy.tag() + ": " + std::to_string(set.records.size()) + " (" +
       std::to_string(set.computed) + " computed, " + fmt(secs, 1) + " s)");
  if (!set.failures.empty()) throw PreconditionError("signature failures in zoo " + z.manifest.name);
  return std::move(set.records);
}

std::size_t entry_index(const std::string& id) { return std::stoul(id.substr(id.find('-') + 1)); }

std::vector<sig::SignatureRecord> select(const std::vector<sig::SignatureRecord>& recs,
                                         std::optional<zoo::EntryLabel> label, std::size_t max_index) {
  std::vector<sig::SignatureRecord> out;
  for (const auto& r : recs) {
    if (label && r.label != *label) continue;
    if (entry_index(r.entry_id) >= max_index) continue;
    out.push_back(r);
  }
  return out;
}

std::vector<sig::SignatureRecord> concat(std::vector<sig::SignatureRecord> a, const std::vector<sig::SignatureRecord>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::pair<std::size_t, std::size_t> counts(const std::vector<sig::SignatureRecord>& recs) {
  std::size_t clean = 0;
  for (const auto& r : recs) clean += r.label == zoo::EntryLabel::Clean;
  return {clean, recs.size() - clean};
}

struct Detection {
  double mean = 0.0;
  std::vector<double> per_seed;
  json to_json() const { return {{"mean_accuracy", mean}, {"per_seed", per_seed}}; }
};

Detection detect(const std::vector<sig::SignatureRecord>& train, const std::vector<sig::SignatureRecord>& test,
                 det::Mode mode, const std::string& stream) {
  det::DetectorConfig cfg;
  cfg.mode = mode;
  Detection d;
  for (std::size_t s = 0; s < kDetectorSeeds; ++s) {
    const auto model = det::train_detector(train, cfg, derive_seed(4242, stream, s));
    d.per_seed.push_back(det::eval_detector(model, test, mode).accuracy);
  }
  d.mean = mean(d.per_seed);
  return d;
}

std::string describe(const Detection& d) {
  std::string s = "mean acc=" + fmt(d.mean) + " seeds=[";
  for (std::size_t i = 0; i < d.per_seed.size(); ++i) s += (i ? " " : "") + fmt(d.per_seed[i], 3);
  return s + "]";
}

std::string sizes(const std::vector<sig::SignatureRecord>& train, const std::vector<sig::SignatureRecord>& test) {
  const auto [tc, tt] = counts(train);
  const auto [ec, et] = counts(test);
  return "train " + std::to_string(tc) + "+" + std::to_string(tt) + ", test " + std::to_string(ec) + "+" +
         std::to_string(et);
}

// ---------------------------------------------------------------- criterion 3

void criterion3(const BuiltZoo& vac, const BuiltZoo& vir) {
  std::size_t accepted = 0, violations = 0, missing_twin = 0;
  double min_asr = 1.0, max_drop = -1.0;
  for (const auto* z : {&vac, &vir}) {
    std::map<std::string, double> clean_acc;
    for (const auto& e : z->manifest.entries) {
      if (e.label == zoo::EntryLabel::Clean) clean_acc[e.id.substr(e.id.find('-'))] = e.clean_test_acc;
    }
    for (const auto& e : z->manifest.entries) {
      if (e.label != zoo::EntryLabel::Trojan) continue;
      ++accepted;
      const auto twin = clean_acc.find(e.id.substr(e.id.find('-')));
      if (twin == clean_acc.end()) {
        ++missing_twin;
        continue;
      }
      const double drop = twin->second - e.clean_test_acc;
      min_asr = std::min(min_asr, *e.attack_success_rate);
      max_drop = std::max(max_drop, drop);
      violations += !(*e.attack_success_rate > kMinAttackSuccess && drop <= kMaxAccuracyDrop + 1e-12);
    }
  }
  const bool ok = accepted >= kMinTrojans && violations == 0 && missing_twin == 0;
  report(3, ok,
         "accepted trojans=" + std::to_string(accepted) + " (need >= " + std::to_string(kMinTrojans) +
             "), min ASR=" + fmt(min_asr) + " (> " + fmt(kMinAttackSuccess, 2) + "), max clean drop vs twin=" +
             fmt(max_drop) + " (<= " + fmt(kMaxAccuracyDrop, 2) + "), violations=" + std::to_string(violations) +
             ", gate-failed entries=" + std::to_string(vac.manifest.failures.size() + vir.manifest.failures.size()),
         {{"accepted", accepted}, {"min_asr", min_asr}, {"max_drop", max_drop}, {"violations", violations}});
}

// ---------------------------------------------------------------- criterion 8

bool directions(const std::vector<sig::SignatureRecord>& recs, const std::string& name, std::string& line, json& detail) {
  std::vector<sig::Signature> clean, trojan;
  for (const auto& r : recs) (r.label == zoo::EntryLabel::Clean ? clean : trojan).push_back(r.signature);
  const auto pc = stats::population_stats(clean, "clean");
  const auto pt = stats::population_stats(trojan, "trojan");
  const auto cmp = stats::compare_populations(pc, pt);
  const bool var_ok = cmp.trojan_mean_variance > cmp.clean_mean_variance;
  const bool hf_ok = cmp.trojan_high_frequency_ratio > cmp.clean_high_frequency_ratio;
  line += name + ": variance " + fmt(cmp.trojan_mean_variance, 6) + (var_ok ? " > " : " <= ") +
          fmt(cmp.clean_mean_variance, 6) + ", hf ratio " + fmt(cmp.trojan_high_frequency_ratio, 5) +
          (hf_ok ? " > " : " <= ") + fmt(cmp.clean_high_frequency_ratio, 5) + "; ";
  detail[name] = cmp.to_json();
  return var_ok && hf_ok;
}

// ---------------------------------------------------------------- criterion 9

void criterion9() {
  double worst_grad = 0.0;
  std::string worst_arch;
  for (const char* arch : {"mini-lenet", "mini-resnet", "mini-vgg"}) {
    auto params = nn::init_params(nn::preset(arch, {28, 28, 1}, 10), 5);
    Rng rng(derive_seed(5, "biases"));
    for (auto& t : params.tensors) {
      if (t.shape.size() == 1) {
        for (auto& v : t.values) v = static_cast<float>(uniform(rng, -0.1, 0.1));
      }
    }
    std::vector<float> batch(3 * 784);
    for (auto& v : batch) v = static_cast<float>(uniform(rng, 0.0, 1.0));
    const std::vector<std::uint32_t> labels{3, 1, 7};
    nn::GradCheckOptions opt;
    opt.samples_per_tensor = 12;
    const double err = nn::grad_check(params, batch, labels, opt);
    if (err > worst_grad) {
      worst_grad = err;
      worst_arch = arch;
    }
  }

  double worst_parseval = 0.0;
  Rng rng(11);
  for (std::size_t n : {28u, 32u, 17u}) {
    std::vector<double> plane(n * n);
    for (auto& v : plane) v = uniform(rng, 0.0, 1.0);
    const auto mag = stats::spectrum(plane, n, n);
    double freq = 0.0, space = 0.0;
    for (double m : mag) freq += m * m;
    for (double v : plane) space += v * v;
    worst_parseval = std::max(worst_parseval, std::abs(freq - static_cast<double>(n * n) * space) / (static_cast<double>(n * n) * space));
  }

  Tensor<float> t({28, 28, 10});
  for (auto& v : t.data) v = static_cast<float>(uniform(rng, -1.0, 1.0));
  const auto bytes = encode_tensor(t);
  const auto back = decode_tensor(bytes);
  const bool roundtrip = back.f32 == t && encode_tensor(back.f32) == bytes;

  report(9, worst_grad < kGradTol && worst_parseval < kParsevalTol && roundtrip,
         "grad check max rel err=" + fmt(worst_grad, 6) + " (" + worst_arch + ", tol " + fmt(kGradTol, 4) +
             "), Parseval rel err=" + fmt(worst_parseval, 12) + " (tol " + fmt(kParsevalTol, 7) + "), round trip " +
             (roundtrip ? "bit-exact" : "differs"),
         {{"grad_rel_err", worst_grad}, {"parseval_rel_err", worst_parseval}, {"roundtrip", roundtrip}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixsig acceptance criteria"};
  Env env;
  std::string cache = "acceptance-cache";
  bool strict = false;
  app.add_option("--cache", cache, "directory for cached zoos and signatures");
  app.add_option("--jobs", env.jobs, "worker threads (0 = all cores)");
  app.add_flag("--strict", strict, "exit nonzero when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  env.cache = cache;
  env.jobs = resolve_jobs(env.jobs);

  try {
    criterion1();
    criterion2(env.jobs);
    criterion9();

    const fs::path data_dir = PIXSIG_DATA_DIR;
    env.train = data::load_idx(data_dir / "train-images-idx3-ubyte", data_dir / "train-labels-idx1-ubyte");
    env.test = data::load_idx(data_dir / "t10k-images-idx3-ubyte", data_dir / "t10k-labels-idx1-ubyte", Split::Test);
    env.virus_source = data::gen_synthetic(data::SyntheticKind::Stripes, 500, env.train.shape, env.train.num_classes,
                                           derive_seed(99, "virus-source"));

    auto vac_cfg = base_zoo("vaccine-lenet", 101, env.jobs);
    auto vir_cfg = base_zoo("virus-lenet", 202, env.jobs);
    vir_cfg.trigger_source = zoo::TriggerSource::Virus;
    const auto vac = build(env, vac_cfg);
    const auto vir = build(env, vir_cfg);
    criterion3(vac, vir);

    sig::SignaturePolicy black;
    black.levels = kLevels;
    const auto vac_sigs = signatures(env, vac, black);
    const auto vir_sigs = signatures(env, vir, black);

    // 4: whole-signature detector, vaccine 25+25 -> virus 25+25.
    const auto whole = detect(vac_sigs, vir_sigs, det::Mode::Whole, "whole");
    report(4, whole.mean >= kDetectionGate,
           describe(whole) + " (gate >= " + fmt(kDetectionGate, 2) + ", " + sizes(vac_sigs, vir_sigs) + ")",
           whole.to_json());

    // 5: per-channel detector on the first 15+15 pairs.
    const auto small = select(vac_sigs, std::nullopt, kPerChannelPairs);
    const auto per_channel = detect(small, vir_sigs, det::Mode::PerChannel, "per-channel");
    report(5, per_channel.mean >= whole.mean - kPerChannelSlack,
           describe(per_channel) + " vs whole " + fmt(whole.mean) + " (need >= whole - " + fmt(kPerChannelSlack, 2) +
               ", " + sizes(small, vir_sigs) + ")",
           {{"per_channel", per_channel.to_json()}, {"whole_mean", whole.mean}});

    // 6: leave-one-architecture-out.
    auto res_cfg = base_zoo("vaccine-resnet", 303, env.jobs);
    res_cfg.archs = {"mini-resnet"};
    res_cfg.n_clean = res_cfg.n_trojan = kCrossArchPairs;
    auto vgg_cfg = base_zoo("vaccine-vgg", 404, env.jobs);
    vgg_cfg.archs = {"mini-vgg"};
    vgg_cfg.n_clean = vgg_cfg.n_trojan = kCrossArchPairs;
    const auto res = build(env, res_cfg);
    const auto vgg = build(env, vgg_cfg);
    const std::map<std::string, std::vector<sig::SignatureRecord>> by_arch{
        {"mini-lenet", select(vac_sigs, std::nullopt, kCrossArchPairs)},
        {"mini-resnet", signatures(env, res, black)},
        {"mini-vgg", signatures(env, vgg, black)}};
    std::vector<double> split_acc;
    std::string line;
    json cross = json::object();
    for (const auto& [held_out, test] : by_arch) {
      std::vector<sig::SignatureRecord> train;
      for (const auto& [arch, recs] : by_arch) {
        if (arch != held_out) train = concat(train, recs);
      }
      const auto d = detect(train, test, det::Mode::Whole, "cross-" + held_out);
      split_acc.push_back(d.mean);
      line += held_out + "=" + fmt(d.mean, 3) + " ";
      cross[held_out] = d.to_json();
    }
    report(6, mean(split_acc) >= kCrossArchGate,
           "leave-one-out mean acc=" + fmt(mean(split_acc)) + " (gate >= " + fmt(kCrossArchGate, 2) + "; " + line +
               "; " + std::to_string(kCrossArchPairs) + "+" + std::to_string(kCrossArchPairs) + " per arch)",
           cross);

    // 7: all-to-one and all-to-all. Clean halves come from the single-target zoos.
    std::string line7;
    json detail7 = json::object();
    bool ok7 = true;
    for (auto mode : {data::AttackMode::AllToOne, data::AttackMode::AllToAll}) {
      const auto tag = data::to_string(mode);
      auto vac_m = base_zoo("vaccine-" + tag, mode == data::AttackMode::AllToOne ? 505 : 707, env.jobs);
      auto vir_m = base_zoo("virus-" + tag, mode == data::AttackMode::AllToOne ? 606 : 808, env.jobs);
      vir_m.trigger_source = zoo::TriggerSource::Virus;
      for (auto* c : {&vac_m, &vir_m}) {
        c->attack_mode = mode;
        c->n_clean = 0;
        if (mode == data::AttackMode::AllToAll) {
          c->poison_fraction = 0.2;
          c->train.epochs = 25;
          c->min_attack_success = 0.80;
          c->retry_cap = 12;
        }
      }
      const auto zv = build(env, vac_m);
      const auto zr = build(env, vir_m);
      const auto train = concat(select(vac_sigs, zoo::EntryLabel::Clean, kPairs), signatures(env, zv, black));
      const auto test = concat(select(vir_sigs, zoo::EntryLabel::Clean, kPairs), signatures(env, zr, black));
      const auto d = detect(train, test, det::Mode::Whole, "attack-" + tag);
      ok7 &= d.mean >= kDetectionGate;
      line7 += tag + " " + describe(d) + " (" + sizes(train, test) + ", gate failures " +
               std::to_string(zv.manifest.failures.size() + zr.manifest.failures.size()) + "); ";
      detail7[tag] = d.to_json();
    }
    report(7, ok7, line7 + "gate >= " + fmt(kDetectionGate, 2), detail7);

    // 8: statistics direction on every accepted single-target zoo.
    std::string line8;
    json detail8 = json::object();
    const bool ok8 = directions(vac_sigs, "vaccine", line8, detail8) & directions(vir_sigs, "virus", line8, detail8);
    report(8, ok8, line8, detail8);

    // 10: default-image ablation.
    sig::SignaturePolicy mean_policy = black;
    mean_policy.default_image = sig::DefaultImage::Mean;
    mean_policy.mean_image = data::mean_image(env.train).pixels;
    sig::SignaturePolicy white = black;
    white.default_image = sig::DefaultImage::White;
    const auto mean_det = detect(signatures(env, vac, mean_policy), signatures(env, vir, mean_policy), det::Mode::Whole, "mean");
    const auto white_det = detect(signatures(env, vac, white), signatures(env, vir, white), det::Mode::Whole, "white");
    report(10, whole.mean >= kDetectionGate && mean_det.mean >= kDetectionGate,
           "black " + fmt(whole.mean) + ", mean " + fmt(mean_det.mean) + " (each gate >= " + fmt(kDetectionGate, 2) +
               "), white " + fmt(white_det.mean) + " (reported, no gate)",
           {{"black", whole.to_json()}, {"mean", mean_det.to_json()}, {"white", white_det.to_json()}});
  } catch (const Error& e) {
    std::fprintf(stderr, "acceptance harness error: %s\n", e.what());
    return 2;
  }

  std::sort(g_verdicts.begin(), g_verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  std::size_t passed = 0;
  json out = json::array();
  for (const auto& v : g_verdicts) {
    passed += v.pass;
    out.push_back({{"criterion", v.id}, {"pass", v.pass}, {"summary", v.summary}, {"detail", v.detail}});
  }
  fs::create_directories(env.cache);
  write_json(env.cache / "acceptance.json", out);
  std::printf("acceptance: %zu/%zu criteria passed\n", passed, g_verdicts.size());
  return strict && passed != g_verdicts.size() ? 1 : 0;
}
