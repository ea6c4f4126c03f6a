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

#include <filesystem>
#include <fstream>

#include "pixsig/config.hpp"
#include "pixsig/error.hpp"

using namespace pixsig;
using nlohmann::json;

namespace {

json synthetic_config() {
  return json{{"seed", 7},
              {"dataset", {{"kind", "synthetic"}, {"n_train", 200}, {"n_test", 80}, {"shape", {12, 12, 1}},
                           {"num_classes", 4}, {"seed", 3}}},
              {"zoo", {{"archs", {"mlp"}}, {"n_clean", 2}, {"n_trojan", 2}, {"train", {{"epochs", 2}}}}},
              {"signature", {{"levels", 16}}}};
}

}  // namespace

TEST(Config, DefaultsWhenSectionsAreOmitted) {
  const auto c = parse_config(json::object());
  EXPECT_EQ(c.signature.levels, 256u);
  EXPECT_EQ(c.signature.default_image, sig::DefaultImage::Black);
  EXPECT_EQ(c.zoo.n_clean, 25u);
  EXPECT_EQ(c.zoo.poison_fraction, 0.1);
  EXPECT_EQ(c.zoo.min_attack_success, 0.95);
  EXPECT_EQ(c.detector.threshold, 0.5);
  EXPECT_EQ(c.sweep_sizes, (std::vector<std::size_t>{0, 1, 2, 5, 10, 15, 20, 25}));
  EXPECT_EQ(c.sweep_repeats, 20u);
}

TEST(Config, ParsesNestedSectionsAndInheritsSeed) {
  const auto c = parse_config(synthetic_config());
  EXPECT_EQ(c.dataset.kind, "synthetic");
  EXPECT_EQ(c.dataset.shape, (ImageShape{12, 12, 1}));
  EXPECT_EQ(c.zoo.archs, std::vector<std::string>{"mlp"});
  EXPECT_EQ(c.zoo.train.epochs, 2u);
  EXPECT_EQ(c.zoo.seed, 7u);
  EXPECT_EQ(c.signature.levels, 16u);
  auto pinned = synthetic_config();
  pinned["zoo"]["seed"] = 99;
  EXPECT_EQ(parse_config(pinned).zoo.seed, 99u);
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
  for (const auto& path : {json::json_pointer("/bogus"), json::json_pointer("/dataset/bogus"),
                           json::json_pointer("/zoo/bogus"), json::json_pointer("/zoo/train/bogus"),
                           json::json_pointer("/signature/bogus"), json::json_pointer("/detector/bogus"),
                           json::json_pointer("/sweep/bogus")}) {
    auto j = synthetic_config();
    j[path] = 1;
    EXPECT_THROW(parse_config(j), ConfigError) << path.to_string();
  }
}

TEST(Config, InvalidValuesAreConfigErrors) {
  auto bad_levels = synthetic_config();
  bad_levels["signature"]["levels"] = 1;
  EXPECT_THROW(parse_config(bad_levels), ConfigError);
  auto bad_arch = synthetic_config();
  bad_arch["zoo"]["archs"] = {"transformer"};
  EXPECT_THROW(parse_config(bad_arch), ConfigError);
  auto bad_fraction = synthetic_config();
  bad_fraction["zoo"]["poison_fraction"] = 1.5;
  EXPECT_THROW(parse_config(bad_fraction), ConfigError);
  auto bad_type = synthetic_config();
  bad_type["seed"] = "seven";
  EXPECT_THROW(parse_config(bad_type), ConfigError);
  auto idx_without_paths = synthetic_config();
  idx_without_paths["dataset"] = {{"kind", "idx"}};
  EXPECT_THROW(parse_config(idx_without_paths), ConfigError);
}

TEST(Config, HashIgnoresJobsAndOutputRoot) {
  auto a = synthetic_config();
  auto b = a;
  b["jobs"] = 8;
  b["output_root"] = "elsewhere";
  EXPECT_EQ(parse_config(a).hash(), parse_config(b).hash());
  auto c = a;
  c["seed"] = 8;
  EXPECT_NE(parse_config(a).hash(), parse_config(c).hash());
  // Serialized form parses back to the same hash.
  const auto cfg = parse_config(a);
  EXPECT_EQ(parse_config(cfg.to_json()).hash(), cfg.hash());
}

TEST(Config, LoadsFromFileAndLoadsSyntheticData) {
  const auto dir = std::filesystem::temp_directory_path() / "pixsig_config_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "c.json") << synthetic_config().dump();
  const auto cfg = load_config(dir / "c.json");
  EXPECT_EQ(cfg.base_dir, dir);
  const auto d = load_dataset(cfg.dataset, cfg.base_dir);
  EXPECT_EQ(d.train.size(), 200u);
  EXPECT_EQ(d.test.size(), 80u);
  EXPECT_EQ(d.test.split, Split::Test);
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
  std::filesystem::remove_all(dir);
}
