#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "corereg/checkpoint.hpp"

using namespace corereg;

namespace {

Checkpoint trained(bool adapter) {
  SynthConfig sc;
  sc.n_samples = 40;
  sc.feature_dim = 4;
  sc.n_categories = 2;
  TrainConfig cfg;
  cfg.tree = {2, 8, 0};
  cfg.epochs = 2;
  cfg.use_adapter = adapter;
  return {train(synth_generate(sc), cfg).model, {cfg.seed, "digest"}};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("corereg_ckpt_" + name);
}

}  // namespace

TEST(HexFloat, RoundTripsExactly) {
  const double values[] = {0.0,
                           -0.0,
                           1.0,
                           -2.5,
                           0.1,
                           1.0 / 3.0,
                           std::numeric_limits<double>::min(),
                           std::numeric_limits<double>::denorm_min(),
                           std::numeric_limits<double>::max(),
                           -1e-300};
  for (double v : values) {
    const double back = parse_hex(format_hex(v));
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back), std::bit_cast<std::uint64_t>(v)) << format_hex(v);
  }
  EXPECT_EQ(format_hex(3.0), "0x1.8p+1");
  EXPECT_EQ(format_hex(-0.0), "-0x0p+0");
}

TEST(HexFloat, RandomBitPatternsRoundTrip) {
  Rng rng(77);
  for (int i = 0; i < 10000; ++i) {
    const double v = std::bit_cast<double>(rng.next_u64());
    if (!std::isfinite(v)) continue;
    EXPECT_EQ(std::bit_cast<std::uint64_t>(parse_hex(format_hex(v))), std::bit_cast<std::uint64_t>(v));
  }
}

TEST(HexFloat, RejectsGarbageAndNonFinite) {
  EXPECT_THROW(parse_hex("0x1.8p+1junk"), DataError);
  EXPECT_THROW(parse_hex(""), DataError);
  EXPECT_THROW(format_hex(std::numeric_limits<double>::infinity()), NumericError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  for (bool adapter : {false, true}) {
    const Checkpoint ck = trained(adapter);
    const auto path = temp_file(adapter ? "a.json" : "b.json");
    save_checkpoint(ck, path.string());
    const Checkpoint back = load_checkpoint(path.string());
    EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(ck));
    EXPECT_EQ(back.model.tree.root.layers[0].weight, ck.model.tree.root.layers[0].weight);
    EXPECT_EQ(back.model.partition, ck.model.partition);
    EXPECT_EQ(back.model.epsilon, ck.model.epsilon);
    EXPECT_EQ(back.model.adapter.has_value(), adapter);
    std::filesystem::remove(path);
  }
}

TEST(Checkpoint, LoadedModelPredictsIdentically) {
  const Checkpoint ck = trained(false);
  const Checkpoint back = checkpoint_from_json(nlohmann::json::parse(serialize_checkpoint(ck)));
  SynthConfig sc;
  sc.n_samples = 40;
  sc.feature_dim = 4;
  sc.n_categories = 2;
  const Dataset ds = synth_generate(sc);
  const auto a = predict_all(ck.model, ds, ds, ExemplarPolicy{}, 3, 5);
  const auto b = predict_all(back.model, ds, ds, ExemplarPolicy{}, 3, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].score, b[i].score);
}

TEST(Checkpoint, VersionIsChecked) {
  auto j = nlohmann::json::parse(serialize_checkpoint(trained(false)));
  j["version"] = 99;
  EXPECT_THROW(checkpoint_from_json(j), DataError);
}

TEST(Checkpoint, ShapeMismatchRejected) {
  auto j = nlohmann::json::parse(serialize_checkpoint(trained(false)));
  j["tree"][0]["layers"][0]["weight"]["shape"][0] = 3;
  EXPECT_THROW(checkpoint_from_json(j), DataError);
  auto k = nlohmann::json::parse(serialize_checkpoint(trained(false)));
  k["tree"].erase(k["tree"].size() - 1);
  EXPECT_THROW(checkpoint_from_json(k), DataError);
}

TEST(Checkpoint, MissingOrCorruptFileIsDataError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), DataError);
  const auto path = temp_file("corrupt.json");
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_checkpoint(path.string()), DataError);
  std::filesystem::remove(path);
}
