#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cdgan/checkpoint.hpp"
#include "support/oracles.hpp"

using namespace cdgan;
using cdgan::testing::random_tensor;
using cdgan::testing::tiny_arch;
namespace fs = std::filesystem;

namespace {

TrainingState trained_state(std::int64_t steps) {
  SyntheticSpec spec;
  spec.image_size = 16;
  spec.count = 4;
  const auto data = generate_synthetic(spec);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.total_steps = steps;
  auto s = initial_state(tiny_arch(), cfg, data.a.size(), data.b.size());
  train(s, data.a, data.b, cfg);
  return s;
}

std::vector<std::uint8_t> bytes_of(const TrainingState& s) {
  const Progress p{s.step, s.sampler.state()};
  return serialize_checkpoint(s.bundle, &s.optimizer, &p);
}

void expect_rejected(std::vector<std::uint8_t> bytes, const std::string& fragment) {
  try {
    deserialize_checkpoint(bytes);
    FAIL() << "accepted corrupt checkpoint (" << fragment << ")";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Checkpoint, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(nullptr, 0), 0xcbf29ce484222325ULL);
  const std::uint8_t a = 'a';
  EXPECT_EQ(fnv1a64(&a, 1), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
}

TEST(Checkpoint, FullStateRoundTripIsBitExact) {
  const auto s = trained_state(3);
  const auto bytes = bytes_of(s);
  const auto ck = deserialize_checkpoint(bytes);
  ASSERT_TRUE(ck.optimizer.has_value());
  ASSERT_TRUE(ck.progress.has_value());
  EXPECT_EQ(*ck.optimizer, s.optimizer);
  EXPECT_EQ(ck.progress->step, 3);
  EXPECT_EQ(ck.bundle.arch.base_width, tiny_arch().base_width);
  std::vector<Tensor<float>> original;
  std::vector<Tensor<float>> restored;
  visit_tensors(s.bundle, [&](const std::string&, const Tensor<float>& t, Group, TensorKind) { original.push_back(t); });
  visit_tensors(ck.bundle, [&](const std::string&, const Tensor<float>& t, Group, TensorKind) { restored.push_back(t); });
  EXPECT_EQ(original, restored);
  // Serializing the restored state reproduces the same bytes.
  EXPECT_EQ(bytes_of(training_state_from(ck)), bytes);
}

TEST(Checkpoint, BundleOnlyCannotResume) {
  const auto b = build_bundle<float>(tiny_arch(), 1, Mode::AsymmetricAToB);
  const auto ck = deserialize_checkpoint(serialize_checkpoint(b, nullptr, nullptr));
  EXPECT_FALSE(ck.optimizer.has_value());
  EXPECT_EQ(ck.bundle.mode, Mode::AsymmetricAToB);
  const auto x = random_tensor<float>(tiny_arch().image_shape(2), 2);
  EXPECT_EQ(translate(ck.bundle, x, x), translate(b, x, x));
  EXPECT_THROW(training_state_from(ck), CheckpointError);
}

TEST(Checkpoint, CorruptionDetected) {
  const auto good = bytes_of(trained_state(1));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  expect_rejected(bad_magic, "magic");

  auto bad_version = good;
  bad_version[8] = 9;
  expect_rejected(bad_version, "version");

  auto truncated = good;
  truncated.resize(good.size() - 20);
  expect_rejected(truncated, "size");

  auto flipped = good;
  flipped[good.size() / 2] ^= 0x40;
  expect_rejected(flipped, "checksum");

  expect_rejected(std::vector<std::uint8_t>(5, 0), "magic");
}

TEST(Checkpoint, FileRoundTripAndAtomicWrite) {
  const fs::path dir = fs::temp_directory_path() / "cdgan_test_checkpoint";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto s = trained_state(2);
  save_training_state(dir / "a.ckpt", s);
  EXPECT_FALSE(fs::exists(dir / "a.ckpt.tmp"));
  const auto back = training_state_from(load_checkpoint(dir / "a.ckpt"));
  EXPECT_EQ(back.step, 2);
  EXPECT_EQ(back.sampler, s.sampler);

  std::ofstream(dir / "junk.ckpt") << "garbage";
  try {
    load_checkpoint(dir / "junk.ckpt");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.ckpt"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST(Checkpoint, ChecksumIdentifiesContent) {
  const auto b1 = build_bundle<float>(tiny_arch(), 1);
  const auto b2 = build_bundle<float>(tiny_arch(), 2);
  const auto c1 = deserialize_checkpoint(serialize_checkpoint(b1, nullptr, nullptr)).checksum;
  const auto c1b = deserialize_checkpoint(serialize_checkpoint(b1, nullptr, nullptr)).checksum;
  const auto c2 = deserialize_checkpoint(serialize_checkpoint(b2, nullptr, nullptr)).checksum;
  EXPECT_EQ(c1, c1b);
  EXPECT_NE(c1, c2);
}
