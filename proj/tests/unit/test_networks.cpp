#include <gtest/gtest.h>

#include <set>

#include "cdgan/networks.hpp"
#include "support/oracles.hpp"

using namespace cdgan;
using cdgan::testing::random_tensor;
using cdgan::testing::tiny_arch;

namespace {

bool all_in_open_interval(const Tensor<float>& t, float lo, float hi) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > lo && t[i] < hi)) return false;
  }
  return true;
}

ArchConfig small_arch(int size) {
  ArchConfig a = ArchConfig::for_image_size(size);
  a.base_width = 8;
  a.di_channels = 16;
  a.ds_dim = 6;
  return a;
}

}  // namespace

TEST(ArchConfig, DefaultsAndDerivedSizes) {
  const ArchConfig a;
  EXPECT_EQ(a.image_size, 64);
  EXPECT_EQ(a.image_channels, 3);
  EXPECT_EQ(a.base_width, 64);
  EXPECT_EQ(a.di_channels, 256);
  EXPECT_EQ(a.di_spatial, 4);
  EXPECT_EQ(a.ds_dim, 128);
  EXPECT_EQ(a.ds_hidden(), 1024);
  EXPECT_NO_THROW(a.validate());
}

TEST(ArchConfig, RejectsIllegalSizes) {
  ArchConfig a = ArchConfig::for_image_size(48);
  EXPECT_THROW(a.validate(), ConfigError);
  a = ArchConfig::for_image_size(8);
  EXPECT_THROW(a.validate(), ConfigError);
  a = ArchConfig::for_image_size(32);
  a.di_spatial = 4;
  EXPECT_THROW(a.validate(), ConfigError);
  a = ArchConfig::for_image_size(32);
  a.ds_dim = 0;
  EXPECT_THROW(a.validate(), ConfigError);
  EXPECT_THROW(build_bundle<float>(ArchConfig::for_image_size(24), 0), ConfigError);
}

TEST(ArchConfig, Size32GivesSpatialTwo) {
  const ArchConfig a = ArchConfig::for_image_size(32);
  EXPECT_EQ(a.di_spatial, 2);
  EXPECT_NO_THROW(build_bundle<float>(small_arch(32), 1));
}

TEST(BuildBundle, DefaultArchFeatureShapes) {
  // Full default architecture; one image keeps this quick.
  const ArchConfig a;
  const auto b = build_bundle<float>(a, 0);
  const auto f = encode(b, Domain::A, Tensor<float>(a.image_shape(1)));
  EXPECT_EQ(f.di.shape(), (Shape{1, 256, 4, 4}));
  EXPECT_EQ(f.ds.shape(), (Shape{1, 128, 1, 1}));
  EXPECT_TRUE(f.di.all_finite());
  EXPECT_TRUE(f.ds.all_finite());
  const auto y = decode(b, Domain::B, f.di, f.ds);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 64, 64}));
}

TEST(BuildBundle, SameSeedSameParameters) {
  const auto a = build_bundle<float>(small_arch(16), 42);
  const auto b = build_bundle<float>(small_arch(16), 42);
  std::vector<Tensor<float>> ta;
  std::vector<Tensor<float>> tb;
  visit_tensors(a, [&](const std::string&, const Tensor<float>& t, Group, TensorKind) { ta.push_back(t); });
  visit_tensors(b, [&](const std::string&, const Tensor<float>& t, Group, TensorKind) { tb.push_back(t); });
  EXPECT_EQ(ta, tb);
}

TEST(BuildBundle, DifferentSeedsSameParameterCount) {
  const auto a = build_bundle<float>(small_arch(32), 1);
  const auto b = build_bundle<float>(small_arch(32), 2);
  EXPECT_EQ(parameter_count(a), parameter_count(b));
  EXPECT_NE(a.e_A.conv1.weight, b.e_A.conv1.weight);
}

TEST(BuildBundle, BatchNormPlacement) {
  // First layer of every network and each output layer carry a bias and no
  // normalization; every other conv/deconv is normalized.
  const auto b = build_bundle<float>(small_arch(16), 3);
  EXPECT_FALSE(b.e_A.conv1.bias.empty());
  EXPECT_TRUE(b.e_A.conv2.bias.empty());
  EXPECT_TRUE(b.e_A.conv3.bias.empty());
  EXPECT_TRUE(b.e_A.di_conv.bias.empty());
  EXPECT_FALSE(b.g_A.deconv1.bias.empty());
  EXPECT_TRUE(b.g_A.deconv2.bias.empty());
  EXPECT_TRUE(b.g_A.deconv3.bias.empty());
  EXPECT_FALSE(b.g_A.deconv4.bias.empty());
  EXPECT_FALSE(b.d_A.conv1.bias.empty());
  EXPECT_TRUE(b.d_A.conv4.bias.empty());
}

TEST(BuildBundle, ChannelProgression) {
  const ArchConfig a = small_arch(32);
  const auto b = build_bundle<float>(a, 4);
  EXPECT_EQ(b.e_A.conv1.weight.shape(), (Shape{8, 3, 4, 4}));
  EXPECT_EQ(b.e_A.conv3.weight.shape(), (Shape{32, 16, 4, 4}));
  EXPECT_EQ(b.e_A.di_conv.weight.shape(), (Shape{16, 32, 4, 4}));
  EXPECT_EQ(b.e_A.ds_fc1.weight.shape(), (Shape{128, 32 * 4 * 4, 1, 1}));
  EXPECT_EQ(b.e_A.ds_fc2.weight.shape(), (Shape{6, 128, 1, 1}));
  EXPECT_EQ(b.g_B.deconv1.weight.shape(), (Shape{16 + 6, 32, 4, 4}));
  EXPECT_EQ(b.g_B.deconv4.weight.shape(), (Shape{8, 3, 4, 4}));
  EXPECT_EQ(b.d_B.conv4.weight.shape(), (Shape{64, 32, 4, 4}));
  EXPECT_EQ(b.d_B.fc1.weight.shape(), (Shape{64, 64 * 2 * 2, 1, 1}));
}

TEST(BuildBundle, TensorNamesAreUniqueAndGrouped) {
  const auto b = build_bundle<float>(tiny_arch(), 0);
  std::set<std::string> names;
  int buffers = 0;
  visit_tensors(b, [&](const std::string& name, const Tensor<float>&, Group g, TensorKind k) {
    EXPECT_TRUE(names.insert(name).second) << name;
    EXPECT_EQ(name.substr(0, 4), std::string(group_name(g)) + ".");
    buffers += k == TensorKind::Buffer ? 1 : 0;
  });
  // Running mean and variance for 3 + 2 + 3 normalized layers, twice.
  EXPECT_EQ(buffers, 2 * 2 * (3 + 2 + 3));
}

TEST(Encode, ZeroImageFiniteAndShaped) {
  const ArchConfig a = small_arch(32);
  const auto b = build_bundle<float>(a, 5);
  const auto f = encode(b, Domain::B, Tensor<float>(a.image_shape(2)));
  EXPECT_EQ(f.di.shape(), a.di_shape(2));
  EXPECT_EQ(f.ds.shape(), a.ds_shape(2));
  EXPECT_TRUE(f.di.all_finite() && f.ds.all_finite());
}

TEST(Encode, BatchInvariantInEvaluationMode) {
  const ArchConfig a = small_arch(32);
  const auto b = build_bundle<float>(a, 6);
  const auto x = random_tensor<float>(a.image_shape(4), 7);
  const auto all = encode(b, Domain::A, x);
  for (int k = 0; k < 4; ++k) {
    const auto one = encode(b, Domain::A, x.slice_batch(k, 1));
    EXPECT_LT(max_abs_diff(one.di, all.di.slice_batch(k, 1)), 1e-5);
    EXPECT_LT(max_abs_diff(one.ds, all.ds.slice_batch(k, 1)), 1e-5);
  }
}

TEST(Encode, DeterministicInEvaluationMode) {
  const ArchConfig a = small_arch(16);
  const auto b = build_bundle<float>(a, 8);
  const auto x = random_tensor<float>(a.image_shape(2), 9);
  const auto f1 = encode(b, Domain::A, x);
  const auto f2 = encode(b, Domain::A, x);
  EXPECT_EQ(f1.di, f2.di);
  EXPECT_EQ(f1.ds, f2.ds);
}

TEST(Encode, RejectsWrongShape) {
  const ArchConfig a = small_arch(32);
  const auto b = build_bundle<float>(a, 10);
  EXPECT_THROW(encode(b, Domain::A, Tensor<float>(Shape{1, 3, 16, 16})), InputError);
  EXPECT_THROW(encode(b, Domain::A, Tensor<float>(Shape{1, 1, 32, 32})), InputError);
}

TEST(Decode, ZeroInputsGiveOpenRangeImage) {
  const ArchConfig a = small_arch(32);
  const auto b = build_bundle<float>(a, 11);
  const auto y = decode(b, Domain::A, Tensor<float>(a.di_shape(2)), Tensor<float>(a.ds_shape(2)));
  EXPECT_EQ(y.shape(), a.image_shape(2));
  EXPECT_TRUE(all_in_open_interval(y, -1.0f, 1.0f));
}

TEST(Decode, RoundTripShape) {
  const ArchConfig a = small_arch(16);
  const auto b = build_bundle<float>(a, 12);
  const auto x = random_tensor<float>(a.image_shape(3), 13);
  const auto f = encode(b, Domain::A, x);
  EXPECT_EQ(decode(b, Domain::A, f.di, f.ds).shape(), x.shape());
}

TEST(Decode, RejectsMismatchedFeatures) {
  const ArchConfig a = small_arch(32);
  const auto b = build_bundle<float>(a, 14);
  EXPECT_THROW(decode(b, Domain::A, Tensor<float>(a.di_shape(2)), Tensor<float>(a.ds_shape(3))), InputError);
  EXPECT_THROW(decode(b, Domain::A, Tensor<float>(Shape{2, 16, 4, 4}), Tensor<float>(a.ds_shape(2))), InputError);
}

TEST(Discriminate, ProbabilitiesPerSample) {
  const ArchConfig a = small_arch(32);
  const auto b = build_bundle<float>(a, 15);
  const auto x = random_tensor<float>(a.image_shape(5), 16);
  const auto p = discriminate(b, Domain::B, x);
  EXPECT_EQ(p.shape(), (Shape{5, 1, 1, 1}));
  EXPECT_TRUE(all_in_open_interval(p, 0.0f, 1.0f));
  EXPECT_EQ(p, discriminate(b, Domain::B, x));
  EXPECT_THROW(discriminate(b, Domain::B, Tensor<float>(Shape{1, 3, 16, 16})), InputError);
}

TEST(Discriminate, ExtremeInputsStayInsideOpenInterval) {
  const ArchConfig a = small_arch(16);
  const auto b = build_bundle<float>(a, 17);
  for (float v : {-1.0f, 1.0f}) {
    const auto p = discriminate(b, Domain::A, Tensor<float>(a.image_shape(2), v));
    EXPECT_TRUE(all_in_open_interval(p, 0.0f, 1.0f));
  }
}

TEST(TrainingForward, UpdatesRunningStatistics) {
  const ArchConfig a = small_arch(16);
  auto b = build_bundle<float>(a, 18);
  const auto before = b.e_A.bn2.running_mean;
  Graph<float> g(true);
  (void)encode(g, b, Domain::A, g.constant(random_tensor<float>(a.image_shape(4), 19)));
  EXPECT_NE(b.e_A.bn2.running_mean, before);
  EXPECT_EQ(b.e_B.bn2.running_mean, before);
}

TEST(TrainingForward, ConstBundleRejected) {
  const ArchConfig a = small_arch(16);
  const auto b = build_bundle<float>(a, 20);
  Graph<float> g(true);
  EXPECT_ANY_THROW((void)encode(g, b, Domain::A, g.constant(Tensor<float>(a.image_shape(2)))));
}
