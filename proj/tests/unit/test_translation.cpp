#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <utility>

#include "cdgan/translation.hpp"
#include "support/oracles.hpp"

using namespace cdgan;
using cdgan::testing::random_tensor;

namespace {

ArchConfig arch() {
  ArchConfig a = ArchConfig::for_image_size(16);
  a.base_width = 4;
  a.di_channels = 8;
  a.ds_dim = 5;
  return a;
}

bool in_open_unit(const Tensor<float>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > -1.0f && t[i] < 1.0f)) return false;
  }
  return true;
}

struct Fixture : ::testing::Test {
  ArchConfig a = arch();
  ModelBundle<float> b = build_bundle<float>(a, 3);
  Tensor<float> x_A = random_tensor<float>(a.image_shape(3), 1);
  Tensor<float> x_B = random_tensor<float>(a.image_shape(3), 2);
  Tensor<float> x_B2 = random_tensor<float>(a.image_shape(3), 4);
  Tensor<float> x_A2 = random_tensor<float>(a.image_shape(3), 5);
};

}  // namespace

using TranslateForward = Fixture;
using Reconstruct = Fixture;
using Ablate = Fixture;

TEST_F(TranslateForward, OutputsInRangeAndDeterministic) {
  const auto r1 = translate_forward(b, x_A, x_B);
  const auto r2 = translate_forward(b, x_A, x_B);
  EXPECT_TRUE(in_open_unit(r1.x_AB));
  EXPECT_TRUE(in_open_unit(r1.x_BA));
  EXPECT_EQ(r1.x_AB, r2.x_AB);
  EXPECT_EQ(r1.x_BA, r2.x_BA);
}

TEST_F(TranslateForward, MatchesComposedEncodersAndDecoders) {
  const auto r = translate_forward(b, x_A, x_B);
  const auto fa = encode(b, Domain::A, x_A);
  const auto fb = encode(b, Domain::B, x_B);
  EXPECT_EQ(r.x_AB, decode(b, Domain::B, fa.di, fb.ds));
  EXPECT_EQ(r.x_BA, decode(b, Domain::A, fb.di, fa.ds));
}

TEST_F(TranslateForward, SwappingConditionalKeepsSourceFeatureBitwise) {
  const auto r1 = translate_forward(b, x_A, x_B);
  const auto r2 = translate_forward(b, x_A, x_B2);
  EXPECT_EQ(r1.feat_A.di, r2.feat_A.di);
  EXPECT_NE(r1.feat_B.ds, r2.feat_B.ds);
  EXPECT_NE(r1.x_AB, r2.x_AB);
}

TEST_F(TranslateForward, AsymmetricReverseIgnoresSourceStyle) {
  TranslationOptions opt{Mode::AsymmetricAToB, true, ReconstructionStyle::Skip};
  const auto r1 = translate_forward(b, x_A, x_B, opt);
  const auto r2 = translate_forward(b, x_A2, x_B, opt);
  EXPECT_EQ(r1.x_BA, r2.x_BA);
  EXPECT_EQ(r1.x_BA, decode(b, Domain::A, encode(b, Domain::B, x_B).di, Tensor<float>(a.ds_shape(3))));
  EXPECT_NE(r1.x_AB, r2.x_AB);
}

TEST_F(TranslateForward, UnconditionalIgnoresConditional) {
  TranslationOptions opt{Mode::Symmetric, false, ReconstructionStyle::Skip};
  EXPECT_EQ(translate_forward(b, x_A, x_B, opt).x_AB, translate_forward(b, x_A, x_B2, opt).x_AB);
}

TEST_F(TranslateForward, BatchMismatchRejected) {
  EXPECT_THROW(translate_forward(b, x_A, x_B.slice_batch(0, 2)), InputError);
  EXPECT_THROW(translate(b, x_A, x_B.slice_batch(0, 2)), InputError);
}

TEST_F(TranslateForward, TouchesNoDiscriminatorParameters) {
  Graph<float> g(false);
  auto r = translate_forward(g, std::as_const(b), g.constant(x_A), g.constant(x_B), options_for(b));
  reconstruct(g, std::as_const(b), r, options_for(b));
  int used = 0;
  visit_tensors(b, [&](const std::string& name, const Tensor<float>& t, Group grp, TensorKind) {
    if ((mask_of(grp) & kDiscriminatorGroups) != 0) {
      EXPECT_FALSE(g.uses_param(t)) << name;
    } else {
      used += g.uses_param(t) ? 1 : 0;
    }
  });
  EXPECT_GT(used, 0);
}

TEST_F(TranslateForward, TranslateEqualsRecordField) {
  EXPECT_EQ(translate(b, x_A, x_B), translate_forward(b, x_A, x_B).x_AB);
}

TEST_F(Reconstruct, ShapesRangeAndDeterminism) {
  const auto r1 = dual_pass(b, x_A, x_B, options_for(b));
  const auto r2 = dual_pass(b, x_A, x_B, options_for(b));
  EXPECT_EQ(r1.x_hat_A.shape(), x_A.shape());
  EXPECT_EQ(r1.x_hat_B.shape(), x_B.shape());
  EXPECT_TRUE(in_open_unit(r1.x_hat_A) && in_open_unit(r1.x_hat_B));
  EXPECT_EQ(r1.x_hat_A, r2.x_hat_A);
  EXPECT_EQ(r1.feat_hat_AB.di, r2.feat_hat_AB.di);
}

TEST_F(Reconstruct, SkipConnectionDataflow) {
  const auto r = dual_pass(b, x_A, x_B, options_for(b));
  EXPECT_EQ(r.feat_hat_AB.di, encode(b, Domain::B, r.x_AB).di);
  EXPECT_EQ(r.feat_hat_BA.di, encode(b, Domain::A, r.x_BA).di);
  EXPECT_EQ(r.x_hat_A, decode(b, Domain::A, r.feat_hat_AB.di, r.feat_A.ds));
  EXPECT_EQ(r.x_hat_B, decode(b, Domain::B, r.feat_hat_BA.di, r.feat_B.ds));
}

TEST_F(Reconstruct, NeverReencodesOriginals) {
  // Poison everything reconstruct must not read; results must be unchanged.
  auto clean = translate_forward(b, x_A, x_B);
  auto poisoned = clean;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  poisoned.x_A.fill(nan);
  poisoned.x_B.fill(nan);
  poisoned.feat_A.di.fill(nan);
  poisoned.feat_B.di.fill(nan);
  reconstruct(b, clean, options_for(b));
  reconstruct(b, poisoned, options_for(b));
  EXPECT_EQ(clean.x_hat_A, poisoned.x_hat_A);
  EXPECT_EQ(clean.x_hat_B, poisoned.x_hat_B);

  // The original style vectors are read: changing one changes its output.
  auto sentinel = translate_forward(b, x_A, x_B);
  sentinel.feat_A.ds.fill(3.0f);
  reconstruct(b, sentinel, options_for(b));
  EXPECT_NE(sentinel.x_hat_A, clean.x_hat_A);
  EXPECT_EQ(sentinel.x_hat_B, clean.x_hat_B);
}

TEST_F(Reconstruct, ReencodedStyleDiffersInOneEdgePerSide) {
  const TranslationOptions opt{Mode::Symmetric, true, ReconstructionStyle::Reencoded};
  const auto r = dual_pass(b, x_A, x_B, opt);
  EXPECT_EQ(r.x_hat_A, decode(b, Domain::A, r.feat_hat_AB.di, r.feat_hat_BA.ds));
  EXPECT_EQ(r.x_hat_B, decode(b, Domain::B, r.feat_hat_BA.di, r.feat_hat_AB.ds));
  const auto skip = dual_pass(b, x_A, x_B, options_for(b));
  EXPECT_EQ(r.feat_hat_AB.di, skip.feat_hat_AB.di);
  EXPECT_NE(r.x_hat_A, skip.x_hat_A);
}

TEST_F(Reconstruct, DualGanCUsesBothOutputsOfOppositeEncoder) {
  const TranslationOptions opt{Mode::Symmetric, true, ReconstructionStyle::DualGanC};
  const auto r = dual_pass(b, x_A, x_B, opt);
  const auto e_b = encode(b, Domain::B, r.x_AB);
  const auto e_a = encode(b, Domain::A, r.x_BA);
  EXPECT_EQ(r.x_hat_A, decode(b, Domain::A, e_b.di, e_b.ds));
  EXPECT_EQ(r.x_hat_B, decode(b, Domain::B, e_a.di, e_a.ds));
}

TEST_F(Reconstruct, AsymmetricZeroesReverseStyle) {
  const TranslationOptions opt{Mode::AsymmetricAToB, true, ReconstructionStyle::Skip};
  const auto r = dual_pass(b, x_A, x_B, opt);
  EXPECT_EQ(r.x_hat_A, decode(b, Domain::A, r.feat_hat_AB.di, Tensor<float>(a.ds_shape(3))));
  EXPECT_EQ(r.x_hat_B, decode(b, Domain::B, r.feat_hat_BA.di, r.feat_B.ds));
}

TEST_F(Ablate, ZeroDomainIndependentIgnoresSource) {
  const auto y1 = ablate_generate(b, x_A, x_B, ZeroFeature::DomainIndependent);
  const auto y2 = ablate_generate(b, x_A2, x_B, ZeroFeature::DomainIndependent);
  EXPECT_EQ(y1, y2);
  EXPECT_TRUE(in_open_unit(y1));
  EXPECT_EQ(y1, decode(b, Domain::B, Tensor<float>(a.di_shape(3)), encode(b, Domain::B, x_B).ds));
}

TEST_F(Ablate, ZeroDomainSpecificIgnoresConditional) {
  const auto y1 = ablate_generate(b, x_A, x_B, ZeroFeature::DomainSpecific);
  const auto y2 = ablate_generate(b, x_A, x_B2, ZeroFeature::DomainSpecific);
  EXPECT_EQ(y1, y2);
  EXPECT_TRUE(in_open_unit(y1));
  EXPECT_EQ(y1, decode(b, Domain::B, encode(b, Domain::A, x_A).di, Tensor<float>(a.ds_shape(3))));
}
