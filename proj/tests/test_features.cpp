#include <gtest/gtest.h>

#include "opal/features.hpp"
#include "oracles.hpp"

using namespace opal;

namespace {

template <typename F>
void for_interior(const Dims& d, F&& f) {
  for (int z = 1; z < d.nz - 1; ++z)
    for (int y = 1; y < d.ny - 1; ++y)
      for (int x = 1; x < d.nx - 1; ++x) f(Index3{x, y, z});
}

}  // namespace

TEST(GradientNorm, ConstantIsZero) {
  const Volume3 v({6, 5, 4}, {}, 3.5f);
  const auto grad = gradient_norm(v);
  for (float g : grad.values()) EXPECT_EQ(g, 0.0f);
}

TEST(GradientNorm, RampInteriorIsOne) {
  const Dims d{7, 6, 5};
  const auto v = oracle::volume_from(d, [](int x, int, int) { return x; });
  const auto g = gradient_norm(v);
  for_interior(d, [&](Index3 i) { EXPECT_EQ(g.at(i), 1.0f); });
  // One-sided differences on faces also see slope 1 along x.
  EXPECT_EQ(g.at({0, 2, 2}), 1.0f);
  EXPECT_EQ(g.at({6, 2, 2}), 1.0f);
}

TEST(GradientNorm, PlaneInteriorIsSeven) {
  const Dims d{6, 6, 6};
  const auto v = oracle::volume_from(d, [](int x, int y, int z) { return 2 * x + 3 * y + 6 * z; });
  const auto g = gradient_norm(v);
  for_interior(d, [&](Index3 i) { EXPECT_EQ(g.at(i), 7.0f); });
}

TEST(GradientNorm, NonNegativeAndShiftInvariant) {
  // Integer-valued volume so adding a constant is exact in float.
  const Dims d{9, 8, 7};
  std::mt19937 gen(3);
  std::uniform_int_distribution<int> dist(-50, 50);
  std::vector<float> base(d.count()), shifted(d.count());
  for (std::size_t i = 0; i < base.size(); ++i) {
    base[i] = static_cast<float>(dist(gen));
    shifted[i] = base[i] + 1000.0f;
  }
  const auto g0 = gradient_norm(Volume3(d, {}, base));
  const auto g1 = gradient_norm(Volume3(d, {}, shifted));
  EXPECT_EQ(g0, g1);
  for (float g : g0.values()) EXPECT_GE(g, 0.0f);
}

TEST(GradientNorm, FlatAxisContributesNothing) {
  const auto v = oracle::volume_from({5, 1, 1}, [](int x, int, int) { return x * x; });
  const auto g = gradient_norm(v);
  EXPECT_EQ(g.at({2, 0, 0}), 4.0f);  // (9 - 1) / 2
  EXPECT_EQ(g.at({0, 0, 0}), 1.0f);
}

TEST(DeriveFeatures, KindsAndShapes) {
  const Volume3 c({5, 5, 5}, {1.0, 2.0, 3.0}, 2.0f);
  const auto one = derive_features(c, {FeatureKind::Intensity});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], c);

  const auto two = derive_features(c, {FeatureKind::Intensity, FeatureKind::GradientNorm});
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0], c);
  EXPECT_EQ(two[1], Volume3(c.dims(), c.spacing(), 0.0f));

  const auto ramp = oracle::volume_from({6, 6, 6}, [](int x, int, int) { return x; });
  const auto g = derive_features(ramp, {FeatureKind::GradientNorm});
  for_interior(ramp.dims(), [&](Index3 i) { EXPECT_EQ(g[0].at(i), 1.0f); });
  EXPECT_EQ(g[0].spacing(), ramp.spacing());
}

TEST(DeriveFeatures, RejectsEmptyOrDuplicateLists) {
  const Volume3 c({3, 3, 3});
  EXPECT_THROW(derive_features(c, {}), ContractError);
  EXPECT_THROW(derive_features(c, {FeatureKind::GradientNorm, FeatureKind::GradientNorm}), ContractError);
}

TEST(FeatureNames, ExactLowercaseStrings) {
  EXPECT_EQ(parse_feature("intensity"), FeatureKind::Intensity);
  EXPECT_EQ(parse_feature("gradnorm"), FeatureKind::GradientNorm);
  EXPECT_EQ(to_string(FeatureKind::GradientNorm), "gradnorm");
  EXPECT_THROW(parse_feature("Intensity"), ConfigError);
  EXPECT_THROW(parse_feature("gradient"), ConfigError);
}

TEST(FeatureLibrary, SharesIntensityAndCachesGradients) {
  TemplateLibrary lib;
  lib.add("a", oracle::volume_from({5, 5, 5}, [](int x, int, int) { return x; }), LabelMap({5, 5, 5}));
  lib.add("b", Volume3({5, 5, 5}, {}, 1.0f), LabelMap({5, 5, 5}));
  const FeatureLibrary f(lib, {FeatureKind::Intensity, FeatureKind::GradientNorm}, 2);
  const auto intensity = f.channel(FeatureKind::Intensity);
  EXPECT_EQ(intensity[0], lib[0].image.get());
  const auto grad = f.channel(FeatureKind::GradientNorm);
  EXPECT_EQ(grad[0]->at({2, 2, 2}), 1.0f);
  EXPECT_EQ(grad[1]->at({2, 2, 2}), 0.0f);
  const auto sub = f.without(0);
  ASSERT_EQ(sub.size(), 1u);
  EXPECT_EQ(sub.channel(FeatureKind::GradientNorm)[0], grad[1]);
  const FeatureLibrary only(lib, {FeatureKind::Intensity});
  EXPECT_THROW(only.channel(FeatureKind::GradientNorm), ContractError);
}
