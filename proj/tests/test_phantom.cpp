#include <gtest/gtest.h>

#include <filesystem>

#include "opal/eval.hpp"
#include "opal/phantom.hpp"
#include "oracles.hpp"

using namespace opal;

namespace {

std::vector<std::uint8_t> as_vector(const LabelMap& m) { return {m.values().begin(), m.values().end()}; }

}  // namespace

TEST(Phantom, NoVariationGivesIdenticalSubjects) {
  PhantomSpec s;
  s.dims = {24, 24, 24};
  s.semi_axes = {6, 5, 4};
  s.n_subjects = 2;
  s.amplitude = 0.0;
  s.noise_std = 0.0;
  const auto lib = generate_library(s);
  EXPECT_EQ(*lib[0].labels, *lib[1].labels);
  EXPECT_EQ(*lib[0].image, *lib[1].image);
}

TEST(Phantom, UndeformedLabelIsAnalyticEllipsoid) {
  PhantomSpec s;
  s.dims = {30, 26, 22};
  s.semi_axes = {8.5, 6.0, 4.5};
  s.amplitude = 0.0;
  const auto l = phantom_labels(s, 0);
  for (std::size_t i = 0; i < l.size(); ++i) {
    const Index3 p = s.dims.unravel(i);
    const double qx = (p.x - 14.5) / 8.5, qy = (p.y - 12.5) / 6.0, qz = (p.z - 10.5) / 4.5;
    EXPECT_EQ(l[i], qx * qx + qy * qy + qz * qz <= 1.0 ? 1 : 0) << to_string(p);
  }
}

TEST(Phantom, DeterministicPerSeedAndIndex) {
  PhantomSpec s;
  s.dims = {32, 32, 32};
  s.n_subjects = 3;
  s = fit_semi_axes(s);
  const auto a = generate_library(s, 1);
  const auto b = generate_library(s, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(encode(*a[i].image), encode(*b[i].image));
    EXPECT_EQ(*a[i].labels, *b[i].labels);
  }
  EXPECT_NE(*a[0].labels, *a[1].labels);
  // Subject i does not depend on how many subjects are generated.
  s.n_subjects = 1;
  EXPECT_EQ(*generate_library(s)[0].image, *a[0].image);
  s.seed = 2;
  EXPECT_NE(*generate_library(s)[0].labels, *a[0].labels);
}

TEST(Phantom, DefaultCohortShape) {
  const PhantomSpec spec;
  const auto lib = generate_library(spec);
  ASSERT_EQ(lib.size(), 20u);
  const double pi = 3.14159265358979323846;
  const double analytic = 4.0 / 3.0 * pi * spec.semi_axes[0] * spec.semi_axes[1] * spec.semi_axes[2];
  double lo = 1.0, hi = 0.0;
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const auto& l = *lib[i].labels;
    EXPECT_EQ(oracle::components(spec.dims, as_vector(l)), 1) << lib[i].id;
    EXPECT_NEAR(static_cast<double>(count_nonzero(l)), analytic, 0.2 * analytic) << lib[i].id;
    // Foreground keeps the face margin required by patch search.
    for (std::size_t v = 0; v < l.size(); ++v) {
      if (l[v]) {
        ASSERT_GE(spec.dims.face_distance(spec.dims.unravel(v)), spec.max_patch_radius + 2);
      }
    }
    for (std::size_t j = i + 1; j < lib.size(); ++j) {
      const double d = dice(l, *lib[j].labels);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  }
  // Measured on this cohort: 0.8416 .. 0.9496.
  EXPECT_GE(lo, 0.80);
  EXPECT_LE(hi, 0.98);
}

TEST(Phantom, ImageStatistics) {
  PhantomSpec s;
  s.dims = {32, 32, 32};
  s.n_subjects = 1;
  s = fit_semi_axes(s);
  const auto l = phantom_labels(s, 0);
  const auto img = phantom_image(s, 0, l);
  // Deep background is pure noise: mean ~0, std ~0.05.
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (s.dims.face_distance(s.dims.unravel(i)) > 2) continue;
    sum += img[i];
    sq += static_cast<double>(img[i]) * img[i];
    ++n;
  }
  const double mean = sum / static_cast<double>(n);
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n) - mean * mean), 0.05, 0.005);
  // Ellipsoid centre is foreground after blur.
  EXPECT_NEAR(img.at({15, 15, 15}), 1.0, 0.25);
}

TEST(Phantom, BlurKernelIsOneTwoOne) {
  const Dims d{5, 1, 1};
  const auto out = detail::blur_121({0, 0, 4, 0, 0}, d);
  EXPECT_EQ(out, (std::vector<float>{0, 1, 2, 1, 0}));
  const auto edge = detail::blur_121({4, 0, 0, 0, 0}, d);
  EXPECT_EQ(edge, (std::vector<float>{3, 1, 0, 0, 0}));
}

TEST(Phantom, SpecValidation) {
  PhantomSpec s;
  s.dims = {32, 32, 32};
  EXPECT_THROW(s.validate(), ContractError);  // default axes need 48^3
  EXPECT_NO_THROW(fit_semi_axes(s).validate());
  s = {};
  s.n_subjects = 0;
  EXPECT_THROW(s.validate(), ContractError);
  s = {};
  s.noise_std = -1;
  EXPECT_THROW(s.validate(), ContractError);
}

TEST(Phantom, WriteCohortRoundTrips) {
  PhantomSpec s;
  s.dims = {20, 20, 20};
  s.n_subjects = 2;
  s = fit_semi_axes(s);
  const auto lib = generate_library(s);
  const auto dir = std::filesystem::temp_directory_path() / "opal_test_cohort";
  std::filesystem::remove_all(dir);
  write_cohort(dir, lib, describe(s));
  const auto back = read_library(dir / "cohort.meta");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].id, lib[i].id);
    EXPECT_EQ(*back[i].image, *lib[i].image);
    EXPECT_EQ(*back[i].labels, *lib[i].labels);
  }
  std::filesystem::remove_all(dir);
}
