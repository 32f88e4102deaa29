#include <gtest/gtest.h>

#include <random>

#include "opal/eval.hpp"
#include "opal/phantom.hpp"
#include "oracles.hpp"

using namespace opal;

namespace {

LabelMap mask_from(Dims d, const std::vector<std::size_t>& on) {
  LabelMap m(d);
  for (auto i : on) m.set(d.unravel(i), 1);
  return m;
}

PhantomSpec small_spec(int n) {
  PhantomSpec s;
  s.dims = {24, 24, 24};
  s.n_subjects = n;
  s.semi_axes = {6.0, 5.0, 4.0};
  s.amplitude = 1.0;
  return s;
}

MultiEstimatorConfig small_cfg() {
  MultiEstimatorConfig c;
  c.scales = {PatchGeometry(3)};
  return c;
}

OpmParams small_opm() {
  OpmParams p;
  p.k = 3;
  p.seed = 4;
  return p;
}

}  // namespace

TEST(Dice, Examples) {
  const Dims d{10, 10, 10};
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < 100; ++i) a.push_back(i);
  for (std::size_t i = 20; i < 120; ++i) b.push_back(i);
  EXPECT_EQ(dice(mask_from(d, a), mask_from(d, a)), 1.0);
  EXPECT_EQ(dice(mask_from(d, a), mask_from(d, b)), 0.8);
  std::vector<std::size_t> c;
  for (std::size_t i = 500; i < 550; ++i) c.push_back(i);
  EXPECT_EQ(dice(mask_from(d, a), mask_from(d, c)), 0.0);
  EXPECT_EQ(dice(LabelMap(d), LabelMap(d)), 1.0);
  EXPECT_THROW(dice(LabelMap(d), LabelMap({10, 10, 9})), ContractError);
}

TEST(Dice, SymmetricAndBounded) {
  const Dims d{8, 8, 8};
  std::mt19937 gen(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> x(d.count()), y(d.count());
    for (auto& v : x) v = gen() % 3 == 0;
    for (auto& v : y) v = gen() % 2 == 0;
    const LabelMap a(d, {}, x), b(d, {}, y);
    EXPECT_EQ(dice(a, b), dice(b, a));
    EXPECT_GE(dice(a, b), 0.0);
    EXPECT_LE(dice(a, b), 1.0);
    EXPECT_EQ(dice(a, a), 1.0);
  }
}

TEST(StructureVolume, Examples) {
  EXPECT_EQ(structure_volume(LabelMap({4, 4, 4})), 0.0);
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < 100; ++i) on.push_back(i);
  const auto m = mask_from({10, 10, 10}, on);
  EXPECT_DOUBLE_EQ(structure_volume(m, {1.0, 1.0, 1.2}), 120.0);
  const LabelMap full({10, 10, 10}, {}, std::vector<std::uint8_t>(1000, 1));
  EXPECT_EQ(structure_volume(full), 1000.0);
}

TEST(Auc, Examples) {
  const std::vector<double> a{3, 4}, b{1, 2};
  EXPECT_EQ(auc(a, b), 1.0);
  EXPECT_EQ(auc(a, a), 0.5);
  const std::vector<double> c{1, 3}, e{2, 4};
  EXPECT_EQ(auc(c, e), 0.25);
  EXPECT_THROW(auc(std::vector<double>{}, a), ContractError);
}

TEST(Auc, AgreesWithPairOracleAndIsAntisymmetric) {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> u(0, 20);  // small range forces ties
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(1 + gen() % 12), b(1 + gen() % 12);
    for (auto& x : a) x = u(gen);
    for (auto& x : b) x = u(gen);
    EXPECT_DOUBLE_EQ(auc(a, b), oracle::auc_pairs(a, b));
    EXPECT_EQ(auc(a, b) + auc(b, a), 1.0);
  }
}

TEST(EvalReport, SummaryStatistics) {
  EvalReport r;
  r.subjects = {{"a", 0.9, 1.0, 0.1}, {"b", 0.7, 2.0, 0.1}, {"c", 0.8, 3.0, 0.1}, {"d", 1.0, 4.0, 0.1}};
  r.summarize();
  EXPECT_DOUBLE_EQ(r.median_dice, 0.85);
  EXPECT_DOUBLE_EQ(r.mean_dice, 0.85);
  EXPECT_NEAR(r.std_dice, std::sqrt(0.05 / 3.0), 1e-15);
  EXPECT_EQ(r.csv().substr(0, r.csv().find('\n')), "id,dice,volume_mm3,seconds");
  EXPECT_NE(r.summary_text().find("subjects=4\n"), std::string::npos);
}

TEST(LeaveOneOut, TwoIdenticalSubjectsScoreOne) {
  auto spec = small_spec(1);
  spec.amplitude = 0.0;
  spec.noise_std = 0.0;
  const auto one = generate_library(spec);
  TemplateLibrary cohort;
  cohort.add(Template{"x", one[0].image, one[0].labels});
  cohort.add(Template{"y", one[0].image, one[0].labels});
  const auto r = leave_one_out(cohort, MultiEstimatorConfig{}, small_opm(), FusionParams{});
  ASSERT_EQ(r.subjects.size(), 2u);
  for (const auto& s : r.subjects) EXPECT_EQ(s.dice, 1.0) << s.id;
  EXPECT_EQ(r.median_dice, 1.0);
}

TEST(LeaveOneOut, DeterministicAndRequiresTwoSubjects) {
  const auto lib = generate_library(small_spec(3));
  const auto a = leave_one_out(lib, small_cfg(), small_opm(), FusionParams{});
  const auto b = leave_one_out(lib, small_cfg(), small_opm(), FusionParams{}, {2, 5});
  EXPECT_EQ(a.summary_text(), b.summary_text());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.subjects[i].id, phantom_id(static_cast<int>(i)));
    EXPECT_EQ(a.subjects[i].dice, b.subjects[i].dice);
    EXPECT_EQ(a.subjects[i].volume_mm3, b.subjects[i].volume_mm3);
    EXPECT_GT(a.subjects[i].dice, 0.8);
  }
  EXPECT_THROW(leave_one_out(lib.without(0).without(0), small_cfg(), small_opm(), FusionParams{}), ContractError);
}

TEST(LeaveOneOut, SubjectSeedDependsOnIdOnly) {
  EXPECT_EQ(subject_seed(1, "subj_3"), subject_seed(1, "subj_3"));
  EXPECT_NE(subject_seed(1, "subj_3"), subject_seed(1, "subj_4"));
  EXPECT_NE(subject_seed(1, "subj_3"), subject_seed(2, "subj_3"));
}

TEST(ExtendLibrary, EmptyListLeavesLibraryUnchanged) {
  const auto lib = generate_library(small_spec(2));
  const auto out = extend_library(lib, std::span<const Volume3>{}, small_cfg(), small_opm(), FusionParams{});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].id, lib[1].id);
}

TEST(ExtendLibrary, CopyOfTemplateGetsItsLabelsOnRoi) {
  const auto lib = generate_library(small_spec(2));
  const std::vector<Volume3> extra{*lib[0].image};
  const auto out = extend_library(lib, extra, small_cfg(), small_opm(), FusionParams{});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[2].id, "auto_0");
  const auto roi = default_roi(lib.label_views(), 5, small_cfg().max_radius());
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < roi.size(); ++i) {
    if (roi[i]) mismatches += (*out[2].labels)[i] != (*lib[0].labels)[i];
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(ExtendLibrary, AppendedTemplatesAreSearched) {
  const auto base = generate_library(small_spec(4));
  const TemplateLibrary lib = base.without(3).without(2);
  const std::vector<Volume3> extra{*base[2].image};
  const auto ext = extend_library(lib, extra, small_cfg(), small_opm(), FusionParams{});
  ASSERT_EQ(ext.size(), 3u);
  // Segment the very volume that was appended: its own copy is the perfect match.
  const auto roi = default_roi(ext.label_views(), 5, 1);
  const auto res = segment(*base[2].image, ext, roi, small_cfg(), small_opm(), FusionParams{}, {1, true});
  std::size_t appended = 0;
  const auto& field = *res.estimators[0].field;
  for (std::size_t i = 0; i < field.size(); ++i) {
    for (const auto& m : field.matches(i)) appended += m.t >= static_cast<int>(lib.size());
  }
  EXPECT_GT(appended, field.size());
}

TEST(ExtendLibrary, AutoLabelsStayCloseToTruthInEitherOrder) {
  const auto base = generate_library(small_spec(4));
  const TemplateLibrary lib = base.without(3).without(2);
  const std::vector<Volume3> fwd{*base[2].image, *base[3].image};
  const std::vector<Volume3> rev{*base[3].image, *base[2].image};
  auto opm = small_opm();
  const auto a = extend_library(lib, fwd, small_cfg(), opm, FusionParams{});
  const auto b = extend_library(lib, rev, small_cfg(), opm, FusionParams{});
  // Seeds follow list position, so labels may differ slightly, but both stay close to truth.
  EXPECT_GT(dice(*a[2].labels, *base[2].labels), 0.85);
  EXPECT_GT(dice(*b[3].labels, *base[2].labels), 0.85);
  EXPECT_GT(dice(*a[3].labels, *base[3].labels), 0.85);
}
