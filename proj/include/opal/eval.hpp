#pragma once

// Overlap and volume metrics, group-separation AUC, the leave-one-out harness
// and library extension with automatic segmentations.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "opal/errors.hpp"
#include "opal/features.hpp"
#include "opal/fusion.hpp"
#include "opal/library.hpp"
#include "opal/rng.hpp"
#include "opal/roi.hpp"
#include "opal/volume.hpp"

namespace opal {

/// 2|A∩B| / (|A| + |B|); two empty masks score 1.
inline double dice(const LabelMap& a, const LabelMap& b) {
  if (a.dims() != b.dims()) {
    throw ContractError("dice: dims " + to_string(a.dims()) + " and " + to_string(b.dims()) + " differ");
  }
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
    both += a[i] & b[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

/// Foreground volume in mm^3.
inline double structure_volume(const LabelMap& m, const Spacing& spacing) {
  return static_cast<double>(count_nonzero(m)) * spacing.voxel_volume();
}
inline double structure_volume(const LabelMap& m) { return structure_volume(m, m.spacing()); }

/// Mann-Whitney AUC: P(a > b) + 0.5 P(a == b) over all pairs. Near 1 means
/// group A is larger.
inline double auc(std::span<const double> group_a, std::span<const double> group_b) {
  if (group_a.empty() || group_b.empty()) throw ContractError("auc: both groups must be non-empty");
  double wins = 0.0;
  for (double a : group_a) {
    for (double b : group_b) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(group_a.size()) * static_cast<double>(group_b.size()));
}

struct SubjectResult {
  std::string id;
  double dice = 0.0;
  double volume_mm3 = 0.0;
  double seconds = 0.0;
};

struct EvalReport {
  std::vector<SubjectResult> subjects;
  double median_dice = 0.0;
  double mean_dice = 0.0;
  double std_dice = 0.0;
  StageTimings timings;  // summed over subjects

  /// Fills the summary statistics from `subjects`.
  void summarize() {
    std::vector<double> d;
    for (const auto& s : subjects) d.push_back(s.dice);
    if (d.empty()) return;
    std::sort(d.begin(), d.end());
    const std::size_t n = d.size();
    median_dice = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
    mean_dice = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : d) ss += (x - mean_dice) * (x - mean_dice);
    std_dice = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  }

  /// Summary as `key=value` lines. Deterministic (no wall times).
  std::string summary_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "subjects=" << subjects.size() << '\n'
       << "median_dice=" << median_dice << '\n'
       << "mean_dice=" << mean_dice << '\n'
       << "std_dice=" << std_dice << '\n';
    return os.str();
  }

  std::string timings_text() const {
    std::ostringstream os;
    os << "features_seconds=" << timings.features << '\n'
       << "ann_search_seconds=" << timings.ann_search << '\n'
       << "fusion_seconds=" << timings.fusion << '\n'
       << "aggregation_seconds=" << timings.aggregation << '\n'
       << "total_seconds=" << timings.total << '\n';
    return os.str();
  }

  /// `id,dice,volume_mm3,seconds`.
  std::string csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "id,dice,volume_mm3,seconds\n";
    for (const auto& s : subjects) {
      os << s.id << ',' << s.dice << ',' << s.volume_mm3 << ',';
      os.precision(6);
      os << s.seconds << '\n';
      os.precision(17);
    }
    return os.str();
  }
};

struct EvalOptions {
  unsigned threads = 1;
  int roi_dilation = 5;
};

/// Seed used for subject `id` under base seed `seed`.
inline std::uint64_t subject_seed(std::uint64_t seed, const std::string& id) {
  return derive_seed(seed, fnv1a(id), "subject");
}

/// Segments subject `index` of `features` with every other template.
inline SegmentResult segment_left_out(const FeatureLibrary& features, std::size_t index,
                                      const MultiEstimatorConfig& cfg, const OpmParams& opm,
                                      const FusionParams& fus, const EvalOptions& options,
                                      const SegmentOptions& seg_options) {
  const FeatureLibrary lib = features.without(index);
  const auto labels = lib.labels();
  const RoiMask roi = default_roi(labels, options.roi_dilation, cfg.max_radius());
  OpmParams p = opm;
  p.seed = subject_seed(opm.seed, features[index].id);
  return segment(*features[index].image, lib, roi, cfg, p, fus, seg_options);
}

/// Leave-one-out Dice over a labelled cohort.
inline EvalReport leave_one_out(const TemplateLibrary& cohort, const MultiEstimatorConfig& cfg,
                                const OpmParams& opm, const FusionParams& fus, const EvalOptions& options = {}) {
  if (cohort.size() < 2) throw ContractError("leave_one_out: cohort needs at least 2 subjects");
  cfg.validate();
  opm.validate();
  fus.validate();
  const FeatureLibrary features(cohort, cfg.features, options.threads);
  EvalReport report;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    const auto res = segment_left_out(features, i, cfg, opm, fus, options, {options.threads, false});
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.subjects.push_back(
        {cohort[i].id, dice(res.labels, *cohort[i].labels), structure_volume(res.labels), seconds});
    report.timings.features += res.timings.features;
    report.timings.ann_search += res.timings.ann_search;
    report.timings.fusion += res.timings.fusion;
    report.timings.aggregation += res.timings.aggregation;
    report.timings.total += res.timings.total;
  }
  report.summarize();
  return report;
}

/// Segments each unlabeled volume with `library` and appends (image, automatic
/// labels). Every new volume is segmented with the original library, so the
/// result does not depend on the order of `unlabeled`.
inline TemplateLibrary extend_library(const TemplateLibrary& library, std::span<const Volume3> unlabeled,
                                      const MultiEstimatorConfig& cfg, const OpmParams& opm,
                                      const FusionParams& fus, const EvalOptions& options = {}) {
  TemplateLibrary out = library;
  if (unlabeled.empty()) return out;
  const FeatureLibrary features(library, cfg.features, options.threads);
  const RoiMask roi = default_roi(features.labels(), options.roi_dilation, cfg.max_radius());
  for (std::size_t j = 0; j < unlabeled.size(); ++j) {
    OpmParams p = opm;
    p.seed = derive_seed(opm.seed, j, "extend");
    auto res = segment(unlabeled[j], features, roi, cfg, p, fus, {options.threads, false});
    out.add("auto_" + std::to_string(j), unlabeled[j], std::move(res.labels));
  }
  return out;
}

}  // namespace opal
