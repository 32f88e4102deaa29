#pragma once

// Patchwise label fusion with a bilateral weight, late aggregation of the
// per-(scale, feature) estimator maps, and the final 0.5 threshold.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opal/errors.hpp"
#include "opal/features.hpp"
#include "opal/library.hpp"
#include "opal/parallel.hpp"
#include "opal/patchmatch.hpp"
#include "opal/rng.hpp"
#include "opal/roi.hpp"
#include "opal/ssd.hpp"
#include "opal/volume.hpp"

namespace opal {

struct FusionParams {
  double alpha = 2.0;
  double sigma = 2.0;
  double epsilon = 1e-6;

  void validate() const {
    if (!(alpha > 0.0) || !(sigma > 0.0) || !(epsilon > 0.0) || !std::isfinite(alpha) || !std::isfinite(sigma) ||
        !std::isfinite(epsilon)) {
      throw ContractError("fusion parameters alpha, sigma, epsilon must be finite and > 0");
    }
  }
};

/// Per-voxel label estimate in [0, 1] with the number of patch contributions received.
struct EstimatorMap {
  Dims dims{};
  Spacing spacing{};
  std::vector<double> values;
  std::vector<std::uint32_t> coverage;

  EstimatorMap() = default;
  EstimatorMap(Dims d, Spacing s) : dims(d), spacing(s), values(d.count(), 0.0), coverage(d.count(), 0) {}

  Volume3 to_volume() const {
    std::vector<float> v(values.begin(), values.end());
    return Volume3(dims, spacing, std::move(v));
  }

  friend bool operator==(const EstimatorMap&, const EstimatorMap&) = default;
};

struct MultiEstimatorConfig {
  std::vector<PatchGeometry> scales{PatchGeometry(3), PatchGeometry(5)};
  std::vector<FeatureKind> features{FeatureKind::Intensity, FeatureKind::GradientNorm};

  std::size_t estimator_count() const { return scales.size() * features.size(); }
  int max_radius() const { return scales.empty() ? 0 : scales.back().radius(); }

  void validate() const {
    if (scales.empty()) throw ContractError("at least one patch scale is required");
    for (std::size_t i = 1; i < scales.size(); ++i) {
      if (scales[i].size() <= scales[i - 1].size()) throw ContractError("patch scales must be strictly increasing");
    }
    check_feature_list(features);
  }
};

/// h^2 = alpha^2 (min dist + epsilon).
inline double compute_h_squared(std::span<const double> dists, const FusionParams& p) {
  if (dists.empty()) throw ContractError("compute_h_squared: no distances");
  return p.alpha * p.alpha * (*std::min_element(dists.begin(), dists.end()) + p.epsilon);
}

/// exp(1 - (ssd / h2 + spatial / sigma^2)).
inline double bilateral_weight(double ssd, double h2, double spatial, const FusionParams& p) {
  if (!(h2 > 0.0)) throw ContractError("bilateral_weight: h2 must be > 0");
  return std::exp(1.0 - (ssd / h2 + spatial / (p.sigma * p.sigma)));
}

/// Label fusion of a k-ANN field: each ROI voxel's s^3 label patch is the
/// weight-normalized combination of its matches' label patches; every voxel then
/// takes the plain mean of all patch values that cover it.
inline EstimatorMap patchwise_fuse(const AnnField& field, std::span<const LabelMap* const> labels,
                                   const RoiMask& roi, const PatchGeometry& g, const FusionParams& params) {
  params.validate();
  if (!(field.geometry() == g)) {
    throw ContractError("patchwise_fuse: field built with patch size " + std::to_string(field.geometry().size()) +
                        ", fusing with " + std::to_string(g.size()));
  }
  if (roi.dims() != field.dims() || roi_voxels(roi) != field.voxels()) {
    throw ContractError("patchwise_fuse: field does not cover the given ROI");
  }
  for (const LabelMap* l : labels) {
    if (l == nullptr || l->dims() != field.dims()) throw ContractError("patchwise_fuse: label map dims mismatch");
  }

  const Dims& d = field.dims();
  const int r = g.radius();
  const std::size_t k = static_cast<std::size_t>(field.k());
  const double inv_sigma2 = 1.0 / (params.sigma * params.sigma);

  std::vector<double> sum(d.count(), 0.0);
  std::vector<std::uint32_t> cover(d.count(), 0);
  std::vector<double> dists(k), weights(k);
  std::vector<const std::uint8_t*> label_data(k);

  for (std::size_t i = 0; i < field.size(); ++i) {
    const Index3 x = d.unravel(field.voxels()[i]);
    const auto ms = field.matches(i);
    for (std::size_t j = 0; j < k; ++j) {
      if (ms[j].t < 0 || static_cast<std::size_t>(ms[j].t) >= labels.size()) {
        throw ContractError("patchwise_fuse: match refers to template " + std::to_string(ms[j].t));
      }
      if (!patch_in_bounds(d, ms[j].pos, g)) throw ContractError("patchwise_fuse: match patch out of bounds");
      dists[j] = ms[j].dist.value();
    }
    const double h2 = compute_h_squared(dists, params);
    // Weights are only used as ratios; shifting every exponent by the largest
    // keeps them representable without changing the normalized patch.
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      weights[j] = 1.0 - (dists[j] / h2 + euclidean_voxel_distance(x, ms[j].pos) * inv_sigma2);
      top = std::max(top, weights[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      weights[j] = std::exp(weights[j] - top);
      total += weights[j];
      label_data[j] = labels[static_cast<std::size_t>(ms[j].t)]->data();
    }

    for (int dz = -r; dz <= r; ++dz) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const Index3 o{dx, dy, dz};
          double acc = 0.0;
          for (std::size_t j = 0; j < k; ++j) {
            if (label_data[j][d.linear(ms[j].pos + o)]) acc += weights[j];
          }
          const std::size_t target = d.linear(x + o);
          sum[target] += acc / total;
          cover[target] += 1;
        }
      }
    }
  }

  EstimatorMap out(d, roi.spacing());
  for (std::size_t v = 0; v < sum.size(); ++v) {
    if (cover[v] == 0) continue;
    out.values[v] = std::clamp(sum[v] / cover[v], 0.0, 1.0);
    out.coverage[v] = cover[v];
  }
  return out;
}

namespace detail {

inline void two_sum(double a, double b, double& s, double& err) {
  s = a + b;
  const double bb = s - a;
  err = (a - (s - bb)) + (b - bb);
}

/// Mean of `xs`, independent of their order: sorted, summed with an error-free
/// transformation, and divided with a remainder correction.
inline double stable_mean(std::span<double> xs) {
  std::sort(xs.begin(), xs.end());
  double hi = 0.0, lo = 0.0;
  for (double x : xs) {
    double e = 0.0;
    two_sum(hi, x, hi, e);
    lo += e;
  }
  const double n = static_cast<double>(xs.size());
  const double q = hi / n;
  const double rem = std::fma(-q, n, hi) + lo;
  return q + rem / n;
}

}  // namespace detail

/// Voxelwise mean of N estimator maps; coverage is the minimum over inputs.
inline EstimatorMap late_fuse(std::span<const EstimatorMap> maps) {
  if (maps.empty()) throw ContractError("late_fuse: no estimator maps");
  const auto& ref = maps.front();
  for (const auto& m : maps) {
    if (m.dims != ref.dims || m.values.size() != ref.dims.count()) {
      throw ContractError("late_fuse: estimator maps differ in dims");
    }
  }
  EstimatorMap out(ref.dims, ref.spacing);
  std::vector<double> column(maps.size());
  for (std::size_t v = 0; v < out.values.size(); ++v) {
    std::uint32_t cov = std::numeric_limits<std::uint32_t>::max();
    for (std::size_t i = 0; i < maps.size(); ++i) {
      column[i] = maps[i].values[v];
      cov = std::min(cov, maps[i].coverage[v]);
    }
    out.values[v] = detail::stable_mean(column);
    out.coverage[v] = cov;
  }
  return out;
}

/// 1 where F >= 0.5.
inline LabelMap threshold_decision(const EstimatorMap& f) {
  std::vector<std::uint8_t> out(f.values.size());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = f.values[v] >= 0.5 ? 1 : 0;
  return LabelMap(f.dims, f.spacing, std::move(out));
}

/// Seed of the (scale, feature) search, so estimators draw independent streams.
inline std::uint64_t estimator_seed(std::uint64_t seed, const PatchGeometry& scale, FeatureKind feature) {
  return derive_seed(seed, static_cast<std::uint64_t>(scale.size()) * 2 + static_cast<std::uint64_t>(feature),
                     "estimator");
}

struct SegmentOptions {
  unsigned threads = 1;
  bool keep_fields = false;
};

struct StageTimings {
  double features = 0.0;
  double ann_search = 0.0;
  double fusion = 0.0;
  double aggregation = 0.0;
  double total = 0.0;
};

struct EstimatorResult {
  PatchGeometry scale;
  FeatureKind feature;
  std::uint64_t seed;
  EstimatorMap map;
  std::optional<AnnField> field;
};

struct SegmentResult {
  LabelMap labels;
  EstimatorMap estimator;
  std::vector<EstimatorResult> estimators;
  StageTimings timings;
};

namespace detail {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, e.what());
  }
}

}  // namespace detail

/// Full pipeline on a library whose feature channels are already derived.
inline SegmentResult segment(const Volume3& subject, const FeatureLibrary& library, const RoiMask& roi,
                             const MultiEstimatorConfig& cfg, const OpmParams& opm, const FusionParams& fus,
                             const SegmentOptions& options = {}) {
  cfg.validate();
  opm.validate();
  fus.validate();
  if (library.size() == 0) throw ContractError("segment: template library is empty");
  if (library.dims() != subject.dims()) throw ContractError("segment: subject and library dims differ");
  for (auto f : cfg.features) {
    if (!library.has(f)) throw ContractError("segment: library lacks feature '" + to_string(f) + "'");
  }
  detail::run_stage("roi", [&] {
    check_roi(roi, subject.dims(), cfg.scales.back());
    return 0;
  });

  detail::Stopwatch total;
  detail::Stopwatch watch;
  SegmentResult result;

  const auto subject_features = detail::run_stage("features", [&] { return derive_features(subject, cfg.features); });
  result.timings.features = watch.lap();

  // One estimator per (scale, feature), scale-major.
  const std::size_t n_est = cfg.estimator_count();
  const std::size_t nf = cfg.features.size();
  const std::size_t k = static_cast<std::size_t>(opm.k);
  std::vector<std::vector<const Volume3*>> channels(nf);
  for (std::size_t f = 0; f < nf; ++f) channels[f] = library.channel(cfg.features[f]);
  const auto voxels = roi_voxels(roi);

  std::vector<AnnField> fields;
  std::vector<OpmParams> est_params(n_est, opm);
  for (std::size_t e = 0; e < n_est; ++e) {
    const auto& g = cfg.scales[e / nf];
    est_params[e].seed = estimator_seed(opm.seed, g, cfg.features[e % nf]);
    fields.emplace_back(subject.dims(), g, opm.k, voxels);
  }

  detail::run_stage("ann_search", [&] {
    parallel_for(n_est * k, options.threads, [&](std::size_t job) {
      const std::size_t e = job / k;
      const std::size_t run = job % k;
      const std::size_t f = e % nf;
      fields[e].set_column(run, run_opm(subject_features[f], channels[f], roi, cfg.scales[e / nf], est_params[e], run));
    });
    return 0;
  });
  result.timings.ann_search = watch.lap();

  const auto labels = library.labels();
  std::vector<EstimatorMap> maps(n_est);
  detail::run_stage("fusion", [&] {
    parallel_for(n_est, options.threads, [&](std::size_t e) {
      maps[e] = patchwise_fuse(fields[e], labels, roi, cfg.scales[e / nf], fus);
    });
    return 0;
  });
  result.timings.fusion = watch.lap();

  detail::run_stage("aggregation", [&] {
    result.estimator = late_fuse(maps);
    result.labels = threshold_decision(result.estimator);
    return 0;
  });
  result.timings.aggregation = watch.lap();

  for (std::size_t e = 0; e < n_est; ++e) {
    result.estimators.push_back(EstimatorResult{cfg.scales[e / nf], cfg.features[e % nf], est_params[e].seed,
                                                std::move(maps[e]),
                                                options.keep_fields ? std::optional(std::move(fields[e])) : std::nullopt});
  }
  result.timings.total = total.lap();
  return result;
}

/// Convenience overload: derives the template feature channels first.
inline SegmentResult segment(const Volume3& subject, const TemplateLibrary& library, const RoiMask& roi,
                             const MultiEstimatorConfig& cfg, const OpmParams& opm, const FusionParams& fus,
                             const SegmentOptions& options = {}) {
  cfg.validate();
  detail::Stopwatch watch;
  const FeatureLibrary features(library, cfg.features, options.threads);
  const double t = watch.lap();
  auto result = segment(subject, features, roi, cfg, opm, fus, options);
  result.timings.features += t;
  result.timings.total += t;
  return result;
}

}  // namespace opal
