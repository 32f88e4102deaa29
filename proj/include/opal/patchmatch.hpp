#pragma once

// Optimized PatchMatch over a template library.
//
// One OPM run keeps a single best match per ROI voxel:
//   1. constrained initialization: random template, random position inside
//      the init window centred on the voxel;
//   2. `iterations` scans alternating forward / reverse x-fastest order. At
//      each voxel the three already-visited axis neighbours propose their
//      match shifted by one voxel (scored with shifted_ssd), then a random
//      search samples the current best template in a window halving from the
//      init window down to radius 1.
// k independent runs, each on its own RNG stream, form the k-ANN field.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "opal/errors.hpp"
#include "opal/parallel.hpp"
#include "opal/rng.hpp"
#include "opal/ssd.hpp"
#include "opal/volume.hpp"

namespace opal {

inline constexpr const char* kScanOrder = "x-fastest-ascending/reverse";

struct Match {
  int t = 0;
  Index3 pos{};
  PatchDistance dist{};

  friend bool operator==(const Match&, const Match&) = default;
};

struct OpmParams {
  int init_window = 13;
  int iterations = 3;
  int k = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (init_window < 1 || init_window % 2 == 0) {
      throw ContractError("init_window must be odd and >= 1, got " + std::to_string(init_window));
    }
    if (iterations < 1) throw ContractError("iterations must be >= 1, got " + std::to_string(iterations));
    if (k < 1) throw ContractError("k must be >= 1, got " + std::to_string(k));
  }
};

enum class ScanDirection { Forward, Reverse };

using TemplateViews = std::span<const Volume3* const>;

/// Single best match per voxel, stored densely so neighbours are O(1) to reach.
/// Only ROI entries are meaningful.
class NnField {
 public:
  NnField() = default;
  explicit NnField(Dims dims) : dims_(dims), entries_(dims.count()) {}

  const Dims& dims() const { return dims_; }
  Match& operator[](std::size_t linear) { return entries_[linear]; }
  const Match& operator[](std::size_t linear) const { return entries_[linear]; }

  friend bool operator==(const NnField&, const NnField&) = default;

 private:
  Dims dims_{};
  std::vector<Match> entries_;
};

/// k matches for every ROI voxel, one per independent OPM run.
class AnnField {
 public:
  AnnField(Dims dims, PatchGeometry geometry, int k, std::vector<std::size_t> voxels)
      : dims_(dims), geometry_(geometry), k_(k), voxels_(std::move(voxels)),
        matches_(voxels_.size() * static_cast<std::size_t>(k)) {}

  const Dims& dims() const { return dims_; }
  const PatchGeometry& geometry() const { return geometry_; }
  int k() const { return k_; }
  /// ROI voxels (linear indices, ascending).
  const std::vector<std::size_t>& voxels() const { return voxels_; }
  std::size_t size() const { return voxels_.size(); }

  std::span<const Match> matches(std::size_t i) const {
    return {matches_.data() + i * static_cast<std::size_t>(k_), static_cast<std::size_t>(k_)};
  }
  std::span<Match> matches(std::size_t i) {
    return {matches_.data() + i * static_cast<std::size_t>(k_), static_cast<std::size_t>(k_)};
  }

  /// Copies the ROI entries of a single-match field into column `slot`.
  void set_column(std::size_t slot, const NnField& field) {
    for (std::size_t i = 0; i < voxels_.size(); ++i) matches(i)[slot] = field[voxels_[i]];
  }

  friend bool operator==(const AnnField&, const AnnField&) = default;

 private:
  Dims dims_;
  PatchGeometry geometry_;
  int k_;
  std::vector<std::size_t> voxels_;
  std::vector<Match> matches_;
};

namespace detail {

inline void check_search_inputs(const Volume3& subject, TemplateViews templates, const RoiMask& roi,
                                const PatchGeometry& g) {
  if (templates.empty()) throw ContractError("patch search: template library is empty");
  for (std::size_t t = 0; t < templates.size(); ++t) {
    if (templates[t] == nullptr) throw ContractError("patch search: null template " + std::to_string(t));
    if (templates[t]->dims() != subject.dims()) {
      throw ContractError("patch search: template " + std::to_string(t) + " dims " +
                          to_string(templates[t]->dims()) + " differ from subject " + to_string(subject.dims()));
    }
  }
  check_roi(roi, subject.dims(), g);
}

inline Index3 random_offset(Rng& rng, int half) {
  Index3 o;
  o.x = static_cast<int>(rng.uniform_int(-half, half));
  o.y = static_cast<int>(rng.uniform_int(-half, half));
  o.z = static_cast<int>(rng.uniform_int(-half, half));
  return o;
}

inline void propagate_at(NnField& field, std::size_t linear, const Index3& x, int dir, const Volume3& subject,
                         TemplateViews templates, const RoiMask& roi, const PatchGeometry& g) {
  const Dims& d = field.dims();
  Match& current = field[linear];
  for (int a = 0; a < 3; ++a) {
    const Axis axis = static_cast<Axis>(a);
    const Index3 nb = x - unit(axis, dir);
    if (!d.contains(nb)) continue;
    const std::size_t nb_linear = d.linear(nb);
    if (!roi[nb_linear]) continue;
    const Match& source = field[nb_linear];
    // The neighbour's stored distance is exact for its own centre pair, so the
    // shifted candidate is always scored incrementally. nullopt means the
    // template patch would leave the volume: reject.
    const auto candidate = shifted_ssd(source.dist, subject, nb, *templates[static_cast<std::size_t>(source.t)],
                                       source.pos, axis, dir, g);
    if (candidate && *candidate < current.dist) {
      current = Match{source.t, source.pos + unit(axis, dir), *candidate};
    }
  }
}

}  // namespace detail

/// Half-widths visited by the random search: (w-1)/2, halved until 1.
inline std::vector<int> random_search_radii(int init_window) {
  std::vector<int> out;
  for (int r = (init_window - 1) / 2; r >= 1; r /= 2) out.push_back(r);
  return out;
}

/// Constrained random search around `entry.pos` in template `entry.t`.
/// Returns the number of candidates drawn (one per radius level).
inline int random_search(Match& entry, const Index3& x, const Volume3& subject, TemplateViews templates,
                         const PatchGeometry& g, int init_window, Rng& rng) {
  const Volume3& tpl = *templates[static_cast<std::size_t>(entry.t)];
  int drawn = 0;
  for (int r = (init_window - 1) / 2; r >= 1; r /= 2) {
    const Index3 c = entry.pos + detail::random_offset(rng, r);
    ++drawn;
    if (!patch_in_bounds(tpl.dims(), c, g)) continue;
    const PatchDistance dist = detail::ssd_unchecked(subject, x, tpl, c, g);
    if (dist < entry.dist) {
      entry.pos = c;
      entry.dist = dist;
    }
  }
  return drawn;
}

inline NnField constrained_init(const Volume3& subject, TemplateViews templates, const RoiMask& roi,
                                const PatchGeometry& g, int init_window, Rng& rng) {
  detail::check_search_inputs(subject, templates, roi, g);
  if (init_window < 1 || init_window % 2 == 0) throw ContractError("init_window must be odd and >= 1");
  const Dims& d = subject.dims();
  const int half = (init_window - 1) / 2;
  const auto n = static_cast<std::int64_t>(templates.size());
  constexpr int kMaxAttempts = 1 << 20;

  NnField field(d);
  for (std::size_t i = 0; i < roi.size(); ++i) {
    if (!roi[i]) continue;
    const Index3 x = d.unravel(i);
    Match m;
    m.t = static_cast<int>(rng.uniform_int(0, n - 1));
    int attempt = 0;
    do {
      if (++attempt > kMaxAttempts) throw ContractError("constrained_init: no valid position near " + to_string(x));
      m.pos = x + detail::random_offset(rng, half);
    } while (!patch_in_bounds(d, m.pos, g));
    m.dist = detail::ssd_unchecked(subject, x, *templates[static_cast<std::size_t>(m.t)], m.pos, g);
    field[i] = m;
  }
  return field;
}

/// Initialization of run `run`, on that run's RNG stream.
inline NnField constrained_init(const Volume3& subject, TemplateViews templates, const RoiMask& roi,
                                const PatchGeometry& g, const OpmParams& params, std::size_t run) {
  params.validate();
  Rng rng = Rng::stream(params.seed, run, "opm");
  return constrained_init(subject, templates, roi, g, params.init_window, rng);
}

namespace detail {

inline void sweep(NnField& field, ScanDirection direction, const Volume3& subject, TemplateViews templates,
                  const RoiMask& roi, const PatchGeometry& g, const std::vector<std::size_t>& voxels,
                  Rng* rng, int init_window) {
  const Dims& d = subject.dims();
  const int dir = direction == ScanDirection::Forward ? 1 : -1;
  auto visit = [&](std::size_t linear) {
    const Index3 x = d.unravel(linear);
    propagate_at(field, linear, x, dir, subject, templates, roi, g);
    if (rng) random_search(field[linear], x, subject, templates, g, init_window, *rng);
  };
  if (direction == ScanDirection::Forward) {
    for (auto it = voxels.begin(); it != voxels.end(); ++it) visit(*it);
  } else {
    for (auto it = voxels.rbegin(); it != voxels.rend(); ++it) visit(*it);
  }
}

}  // namespace detail

/// One propagation scan with no random search.
inline void propagation_pass(NnField& field, ScanDirection direction, const Volume3& subject,
                             TemplateViews templates, const RoiMask& roi, const PatchGeometry& g) {
  detail::check_search_inputs(subject, templates, roi, g);
  if (field.dims() != subject.dims()) throw ContractError("propagation_pass: field dims differ from subject");
  detail::sweep(field, direction, subject, templates, roi, g, roi_voxels(roi), nullptr, 0);
}

/// A complete OPM run on stream (params.seed, run).
inline NnField run_opm(const Volume3& subject, TemplateViews templates, const RoiMask& roi, const PatchGeometry& g,
                       const OpmParams& params, std::size_t run) {
  params.validate();
  Rng rng = Rng::stream(params.seed, run, "opm");
  NnField field = constrained_init(subject, templates, roi, g, params.init_window, rng);
  const auto voxels = roi_voxels(roi);
  for (int it = 0; it < params.iterations; ++it) {
    const auto direction = it % 2 == 0 ? ScanDirection::Forward : ScanDirection::Reverse;
    detail::sweep(field, direction, subject, templates, roi, g, voxels, &rng, params.init_window);
  }
  return field;
}

/// k independent OPM runs. Output does not depend on `threads`.
inline AnnField run_k_opm(const Volume3& subject, TemplateViews templates, const RoiMask& roi,
                          const PatchGeometry& g, const OpmParams& params, unsigned threads = 1) {
  params.validate();
  detail::check_search_inputs(subject, templates, roi, g);
  AnnField out(subject.dims(), g, params.k, roi_voxels(roi));
  parallel_for(static_cast<std::size_t>(params.k), threads, [&](std::size_t run) {
    out.set_column(run, run_opm(subject, templates, roi, g, params, run));
  });
  return out;
}

/// Exact k nearest patches over all templates and all in-bounds positions in
/// the w^3 window centred on each ROI voxel. Ties resolve by (t, linear position).
/// Cost O(|ROI| n w^3 s^3); test oracle for small inputs.
inline AnnField brute_force_knn(const Volume3& subject, TemplateViews templates, const RoiMask& roi,
                                const PatchGeometry& g, int k, int window, unsigned threads = 1) {
  detail::check_search_inputs(subject, templates, roi, g);
  if (k < 1) throw ContractError("brute_force_knn: k must be >= 1");
  if (window < 1 || window % 2 == 0) throw ContractError("brute_force_knn: window must be odd and >= 1");
  const Dims& d = subject.dims();
  const int half = (window - 1) / 2;
  AnnField out(d, g, k, roi_voxels(roi));

  parallel_for(out.size(), threads, [&](std::size_t i) {
    const Index3 x = d.unravel(out.voxels()[i]);
    std::vector<Match> candidates;
    for (std::size_t t = 0; t < templates.size(); ++t) {
      for (int dz = -half; dz <= half; ++dz) {
        for (int dy = -half; dy <= half; ++dy) {
          for (int dx = -half; dx <= half; ++dx) {
            const Index3 c = x + Index3{dx, dy, dz};
            if (!patch_in_bounds(d, c, g)) continue;
            candidates.push_back({static_cast<int>(t), c, detail::ssd_unchecked(subject, x, *templates[t], c, g)});
          }
        }
      }
    }
    if (candidates.size() < static_cast<std::size_t>(k)) {
      throw ContractError("brute_force_knn: only " + std::to_string(candidates.size()) + " candidates at " +
                          to_string(x) + ", k = " + std::to_string(k));
    }
    auto key = [&](const Match& m) { return std::tuple(m.dist, m.t, d.linear(m.pos)); };
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                      [&](const Match& a, const Match& b) { return key(a) < key(b); });
    std::copy_n(candidates.begin(), k, out.matches(i).begin());
  });
  return out;
}

/// Number of stored matches whose distance differs from a fresh full ssd.
inline std::size_t audit(const AnnField& field, const Volume3& subject, TemplateViews templates) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    const Index3 x = field.dims().unravel(field.voxels()[i]);
    for (const Match& m : field.matches(i)) {
      if (m.t < 0 || static_cast<std::size_t>(m.t) >= templates.size() ||
          !patch_in_bounds(field.dims(), m.pos, field.geometry()) ||
          ssd(subject, x, *templates[static_cast<std::size_t>(m.t)], m.pos, field.geometry()) != m.dist) {
        ++bad;
      }
    }
  }
  return bad;
}

/// Plain-text dump, one line per (voxel, run): `x y z k_idx t px py pz dist`.
inline void write_ann_dump(std::ostream& os, const AnnField& field) {
  const auto old_precision = os.precision(17);
  for (std::size_t i = 0; i < field.size(); ++i) {
    const Index3 x = field.dims().unravel(field.voxels()[i]);
    const auto ms = field.matches(i);
    for (std::size_t j = 0; j < ms.size(); ++j) {
      const Match& m = ms[j];
      os << x.x << ' ' << x.y << ' ' << x.z << ' ' << j << ' ' << m.t << ' ' << m.pos.x << ' ' << m.pos.y << ' '
         << m.pos.z << ' ' << m.dist.value() << '\n';
    }
  }
  os.precision(old_precision);
}

}  // namespace opal
