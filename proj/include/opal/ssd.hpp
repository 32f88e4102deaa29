#pragma once

// Patch sum of squared differences.
//
// Voxel values are quantized to signed fixed point with 32 fractional bits
// (truncation toward zero) and squared differences are accumulated as exact
// unsigned 128-bit integers. Integer addition is associative, so the
// incremental face update in shifted_ssd reproduces the full sum bit for bit.

#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "opal/errors.hpp"
#include "opal/volume.hpp"

namespace opal {

__extension__ typedef unsigned __int128 uint128;
__extension__ typedef __int128 int128;

namespace detail {

inline constexpr double kQuantScale = 4294967296.0;  // 2^32

inline std::int64_t quantize(float v) noexcept {
  return static_cast<std::int64_t>(static_cast<double>(v) * kQuantScale);
}

inline uint128 squared_difference(float a, float b) noexcept {
  const std::int64_t d = quantize(a) - quantize(b);
  return static_cast<uint128>(static_cast<int128>(d) * d);
}

}  // namespace detail

/// Exact patch SSD in units of 2^-64 (squared 2^-32 quantum).
class PatchDistance {
 public:
  constexpr PatchDistance() = default;
  static constexpr PatchDistance from_raw(uint128 raw) { return PatchDistance(raw); }

  constexpr uint128 raw() const { return raw_; }
  /// Real-valued SSD.
  double value() const { return static_cast<double>(raw_) * 0x1p-64; }

  constexpr PatchDistance& operator+=(PatchDistance o) {
    raw_ += o.raw_;
    return *this;
  }
  friend constexpr PatchDistance operator+(PatchDistance a, PatchDistance b) { return a += b; }
  friend constexpr bool operator==(PatchDistance a, PatchDistance b) { return a.raw_ == b.raw_; }
  friend constexpr std::strong_ordering operator<=>(PatchDistance a, PatchDistance b) {
    return a.raw_ <=> b.raw_;
  }

 private:
  constexpr explicit PatchDistance(uint128 raw) : raw_(raw) {}
  uint128 raw_ = 0;
};

namespace detail {

/// Sum over an axis-aligned box of relative offsets [lo, hi] (inclusive),
/// z then y then x. No bounds checks.
inline uint128 box_sum(const Volume3& a, const Index3& ca, const Volume3& b, const Index3& cb, const Index3& lo,
                       const Index3& hi) {
  const Dims& da = a.dims();
  const Dims& db = b.dims();
  const float* pa = a.data();
  const float* pb = b.data();
  uint128 acc = 0;
  for (int dz = lo.z; dz <= hi.z; ++dz) {
    for (int dy = lo.y; dy <= hi.y; ++dy) {
      const float* ra = pa + da.linear({ca.x + lo.x, ca.y + dy, ca.z + dz});
      const float* rb = pb + db.linear({cb.x + lo.x, cb.y + dy, cb.z + dz});
      const int n = hi.x - lo.x + 1;
      for (int i = 0; i < n; ++i) acc += squared_difference(ra[i], rb[i]);
    }
  }
  return acc;
}

/// Patch SSD without the bounds check. Caller guarantees both patches fit.
inline PatchDistance ssd_unchecked(const Volume3& a, const Index3& ca, const Volume3& b, const Index3& cb,
                                   const PatchGeometry& g) {
  const int r = g.radius();
  return PatchDistance::from_raw(box_sum(a, ca, b, cb, {-r, -r, -r}, {r, r, r}));
}

}  // namespace detail

/// Full SSD between the patch of `a` centred on `ca` and the patch of `b` centred on `cb`.
inline PatchDistance ssd(const Volume3& a, const Index3& ca, const Volume3& b, const Index3& cb,
                         const PatchGeometry& g) {
  if (!patch_in_bounds(a.dims(), ca, g)) {
    throw ContractError("ssd: patch centred on " + to_string(ca) + " leaves the first volume");
  }
  if (!patch_in_bounds(b.dims(), cb, g)) {
    throw ContractError("ssd: patch centred on " + to_string(cb) + " leaves the second volume");
  }
  return detail::ssd_unchecked(a, ca, b, cb, g);
}

/// SSD at (ca + shift, cb + shift) derived from `prev` = ssd(a, ca, b, cb) by
/// removing the departing face and adding the arriving one. Returns nullopt when
/// either shifted patch would leave its volume; the caller then falls back to a
/// full ssd or rejects the candidate.
inline std::optional<PatchDistance> shifted_ssd(PatchDistance prev, const Volume3& a, const Index3& ca,
                                                const Volume3& b, const Index3& cb, Axis axis, int dir,
                                                const PatchGeometry& g) {
  if (dir != 1 && dir != -1) throw ContractError("shifted_ssd: dir must be +1 or -1");
  const Index3 step = unit(axis, dir);
  if (!patch_in_bounds(a.dims(), ca + step, g) || !patch_in_bounds(b.dims(), cb + step, g)) return std::nullopt;

  const int r = g.radius();
  const int ax = static_cast<int>(axis);
  Index3 lo{-r, -r, -r};
  Index3 hi{r, r, r};

  Index3 out_lo = lo, out_hi = hi;
  out_lo[ax] = out_hi[ax] = -dir * r;
  Index3 in_lo = lo, in_hi = hi;
  in_lo[ax] = in_hi[ax] = dir * (r + 1);

  const uint128 departing = detail::box_sum(a, ca, b, cb, out_lo, out_hi);
  if (departing > prev.raw()) {
    throw ContractError("shifted_ssd: previous distance is inconsistent with the patches at " + to_string(ca));
  }
  const uint128 arriving = detail::box_sum(a, ca, b, cb, in_lo, in_hi);
  return PatchDistance::from_raw(prev.raw() - departing + arriving);
}

/// Euclidean distance between voxel centres, in voxel units.
inline double euclidean_voxel_distance(const Index3& a, const Index3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace opal
