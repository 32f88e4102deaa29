#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "opal/errors.hpp"
#include "opal/volume.hpp"

namespace opal {

/// Union of `labels`, dilated by a Euclidean ball of radius `dilation`, then
/// cleared within max_patch_radius + 1 of every face so all patches fit.
inline RoiMask default_roi(std::span<const LabelMap* const> labels, int dilation, int max_patch_radius) {
  if (labels.empty()) throw ContractError("default_roi: no label maps");
  if (dilation < 0) throw ContractError("default_roi: dilation must be >= 0");
  const Dims d = labels.front()->dims();
  const Spacing spacing = labels.front()->spacing();

  std::vector<std::uint8_t> uni(d.count(), 0);
  for (const LabelMap* l : labels) {
    if (l->dims() != d) throw ContractError("default_roi: label maps differ in dims");
    for (std::size_t i = 0; i < uni.size(); ++i) uni[i] |= (*l)[i];
  }

  std::vector<Index3> ball;
  for (int z = -dilation; z <= dilation; ++z)
    for (int y = -dilation; y <= dilation; ++y)
      for (int x = -dilation; x <= dilation; ++x)
        if (x * x + y * y + z * z <= dilation * dilation) ball.push_back({x, y, z});

  std::vector<std::uint8_t> out(d.count(), 0);
  const int margin = max_patch_radius + 1;
  for (std::size_t i = 0; i < uni.size(); ++i) {
    if (!uni[i]) continue;
    const Index3 c = d.unravel(i);
    for (const Index3& o : ball) {
      const Index3 p = c + o;
      if (d.contains(p) && d.face_distance(p) >= margin) out[d.linear(p)] = 1;
    }
  }
  return RoiMask(d, spacing, std::move(out));
}

/// Every voxel at least `margin` from every face.
inline RoiMask interior_roi(const Dims& d, int margin, Spacing spacing = {}) {
  std::vector<std::uint8_t> out(d.count(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d.face_distance(d.unravel(i)) >= margin ? 1 : 0;
  return RoiMask(d, spacing, std::move(out));
}

}  // namespace opal
