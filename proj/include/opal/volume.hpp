#pragma once

// Dense 3D grids: scalar volumes, binary label maps and ROI masks, plus the
// patch geometry shared by the search and fusion stages.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "opal/errors.hpp"

namespace opal {

/// Integer voxel coordinate. Signed so offsets can be applied before a bounds check.
struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;

  friend constexpr bool operator==(const Index3&, const Index3&) = default;
  constexpr Index3 operator+(const Index3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Index3 operator-(const Index3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  constexpr int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
};

inline std::string to_string(const Index3& i) {
  std::ostringstream os;
  os << '(' << i.x << ',' << i.y << ',' << i.z << ')';
  return os.str();
}

enum class Axis : int { X = 0, Y = 1, Z = 2 };

constexpr Index3 unit(Axis axis, int dir = 1) {
  Index3 e{};
  e[static_cast<int>(axis)] = dir;
  return e;
}

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  friend constexpr bool operator==(const Dims&, const Dims&) = default;

  constexpr int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  constexpr std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  constexpr bool contains(const Index3& i) const {
    return i.x >= 0 && i.y >= 0 && i.z >= 0 && i.x < nx && i.y < ny && i.z < nz;
  }
  /// x-fastest linear offset.
  constexpr std::size_t linear(const Index3& i) const {
    return static_cast<std::size_t>(i.x) +
           static_cast<std::size_t>(nx) * (static_cast<std::size_t>(i.y) +
                                           static_cast<std::size_t>(ny) * static_cast<std::size_t>(i.z));
  }
  constexpr Index3 unravel(std::size_t linear) const {
    const auto sx = static_cast<std::size_t>(nx);
    const auto sy = static_cast<std::size_t>(ny);
    return {static_cast<int>(linear % sx), static_cast<int>((linear / sx) % sy),
            static_cast<int>(linear / (sx * sy))};
  }
  /// Distance, in voxels, from `i` to the nearest face along any axis.
  constexpr int face_distance(const Index3& i) const {
    int d = i.x;
    for (int a = 0; a < 3; ++a) {
      d = std::min(d, i[a]);
      d = std::min(d, (*this)[a] - 1 - i[a]);
    }
    return d;
  }
};

inline std::string to_string(const Dims& d) {
  std::ostringstream os;
  os << d.nx << 'x' << d.ny << 'x' << d.nz;
  return os.str();
}

struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  friend constexpr bool operator==(const Spacing&, const Spacing&) = default;
  constexpr double voxel_volume() const { return sx * sy * sz; }
};

/// Stored scalar magnitude limit. Keeps every fixed-point squared difference
/// and every patch sum inside 128 bits (see ssd.hpp).
inline constexpr double kMaxScalarMagnitude = 8388608.0;  // 2^23

struct ScalarTraits {
  using value_type = float;
  static constexpr const char* name = "Volume3";
  static bool valid(float v) { return std::isfinite(v) && std::fabs(v) <= kMaxScalarMagnitude; }
};

struct LabelTraits {
  using value_type = std::uint8_t;
  static constexpr const char* name = "LabelMap";
  static bool valid(std::uint8_t v) { return v <= 1; }
};

struct MaskTraits {
  using value_type = std::uint8_t;
  static constexpr const char* name = "RoiMask";
  static bool valid(std::uint8_t v) { return v <= 1; }
};

/// Dense x-fastest grid whose every element satisfies `Traits::valid`.
template <typename Traits>
class Grid {
 public:
  using value_type = typename Traits::value_type;

  Grid() = default;

  Grid(Dims dims, Spacing spacing = {}, value_type fill = value_type{})
      : dims_(dims), spacing_(spacing) {
    check_shape();
    check_value(fill, 0);
    data_.assign(dims_.count(), fill);
  }

  Grid(Dims dims, Spacing spacing, std::vector<value_type> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    check_shape();
    if (data_.size() != dims_.count()) {
      throw ContractError(std::string(Traits::name) + ": data length " + std::to_string(data_.size()) +
                          " does not match dims " + to_string(dims_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) check_value(data_[i], i);
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }
  std::span<const value_type> values() const { return data_; }
  const value_type* data() const { return data_.data(); }

  value_type operator[](std::size_t linear) const { return data_[linear]; }
  value_type at(const Index3& i) const {
    if (!dims_.contains(i)) {
      throw ContractError(std::string(Traits::name) + ": index " + to_string(i) + " outside " + to_string(dims_));
    }
    return data_[dims_.linear(i)];
  }

  void set(const Index3& i, value_type v) { set(dims_.linear(i), v); }
  void set(std::size_t linear, value_type v) {
    check_value(v, linear);
    data_[linear] = v;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  void check_shape() const {
    if (dims_.nx <= 0 || dims_.ny <= 0 || dims_.nz <= 0) {
      throw ContractError(std::string(Traits::name) + ": dims must be positive, got " + to_string(dims_));
    }
    if (!(spacing_.sx > 0.0 && spacing_.sy > 0.0 && spacing_.sz > 0.0)) {
      throw ContractError(std::string(Traits::name) + ": spacing must be positive");
    }
  }
  static void check_value(value_type v, std::size_t where) {
    if (!Traits::valid(v)) {
      throw ContractError(std::string(Traits::name) + ": invalid value at linear index " + std::to_string(where));
    }
  }

  Dims dims_{};
  Spacing spacing_{};
  std::vector<value_type> data_;
};

using Volume3 = Grid<ScalarTraits>;
using LabelMap = Grid<LabelTraits>;
using RoiMask = Grid<MaskTraits>;

template <typename Traits>
std::size_t count_nonzero(const Grid<Traits>& g) {
  std::size_t n = 0;
  for (auto v : g.values()) n += (v != 0);
  return n;
}

/// Cubic patch of odd side `size`.
class PatchGeometry {
 public:
  static constexpr int kMaxSize = 31;

  explicit PatchGeometry(int size = 3) : size_(size) {
    if (size < 1 || size % 2 == 0 || size > kMaxSize) {
      throw ContractError("PatchGeometry: size must be odd in [1, 31], got " + std::to_string(size));
    }
  }

  int size() const { return size_; }
  int radius() const { return (size_ - 1) / 2; }
  int voxel_count() const { return size_ * size_ * size_; }

  friend bool operator==(const PatchGeometry&, const PatchGeometry&) = default;

 private:
  int size_;
};

/// True when the whole patch centred on `c` lies inside `dims`.
inline bool patch_in_bounds(const Dims& dims, const Index3& c, const PatchGeometry& g) {
  const int r = g.radius();
  return c.x >= r && c.y >= r && c.z >= r && c.x + r < dims.nx && c.y + r < dims.ny && c.z + r < dims.nz;
}

/// Linear indices of the marked voxels, ascending.
inline std::vector<std::size_t> roi_voxels(const RoiMask& roi) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < roi.size(); ++i) {
    if (roi[i]) out.push_back(i);
  }
  return out;
}

/// Throws unless every ROI voxel is at least radius + 1 from every face.
inline void check_roi(const RoiMask& roi, const Dims& subject_dims, const PatchGeometry& g) {
  if (roi.dims() != subject_dims) {
    throw ContractError("RoiMask: dims " + to_string(roi.dims()) + " differ from subject " + to_string(subject_dims));
  }
  const auto& d = roi.dims();
  for (std::size_t i = 0; i < roi.size(); ++i) {
    if (roi[i] && d.face_distance(d.unravel(i)) < g.radius() + 1) {
      throw ContractError("RoiMask: voxel " + to_string(d.unravel(i)) + " closer than " +
                          std::to_string(g.radius() + 1) + " to a face");
    }
  }
}

}  // namespace opal
