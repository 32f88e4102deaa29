#pragma once

// Test-only reference computations. Deliberately naive and independent of
// the fixed-point SSD, the sweep code and the fusion kernels they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <random>
#include <tuple>
#include <vector>

#include "opal/volume.hpp"

namespace opal::oracle {

/// Volume of i.i.d. uniform values in [lo, hi) from std::mt19937_64.
inline Volume3 noise_volume(Dims d, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(d.count());
  for (auto& x : v) x = dist(gen);
  return Volume3(d, {}, std::move(v));
}

template <typename F>
Volume3 volume_from(Dims d, F&& f) {
  std::vector<float> v(d.count());
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) v[d.linear({x, y, z})] = static_cast<float>(f(x, y, z));
  return Volume3(d, {}, std::move(v));
}

/// Plain double triple loop, x outermost (the library sums z outermost).
inline double ssd(const Volume3& a, Index3 ca, const Volume3& b, Index3 cb, int size) {
  const int r = (size - 1) / 2;
  double acc = 0.0;
  for (int dx = -r; dx <= r; ++dx)
    for (int dy = -r; dy <= r; ++dy)
      for (int dz = -r; dz <= r; ++dz) {
        const double d = static_cast<double>(a.at({ca.x + dx, ca.y + dy, ca.z + dz})) -
                         static_cast<double>(b.at({cb.x + dx, cb.y + dy, cb.z + dz}));
        acc += d * d;
      }
  return acc;
}

struct Candidate {
  double dist;
  int t;
  std::size_t linear;
  Index3 pos;
};

/// Exhaustive k-NN with loops in a different order from the library
/// (positions outer, templates inner) and double distances.
inline std::vector<Candidate> knn(const Volume3& subject, const std::vector<const Volume3*>& templates, Index3 x,
                                  int size, int k, int window) {
  const int half = (window - 1) / 2;
  const int r = (size - 1) / 2;
  const Dims& d = subject.dims();
  std::vector<Candidate> all;
  for (int dx = -half; dx <= half; ++dx)
    for (int dz = -half; dz <= half; ++dz)
      for (int dy = -half; dy <= half; ++dy) {
        const Index3 c{x.x + dx, x.y + dy, x.z + dz};
        if (c.x < r || c.y < r || c.z < r || c.x + r >= d.nx || c.y + r >= d.ny || c.z + r >= d.nz) continue;
        for (int t = static_cast<int>(templates.size()) - 1; t >= 0; --t) {
          all.push_back({ssd(subject, x, *templates[static_cast<std::size_t>(t)], c, size), t, d.linear(c), c});
        }
      }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.dist, a.t, a.linear) < std::tie(b.dist, b.t, b.linear);
  });
  if (static_cast<int>(all.size()) > k) all.resize(static_cast<std::size_t>(k));
  return all;
}

/// Voxels of `mask` reachable from `seeds` through 6-connected moves inside `mask`.
inline std::vector<std::uint8_t> flood_fill(const Dims& d, const std::vector<std::uint8_t>& mask,
                                            const std::vector<std::size_t>& seeds) {
  std::vector<std::uint8_t> seen(d.count(), 0);
  std::queue<std::size_t> q;
  for (auto s : seeds) {
    if (mask[s] && !seen[s]) {
      seen[s] = 1;
      q.push(s);
    }
  }
  while (!q.empty()) {
    const Index3 p = d.unravel(q.front());
    q.pop();
    for (int a = 0; a < 3; ++a)
      for (int s : {-1, 1}) {
        Index3 n = p;
        n[a] += s;
        if (!d.contains(n)) continue;
        const auto li = d.linear(n);
        if (mask[li] && !seen[li]) {
          seen[li] = 1;
          q.push(li);
        }
      }
  }
  return seen;
}

/// Number of 6-connected foreground components.
inline int components(const Dims& d, const std::vector<std::uint8_t>& mask) {
  std::vector<std::uint8_t> done(d.count(), 0);
  int n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i] || done[i]) continue;
    ++n;
    const auto reach = flood_fill(d, mask, {i});
    for (std::size_t j = 0; j < reach.size(); ++j) done[j] |= reach[j];
  }
  return n;
}

/// Pair-enumeration AUC written against the definition.
inline double auc_pairs(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (a[i] > b[j]) num += 2.0;
      else if (a[i] == b[j]) num += 1.0;
    }
  return num / (2.0 * static_cast<double>(a.size() * b.size()));
}

}  // namespace opal::oracle
