#pragma once

// Synthetic cohort: each subject is a smoothly deformed ellipsoid. Labels are
// the deformed ellipsoid; the image is the label scaled to the tissue contrast,
// blurred with a separable [1 2 1]/4 kernel, plus Gaussian noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "opal/errors.hpp"
#include "opal/io.hpp"
#include "opal/library.hpp"
#include "opal/parallel.hpp"
#include "opal/rng.hpp"
#include "opal/volume.hpp"

namespace opal {

struct PhantomSpec {
  Dims dims{48, 48, 48};
  int n_subjects = 20;
  std::array<double, 3> semi_axes{16.0, 13.0, 11.0};
  double amplitude = 2.0;
  double foreground = 1.0;
  double background = 0.0;
  double noise_std = 0.05;
  std::uint64_t seed = 1;
  /// Largest patch radius the cohort must accommodate.
  int max_patch_radius = 2;

  void validate() const {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) throw ContractError("phantom: dims must be positive");
    if (n_subjects < 1) throw ContractError("phantom: need at least one subject");
    if (amplitude < 0.0 || noise_std < 0.0 || max_patch_radius < 0) {
      throw ContractError("phantom: amplitude, noise and patch radius must be >= 0");
    }
    if (std::fabs(foreground) > kMaxScalarMagnitude / 2 || std::fabs(background) > kMaxScalarMagnitude / 2) {
      throw ContractError("phantom: contrast out of range");
    }
    const double margin = max_patch_radius + amplitude + 2.0;
    for (int a = 0; a < 3; ++a) {
      const double half = (dims[a] - 1) / 2.0;
      if (!(semi_axes[static_cast<std::size_t>(a)] > 0.0) ||
          semi_axes[static_cast<std::size_t>(a)] + margin > half) {
        throw ContractError("phantom: ellipsoid axis " + std::to_string(a) + " does not fit in " +
                            to_string(dims) + " with margin " + std::to_string(margin));
      }
    }
  }
};

/// `spec` with its semi-axes scaled down uniformly, if needed, so they fit its dims.
inline PhantomSpec fit_semi_axes(PhantomSpec spec) {
  const double margin = spec.max_patch_radius + spec.amplitude + 2.0;
  double factor = 1.0;
  for (int a = 0; a < 3; ++a) {
    const double room = (spec.dims[a] - 1) / 2.0 - margin;
    factor = std::min(factor, room / spec.semi_axes[static_cast<std::size_t>(a)]);
  }
  if (factor < 1.0) {
    for (double& ax : spec.semi_axes) ax *= factor;
  }
  return spec;
}

namespace detail {

inline std::vector<float> blur_121(std::vector<float> v, const Dims& d) {
  std::vector<float> tmp(v.size());
  for (int axis = 0; axis < 3; ++axis) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Index3 p = d.unravel(i);
      Index3 lo = p, hi = p;
      lo[axis] = std::max(0, p[axis] - 1);
      hi[axis] = std::min(d[axis] - 1, p[axis] + 1);
      tmp[i] = 0.25f * v[d.linear(lo)] + 0.5f * v[i] + 0.25f * v[d.linear(hi)];
    }
    v.swap(tmp);
  }
  return v;
}

}  // namespace detail

/// Ground-truth label of subject `index`.
inline LabelMap phantom_labels(const PhantomSpec& spec, int index) {
  spec.validate();
  Rng rng = Rng::stream(spec.seed, static_cast<std::uint64_t>(index), "phantom");
  // phase[c][m]: component c of the displacement, wave along axis m.
  double phase[3][3];
  for (auto& row : phase)
    for (double& ph : row) ph = 2.0 * std::numbers::pi * rng.uniform01();

  const Dims& d = spec.dims;
  const double cx = (d.nx - 1) / 2.0, cy = (d.ny - 1) / 2.0, cz = (d.nz - 1) / 2.0;
  const auto& ax = spec.semi_axes;
  std::vector<std::uint8_t> out(d.count(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Index3 p = d.unravel(i);
    double u[3] = {0.0, 0.0, 0.0};
    if (spec.amplitude > 0.0) {
      for (int c = 0; c < 3; ++c) {
        for (int m = 0; m < 3; ++m) u[c] += std::sin(2.0 * std::numbers::pi * p[m] / d[m] + phase[c][m]);
        u[c] *= spec.amplitude / 3.0;
      }
    }
    const double qx = (p.x + u[0] - cx) / ax[0];
    const double qy = (p.y + u[1] - cy) / ax[1];
    const double qz = (p.z + u[2] - cz) / ax[2];
    out[i] = qx * qx + qy * qy + qz * qz <= 1.0 ? 1 : 0;
  }
  return LabelMap(d, {}, std::move(out));
}

/// Image of subject `index` given its labels.
inline Volume3 phantom_image(const PhantomSpec& spec, int index, const LabelMap& labels) {
  Rng rng = Rng::stream(spec.seed, static_cast<std::uint64_t>(index), "phantom-noise");
  std::vector<float> v(labels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(labels[i] ? spec.foreground : spec.background);
  }
  v = detail::blur_121(std::move(v), spec.dims);
  if (spec.noise_std > 0.0) {
    for (float& x : v) x = static_cast<float>(x + spec.noise_std * rng.normal());
  }
  return Volume3(spec.dims, {}, std::move(v));
}

inline std::string phantom_id(int index) { return "subj_" + std::to_string(index); }

inline TemplateLibrary generate_library(const PhantomSpec& spec, unsigned threads = 1) {
  spec.validate();
  std::vector<Template> subjects(static_cast<std::size_t>(spec.n_subjects));
  parallel_for(subjects.size(), threads, [&](std::size_t i) {
    const int idx = static_cast<int>(i);
    auto labels = std::make_shared<const LabelMap>(phantom_labels(spec, idx));
    auto image = std::make_shared<const Volume3>(phantom_image(spec, idx, *labels));
    subjects[i] = Template{phantom_id(idx), std::move(image), std::move(labels)};
  });
  TemplateLibrary lib;
  for (auto& t : subjects) lib.add(std::move(t));
  return lib;
}

inline std::string describe(const PhantomSpec& s) {
  std::ostringstream os;
  os.precision(17);
  os << "# phantom dims=" << to_string(s.dims) << " n=" << s.n_subjects << " axes=" << s.semi_axes[0] << ','
     << s.semi_axes[1] << ',' << s.semi_axes[2] << " amplitude=" << s.amplitude << " foreground=" << s.foreground
     << " background=" << s.background << " noise=" << s.noise_std << " seed=" << s.seed << '\n';
  return os.str();
}

/// Writes `subj_<i>_img.opal`, `subj_<i>_lab.opal` and `cohort.meta` into `dir`.
inline void write_cohort(const std::filesystem::path& dir, const TemplateLibrary& lib, const std::string& header = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const std::string stem = "subj_" + std::to_string(i);
    write_volume(dir / (stem + "_img.opal"), *lib[i].image);
    write_volume(dir / (stem + "_lab.opal"), *lib[i].labels);
    entries.push_back({lib[i].id, stem + "_img.opal", stem + "_lab.opal"});
  }
  write_text(dir / "cohort.meta", format_manifest(entries, header));
}

}  // namespace opal
