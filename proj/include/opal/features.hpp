#pragma once

// Feature channels searched independently: raw intensity and gradient norm.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "opal/errors.hpp"
#include "opal/library.hpp"
#include "opal/parallel.hpp"
#include "opal/volume.hpp"

namespace opal {

enum class FeatureKind { Intensity, GradientNorm };

inline std::string to_string(FeatureKind k) { return k == FeatureKind::Intensity ? "intensity" : "gradnorm"; }

inline FeatureKind parse_feature(std::string_view name) {
  if (name == "intensity") return FeatureKind::Intensity;
  if (name == "gradnorm") return FeatureKind::GradientNorm;
  throw ConfigError("unknown feature '" + std::string(name) + "' (expected intensity or gradnorm)");
}

inline void check_feature_list(const std::vector<FeatureKind>& kinds) {
  if (kinds.empty()) throw ContractError("feature list is empty");
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (std::find(kinds.begin() + static_cast<std::ptrdiff_t>(i) + 1, kinds.end(), kinds[i]) != kinds.end()) {
      throw ContractError("feature '" + to_string(kinds[i]) + "' listed twice");
    }
  }
}

/// Norm of the intensity gradient: central differences inside, one-sided on faces.
inline Volume3 gradient_norm(const Volume3& v) {
  const Dims& d = v.dims();
  const float* p = v.data();
  auto derivative = [&](const Index3& i, int axis) -> double {
    const int n = d[axis];
    if (n == 1) return 0.0;
    Index3 lo = i, hi = i;
    if (i[axis] == 0) {
      hi[axis] += 1;
      return static_cast<double>(p[d.linear(hi)]) - p[d.linear(i)];
    }
    if (i[axis] == n - 1) {
      lo[axis] -= 1;
      return static_cast<double>(p[d.linear(i)]) - p[d.linear(lo)];
    }
    lo[axis] -= 1;
    hi[axis] += 1;
    return (static_cast<double>(p[d.linear(hi)]) - p[d.linear(lo)]) / 2.0;
  };
  std::vector<float> out(d.count());
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const Index3 i{x, y, z};
        const double gx = derivative(i, 0), gy = derivative(i, 1), gz = derivative(i, 2);
        out[d.linear(i)] = static_cast<float>(std::sqrt(gx * gx + gy * gy + gz * gz));
      }
    }
  }
  return Volume3(d, v.spacing(), std::move(out));
}

inline Volume3 derive_feature(const Volume3& v, FeatureKind kind) {
  return kind == FeatureKind::Intensity ? v : gradient_norm(v);
}

inline std::vector<Volume3> derive_features(const Volume3& v, const std::vector<FeatureKind>& kinds) {
  check_feature_list(kinds);
  std::vector<Volume3> out;
  out.reserve(kinds.size());
  for (auto k : kinds) out.push_back(derive_feature(v, k));
  return out;
}

/// Feature volumes of every template, computed once and shared read-only.
class FeatureLibrary {
 public:
  FeatureLibrary() = default;

  FeatureLibrary(const TemplateLibrary& lib, std::vector<FeatureKind> kinds, unsigned threads = 1)
      : kinds_(std::move(kinds)) {
    check_feature_list(kinds_);
    if (lib.empty()) throw ContractError("FeatureLibrary: template library is empty");
    templates_.assign(lib.begin(), lib.end());
    channels_.assign(kinds_.size(), std::vector<std::shared_ptr<const Volume3>>(lib.size()));
    parallel_for(lib.size() * kinds_.size(), threads, [&](std::size_t job) {
      const std::size_t t = job / kinds_.size();
      const std::size_t k = job % kinds_.size();
      channels_[k][t] = kinds_[k] == FeatureKind::Intensity
                            ? lib[t].image
                            : std::make_shared<const Volume3>(gradient_norm(*lib[t].image));
    });
  }

  const std::vector<FeatureKind>& kinds() const { return kinds_; }
  std::size_t size() const { return templates_.size(); }
  const Template& operator[](std::size_t t) const { return templates_[t]; }
  Dims dims() const { return templates_.front().image->dims(); }

  bool has(FeatureKind kind) const { return std::find(kinds_.begin(), kinds_.end(), kind) != kinds_.end(); }

  /// Non-owning views of every template's `kind` channel, in template order.
  std::vector<const Volume3*> channel(FeatureKind kind) const {
    const auto it = std::find(kinds_.begin(), kinds_.end(), kind);
    if (it == kinds_.end()) throw ContractError("FeatureLibrary: feature '" + to_string(kind) + "' not derived");
    std::vector<const Volume3*> out;
    for (const auto& v : channels_[static_cast<std::size_t>(it - kinds_.begin())]) out.push_back(v.get());
    return out;
  }

  std::vector<const LabelMap*> labels() const {
    std::vector<const LabelMap*> out;
    for (const auto& t : templates_) out.push_back(t.labels.get());
    return out;
  }

  FeatureLibrary without(std::size_t skip) const {
    FeatureLibrary out;
    out.kinds_ = kinds_;
    out.channels_.resize(kinds_.size());
    for (std::size_t t = 0; t < templates_.size(); ++t) {
      if (t == skip) continue;
      out.templates_.push_back(templates_[t]);
      for (std::size_t k = 0; k < kinds_.size(); ++k) out.channels_[k].push_back(channels_[k][t]);
    }
    return out;
  }

  void append(const Template& t) {
    if (t.image->dims() != dims()) throw ContractError("FeatureLibrary: appended template has wrong dims");
    templates_.push_back(t);
    for (std::size_t k = 0; k < kinds_.size(); ++k) {
      channels_[k].push_back(kinds_[k] == FeatureKind::Intensity
                                 ? t.image
                                 : std::make_shared<const Volume3>(gradient_norm(*t.image)));
    }
  }

  TemplateLibrary templates() const {
    TemplateLibrary lib;
    for (const auto& t : templates_) lib.add(t);
    return lib;
  }

 private:
  std::vector<FeatureKind> kinds_;
  std::vector<Template> templates_;
  std::vector<std::vector<std::shared_ptr<const Volume3>>> channels_;  // [kind][template]
};

}  // namespace opal
