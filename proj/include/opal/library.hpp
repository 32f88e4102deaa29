#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "opal/errors.hpp"
#include "opal/volume.hpp"

namespace opal {

/// One labelled template. Images and labels are shared, read-only.
struct Template {
  std::string id;
  std::shared_ptr<const Volume3> image;
  std::shared_ptr<const LabelMap> labels;
};

/// Ordered set of aligned templates; insertion order defines template indices.
class TemplateLibrary {
 public:
  TemplateLibrary() = default;

  void add(Template t) {
    if (!t.image || !t.labels) throw ContractError("TemplateLibrary: template '" + t.id + "' is incomplete");
    if (t.image->dims() != t.labels->dims()) {
      throw ContractError("TemplateLibrary: template '" + t.id + "' image and labels differ in dims");
    }
    if (!templates_.empty()) {
      const auto& ref = *templates_.front().image;
      if (t.image->dims() != ref.dims() || !(t.image->spacing() == ref.spacing())) {
        throw ContractError("TemplateLibrary: template '" + t.id + "' has dims " + to_string(t.image->dims()) +
                            ", library has " + to_string(ref.dims()));
      }
    }
    templates_.push_back(std::move(t));
  }

  void add(std::string id, Volume3 image, LabelMap labels) {
    add(Template{std::move(id), std::make_shared<const Volume3>(std::move(image)),
                 std::make_shared<const LabelMap>(std::move(labels))});
  }

  std::size_t size() const { return templates_.size(); }
  bool empty() const { return templates_.empty(); }
  const Template& operator[](std::size_t i) const { return templates_[i]; }
  auto begin() const { return templates_.begin(); }
  auto end() const { return templates_.end(); }

  Dims dims() const { return require_nonempty().image->dims(); }
  Spacing spacing() const { return require_nonempty().image->spacing(); }

  /// Copy of this library without template `skip`.
  TemplateLibrary without(std::size_t skip) const {
    TemplateLibrary out;
    for (std::size_t i = 0; i < templates_.size(); ++i) {
      if (i != skip) out.templates_.push_back(templates_[i]);
    }
    return out;
  }

  std::vector<const LabelMap*> label_views() const {
    std::vector<const LabelMap*> out;
    out.reserve(templates_.size());
    for (const auto& t : templates_) out.push_back(t.labels.get());
    return out;
  }

 private:
  const Template& require_nonempty() const {
    if (templates_.empty()) throw ContractError("TemplateLibrary: library is empty");
    return templates_.front();
  }

  std::vector<Template> templates_;
};

}  // namespace opal
