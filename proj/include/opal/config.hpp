#pragma once

// Run configuration: flat `key = value` lines, `#` comments. The same format
// is written back as run.meta, so a run's metadata is also its config.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "opal/errors.hpp"
#include "opal/features.hpp"
#include "opal/fusion.hpp"
#include "opal/io.hpp"
#include "opal/patchmatch.hpp"
#include "opal/rng.hpp"
#include "opal/version.hpp"

namespace opal {

struct RunConfig {
  OpmParams opm;
  FusionParams fusion;
  MultiEstimatorConfig estimators;
  int roi_dilation = 5;

  std::string library;
  std::string subject;
  std::string roi;
  std::string out;
  unsigned threads = 1;
  bool dump_ann = false;
  bool dump_maps = false;

  int repeats = 3;
  std::string compare_library;

  /// Throws ConfigError on any invariant violation.
  void validate() const {
    try {
      opm.validate();
      fusion.validate();
      estimators.validate();
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
    if (roi_dilation < 0) throw ConfigError("roi_dilation must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) throw ConfigError("invalid value '" + value + "' for key '" + key + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid boolean '" + value + "' for key '" + key + "'");
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline void require_equal(const std::string& key, const std::string& value, const std::string& expected) {
  if (value != expected) {
    throw ConfigError("key '" + key + "' is '" + value + "' but this build uses '" + expected + "'");
  }
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are rejected.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_number;
  if (key == "seed") c.opm.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "k") c.opm.k = parse_number<int>(key, value);
  else if (key == "iterations") c.opm.iterations = parse_number<int>(key, value);
  else if (key == "init_window") c.opm.init_window = parse_number<int>(key, value);
  else if (key == "alpha") c.fusion.alpha = parse_number<double>(key, value);
  else if (key == "sigma") c.fusion.sigma = parse_number<double>(key, value);
  else if (key == "epsilon") c.fusion.epsilon = parse_number<double>(key, value);
  else if (key == "scales") {
    std::vector<PatchGeometry> scales;
    for (const auto& s : detail::split_list(value)) {
      try {
        scales.emplace_back(parse_number<int>(key, s));
      } catch (const ContractError& e) {
        throw ConfigError(e.what());
      }
    }
    c.estimators.scales = std::move(scales);
  } else if (key == "features") {
    std::vector<FeatureKind> kinds;
    for (const auto& s : detail::split_list(value)) kinds.push_back(parse_feature(s));
    c.estimators.features = std::move(kinds);
  } else if (key == "roi_dilation") c.roi_dilation = parse_number<int>(key, value);
  else if (key == "library") c.library = value;
  else if (key == "subject") c.subject = value;
  else if (key == "roi") c.roi = value;
  else if (key == "out") c.out = value;
  else if (key == "threads") c.threads = parse_number<unsigned>(key, value);
  else if (key == "dump_ann") c.dump_ann = detail::parse_bool(key, value);
  else if (key == "dump_maps") c.dump_maps = detail::parse_bool(key, value);
  else if (key == "repeats") c.repeats = parse_number<int>(key, value);
  else if (key == "compare_library") c.compare_library = value;
  else if (key == "version") detail::require_equal(key, value, kVersion);
  else if (key == "rng") detail::require_equal(key, value, kRngName);
  else if (key == "scan_order") detail::require_equal(key, value, kScanOrder);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

/// Applies every line of `text` on top of `base`.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}, const std::string& what = "config") {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(what + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    try {
      apply_setting(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(what + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  const Bytes raw = read_bytes(path);
  return parse_config(std::string(raw.begin(), raw.end()), std::move(base), path.string());
}

/// run.meta: every setting that determines the output. Thread budget and
/// output directory are excluded since they do not change results.
inline std::string format_run_meta(const RunConfig& c, const std::vector<std::string>& notes = {}) {
  using detail::format_number;
  std::ostringstream os;
  os << "# opal run metadata\n";
  for (const auto& n : notes) os << "# " << n << '\n';
  os << "version = " << kVersion << '\n'
     << "rng = " << kRngName << '\n'
     << "scan_order = " << kScanOrder << '\n'
     << "seed = " << c.opm.seed << '\n'
     << "k = " << c.opm.k << '\n'
     << "iterations = " << c.opm.iterations << '\n'
     << "init_window = " << c.opm.init_window << '\n'
     << "alpha = " << format_number(c.fusion.alpha) << '\n'
     << "sigma = " << format_number(c.fusion.sigma) << '\n'
     << "epsilon = " << format_number(c.fusion.epsilon) << '\n';
  os << "scales = ";
  for (std::size_t i = 0; i < c.estimators.scales.size(); ++i) {
    os << (i ? "," : "") << c.estimators.scales[i].size();
  }
  os << "\nfeatures = ";
  for (std::size_t i = 0; i < c.estimators.features.size(); ++i) {
    os << (i ? "," : "") << to_string(c.estimators.features[i]);
  }
  os << "\nroi_dilation = " << c.roi_dilation << '\n';
  if (!c.library.empty()) os << "library = " << c.library << '\n';
  if (!c.subject.empty()) os << "subject = " << c.subject << '\n';
  if (!c.roi.empty()) os << "roi = " << c.roi << '\n';
  os << "dump_ann = " << (c.dump_ann ? "true" : "false") << '\n'
     << "dump_maps = " << (c.dump_maps ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace opal
