#pragma once

// OPALVOL1 volume container and the cohort manifest.
//
// Layout (little-endian):
//   0..7    "OPALVOL1"
//   8..19   nx, ny, nz       uint32
//   20..31  sx, sy, sz       float32 (mm)
//   32      dtype            0 = float32 scalar, 1 = uint8 label
//   33..39  reserved, zero
//   40..    voxel data, x-fastest

#include <array>
#include <bit>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "opal/errors.hpp"
#include "opal/library.hpp"
#include "opal/volume.hpp"

namespace opal {

enum class DType : std::uint8_t { Float32 = 0, Label = 1 };

inline constexpr std::size_t kHeaderBytes = 40;
inline constexpr char kMagic[8] = {'O', 'P', 'A', 'L', 'V', 'O', 'L', '1'};

using Bytes = std::vector<unsigned char>;

namespace detail {

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}
inline void put_f32(Bytes& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline Bytes encode_header(const Dims& d, const Spacing& s, DType t) {
  Bytes out;
  out.reserve(kHeaderBytes);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(d.nx));
  put_u32(out, static_cast<std::uint32_t>(d.ny));
  put_u32(out, static_cast<std::uint32_t>(d.nz));
  put_f32(out, static_cast<float>(s.sx));
  put_f32(out, static_cast<float>(s.sy));
  put_f32(out, static_cast<float>(s.sz));
  out.push_back(static_cast<unsigned char>(t));
  out.resize(kHeaderBytes, 0);
  return out;
}

struct Header {
  Dims dims;
  Spacing spacing;
  DType dtype;
};

inline Header decode_header(std::span<const unsigned char> bytes, DType expected, const std::string& what) {
  if (bytes.size() < kHeaderBytes) throw IoError(what + ": truncated header");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw IoError(what + ": bad magic");
  const unsigned char* p = bytes.data();
  const std::uint32_t nx = get_u32(p + 8), ny = get_u32(p + 12), nz = get_u32(p + 16);
  if (nx == 0 || ny == 0 || nz == 0 || nx > 1u << 20 || ny > 1u << 20 || nz > 1u << 20) {
    throw IoError(what + ": invalid dims");
  }
  Header h{{static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz)},
           {get_f32(p + 20), get_f32(p + 24), get_f32(p + 28)},
           static_cast<DType>(p[32])};
  if (p[32] > 1) throw IoError(what + ": unknown dtype " + std::to_string(p[32]));
  if (h.dtype != expected) {
    throw IoError(what + ": dtype " + std::to_string(p[32]) + ", expected " +
                  std::to_string(static_cast<int>(expected)));
  }
  for (std::size_t i = 33; i < kHeaderBytes; ++i) {
    if (p[i] != 0) throw IoError(what + ": reserved header bytes are not zero");
  }
  const std::size_t elem = expected == DType::Float32 ? 4 : 1;
  if (bytes.size() != kHeaderBytes + h.dims.count() * elem) {
    throw IoError(what + ": payload length does not match dims " + to_string(h.dims));
  }
  return h;
}

template <typename Fn>
auto rethrow_as_io(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const ContractError& e) {
    throw IoError(what + ": " + e.what());
  }
}

}  // namespace detail

inline Bytes encode(const Volume3& v) {
  Bytes out = detail::encode_header(v.dims(), v.spacing(), DType::Float32);
  out.reserve(kHeaderBytes + v.size() * 4);
  for (float x : v.values()) detail::put_f32(out, x);
  return out;
}

template <typename Traits>
  requires std::same_as<typename Traits::value_type, std::uint8_t>
Bytes encode(const Grid<Traits>& v) {
  Bytes out = detail::encode_header(v.dims(), v.spacing(), DType::Label);
  out.insert(out.end(), v.values().begin(), v.values().end());
  return out;
}

inline Volume3 decode_volume(std::span<const unsigned char> bytes, const std::string& what = "volume") {
  const auto h = detail::decode_header(bytes, DType::Float32, what);
  std::vector<float> data(h.dims.count());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = detail::get_f32(bytes.data() + kHeaderBytes + 4 * i);
  return detail::rethrow_as_io(what, [&] { return Volume3(h.dims, h.spacing, std::move(data)); });
}

template <typename GridT = LabelMap>
GridT decode_labels(std::span<const unsigned char> bytes, const std::string& what = "labels") {
  const auto h = detail::decode_header(bytes, DType::Label, what);
  std::vector<std::uint8_t> data(bytes.begin() + kHeaderBytes, bytes.end());
  return detail::rethrow_as_io(what, [&] { return GridT(h.dims, h.spacing, std::move(data)); });
}

inline Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return out;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

inline Volume3 read_volume(const std::filesystem::path& path) {
  return decode_volume(read_bytes(path), path.string());
}
inline LabelMap read_labels(const std::filesystem::path& path) {
  return decode_labels<LabelMap>(read_bytes(path), path.string());
}
inline RoiMask read_mask(const std::filesystem::path& path) {
  return decode_labels<RoiMask>(read_bytes(path), path.string());
}

template <typename GridT>
void write_volume(const std::filesystem::path& path, const GridT& v) {
  write_bytes(path, encode(v));
}

/// Cohort manifest entry: `img=<path> lab=<path> [id=<name>]`.
struct ManifestEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path labels;
};

inline std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& what = "manifest") {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string tok;
    ManifestEntry e;
    bool any = false;
    while (tokens >> tok) {
      any = true;
      const auto eq = tok.find('=');
      const std::string key = tok.substr(0, eq);
      const std::string value = eq == std::string::npos ? "" : tok.substr(eq + 1);
      if (eq == std::string::npos || value.empty()) {
        throw IoError(what + ":" + std::to_string(lineno) + ": malformed token '" + tok + "'");
      }
      if (key == "img") e.image = value;
      else if (key == "lab") e.labels = value;
      else if (key == "id") e.id = value;
      else throw IoError(what + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!any) continue;
    if (e.image.empty() || e.labels.empty()) {
      throw IoError(what + ":" + std::to_string(lineno) + ": entry needs both img= and lab=");
    }
    if (e.id.empty()) e.id = std::to_string(out.size());
    out.push_back(std::move(e));
  }
  return out;
}

/// Loads every template named in a manifest. Relative paths resolve against the manifest's directory.
inline TemplateLibrary read_library(const std::filesystem::path& manifest) {
  const Bytes raw = read_bytes(manifest);
  const auto entries = parse_manifest(std::string(raw.begin(), raw.end()), manifest.string());
  if (entries.empty()) throw IoError(manifest.string() + ": no templates listed");
  const auto base = manifest.parent_path();
  TemplateLibrary lib;
  for (const auto& e : entries) {
    auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base / p; };
    Volume3 img = read_volume(resolve(e.image));
    LabelMap lab = read_labels(resolve(e.labels));
    detail::rethrow_as_io(manifest.string(), [&] {
      lib.add(e.id, std::move(img), std::move(lab));
      return 0;
    });
  }
  return lib;
}

inline std::string format_manifest(const std::vector<ManifestEntry>& entries, const std::string& header = {}) {
  std::ostringstream os;
  if (!header.empty()) os << header;
  for (const auto& e : entries) {
    os << "img=" << e.image.generic_string() << " lab=" << e.labels.generic_string();
    if (!e.id.empty()) os << " id=" << e.id;
    os << '\n';
  }
  return os.str();
}

}  // namespace opal
