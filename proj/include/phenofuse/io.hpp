#pragma once

// Small file helpers shared by every on-disk format: atomic replacement,
// little-endian float payloads and JSON manifests.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "phenofuse/error.hpp"

namespace phenofuse::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers never observe a half-written file.
inline void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw FormatError(FormatError::Kind::io, "cannot open for writing: " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      throw FormatError(FormatError::Kind::io, "write failed: " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw FormatError(FormatError::Kind::io, "cannot rename into place: " + path.string());
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(FormatError::Kind::io, "cannot open: " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000ff00u) | ((v << 8) & 0x00ff0000u) | (v << 24);
}

/// Appends floats as little-endian IEEE-754 binary32.
inline void append_f32le(std::string& out, std::span<const float> values) {
  const std::size_t offset = out.size();
  out.resize(offset + values.size() * 4);
  char* dst = out.data() + offset;
  for (float f : values) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    std::memcpy(dst, &bits, 4);
    dst += 4;
  }
}

inline void decode_f32le(std::string_view bytes, std::span<float> out) {
  const char* src = bytes.data();
  for (float& f : out) {
    std::uint32_t bits;
    std::memcpy(&bits, src, 4);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    f = std::bit_cast<float>(bits);
    src += 4;
  }
}

inline json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::bad_manifest,
                      "invalid JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& doc) {
  atomic_write(path, doc.dump(2) + "\n");
}

/// `printf("%.*f")`; used for human-facing tables.
inline std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

/// Six significant digits, the precision of machine-readable CSV output.
inline std::string format_sig6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

/// Appends a suffix to the final path component ("out/m" + ".f32bin").
inline fs::path with_suffix(const fs::path& base, std::string_view suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

}  // namespace phenofuse::io
