#pragma once

// Embedding cache model: per-image metadata records, the N x 512 float matrix
// they index into, metadata-table cleaning, cache persistence, validation and
// grouping of views into (crop, plant, day, level) units.
//
// On disk a cache named `s` is two files:
//   s.manifest.json  human-readable manifest (version, dimension, records)
//   s.f32bin         row-major little-endian float32, row i at byte i*512*4

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "phenofuse/error.hpp"
#include "phenofuse/io.hpp"

namespace phenofuse {

inline constexpr std::size_t kEmbeddingDim = 512;
inline constexpr int kViewsPerLevel = 24;
inline constexpr int kNumLevels = 5;
inline constexpr int kCacheFormatVersion = 1;

enum class CropKind { mustard, radish, wheat, other };

/// Crop name, normalized to lower case. Unknown names are kept verbatim as
/// CropKind::other.
class Crop {
 public:
  Crop() = default;
  explicit Crop(std::string_view name) {
    name_.reserve(name.size());
    for (char c : name) name_.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }

  const std::string& name() const noexcept { return name_; }

  CropKind kind() const noexcept {
    if (name_ == "mustard") return CropKind::mustard;
    if (name_ == "radish") return CropKind::radish;
    if (name_ == "wheat") return CropKind::wheat;
    return CropKind::other;
  }

  auto operator<=>(const Crop&) const = default;

 private:
  std::string name_;
};

/// Identity of one camera height level of one plant on one day.
struct GroupKey {
  Crop crop;
  int plant_id = 0;
  int day = 0;
  int level = 0;

  auto operator<=>(const GroupKey&) const = default;
};

struct ViewRecord {
  Crop crop;
  int plant_id = 1;
  int day = 1;         // plant age in days, the age target
  int level = 1;       // 1..5
  int angle = 0;       // 0..23
  int leaf_count = 0;  // the leaf target
  std::size_t embedding_row = 0;
  std::string image_path;

  GroupKey group_key() const { return {crop, plant_id, day, level}; }

  friend bool operator==(const ViewRecord&, const ViewRecord&) = default;
};

/// Unique key of a record within a cache.
using ViewKey = std::tuple<Crop, int, int, int, int>;

inline ViewKey view_key(const ViewRecord& r) {
  return {r.crop, r.plant_id, r.day, r.level, r.angle};
}

struct EmbeddingCache {
  int version = kCacheFormatVersion;
  std::size_t dimension = kEmbeddingDim;
  std::vector<ViewRecord> records;
  std::vector<float> matrix;  // row-major, rows() x dimension

  std::size_t rows() const noexcept { return dimension == 0 ? 0 : matrix.size() / dimension; }

  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(matrix).subspan(r * dimension, dimension);
  }

  friend bool operator==(const EmbeddingCache&, const EmbeddingCache&) = default;
};

// ---------------------------------------------------------------------------
// Metadata table
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& metadata_columns() {
  static const std::vector<std::string> cols = {"image_path", "crop",  "plant_id",  "day",
                                                "level",      "angle", "leaf_count"};
  return cols;
}

/// One data row of a metadata table, fields keyed by header name.
struct RawRow {
  std::size_t line = 0;  // 1-based source line
  std::map<std::string, std::string> fields;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// RFC-4180-ish: commas separate, double quotes may wrap a field, "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a comma-separated metadata table. The header must name every column
/// in metadata_columns(); extra columns (e.g. embedding_row) are kept.
inline std::vector<RawRow> parse_metadata_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    header = detail::split_csv_line(line);
    break;
  }
  for (const auto& col : metadata_columns()) {
    if (std::find(header.begin(), header.end(), col) == header.end()) {
      throw FormatError(FormatError::Kind::missing_column,
                        "metadata header is missing column '" + col + "'");
    }
  }
  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    RawRow row;
    row.line = line_no;
    for (std::size_t i = 0; i < header.size(); ++i) {
      row.fields[header[i]] = i < cells.size() ? cells[i] : std::string();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<RawRow> parse_metadata_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return parse_metadata_csv(in);
}

enum class RejectReason {
  missing_file,
  bad_level,
  bad_angle,
  duplicate_key,
  unparseable,
  incomplete_level_excluded,
};

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::missing_file: return "missing_file";
    case RejectReason::bad_level: return "bad_level";
    case RejectReason::bad_angle: return "bad_angle";
    case RejectReason::duplicate_key: return "duplicate_key";
    case RejectReason::unparseable: return "unparseable";
    case RejectReason::incomplete_level_excluded: return "incomplete_level_excluded";
  }
  return "unknown";
}

struct Rejection {
  std::size_t line = 0;
  RejectReason reason = RejectReason::unparseable;
  std::string detail;
};

struct CleaningReport {
  std::size_t input_rows = 0;
  std::size_t accepted = 0;
  std::vector<Rejection> rejected;  // sorted by source line
};

struct CleanOptions {
  bool exclude_incomplete_levels = false;
  /// When set, image_path must name an existing file below this root.
  std::optional<std::filesystem::path> image_root;
};

struct CleanResult {
  std::vector<ViewRecord> records;
  CleaningReport report;
};

/// Rejects (never repairs) rows that violate record invariants. Duplicate
/// keys keep the first occurrence. Embedding rows come from an optional
/// `embedding_row` column, else are assigned in accepted order.
inline CleanResult clean_metadata(const std::vector<RawRow>& rows, const CleanOptions& options = {}) {
  CleanResult result;
  result.report.input_rows = rows.size();

  struct Candidate {
    ViewRecord record;
    std::size_t line;
    std::optional<std::size_t> embedding_row;
  };
  std::vector<Candidate> candidates;
  auto reject = [&](std::size_t line, RejectReason reason, std::string detail) {
    result.report.rejected.push_back({line, reason, std::move(detail)});
  };

  std::set<ViewKey> seen;
  for (const auto& raw : rows) {
    auto field = [&](const std::string& name) -> std::string {
      auto it = raw.fields.find(name);
      return it == raw.fields.end() ? std::string() : it->second;
    };
    const std::string path = field("image_path");
    if (path.empty()) {
      reject(raw.line, RejectReason::missing_file, "empty image_path");
      continue;
    }
    if (options.image_root && !std::filesystem::exists(*options.image_root / path)) {
      reject(raw.line, RejectReason::missing_file, "no such file: " + path);
      continue;
    }
    const std::string crop = field("crop");
    const auto plant = detail::parse_int(field("plant_id"));
    const auto day = detail::parse_int(field("day"));
    const auto level = detail::parse_int(field("level"));
    const auto angle = detail::parse_int(field("angle"));
    const auto leaf = detail::parse_int(field("leaf_count"));
    if (crop.empty() || !plant || !day || !level || !angle || !leaf) {
      reject(raw.line, RejectReason::unparseable, "missing or non-integer field");
      continue;
    }
    if (*plant < 1 || *day < 1 || *leaf < 0) {
      reject(raw.line, RejectReason::unparseable, "plant_id/day must be >= 1, leaf_count >= 0");
      continue;
    }
    if (*level < 1 || *level > kNumLevels) {
      reject(raw.line, RejectReason::bad_level, "level " + std::to_string(*level));
      continue;
    }
    if (*angle < 0 || *angle >= kViewsPerLevel) {
      reject(raw.line, RejectReason::bad_angle, "angle " + std::to_string(*angle));
      continue;
    }
    std::optional<std::size_t> emb_row;
    if (auto it = raw.fields.find("embedding_row"); it != raw.fields.end() && !it->second.empty()) {
      const auto v = detail::parse_int(it->second);
      if (!v || *v < 0) {
        reject(raw.line, RejectReason::unparseable, "bad embedding_row");
        continue;
      }
      emb_row = static_cast<std::size_t>(*v);
    }
    ViewRecord rec;
    rec.crop = Crop(crop);
    rec.plant_id = static_cast<int>(*plant);
    rec.day = static_cast<int>(*day);
    rec.level = static_cast<int>(*level);
    rec.angle = static_cast<int>(*angle);
    rec.leaf_count = static_cast<int>(*leaf);
    rec.image_path = path;
    if (!seen.insert(view_key(rec)).second) {
      reject(raw.line, RejectReason::duplicate_key, "duplicate (crop, plant, day, level, angle)");
      continue;
    }
    candidates.push_back({std::move(rec), raw.line, emb_row});
  }

  if (options.exclude_incomplete_levels) {
    std::map<GroupKey, int> counts;
    for (const auto& c : candidates) ++counts[c.record.group_key()];
    std::vector<Candidate> kept;
    for (auto& c : candidates) {
      const int n = counts[c.record.group_key()];
      if (n < kViewsPerLevel) {
        reject(c.line, RejectReason::incomplete_level_excluded,
               "level group has " + std::to_string(n) + " of 24 views");
      } else {
        kept.push_back(std::move(c));
      }
    }
    candidates = std::move(kept);
  }

  std::size_t next_row = 0;
  for (auto& c : candidates) {
    c.record.embedding_row = c.embedding_row ? *c.embedding_row : next_row;
    ++next_row;
    result.records.push_back(std::move(c.record));
  }
  result.report.accepted = result.records.size();
  std::stable_sort(result.report.rejected.begin(), result.report.rejected.end(),
                   [](const Rejection& a, const Rejection& b) { return a.line < b.line; });
  return result;
}

/// Inverse of parsing: renders records as metadata rows (with embedding_row).
inline std::vector<RawRow> records_to_rows(const std::vector<ViewRecord>& records) {
  std::vector<RawRow> rows;
  rows.reserve(records.size());
  std::size_t line = 2;
  for (const auto& r : records) {
    RawRow row;
    row.line = line++;
    row.fields = {{"image_path", r.image_path},
                  {"crop", r.crop.name()},
                  {"plant_id", std::to_string(r.plant_id)},
                  {"day", std::to_string(r.day)},
                  {"level", std::to_string(r.level)},
                  {"angle", std::to_string(r.angle)},
                  {"leaf_count", std::to_string(r.leaf_count)},
                  {"embedding_row", std::to_string(r.embedding_row)}};
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Binary matrix codec (shared with prior tables)
// ---------------------------------------------------------------------------

inline void write_f32_matrix(const std::filesystem::path& path, std::span<const float> values) {
  std::string bytes;
  io::append_f32le(bytes, values);
  io::atomic_write(path, bytes);
}

/// Reads exactly rows x dim floats; a short file is a truncated payload and a
/// long one disagrees with the manifest count.
inline std::vector<float> read_f32_matrix(const std::filesystem::path& path, std::size_t rows,
                                          std::size_t dim) {
  const std::string bytes = io::read_file(path);
  const std::size_t expected = rows * dim * 4;
  if (bytes.size() < expected) {
    throw FormatError(FormatError::Kind::truncated_payload,
                      path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError(FormatError::Kind::count_mismatch,
                      path.string() + ": payload holds more rows than the manifest declares (" +
                          std::to_string(bytes.size()) + " > " + std::to_string(expected) + " bytes)");
  }
  std::vector<float> out(rows * dim);
  io::decode_f32le(bytes, out);
  return out;
}

// ---------------------------------------------------------------------------
// Cache persistence
// ---------------------------------------------------------------------------

inline std::filesystem::path cache_manifest_path(const std::filesystem::path& base) {
  return io::with_suffix(base, ".manifest.json");
}
inline std::filesystem::path cache_payload_path(const std::filesystem::path& base) {
  return io::with_suffix(base, ".f32bin");
}

inline io::json record_to_json(const ViewRecord& r) {
  return {{"image_path", r.image_path}, {"crop", r.crop.name()},   {"plant_id", r.plant_id},
          {"day", r.day},               {"level", r.level},        {"angle", r.angle},
          {"leaf_count", r.leaf_count}, {"embedding_row", r.embedding_row}};
}

inline ViewRecord record_from_json(const io::json& j) {
  ViewRecord r;
  r.image_path = j.at("image_path").get<std::string>();
  r.crop = Crop(j.at("crop").get<std::string>());
  r.plant_id = j.at("plant_id").get<int>();
  r.day = j.at("day").get<int>();
  r.level = j.at("level").get<int>();
  r.angle = j.at("angle").get<int>();
  r.leaf_count = j.at("leaf_count").get<int>();
  r.embedding_row = j.at("embedding_row").get<std::size_t>();
  return r;
}

inline void write_cache(const std::vector<ViewRecord>& records, std::span<const float> matrix,
                        const std::filesystem::path& base) {
  if (matrix.size() != records.size() * kEmbeddingDim) {
    throw FormatError(FormatError::Kind::dimension_mismatch,
                      "matrix holds " + std::to_string(matrix.size()) + " floats, expected " +
                          std::to_string(records.size()) + " x " + std::to_string(kEmbeddingDim));
  }
  io::json manifest;
  manifest["format"] = "phenofuse-embedding-cache";
  manifest["version"] = kCacheFormatVersion;
  manifest["dimension"] = kEmbeddingDim;
  manifest["record_count"] = records.size();
  manifest["records"] = io::json::array();
  for (const auto& r : records) manifest["records"].push_back(record_to_json(r));
  write_f32_matrix(cache_payload_path(base), matrix);
  io::write_json(cache_manifest_path(base), manifest);
}

inline void write_cache(const EmbeddingCache& cache, const std::filesystem::path& base) {
  if (cache.dimension != kEmbeddingDim) {
    throw FormatError(FormatError::Kind::dimension_mismatch,
                      "cache dimension " + std::to_string(cache.dimension) + " != 512");
  }
  write_cache(cache.records, cache.matrix, base);
}

inline EmbeddingCache read_cache(const std::filesystem::path& base) {
  const io::json manifest = io::read_json(cache_manifest_path(base));
  EmbeddingCache cache;
  try {
    cache.version = manifest.at("version").get<int>();
    cache.dimension = manifest.at("dimension").get<std::size_t>();
    if (cache.dimension != kEmbeddingDim) {
      throw FormatError(FormatError::Kind::dimension_mismatch,
                        "cache dimension " + std::to_string(cache.dimension) + " != 512");
    }
    const auto count = manifest.at("record_count").get<std::size_t>();
    const auto& records = manifest.at("records");
    if (!records.is_array() || records.size() != count) {
      throw FormatError(FormatError::Kind::count_mismatch,
                        "manifest record_count " + std::to_string(count) + " disagrees with " +
                            std::to_string(records.size()) + " listed records");
    }
    cache.records.reserve(count);
    for (const auto& r : records) cache.records.push_back(record_from_json(r));
  } catch (const io::json::exception& e) {
    throw FormatError(FormatError::Kind::bad_manifest,
                      "malformed cache manifest " + cache_manifest_path(base).string() + ": " + e.what());
  }
  cache.matrix = read_f32_matrix(cache_payload_path(base), cache.records.size(), cache.dimension);
  return cache;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class FindingKind {
  non_finite,
  duplicate_key,
  row_out_of_range,
  bad_level,
  bad_angle,
  bad_day,
  bad_leaf_count,
  dimension_mismatch,
  count_mismatch,
};

inline std::string_view to_string(FindingKind k) {
  switch (k) {
    case FindingKind::non_finite: return "non_finite";
    case FindingKind::duplicate_key: return "duplicate_key";
    case FindingKind::row_out_of_range: return "row_out_of_range";
    case FindingKind::bad_level: return "bad_level";
    case FindingKind::bad_angle: return "bad_angle";
    case FindingKind::bad_day: return "bad_day";
    case FindingKind::bad_leaf_count: return "bad_leaf_count";
    case FindingKind::dimension_mismatch: return "dimension_mismatch";
    case FindingKind::count_mismatch: return "count_mismatch";
  }
  return "unknown";
}

struct Finding {
  FindingKind kind;
  std::optional<std::size_t> record;  // manifest record index
  std::optional<std::size_t> row;     // matrix row
  std::optional<std::size_t> column;  // matrix column
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool passed() const noexcept { return findings.empty(); }
};

/// Never throws on content; every invariant violation becomes a finding.
inline ValidationReport validate_cache(const EmbeddingCache& cache) {
  ValidationReport report;
  auto add = [&](Finding f) { report.findings.push_back(std::move(f)); };

  if (cache.dimension != kEmbeddingDim) {
    add({FindingKind::dimension_mismatch, {}, {}, {},
         "dimension " + std::to_string(cache.dimension) + " != 512"});
  }
  if (cache.dimension == 0 || cache.matrix.size() % cache.dimension != 0 ||
      cache.rows() != cache.records.size()) {
    add({FindingKind::count_mismatch, {}, {}, {},
         std::to_string(cache.records.size()) + " records vs " + std::to_string(cache.matrix.size()) +
             " matrix floats"});
  }
  const std::size_t dim = cache.dimension;
  const std::size_t nrows = cache.rows();
  for (std::size_t r = 0; r < nrows; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      if (!std::isfinite(cache.matrix[r * dim + c])) {
        add({FindingKind::non_finite, {}, r, c,
             "non-finite value at row " + std::to_string(r) + ", column " + std::to_string(c)});
      }
    }
  }
  std::map<ViewKey, std::size_t> first_seen;
  for (std::size_t i = 0; i < cache.records.size(); ++i) {
    const auto& rec = cache.records[i];
    if (rec.embedding_row >= cache.records.size() || rec.embedding_row >= nrows) {
      add({FindingKind::row_out_of_range, i, rec.embedding_row, {},
           "embedding_row " + std::to_string(rec.embedding_row) + " out of range"});
    }
    if (rec.level < 1 || rec.level > kNumLevels) {
      add({FindingKind::bad_level, i, {}, {}, "level " + std::to_string(rec.level)});
    }
    if (rec.angle < 0 || rec.angle >= kViewsPerLevel) {
      add({FindingKind::bad_angle, i, {}, {}, "angle " + std::to_string(rec.angle)});
    }
    if (rec.day < 1) add({FindingKind::bad_day, i, {}, {}, "day " + std::to_string(rec.day)});
    if (rec.leaf_count < 0) {
      add({FindingKind::bad_leaf_count, i, {}, {}, "leaf_count " + std::to_string(rec.leaf_count)});
    }
    auto [it, inserted] = first_seen.emplace(view_key(rec), i);
    if (!inserted) {
      add({FindingKind::duplicate_key, i, {}, {},
           "record " + std::to_string(i) + " duplicates record " + std::to_string(it->second)});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Grouping
// ---------------------------------------------------------------------------

struct LevelGroup {
  GroupKey key;
  std::vector<std::size_t> rows;     // embedding rows, ordered by angle
  std::vector<std::size_t> records;  // manifest indices, parallel to rows
  bool complete = false;             // all 24 views present

  std::size_t view_count() const noexcept { return rows.size(); }
};

/// Groups the given records by (crop, plant, day, level); groups come out in
/// key order and views within a group in angle order.
inline std::vector<LevelGroup> group_by_level(const EmbeddingCache& cache,
                                              std::span<const std::size_t> record_indices) {
  std::map<GroupKey, std::vector<std::size_t>> buckets;
  for (std::size_t idx : record_indices) buckets[cache.records.at(idx).group_key()].push_back(idx);
  std::vector<LevelGroup> groups;
  groups.reserve(buckets.size());
  for (auto& [key, idxs] : buckets) {
    std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      return cache.records[a].angle < cache.records[b].angle;
    });
    LevelGroup g;
    g.key = key;
    g.records = idxs;
    for (std::size_t i : idxs) g.rows.push_back(cache.records[i].embedding_row);
    g.complete = static_cast<int>(idxs.size()) == kViewsPerLevel;
    groups.push_back(std::move(g));
  }
  return groups;
}

inline std::vector<LevelGroup> group_by_level(const EmbeddingCache& cache) {
  std::vector<std::size_t> all(cache.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return group_by_level(cache, all);
}

}  // namespace phenofuse
