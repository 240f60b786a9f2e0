#pragma once

// .alfb bundle container.
//
// Layout (all integers little-endian):
//   [0, 4)              magic "ALFB"
//   [4, 8)              version, u32
//   [8, 16)             header_len, u64
//   [16, 16+header_len) UTF-8 JSON header {"meta": {...}, "tensors": [...]}
//   [16+header_len, ..) payload region; record offsets are relative to it
//
// Tensors are row-major. f32 payloads are IEEE-754 little-endian, u8 is raw.
// Every record starts on an 8-byte boundary of the payload region; the gap
// between records is zero-filled.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "alfa/error.hpp"

namespace alfa {

inline constexpr std::array<char, 4> kBundleMagic{'A', 'L', 'F', 'B'};
inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr std::size_t kPreambleSize = 16;
inline constexpr std::uint64_t kPayloadAlignment = 8;

enum class DType : std::uint8_t { f32, u8 };

constexpr std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 1; }

constexpr std::string_view dtype_name(DType t) { return t == DType::f32 ? "f32" : "u8"; }

inline DType parse_dtype(std::string_view name) {
  if (name == "f32") return DType::f32;
  if (name == "u8") return DType::u8;
  fail(ErrorCode::malformed_header, "unknown dtype '" + std::string(name) + "'");
}

using Shape = std::vector<std::uint64_t>;
using Meta = std::map<std::string, std::string>;

namespace detail {

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    fail(ErrorCode::shape_mismatch, "tensor size overflows 64 bits");
  return a * b;
}

inline std::uint64_t element_count(const Shape& shape) {
  std::uint64_t n = 1;
  for (auto s : shape) n = checked_mul(n, s);
  return n;
}

inline std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) / a * a; }

template <typename U>
void store_le(std::byte* out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out[i] = static_cast<std::byte>((value >> (8 * i)) & 0xFFu);
}

template <typename U>
U load_le(const std::byte* in) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    value |= static_cast<U>(std::to_integer<std::uint8_t>(in[i])) << (8 * i);
  return value;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace detail

struct TensorRecord {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t byte_len = 0;

  std::uint64_t element_count() const { return detail::element_count(shape); }
  std::uint64_t expected_byte_len() const { return detail::checked_mul(element_count(), dtype_size(dtype)); }

  bool operator==(const TensorRecord&) const = default;
};

struct BundleHeader {
  std::uint32_t version = kBundleVersion;
  Meta meta;
  std::vector<TensorRecord> tensors;

  bool operator==(const BundleHeader&) const = default;
};

// Owned, already-decoded tensor.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return static_cast<std::size_t>(shape.at(i)); }
};

// Tensor payload ready to be written: little-endian bytes plus shape.
struct TensorData {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<std::byte> bytes;

  static TensorData f32(std::string name, Shape shape, std::span<const float> values) {
    TensorData t{std::move(name), DType::f32, std::move(shape), {}};
    t.bytes.resize(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i)
      detail::store_le(t.bytes.data() + 4 * i, std::bit_cast<std::uint32_t>(values[i]));
    return t;
  }

  static TensorData u8(std::string name, Shape shape, std::span<const std::uint8_t> values) {
    TensorData t{std::move(name), DType::u8, std::move(shape), {}};
    t.bytes.resize(values.size());
    if (!values.empty()) std::memcpy(t.bytes.data(), values.data(), values.size());
    return t;
  }
};

// Parses a positive decimal integer; throws malformed_header otherwise.
inline std::uint64_t parse_positive(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || v == 0)
    fail(ErrorCode::malformed_header, std::string(what) + " must be a positive integer, got '" + std::string(text) + "'");
  return v;
}

// "2,3" -> {2, 3}
inline std::vector<int> parse_scale_list(std::string_view text) {
  std::vector<int> scales;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    auto v = parse_positive(item, "scale");
    if (v > 1024) fail(ErrorCode::malformed_header, "scale out of range: " + std::string(item));
    scales.push_back(static_cast<int>(v));
    start = end + 1;
  }
  return scales;
}

inline std::string format_scale_list(std::span<const int> scales) {
  std::string s;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(scales[i]);
  }
  return s;
}

// Tensors whose trailing dimension must equal meta["embed_dim"], with the
// rank they are required to have.
inline int embedding_rank(std::string_view name) {
  if (name == "cls_embedding" || name == "value_summary_global") return 1;
  if (name == "emb_normal" || name == "emb_abnormal") return 2;
  if (name.starts_with("bank/")) return 2;
  if (name.starts_with("local_cls/") || name.starts_with("value_summary_local/")) return 3;
  return 0;
}

inline void validate_header(const BundleHeader& header) {
  if (header.version != kBundleVersion)
    fail(ErrorCode::unsupported_version, "unsupported bundle version " + std::to_string(header.version));

  const auto& meta = header.meta;
  auto kind_it = meta.find("kind");
  if (kind_it == meta.end()) fail(ErrorCode::malformed_header, "meta is missing 'kind'");
  const auto& kind = kind_it->second;
  if (kind != "image" && kind != "text" && kind != "bank")
    fail(ErrorCode::malformed_header, "meta 'kind' must be image, text or bank, got '" + kind + "'");

  auto dim_it = meta.find("embed_dim");
  if (dim_it == meta.end()) fail(ErrorCode::malformed_header, "meta is missing 'embed_dim'");
  const auto embed_dim = parse_positive(dim_it->second, "embed_dim");

  if (kind == "image") {
    for (const char* key : {"grid_h", "grid_w", "scales", "image_h", "image_w", "source_path"})
      if (!meta.contains(key)) fail(ErrorCode::malformed_header, std::string("image meta is missing '") + key + "'");
    for (const char* key : {"grid_h", "grid_w", "image_h", "image_w"}) parse_positive(meta.at(key), key);
    parse_scale_list(meta.at("scales"));
  }

  std::unordered_set<std::string_view> names;
  for (const auto& r : header.tensors) {
    if (r.name.empty()) fail(ErrorCode::malformed_header, "tensor with empty name");
    if (!names.insert(r.name).second) fail(ErrorCode::duplicate_name, "duplicate tensor name '" + r.name + "'");
    if (r.byte_len != r.expected_byte_len())
      fail(ErrorCode::shape_mismatch, "tensor '" + r.name + "' has byte_len " + std::to_string(r.byte_len) +
                                          " but shape " + detail::shape_string(r.shape) + " needs " +
                                          std::to_string(r.expected_byte_len()));
    if (int rank = embedding_rank(r.name); rank != 0) {
      if (r.dtype != DType::f32 || static_cast<int>(r.shape.size()) != rank || r.shape.back() != embed_dim)
        fail(ErrorCode::shape_mismatch, "embedding tensor '" + r.name + "' " + detail::shape_string(r.shape) +
                                            " is inconsistent with embed_dim " + std::to_string(embed_dim));
    }
  }
}

class Bundle {
 public:
  Bundle() = default;

  const BundleHeader& header() const { return header_; }
  const Meta& meta() const { return header_.meta; }
  std::string_view kind() const { return header_.meta.at("kind"); }
  std::size_t embed_dim() const { return static_cast<std::size_t>(parse_positive(header_.meta.at("embed_dim"), "embed_dim")); }

  const std::string& meta_at(const std::string& key) const {
    auto it = header_.meta.find(key);
    if (it == header_.meta.end()) fail(ErrorCode::malformed_header, "bundle meta is missing '" + key + "'");
    return it->second;
  }

  std::string meta_or(const std::string& key, std::string fallback) const {
    auto it = header_.meta.find(key);
    return it == header_.meta.end() ? fallback : it->second;
  }

  bool has(std::string_view name) const { return index_.contains(std::string(name)); }

  const TensorRecord& record(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) fail(ErrorCode::missing_tensor, "bundle has no tensor '" + std::string(name) + "'");
    return header_.tensors[it->second];
  }

  std::span<const std::byte> raw(std::string_view name) const {
    const auto& r = record(name);
    return std::span<const std::byte>(payload_).subspan(r.offset, r.byte_len);
  }

  Tensor<float> f32(std::string_view name) const {
    const auto& r = record(name);
    if (r.dtype != DType::f32) fail(ErrorCode::shape_mismatch, "tensor '" + r.name + "' is not f32");
    auto bytes = raw(name);
    Tensor<float> t{r.shape, std::vector<float>(bytes.size() / 4)};
    for (std::size_t i = 0; i < t.data.size(); ++i)
      t.data[i] = std::bit_cast<float>(detail::load_le<std::uint32_t>(bytes.data() + 4 * i));
    return t;
  }

  Tensor<std::uint8_t> u8(std::string_view name) const {
    const auto& r = record(name);
    if (r.dtype != DType::u8) fail(ErrorCode::shape_mismatch, "tensor '" + r.name + "' is not u8");
    auto bytes = raw(name);
    Tensor<std::uint8_t> t{r.shape, std::vector<std::uint8_t>(bytes.size())};
    if (!bytes.empty()) std::memcpy(t.data.data(), bytes.data(), bytes.size());
    return t;
  }

  // Re-packs every tensor so the bundle can be written back or extended.
  std::vector<TensorData> tensor_data() const {
    std::vector<TensorData> out;
    for (const auto& r : header_.tensors) {
      auto bytes = raw(r.name);
      out.push_back({r.name, r.dtype, r.shape, std::vector<std::byte>(bytes.begin(), bytes.end())});
    }
    return out;
  }

 private:
  friend Bundle read_bundle(std::span<const std::byte> stream);

  BundleHeader header_;
  std::vector<std::byte> payload_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline nlohmann::json header_json(const BundleHeader& header) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& r : header.tensors) {
    tensors.push_back({{"name", r.name},
                       {"dtype", dtype_name(r.dtype)},
                       {"shape", r.shape},
                       {"offset", r.offset},
                       {"byte_len", r.byte_len}});
  }
  return {{"meta", header.meta}, {"tensors", std::move(tensors)}};
}

inline std::uint64_t json_u64(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_unsigned())
    fail(ErrorCode::malformed_header, std::string("tensor record field '") + key + "' must be an unsigned integer");
  return j.at(key).get<std::uint64_t>();
}

inline BundleHeader parse_header_json(std::string_view text, std::uint32_t version) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::malformed_header, std::string("header is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("meta") || !j.contains("tensors") || !j["meta"].is_object() ||
      !j["tensors"].is_array())
    fail(ErrorCode::malformed_header, "header must be an object with 'meta' and 'tensors'");

  BundleHeader header;
  header.version = version;
  for (const auto& [key, value] : j["meta"].items()) {
    if (!value.is_string()) fail(ErrorCode::malformed_header, "meta value for '" + key + "' is not a string");
    header.meta[key] = value.get<std::string>();
  }
  for (const auto& t : j["tensors"]) {
    if (!t.is_object() || !t.contains("name") || !t["name"].is_string() || !t.contains("dtype") ||
        !t["dtype"].is_string() || !t.contains("shape") || !t["shape"].is_array())
      fail(ErrorCode::malformed_header, "malformed tensor record");
    TensorRecord r;
    r.name = t["name"].get<std::string>();
    r.dtype = parse_dtype(t["dtype"].get<std::string>());
    for (const auto& s : t["shape"]) {
      if (!s.is_number_unsigned()) fail(ErrorCode::malformed_header, "shape of '" + r.name + "' is not unsigned");
      r.shape.push_back(s.get<std::uint64_t>());
    }
    r.offset = json_u64(t, "offset");
    r.byte_len = json_u64(t, "byte_len");
    header.tensors.push_back(std::move(r));
  }
  return header;
}

}  // namespace detail

// Serializes meta + tensors. Offsets are assigned in the given tensor order.
inline std::vector<std::byte> write_bundle(const Meta& meta, std::span<const TensorData> tensors) {
  BundleHeader header;
  header.meta = meta;
  std::uint64_t cursor = 0;
  for (const auto& t : tensors) {
    TensorRecord r{t.name, t.dtype, t.shape, detail::align_up(cursor, kPayloadAlignment), t.bytes.size()};
    if (r.byte_len != r.expected_byte_len())
      fail(ErrorCode::shape_mismatch, "tensor '" + t.name + "' carries " + std::to_string(t.bytes.size()) +
                                          " bytes but shape " + detail::shape_string(t.shape) + " needs " +
                                          std::to_string(r.expected_byte_len()));
    cursor = r.offset + r.byte_len;
    header.tensors.push_back(std::move(r));
  }
  validate_header(header);

  const std::string json = detail::header_json(header).dump();
  std::vector<std::byte> out(kPreambleSize + json.size() + cursor, std::byte{0});
  std::memcpy(out.data(), kBundleMagic.data(), 4);
  detail::store_le(out.data() + 4, kBundleVersion);
  detail::store_le(out.data() + 8, static_cast<std::uint64_t>(json.size()));
  std::memcpy(out.data() + kPreambleSize, json.data(), json.size());
  std::byte* payload = out.data() + kPreambleSize + json.size();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensors[i].bytes.empty())
      std::memcpy(payload + header.tensors[i].offset, tensors[i].bytes.data(), tensors[i].bytes.size());
  }
  return out;
}

inline Bundle read_bundle(std::span<const std::byte> stream) {
  if (stream.size() < 4 || std::memcmp(stream.data(), kBundleMagic.data(), 4) != 0)
    fail(ErrorCode::bad_magic, "stream does not start with magic 'ALFB'");
  if (stream.size() < kPreambleSize) fail(ErrorCode::truncated, "stream shorter than the 16-byte preamble");
  const auto version = detail::load_le<std::uint32_t>(stream.data() + 4);
  if (version != kBundleVersion)
    fail(ErrorCode::unsupported_version, "unsupported bundle version " + std::to_string(version));
  const auto header_len = detail::load_le<std::uint64_t>(stream.data() + 8);
  if (header_len > stream.size() - kPreambleSize)
    fail(ErrorCode::truncated, "header_len " + std::to_string(header_len) + " exceeds stream size");

  const auto* json_begin = reinterpret_cast<const char*>(stream.data() + kPreambleSize);
  BundleHeader header = detail::parse_header_json(std::string_view(json_begin, header_len), version);
  validate_header(header);

  auto payload = stream.subspan(kPreambleSize + header_len);
  std::vector<const TensorRecord*> by_offset;
  for (const auto& r : header.tensors) {
    if (r.offset > payload.size() || r.byte_len > payload.size() - r.offset)
      fail(ErrorCode::truncated, "tensor '" + r.name + "' extends past the end of the payload");
    if (r.byte_len > 0) by_offset.push_back(&r);
  }
  std::sort(by_offset.begin(), by_offset.end(),
            [](const TensorRecord* a, const TensorRecord* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    if (by_offset[i - 1]->offset + by_offset[i - 1]->byte_len > by_offset[i]->offset)
      fail(ErrorCode::overlapping_records,
           "tensors '" + by_offset[i - 1]->name + "' and '" + by_offset[i]->name + "' overlap");
  }

  Bundle bundle;
  bundle.header_ = std::move(header);
  bundle.payload_.assign(payload.begin(), payload.end());
  for (std::size_t i = 0; i < bundle.header_.tensors.size(); ++i) bundle.index_[bundle.header_.tensors[i].name] = i;
  return bundle;
}

inline std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  if (size && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    fail(ErrorCode::io, "cannot read '" + path.string() + "'");
  return bytes;
}

// Writes to a sibling temp file first and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::io, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::io, "cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

inline Bundle read_bundle_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return read_bundle(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

inline void write_bundle_file(const std::filesystem::path& path, const Meta& meta, std::span<const TensorData> tensors) {
  write_file_atomic(path, write_bundle(meta, tensors));
}

}  // namespace alfa
