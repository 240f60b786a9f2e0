#pragma once

// Typed views of image, text and map bundles.
//
// Image bundle (kind=image) tensors:
//   cls_embedding            [d]
//   local_cls/s{S}           [grid_h, grid_w, d]   window embeddings per scale
//   value_summary_global     [d]
//   value_summary_local/s{S} [grid_h, grid_w, d]
//   gt_mask                  [image_h, image_w] u8, optional
// Text bundle (kind=text) tensors emb_normal [n+, d], emb_abnormal [n-, d];
// meta "class", "normal_texts" / "abnormal_texts" (JSON string arrays, one
// entry per row) and optionally "normal_sources" / "abnormal_sources".

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alfa/bundle.hpp"
#include "alfa/linalg.hpp"
#include "alfa/prompts.hpp"

namespace alfa {

inline constexpr double kUnitTolerance = 1e-3;

inline std::string scale_key(std::string_view prefix, int scale) {
  return std::string(prefix) + "/s" + std::to_string(scale);
}

// grid_h x grid_w field of d-vectors, flattened row-major into a Matrix.
struct EmbeddingGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Matrix vectors;

  std::span<const double> at(std::size_t i, std::size_t j) const { return vectors.row(i * cols + j); }
  std::span<double> at(std::size_t i, std::size_t j) { return vectors.row(i * cols + j); }
  std::size_t dim() const { return vectors.cols; }
};

struct ImageEmbeddings {
  Meta meta;
  std::string source_path;
  std::size_t dim = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t image_h = 0;
  std::size_t image_w = 0;
  std::vector<int> scales;
  Vec cls;
  Vec value_global;
  std::map<int, EmbeddingGrid> local_cls;
  std::map<int, EmbeddingGrid> value_local;
  std::optional<Grid> gt_mask;

  const EmbeddingGrid& local(int scale) const {
    auto it = local_cls.find(scale);
    if (it == local_cls.end())
      fail(ErrorCode::missing_tensor, source_path + ": no local embeddings for scale " + std::to_string(scale));
    return it->second;
  }

  const EmbeddingGrid& value_summary(int scale) const {
    auto it = value_local.find(scale);
    if (it == value_local.end())
      fail(ErrorCode::missing_tensor, source_path + ": no local value summary for scale " + std::to_string(scale));
    return it->second;
  }
};

namespace detail {

inline void require_unit_rows(const Matrix& m, const std::string& what) {
  for (std::size_t r = 0; r < m.rows; ++r)
    if (!is_unit(m.row(r), kUnitTolerance))
      fail(ErrorCode::invalid_argument, what + " row " + std::to_string(r) + " is not unit-norm");
}

inline void require_finite(std::span<const double> v, const std::string& what) {
  for (double x : v)
    if (!std::isfinite(x)) fail(ErrorCode::invalid_argument, what + " contains non-finite values");
}

inline EmbeddingGrid load_grid(const Bundle& b, const std::string& name, std::size_t h, std::size_t w, std::size_t d) {
  auto t = b.f32(name);
  if (t.dim(0) != h || t.dim(1) != w || t.dim(2) != d)
    fail(ErrorCode::shape_mismatch, "tensor '" + name + "' does not match grid " + std::to_string(h) + "x" + std::to_string(w));
  return {h, w, Matrix::from<float>(h * w, d, t.data)};
}

}  // namespace detail

inline ImageEmbeddings load_image_embeddings(const Bundle& b) {
  if (b.kind() != "image") fail(ErrorCode::invalid_argument, "expected an image bundle, got kind '" + std::string(b.kind()) + "'");
  ImageEmbeddings img;
  img.meta = b.meta();
  img.source_path = b.meta_at("source_path");
  img.dim = b.embed_dim();
  img.grid_h = parse_positive(b.meta_at("grid_h"), "grid_h");
  img.grid_w = parse_positive(b.meta_at("grid_w"), "grid_w");
  img.image_h = parse_positive(b.meta_at("image_h"), "image_h");
  img.image_w = parse_positive(b.meta_at("image_w"), "image_w");
  img.scales = parse_scale_list(b.meta_at("scales"));

  auto cls = b.f32("cls_embedding");
  img.cls.assign(cls.data.begin(), cls.data.end());
  if (!is_unit(img.cls, kUnitTolerance)) fail(ErrorCode::invalid_argument, img.source_path + ": cls_embedding is not unit-norm");

  if (b.has("value_summary_global")) {
    auto v = b.f32("value_summary_global");
    img.value_global.assign(v.data.begin(), v.data.end());
    detail::require_finite(img.value_global, "value_summary_global");
  }
  for (int s : img.scales) {
    if (auto name = scale_key("local_cls", s); b.has(name)) {
      img.local_cls[s] = detail::load_grid(b, name, img.grid_h, img.grid_w, img.dim);
      detail::require_unit_rows(img.local_cls[s].vectors, img.source_path + ": " + name);
    }
    if (auto name = scale_key("value_summary_local", s); b.has(name)) {
      img.value_local[s] = detail::load_grid(b, name, img.grid_h, img.grid_w, img.dim);
      detail::require_finite(img.value_local[s].vectors.data, name);
    }
  }
  if (b.has("gt_mask")) {
    auto m = b.u8("gt_mask");
    if (m.rank() != 2 || m.dim(0) != img.image_h || m.dim(1) != img.image_w)
      fail(ErrorCode::shape_mismatch, img.source_path + ": gt_mask shape does not match image_h x image_w");
    Grid mask(img.image_h, img.image_w);
    for (std::size_t i = 0; i < m.data.size(); ++i) mask.values[i] = m.data[i] ? 1.0 : 0.0;
    img.gt_mask = std::move(mask);
  }
  return img;
}

inline std::vector<float> to_f32(std::span<const double> v) { return std::vector<float>(v.begin(), v.end()); }

// Inverse of load_image_embeddings; used by the fixture generator and tests.
inline std::vector<TensorData> image_tensors(const ImageEmbeddings& img) {
  std::vector<TensorData> out;
  const std::uint64_t d = img.dim;
  out.push_back(TensorData::f32("cls_embedding", {d}, to_f32(img.cls)));
  for (const auto& [s, g] : img.local_cls)
    out.push_back(TensorData::f32(scale_key("local_cls", s), {g.rows, g.cols, d}, to_f32(g.vectors.data)));
  if (!img.value_global.empty()) out.push_back(TensorData::f32("value_summary_global", {d}, to_f32(img.value_global)));
  for (const auto& [s, g] : img.value_local)
    out.push_back(TensorData::f32(scale_key("value_summary_local", s), {g.rows, g.cols, d}, to_f32(g.vectors.data)));
  if (img.gt_mask) {
    std::vector<std::uint8_t> mask(img.gt_mask->size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.gt_mask->values[i] > 0.5 ? 1 : 0;
    out.push_back(TensorData::u8("gt_mask", {img.gt_mask->rows, img.gt_mask->cols}, mask));
  }
  return out;
}

inline Meta image_meta(const ImageEmbeddings& img) {
  Meta meta = img.meta;
  meta["kind"] = "image";
  meta["embed_dim"] = std::to_string(img.dim);
  meta["grid_h"] = std::to_string(img.grid_h);
  meta["grid_w"] = std::to_string(img.grid_w);
  meta["image_h"] = std::to_string(img.image_h);
  meta["image_w"] = std::to_string(img.image_w);
  meta["scales"] = format_scale_list(img.scales);
  meta["source_path"] = img.source_path;
  return meta;
}

// ---------------------------------------------------------------------------
// Prompt embeddings

struct EmbeddedPrompt {
  AnomalyPrompt prompt;
  Vec embedding;
};

struct EmbeddedPromptSet {
  std::string class_name;
  std::vector<EmbeddedPrompt> prompts;

  std::size_t dim() const { return prompts.empty() ? 0 : prompts.front().embedding.size(); }

  std::size_t count(Polarity p) const {
    std::size_t n = 0;
    for (const auto& e : prompts) n += e.prompt.polarity == p ? 1 : 0;
    return n;
  }

  PromptSet texts() const {
    PromptSet set{class_name, {}};
    for (const auto& e : prompts) set.prompts.push_back(e.prompt);
    return set;
  }
};

namespace detail {

inline std::vector<std::string> meta_string_array(const Bundle& b, const std::string& key, std::size_t expected) {
  if (!b.meta().contains(key)) return std::vector<std::string>(expected);
  auto j = nlohmann::json::parse(b.meta_at(key), nullptr, false);
  if (j.is_discarded() || !j.is_array()) fail(ErrorCode::malformed_header, "meta '" + key + "' must be a JSON array");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) fail(ErrorCode::malformed_header, "meta '" + key + "' must contain strings");
    out.push_back(v.get<std::string>());
  }
  if (out.size() != expected)
    fail(ErrorCode::shape_mismatch, "meta '" + key + "' has " + std::to_string(out.size()) + " entries for " +
                                        std::to_string(expected) + " rows");
  return out;
}

}  // namespace detail

inline EmbeddedPromptSet load_prompt_embeddings(const Bundle& b) {
  if (b.kind() != "text") fail(ErrorCode::invalid_argument, "expected a text bundle, got kind '" + std::string(b.kind()) + "'");
  EmbeddedPromptSet set;
  set.class_name = b.meta_or("class", "");
  for (Polarity p : {Polarity::normal, Polarity::abnormal}) {
    const std::string tag(to_string(p));
    const std::string name = "emb_" + tag;
    if (!b.has(name)) continue;
    auto t = b.f32(name);
    const auto rows = t.dim(0), d = t.dim(1);
    auto m = Matrix::from<float>(rows, d, t.data);
    detail::require_unit_rows(m, name);
    auto texts = detail::meta_string_array(b, tag + "_texts", rows);
    auto sources = detail::meta_string_array(b, tag + "_sources", rows);
    for (std::size_t r = 0; r < rows; ++r) {
      AnomalyPrompt prompt{texts[r], p, sources[r].empty() ? PromptSource::from_template : parse_source(sources[r]),
                           set.class_name};
      auto row = m.row(r);
      set.prompts.push_back({std::move(prompt), Vec(row.begin(), row.end())});
    }
  }
  return set;
}

inline std::pair<Meta, std::vector<TensorData>> prompt_bundle(const EmbeddedPromptSet& set) {
  const std::size_t d = set.dim();
  Meta meta{{"kind", "text"}, {"embed_dim", std::to_string(d)}, {"class", set.class_name}};
  std::vector<TensorData> tensors;
  for (Polarity p : {Polarity::normal, Polarity::abnormal}) {
    const std::string tag(to_string(p));
    std::vector<float> rows;
    nlohmann::json texts = nlohmann::json::array(), sources = nlohmann::json::array();
    std::uint64_t n = 0;
    for (const auto& e : set.prompts) {
      if (e.prompt.polarity != p) continue;
      if (e.embedding.size() != d) fail(ErrorCode::dimension_mismatch, "prompt embeddings differ in dimension");
      rows.insert(rows.end(), e.embedding.begin(), e.embedding.end());
      texts.push_back(e.prompt.text);
      sources.push_back(to_string(e.prompt.source));
      ++n;
    }
    meta[tag + "_texts"] = texts.dump();
    meta[tag + "_sources"] = sources.dump();
    tensors.push_back(TensorData::f32("emb_" + tag, {n, d}, rows));
  }
  return {std::move(meta), std::move(tensors)};
}

}  // namespace alfa
