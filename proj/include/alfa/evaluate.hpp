#pragma once

// Batch evaluation over score results: per-class and macro-averaged image
// and pixel metrics.
//
// Each result JSON written by `alfa score` names its map bundle ("map",
// relative to the JSON file). The map bundle carries "anomaly_map" and, when
// known, "gt_mask"; an image is anomalous iff its mask has a defect pixel.
// Tiles of one source image (meta "tile_x", "tile_y", "full_h", "full_w")
// are max-merged onto the full canvas before scoring.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alfa/bundle.hpp"
#include "alfa/metrics.hpp"
#include "alfa/parallel.hpp"
#include "alfa/prompts.hpp"

namespace alfa {

struct TileOffset {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t full_h = 0;
  std::size_t full_w = 0;
};

struct EvalItem {
  std::string class_name;
  std::string image;
  double score = 0.0;
  bool anomalous = false;
  std::optional<PixelEval> pixels;
  std::optional<TileOffset> tile;
};

struct ImageMetrics {
  double auroc = 0.0;
  double aupr = 0.0;
  double f1_max = 0.0;
};

struct ClassReport {
  std::size_t images = 0;
  std::optional<ImageMetrics> image;
  std::optional<PixelMetrics> pixel;
};

struct EvalReport {
  std::map<std::string, ClassReport> classes;
  std::optional<ImageMetrics> macro_image;
  std::optional<PixelMetrics> macro_pixel;
  double pro_fpr = 0.3;
};

inline std::optional<TileOffset> tile_offset(const Meta& meta) {
  if (!meta.contains("tile_x")) return std::nullopt;
  auto num = [&](const char* key) {
    auto it = meta.find(key);
    if (it == meta.end()) fail(ErrorCode::malformed_header, std::string("tiled bundle is missing '") + key + "'");
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (ec != std::errc{} || ptr != it->second.data() + it->second.size())
      fail(ErrorCode::malformed_header, std::string("tile meta '") + key + "' is not an integer");
    return static_cast<std::size_t>(v);
  };
  return TileOffset{num("tile_x"), num("tile_y"), num("full_h"), num("full_w")};
}

// nullopt for JSON files that are not score results (no "score" field).
inline std::optional<EvalItem> load_eval_item(const std::filesystem::path& result_path) {
  const auto j = read_json_file(result_path);
  if (!j.is_object() || !j.contains("score")) return std::nullopt;
  EvalItem item;
  try {
    item.image = j.at("image").get<std::string>();
    item.class_name = j.value("class", std::string{});
    item.score = j.at("score").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, result_path.string() + ": " + e.what());
  }
  std::optional<bool> label;
  if (j.contains("label")) label = j.at("label").get<int>() != 0;
  if (j.contains("map")) {
    const auto map = read_bundle_file(result_path.parent_path() / j.at("map").get<std::string>());
    if (item.class_name.empty()) item.class_name = map.meta_or("class", "");
    item.tile = tile_offset(map.meta());
    if (map.has("gt_mask")) {
      auto pred = map.f32("anomaly_map");
      auto mask = map.u8("gt_mask");
      if (pred.shape != mask.shape) fail(ErrorCode::shape_mismatch, result_path.string() + ": map and mask differ in shape");
      PixelEval px{Grid(pred.dim(0), pred.dim(1)), std::move(mask.data)};
      std::copy(pred.data.begin(), pred.data.end(), px.prediction.values.begin());
      item.anomalous = std::any_of(px.mask.begin(), px.mask.end(), [](std::uint8_t m) { return m != 0; });
      item.pixels = std::move(px);
    }
  }
  if (!item.pixels) {
    if (!label) fail(ErrorCode::invalid_argument, result_path.string() + ": no gt_mask and no 'label'; cannot evaluate");
    item.anomalous = *label;
  }
  if (item.class_name.empty()) item.class_name = "default";
  return item;
}

// Max-merges tiles sharing (class, image) onto their full canvas.
inline std::vector<EvalItem> merge_tiles(std::vector<EvalItem> items) {
  std::vector<EvalItem> out;
  std::map<std::pair<std::string, std::string>, std::size_t> merged;
  for (auto& item : items) {
    if (!item.tile) {
      out.push_back(std::move(item));
      continue;
    }
    const auto t = *item.tile;
    auto key = std::make_pair(item.class_name, item.image);
    auto [it, fresh] = merged.try_emplace(key, out.size());
    if (fresh) {
      EvalItem canvas{item.class_name, item.image, item.score, item.anomalous, std::nullopt, std::nullopt};
      if (item.pixels) canvas.pixels = PixelEval{Grid(t.full_h, t.full_w, 0.0), std::vector<std::uint8_t>(t.full_h * t.full_w, 0)};
      out.push_back(std::move(canvas));
    }
    auto& canvas = out[it->second];
    canvas.score = std::max(canvas.score, item.score);
    canvas.anomalous = canvas.anomalous || item.anomalous;
    if (item.pixels && canvas.pixels) {
      const auto& src = *item.pixels;
      auto& dst = *canvas.pixels;
      if (dst.prediction.rows != t.full_h || dst.prediction.cols != t.full_w)
        fail(ErrorCode::shape_mismatch, item.image + ": tiles disagree on the full image size");
      for (std::size_t i = 0; i < src.prediction.rows; ++i)
        for (std::size_t jj = 0; jj < src.prediction.cols; ++jj) {
          const std::size_t y = t.y + i, x = t.x + jj;
          if (y >= t.full_h || x >= t.full_w) fail(ErrorCode::shape_mismatch, item.image + ": tile exceeds the full image");
          dst.prediction.at(y, x) = std::max(dst.prediction.at(y, x), src.prediction.at(i, jj));
          dst.mask[y * t.full_w + x] |= src.mask[i * src.prediction.cols + jj];
        }
    }
  }
  return out;
}

inline EvalReport evaluate(const std::vector<EvalItem>& items, double pro_fpr = 0.3) {
  EvalReport report;
  report.pro_fpr = pro_fpr;
  std::map<std::string, std::vector<const EvalItem*>> by_class;
  for (const auto& item : items) by_class[item.class_name].push_back(&item);

  std::vector<ImageMetrics> image_rows;
  std::vector<PixelMetrics> pixel_rows;
  for (const auto& [name, members] : by_class) {
    ClassReport cls;
    cls.images = members.size();
    LabeledScores labeled;
    for (const auto* m : members) {
      labeled.scores.push_back(m->score);
      labeled.labels.push_back(m->anomalous ? 1 : 0);
    }
    const auto positives = std::count(labeled.labels.begin(), labeled.labels.end(), 1);
    if (positives > 0 && positives < static_cast<long>(labeled.labels.size())) {
      cls.image = ImageMetrics{auroc(labeled), aupr(labeled), f1_max(labeled)};
      image_rows.push_back(*cls.image);
    }
    std::vector<PixelEval> pixels;
    bool any_defect = false, any_normal = false;
    for (const auto* m : members) {
      if (!m->pixels) continue;
      pixels.push_back(*m->pixels);
      for (auto v : m->pixels->mask) (v ? any_defect : any_normal) = true;
    }
    if (any_defect && any_normal && pixels.size() == members.size()) {
      cls.pixel = pixel_metrics(pixels, pro_fpr);
      pixel_rows.push_back(*cls.pixel);
    }
    report.classes[name] = cls;
  }
  if (!image_rows.empty()) {
    ImageMetrics m;
    for (const auto& r : image_rows) {
      m.auroc += r.auroc / image_rows.size();
      m.aupr += r.aupr / image_rows.size();
      m.f1_max += r.f1_max / image_rows.size();
    }
    report.macro_image = m;
  }
  if (!pixel_rows.empty()) {
    PixelMetrics m;
    for (const auto& r : pixel_rows) {
      m.pauroc += r.pauroc / pixel_rows.size();
      m.pro += r.pro / pixel_rows.size();
      m.pf1_max += r.pf1_max / pixel_rows.size();
    }
    report.macro_pixel = m;
  }
  return report;
}

inline nlohmann::json to_json(const std::optional<ImageMetrics>& m) {
  if (!m) return nullptr;
  return {{"auroc", m->auroc}, {"aupr", m->aupr}, {"f1_max", m->f1_max}};
}

inline nlohmann::json to_json(const std::optional<PixelMetrics>& m) {
  if (!m) return nullptr;
  return {{"pauroc", m->pauroc}, {"pro", m->pro}, {"pf1_max", m->pf1_max}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [name, c] : r.classes)
    classes[name] = {{"images", c.images}, {"image", to_json(c.image)}, {"pixel", to_json(c.pixel)}};
  return {{"image", to_json(r.macro_image)}, {"pixel", to_json(r.macro_pixel)}, {"pro_fpr", r.pro_fpr}, {"classes", classes}};
}

// Loads every *.json under `dir` (sorted by path), merges tiles, evaluates.
inline EvalReport evaluate_directory(const std::filesystem::path& dir, double pro_fpr = 0.3, unsigned jobs = 1) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::io, "'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorCode::empty_input, "no result JSON files under '" + dir.string() + "'");
  std::vector<std::optional<EvalItem>> loaded(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) { loaded[i] = load_eval_item(files[i]); });
  std::vector<EvalItem> items;
  for (auto& l : loaded)
    if (l) items.push_back(std::move(*l));
  if (items.empty()) fail(ErrorCode::empty_input, "no score results under '" + dir.string() + "'");
  return evaluate(merge_tiles(std::move(items)), pro_fpr);
}

}  // namespace alfa
