#pragma once

// One image through the whole engine: prompt adaptation, prototypes, global
// score, aligned per-scale local maps, harmonic fusion, optional memory
// refinement, smoothing and upsampling.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alfa/aligner.hpp"
#include "alfa/bundle.hpp"
#include "alfa/embeddings.hpp"
#include "alfa/memory.hpp"
#include "alfa/parallel.hpp"
#include "alfa/rtp.hpp"
#include "alfa/scoring.hpp"

namespace alfa {

struct PipelineConfig {
  RtpConfig rtp;
  bool adapt = true;  // false scores with the full vanilla pool
  ScoringConfig scoring;
  unsigned jobs = 1;

  void validate() const {
    rtp.validate();
    scoring.validate();
  }
};

struct ImageScore {
  std::string image;
  AnomalyResult result;
  AdaptedPrompts adapted;
  std::size_t degenerate_cells = 0;  // positions scored with global prototypes
  double elapsed_ms = 0.0;
};

inline Grid aligned_local_map(const ImageEmbeddings& image, int scale, const PrototypePair& global, double tau,
                              unsigned jobs, std::size_t* degenerate = nullptr) {
  const auto& local = image.local(scale);
  const auto& summaries = image.value_summary(scale);
  if (image.value_global.empty()) fail(ErrorCode::missing_tensor, image.source_path + ": bundle has no value_summary_global");
  Grid out(local.rows, local.cols);
  std::vector<std::size_t> flagged(local.rows, 0);
  parallel_for(local.rows, jobs, [&](std::size_t i) {
    for (std::size_t j = 0; j < local.cols; ++j) {
      auto projected = project_prototypes(solve_projection(image.value_global, summaries.at(i, j)), global);
      flagged[i] += projected.degenerate ? 1 : 0;
      out.at(i, j) = global_score(local.at(i, j), projected.prototypes, tau);
    }
  });
  if (degenerate)
    for (auto f : flagged) *degenerate += f;
  return out;
}

inline ImageScore score_image(const ImageEmbeddings& image, const EmbeddedPromptSet& pool, const PipelineConfig& config,
                              const MemoryBank* bank = nullptr) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  ImageScore out;
  out.image = image.source_path;

  out.adapted = config.adapt ? adapt_prompts(image.cls, pool, config.rtp) : keep_all_prompts(image.cls, pool, config.rtp);
  const auto global = make_prototypes(out.adapted.prompts);
  const double s_g = global_score(image.cls, global, config.scoring.tau);

  std::map<int, Grid> per_scale;
  std::vector<Grid> grids;
  for (int s : config.scoring.scales) {
    grids.push_back(aligned_local_map(image, s, global, config.scoring.tau, config.jobs, &out.degenerate_cells));
    per_scale[s] = grids.back();
  }
  Grid fused = harmonic_fuse(grids);
  if (bank) fused = memory_refine(fused, memory_map(image, *bank, config.scoring.scales), config.scoring.memory_weight);

  out.result = finalize(fused, s_g, config.scoring.sigma, image.image_h, image.image_w);
  out.result.map.per_scale = std::move(per_scale);
  out.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// Result document: deterministic for identical inputs (no timing).
inline nlohmann::json result_json(const ImageScore& s, const std::string& class_name, const std::string& map_path) {
  nlohmann::json j{{"image", s.image},
                   {"class", class_name},
                   {"score", s.result.score},
                   {"S_G", s.result.global},
                   {"max_local", s.result.max_local},
                   {"kept", {{"normal", s.adapted.kept(Polarity::normal)}, {"abnormal", s.adapted.kept(Polarity::abnormal)}}}};
  if (!map_path.empty()) j["map"] = map_path;
  if (s.degenerate_cells) j["degenerate_cells"] = s.degenerate_cells;
  return j;
}

inline nlohmann::json adapted_json(const AdaptedPrompts& a) {
  nlohmann::json prompts = nlohmann::json::array();
  for (const auto& d : a.diagnostics)
    prompts.push_back({{"text", d.prompt.text},
                       {"polarity", to_string(d.prompt.polarity)},
                       {"source", to_string(d.prompt.source)},
                       {"similarity", d.similarity},
                       {"contextual_score", d.contextual_score},
                       {"kept", d.kept}});
  return {{"class", a.prompts.class_name},
          {"kept", {{"normal", a.kept(Polarity::normal)}, {"abnormal", a.kept(Polarity::abnormal)}}},
          {"prompts", std::move(prompts)}};
}

inline std::vector<float> grid_f32(const Grid& g) { return std::vector<float>(g.values.begin(), g.values.end()); }

// Map bundle: the image's meta plus "anomaly_map" [H, W], "grid/s{S}",
// "grid/fused", "grid/smoothed" and the ground-truth mask when present.
inline std::pair<Meta, std::vector<TensorData>> map_bundle(const ImageEmbeddings& image, const ImageScore& s) {
  Meta meta = image_meta(image);
  meta["content"] = "anomaly_map";
  std::vector<TensorData> tensors;
  const auto& m = s.result.map;
  tensors.push_back(TensorData::f32("anomaly_map", {m.full.rows, m.full.cols}, grid_f32(m.full)));
  for (const auto& [scale, g] : m.per_scale)
    tensors.push_back(TensorData::f32(scale_key("grid", scale), {g.rows, g.cols}, grid_f32(g)));
  tensors.push_back(TensorData::f32("grid/fused", {m.fused.rows, m.fused.cols}, grid_f32(m.fused)));
  tensors.push_back(TensorData::f32("grid/smoothed", {m.smoothed.rows, m.smoothed.cols}, grid_f32(m.smoothed)));
  if (image.gt_mask) {
    std::vector<std::uint8_t> mask(image.gt_mask->size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = image.gt_mask->values[i] > 0.5 ? 1 : 0;
    tensors.push_back(TensorData::u8("gt_mask", {image.gt_mask->rows, image.gt_mask->cols}, mask));
  }
  return {std::move(meta), std::move(tensors)};
}

}  // namespace alfa
