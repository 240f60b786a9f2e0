#pragma once

// Deterministic synthetic fixture: prompt embeddings in two cones, normal
// images near the normal cone, abnormal images with one rectangular defect
// whose patches lean toward the abnormal cone, plus value summaries and
// ground-truth masks.
//
// The cone axes are a_n and a_a = cos(θ) a_n + sin(θ) b with b ⟂ a_n and
// θ = separation · π/2, so separation 0 gives identical cones and 1 gives
// orthogonal ones.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "alfa/bundle.hpp"
#include "alfa/embeddings.hpp"
#include "alfa/linalg.hpp"
#include "alfa/prompts.hpp"

namespace alfa {

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t dim = 64;
  std::size_t grid = 15;
  std::size_t patch = 16;  // pixels per patch side
  double separation = 1.0;
  std::size_t normal_images = 100;
  std::size_t abnormal_images = 100;
  std::size_t prompts_per_polarity = 20;
  std::vector<int> scales{2, 3};
  double prompt_spread = 0.5;   // norm of the off-axis perturbation of each prompt
  double image_noise = 0.5;     // same, for image and window embeddings
  double defect_global = 0.5;   // weight of the abnormal axis in an abnormal image's cls embedding
  double value_shift = 0.1;     // value-summary shift inside defects, along a_a - a_n
  double overlap_fraction = 0;  // share of abnormal prompts placed inside the normal cone
  std::size_t min_defect = 2;   // defect side length range, in patches
  std::size_t max_defect = 5;
  std::string class_name = "synthetic";

  void validate() const {
    if (dim < 2) fail(ErrorCode::invalid_argument, "synthetic fixture needs dim >= 2");
    if (grid == 0 || patch == 0) fail(ErrorCode::invalid_argument, "grid and patch must be positive");
    if (min_defect == 0 || min_defect > max_defect || max_defect > grid)
      fail(ErrorCode::invalid_argument, "defect size range must satisfy 1 <= min <= max <= grid");
    if (prompts_per_polarity == 0) fail(ErrorCode::invalid_argument, "need at least one prompt per polarity");
    if (!(overlap_fraction >= 0.0 && overlap_fraction <= 1.0))
      fail(ErrorCode::invalid_argument, "overlap fraction must lie in [0, 1]");
    if (!(separation >= 0.0 && separation <= 1.0)) fail(ErrorCode::invalid_argument, "separation must lie in [0, 1]");
    for (int s : scales)
      if (s < 1 || static_cast<std::size_t>(s) > grid) fail(ErrorCode::invalid_argument, "scale must lie in [1, grid]");
  }
};

struct SynthFixture {
  EmbeddedPromptSet prompts;
  std::vector<ImageEmbeddings> images;  // normal images first
  std::vector<bool> anomalous;
};

namespace detail {

class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

  Vec gaussian(std::size_t d) {
    Vec v(d);
    for (auto& x : v) x = normal_(engine_);
    return v;
  }

  Vec unit(std::size_t d) { return normalized(gaussian(d)); }

  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Vec axpy(double a, std::span<const double> x, std::span<const double> y) {
  Vec out(y.begin(), y.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * x[i];
  return out;
}

inline Vec mix(double wa, std::span<const double> a, double wb, std::span<const double> b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = wa * a[i] + wb * b[i];
  return out;
}

// Window of `scale` patches covering position i, shifted inward at borders.
inline std::size_t window_start(std::size_t i, int scale, std::size_t grid) {
  const long start = static_cast<long>(i) - static_cast<long>((scale - 1) / 2);
  return static_cast<std::size_t>(std::clamp<long>(start, 0, static_cast<long>(grid) - scale));
}

}  // namespace detail

inline SynthFixture synth_fixture(const SynthConfig& cfg) {
  cfg.validate();
  detail::SynthRng rng(cfg.seed);
  const std::size_t d = cfg.dim;

  const Vec normal_axis = rng.unit(d);
  Vec other = rng.gaussian(d);
  other = normalized(detail::axpy(-dot(other, normal_axis), normal_axis, other));
  const double theta = cfg.separation * std::numbers::pi / 2.0;
  const Vec abnormal_axis = detail::mix(std::cos(theta), normal_axis, std::sin(theta), other);
  const Vec shift_dir = detail::mix(1.0, abnormal_axis, -1.0, normal_axis);

  auto around = [&](const Vec& axis, double spread) { return normalized(detail::axpy(spread, rng.unit(d), axis)); };

  SynthFixture fx;
  fx.prompts.class_name = cfg.class_name;
  const auto overlapping = static_cast<std::size_t>(std::round(cfg.overlap_fraction * cfg.prompts_per_polarity));
  for (std::size_t i = 0; i < cfg.prompts_per_polarity; ++i)
    fx.prompts.prompts.push_back({{"normal prompt " + std::to_string(i), Polarity::normal, PromptSource::from_template, cfg.class_name},
                                  around(normal_axis, cfg.prompt_spread)});
  for (std::size_t i = 0; i < cfg.prompts_per_polarity; ++i) {
    const bool misplaced = i >= cfg.prompts_per_polarity - overlapping;
    fx.prompts.prompts.push_back({{"abnormal prompt " + std::to_string(i), Polarity::abnormal, PromptSource::from_template, cfg.class_name},
                                  around(misplaced ? normal_axis : abnormal_axis, cfg.prompt_spread)});
  }

  const std::size_t total = cfg.normal_images + cfg.abnormal_images;
  for (std::size_t n = 0; n < total; ++n) {
    const bool abnormal = n >= cfg.normal_images;
    ImageEmbeddings img;
    img.dim = d;
    img.grid_h = img.grid_w = cfg.grid;
    img.image_h = img.image_w = cfg.grid * cfg.patch;
    img.scales = cfg.scales;
    img.source_path = std::string(abnormal ? "abnormal" : "normal") + "/" + std::to_string(n) + ".png";
    img.meta["class"] = cfg.class_name;

    // Defect rectangle in patch units (empty for normal images).
    std::size_t top = 0, left = 0, h = 0, w = 0;
    if (abnormal) {
      h = rng.uniform(cfg.min_defect, cfg.max_defect);
      w = rng.uniform(cfg.min_defect, cfg.max_defect);
      top = rng.uniform(0, cfg.grid - h);
      left = rng.uniform(0, cfg.grid - w);
    }
    auto in_defect = [&](std::size_t i, std::size_t j) { return i >= top && i < top + h && j >= left && j < left + w; };

    const double g = abnormal ? cfg.defect_global : 0.0;
    img.cls = normalized(detail::axpy(cfg.image_noise, rng.unit(d), detail::mix(1.0 - g, normal_axis, g, abnormal_axis)));
    img.value_global = around(normal_axis, cfg.image_noise);

    for (int s : cfg.scales) {
      EmbeddingGrid local{cfg.grid, cfg.grid, Matrix(cfg.grid * cfg.grid, d)};
      EmbeddingGrid values{cfg.grid, cfg.grid, Matrix(cfg.grid * cfg.grid, d)};
      for (std::size_t i = 0; i < cfg.grid; ++i)
        for (std::size_t j = 0; j < cfg.grid; ++j) {
          const std::size_t r0 = detail::window_start(i, s, cfg.grid), c0 = detail::window_start(j, s, cfg.grid);
          std::size_t hits = 0;
          for (std::size_t r = r0; r < r0 + s; ++r)
            for (std::size_t c = c0; c < c0 + s; ++c) hits += in_defect(r, c) ? 1 : 0;
          const double f = static_cast<double>(hits) / static_cast<double>(s * s);
          auto e = normalized(detail::axpy(cfg.image_noise, rng.unit(d), detail::mix(1.0 - f, normal_axis, f, abnormal_axis)));
          std::copy(e.begin(), e.end(), local.at(i, j).begin());
          auto v = detail::axpy(cfg.value_shift * f, shift_dir, img.value_global);
          std::copy(v.begin(), v.end(), values.at(i, j).begin());
        }
      img.local_cls[s] = std::move(local);
      img.value_local[s] = std::move(values);
    }

    Grid mask(img.image_h, img.image_w, 0.0);
    for (std::size_t y = 0; y < img.image_h; ++y)
      for (std::size_t x = 0; x < img.image_w; ++x) mask.at(y, x) = in_defect(y / cfg.patch, x / cfg.patch) ? 1.0 : 0.0;
    img.gt_mask = std::move(mask);

    fx.images.push_back(std::move(img));
    fx.anomalous.push_back(abnormal);
  }
  return fx;
}

// Writes prompts.alfb and images/<normal|abnormal>_NNNN.alfb under `dir`;
// returns the image bundle paths in fixture order.
inline std::vector<std::filesystem::path> write_fixture(const SynthFixture& fx, const std::filesystem::path& dir) {
  auto [meta, tensors] = prompt_bundle(fx.prompts);
  write_bundle_file(dir / "prompts.alfb", meta, tensors);
  std::vector<std::filesystem::path> paths;
  for (std::size_t n = 0; n < fx.images.size(); ++n) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04zu.alfb", fx.anomalous[n] ? "abnormal" : "normal", n);
    const auto path = dir / "images" / name;
    write_bundle_file(path, image_meta(fx.images[n]), image_tensors(fx.images[n]));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace alfa
