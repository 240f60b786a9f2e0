#pragma once

// Image and pixel anomaly scores from aligned prototypes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "alfa/aligner.hpp"
#include "alfa/embeddings.hpp"
#include "alfa/error.hpp"
#include "alfa/linalg.hpp"

namespace alfa {

inline constexpr double kHarmonicEpsilon = 1e-8;

struct ScoringConfig {
  double tau = 1.0;  // cosine similarities are divided by tau before the softmax
  std::vector<int> scales{2, 3};
  double sigma = 4.0;  // Gaussian smoothing of the fused grid, in image pixels
  double memory_weight = 0.5;

  void validate() const {
    if (!(tau > 0.0)) fail(ErrorCode::invalid_argument, "tau must be positive");
    if (scales.empty()) fail(ErrorCode::invalid_argument, "at least one scale is required");
    for (int s : scales)
      if (s < 1) fail(ErrorCode::invalid_argument, "scales must be >= 1");
    if (!(sigma >= 0.0)) fail(ErrorCode::invalid_argument, "sigma must be non-negative");
    if (!(memory_weight >= 0.0 && memory_weight <= 1.0))
      fail(ErrorCode::invalid_argument, "memory weight must lie in [0, 1]");
  }
};

// exp(a/tau) / (exp(n/tau) + exp(a/tau)) for normal similarity n and abnormal
// similarity a, evaluated without overflow.
inline double two_way_softmax(double normal_similarity, double abnormal_similarity, double tau) {
  const double z = (abnormal_similarity - normal_similarity) / tau;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double global_score(std::span<const double> image_embedding, const PrototypePair& prototypes, double tau) {
  return two_way_softmax(dot(image_embedding, prototypes.normal), dot(image_embedding, prototypes.abnormal), tau);
}

// Per-position softmax of local embeddings against the aligned local prototypes.
inline Grid local_map(const EmbeddingGrid& local, const LocalPrototypeGrid& prototypes, double tau) {
  if (local.rows != prototypes.rows || local.cols != prototypes.cols)
    fail(ErrorCode::shape_mismatch, "local embeddings and prototypes cover different grids");
  Grid out(local.rows, local.cols);
  for (std::size_t i = 0; i < local.rows; ++i)
    for (std::size_t j = 0; j < local.cols; ++j) out.at(i, j) = global_score(local.at(i, j), prototypes.at(i, j), tau);
  return out;
}

inline Grid local_map(const ImageEmbeddings& image, const LocalPrototypeGrid& prototypes, int scale, double tau) {
  return local_map(image.local(scale), prototypes, tau);
}

// Per-cell harmonic mean, guarded against zero cells.
inline Grid harmonic_fuse(std::span<const Grid> grids) {
  if (grids.empty()) fail(ErrorCode::empty_input, "nothing to fuse");
  for (const auto& g : grids)
    if (!g.same_shape(grids.front())) fail(ErrorCode::shape_mismatch, "per-scale grids differ in shape");
  const double n = static_cast<double>(grids.size());
  Grid out(grids.front().rows, grids.front().cols);
  for (std::size_t c = 0; c < out.size(); ++c) {
    double inv = 0.0, lo = grids.front().values[c], hi = lo;
    for (const auto& g : grids) {
      inv += 1.0 / (g.values[c] + kHarmonicEpsilon);
      lo = std::min(lo, g.values[c]);
      hi = std::max(hi, g.values[c]);
    }
    out.values[c] = std::clamp(n / inv - kHarmonicEpsilon, lo, hi);
  }
  return out;
}

inline Grid memory_refine(const Grid& language, const Grid& memory, double memory_weight = 0.5) {
  if (!language.same_shape(memory)) fail(ErrorCode::shape_mismatch, "language and memory grids differ in shape");
  Grid out(language.rows, language.cols);
  for (std::size_t c = 0; c < out.size(); ++c)
    out.values[c] = (1.0 - memory_weight) * language.values[c] + memory_weight * memory.values[c];
  return out;
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int t = -radius; t <= radius; ++t) total += kernel[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (auto& k : kernel) k /= total;
  return kernel;
}

}  // namespace detail

// Separable Gaussian blur, kernel truncated at 4 sigma, edge values replicated.
// Row and column sigmas may differ; zero leaves that axis untouched.
inline Grid gaussian_smooth(const Grid& in, double sigma_rows, double sigma_cols) {
  if (!(sigma_rows >= 0.0 && sigma_cols >= 0.0)) fail(ErrorCode::invalid_argument, "sigma must be non-negative");
  if ((sigma_rows == 0.0 && sigma_cols == 0.0) || in.size() == 0) return in;
  const auto kr = detail::gaussian_kernel(sigma_rows), kc = detail::gaussian_kernel(sigma_cols);
  const int rr = static_cast<int>(kr.size() / 2), rc = static_cast<int>(kc.size() / 2);

  auto clampi = [](long v, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1)); };
  Grid tmp(in.rows, in.cols), out(in.rows, in.cols);
  for (std::size_t i = 0; i < in.rows; ++i)
    for (std::size_t j = 0; j < in.cols; ++j) {
      double s = 0.0;
      for (int t = -rc; t <= rc; ++t) s += kc[t + rc] * in.at(i, clampi(static_cast<long>(j) + t, in.cols));
      tmp.at(i, j) = s;
    }
  for (std::size_t i = 0; i < in.rows; ++i)
    for (std::size_t j = 0; j < in.cols; ++j) {
      double s = 0.0;
      for (int t = -rr; t <= rr; ++t) s += kr[t + rr] * tmp.at(clampi(static_cast<long>(i) + t, in.rows), j);
      out.at(i, j) = s;
    }
  return out;
}

inline Grid gaussian_smooth(const Grid& in, double sigma) { return gaussian_smooth(in, sigma, sigma); }

// Bilinear resize with corner alignment: output corners sample input corners.
inline Grid upsample_bilinear(const Grid& in, std::size_t rows, std::size_t cols) {
  if (in.size() == 0) fail(ErrorCode::empty_input, "cannot upsample an empty grid");
  Grid out(rows, cols);
  auto coord = [](std::size_t o, std::size_t n_out, std::size_t n_in) {
    return n_out > 1 ? static_cast<double>(o) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1) : 0.0;
  };
  for (std::size_t i = 0; i < rows; ++i) {
    const double y = coord(i, rows, in.rows);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const auto y1 = std::min(y0 + 1, in.rows - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = coord(j, cols, in.cols);
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const auto x1 = std::min(x0 + 1, in.cols - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = in.at(y0, x0) * (1.0 - fx) + in.at(y0, x1) * fx;
      const double bottom = in.at(y1, x0) * (1.0 - fx) + in.at(y1, x1) * fx;
      out.at(i, j) = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

struct AnomalyMap {
  std::map<int, Grid> per_scale;
  Grid fused;     // harmonic fusion, memory-refined when a bank was used
  Grid smoothed;  // fused after Gaussian smoothing
  Grid full;      // smoothed, upsampled to image resolution, clamped to [0, 1]
};

struct AnomalyResult {
  double global = 0.0;     // S_G
  double max_local = 0.0;  // max of the smoothed fused grid
  double score = 0.0;      // (S_G + max_local) / 2
  AnomalyMap map;
};

// sigma is in image pixels; the grid is smoothed with sigma divided by the
// patch pitch on each axis.
inline AnomalyResult finalize(const Grid& fused, double global, double sigma, std::size_t image_h, std::size_t image_w) {
  if (fused.size() == 0) fail(ErrorCode::empty_input, "empty anomaly grid");
  if (image_h == 0 || image_w == 0) fail(ErrorCode::invalid_argument, "image size must be positive");
  AnomalyResult r;
  r.global = global;
  r.map.fused = fused;
  r.map.smoothed = gaussian_smooth(fused, sigma * static_cast<double>(fused.rows) / static_cast<double>(image_h),
                                   sigma * static_cast<double>(fused.cols) / static_cast<double>(image_w));
  r.map.full = upsample_bilinear(r.map.smoothed, image_h, image_w);
  for (auto& v : r.map.full.values) v = std::clamp(v, 0.0, 1.0);
  r.max_local = std::clamp(*std::max_element(r.map.smoothed.values.begin(), r.map.smoothed.values.end()), 0.0, 1.0);
  r.score = 0.5 * (r.global + r.max_local);
  return r;
}

struct Descriptor {
  std::string text;
  Vec embedding;
};

struct RankedDescriptor {
  std::string text;
  double similarity = 0.0;
};

// Descending cosine similarity, stable with respect to input order.
inline std::vector<RankedDescriptor> rank_descriptors(std::span<const double> image_embedding,
                                                      std::span<const Descriptor> descriptors, std::size_t k) {
  std::vector<RankedDescriptor> ranked;
  ranked.reserve(descriptors.size());
  for (const auto& d : descriptors) ranked.push_back({d.text, dot(image_embedding, d.embedding)});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedDescriptor& a, const RankedDescriptor& b) { return a.similarity > b.similarity; });
  if (k < ranked.size()) ranked.resize(k);
  return ranked;
}

}  // namespace alfa
