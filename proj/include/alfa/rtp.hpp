#pragma once

// Run-time prompt adaptation: per-image filtering of the vanilla pool by
// contextual score.
//
// For an image x with similarity d_x(t) = <f(x), g(t)> to each prompt t, the
// normal and abnormal similarities span two intervals. A prompt whose
// similarity lies in both intervals cannot tell the polarities apart for this
// image and is dropped.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "alfa/embeddings.hpp"
#include "alfa/error.hpp"
#include "alfa/linalg.hpp"
#include "alfa/prompts.hpp"

namespace alfa {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double p) const { return lo <= p && p <= hi; }
};

struct RtpConfig {
  double k = 1.0;         // logistic slope
  double epsilon = 1e-6;  // prompts scoring <= epsilon are dropped

  void validate() const {
    if (!(k > 0.0)) fail(ErrorCode::invalid_argument, "rtp k must be positive");
    if (!(epsilon >= 0.0)) fail(ErrorCode::invalid_argument, "rtp epsilon must be non-negative");
  }
};

struct SimilarityProfile {
  std::vector<double> similarities;  // one per pool prompt, pool order
  Interval normal;
  Interval abnormal;
};

struct ScoredPrompt {
  AnomalyPrompt prompt;
  double similarity = 0.0;
  double contextual_score = 0.0;
  bool kept = false;
};

struct AdaptedPrompts {
  EmbeddedPromptSet prompts;
  std::vector<ScoredPrompt> diagnostics;  // pool order

  std::size_t kept(Polarity p) const { return prompts.count(p); }
};

// Distance from a point to a closed interval; 0 inside.
inline double interval_distance(double point, const Interval& interval) {
  if (interval.lo > interval.hi)
    fail(ErrorCode::invalid_argument, "interval lower bound " + std::to_string(interval.lo) + " exceeds upper bound " +
                                          std::to_string(interval.hi));
  return std::max(0.0, std::max(interval.lo - point, point - interval.hi));
}

// 2 * logistic(k * gap) - 1, i.e. tanh(k * gap / 2): 0 when the point is
// equally far from (or inside) both intervals, approaching 1 as the gap grows.
inline double contextual_score(double similarity, const SimilarityProfile& profile, const RtpConfig& config) {
  const double gap = std::abs(interval_distance(similarity, profile.normal) - interval_distance(similarity, profile.abnormal));
  return std::tanh(0.5 * config.k * gap);
}

inline SimilarityProfile similarity_profile(std::span<const double> image_embedding, const EmbeddedPromptSet& pool) {
  SimilarityProfile profile;
  constexpr double inf = std::numeric_limits<double>::infinity();
  Interval normal{inf, -inf}, abnormal{inf, -inf};
  for (const auto& e : pool.prompts) {
    const double s = dot(image_embedding, e.embedding);
    profile.similarities.push_back(s);
    auto& iv = e.prompt.polarity == Polarity::normal ? normal : abnormal;
    iv.lo = std::min(iv.lo, s);
    iv.hi = std::max(iv.hi, s);
  }
  profile.normal = normal;
  profile.abnormal = abnormal;
  return profile;
}

inline void validate_pool(std::span<const double> image_embedding, const EmbeddedPromptSet& pool) {
  if (pool.prompts.empty()) fail(ErrorCode::empty_input, "prompt pool is empty");
  if (pool.count(Polarity::normal) == 0 || pool.count(Polarity::abnormal) == 0)
    fail(ErrorCode::empty_input, "prompt pool needs at least one normal and one abnormal prompt");
  for (const auto& e : pool.prompts)
    if (e.embedding.size() != image_embedding.size())
      fail(ErrorCode::dimension_mismatch, "prompt '" + e.prompt.text + "' has dimension " +
                                              std::to_string(e.embedding.size()) + ", image has " +
                                              std::to_string(image_embedding.size()));
}

// Single pass: both intervals come from the full pool, every prompt is scored
// against them and kept iff its score exceeds epsilon. A polarity left empty
// keeps its best-scoring prompts (all of them on ties) so both prototypes exist.
inline AdaptedPrompts adapt_prompts(std::span<const double> image_embedding, const EmbeddedPromptSet& pool,
                                    const RtpConfig& config) {
  config.validate();
  validate_pool(image_embedding, pool);
  const auto profile = similarity_profile(image_embedding, pool);

  AdaptedPrompts out;
  out.prompts.class_name = pool.class_name;
  out.diagnostics.reserve(pool.prompts.size());
  for (std::size_t i = 0; i < pool.prompts.size(); ++i) {
    const double s = profile.similarities[i];
    const double score = contextual_score(s, profile, config);
    out.diagnostics.push_back({pool.prompts[i].prompt, s, score, score > config.epsilon});
  }

  for (Polarity p : {Polarity::normal, Polarity::abnormal}) {
    bool any = false;
    double best = -1.0;
    for (const auto& d : out.diagnostics) {
      if (d.prompt.polarity != p) continue;
      any = any || d.kept;
      best = std::max(best, d.contextual_score);
    }
    if (any) continue;
    for (auto& d : out.diagnostics)
      if (d.prompt.polarity == p && d.contextual_score == best) d.kept = true;
  }

  for (std::size_t i = 0; i < pool.prompts.size(); ++i)
    if (out.diagnostics[i].kept) out.prompts.prompts.push_back(pool.prompts[i]);
  return out;
}

// Pool passed through unchanged, scored for diagnostics only.
inline AdaptedPrompts keep_all_prompts(std::span<const double> image_embedding, const EmbeddedPromptSet& pool,
                                       const RtpConfig& config) {
  auto out = adapt_prompts(image_embedding, pool, config);
  out.prompts.prompts = pool.prompts;
  for (auto& d : out.diagnostics) d.kept = true;
  return out;
}

}  // namespace alfa
