#pragma once

// Image-level (AUROC, AUPR, F1-max) and pixel-level (pAUROC, PRO, pF1-max)
// anomaly detection metrics. The anomalous class is the positive class.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "alfa/error.hpp"
#include "alfa/linalg.hpp"

namespace alfa {

struct LabeledScores {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // 1 = anomalous
};

namespace detail {

struct SweepStep {
  std::uint64_t positives = 0;  // at this threshold only
  std::uint64_t negatives = 0;
};

// Groups samples by descending unique score.
class ThresholdSweep {
 public:
  ThresholdSweep(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size())
      fail(ErrorCode::shape_mismatch, "scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!std::isfinite(scores[i])) fail(ErrorCode::invalid_argument, "scores must be finite");
      if (labels[i] > 1) fail(ErrorCode::invalid_argument, "labels must be 0 or 1");
      (labels[i] ? total_positives_ : total_negatives_) += 1;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t k = 0; k < order.size();) {
      SweepStep step;
      const double s = scores[order[k]];
      for (; k < order.size() && scores[order[k]] == s; ++k) (labels[order[k]] ? step.positives : step.negatives) += 1;
      steps_.push_back(step);
    }
  }

  ThresholdSweep(std::vector<SweepStep> steps, std::uint64_t positives, std::uint64_t negatives)
      : steps_(std::move(steps)), total_positives_(positives), total_negatives_(negatives) {}

  const std::vector<SweepStep>& steps() const { return steps_; }
  std::uint64_t positives() const { return total_positives_; }
  std::uint64_t negatives() const { return total_negatives_; }

 private:
  std::vector<SweepStep> steps_;
  std::uint64_t total_positives_ = 0;
  std::uint64_t total_negatives_ = 0;
};

inline double auroc(const ThresholdSweep& sweep) {
  if (sweep.positives() == 0 || sweep.negatives() == 0)
    fail(ErrorCode::invalid_argument, "AUROC needs both positive and negative labels");
  // Twice the Mann-Whitney U, kept integral: each (positive, negative) pair
  // contributes 2 when the positive scores higher and 1 on a tie.
  std::uint64_t twice_u = 0, negatives_above = 0;
  for (const auto& step : sweep.steps()) {
    const std::uint64_t below = sweep.negatives() - negatives_above - step.negatives;
    twice_u += step.positives * (2 * below + step.negatives);
    negatives_above += step.negatives;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(sweep.positives()) * static_cast<double>(sweep.negatives()));
}

inline double aupr(const ThresholdSweep& sweep) {
  if (sweep.positives() == 0) fail(ErrorCode::invalid_argument, "AUPR needs at least one positive label");
  double ap = 0.0, prev_recall = 0.0;
  std::uint64_t tp = 0, fp = 0;
  for (const auto& step : sweep.steps()) {
    tp += step.positives;
    fp += step.negatives;
    const double recall = static_cast<double>(tp) / static_cast<double>(sweep.positives());
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

inline double f1_max(const ThresholdSweep& sweep) {
  if (sweep.positives() == 0) fail(ErrorCode::invalid_argument, "F1-max needs at least one positive label");
  double best = 0.0;
  std::uint64_t tp = 0, fp = 0;
  for (const auto& step : sweep.steps()) {
    tp += step.positives;
    fp += step.negatives;
    const std::uint64_t fn = sweep.positives() - tp;
    best = std::max(best, 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn));
  }
  return best;
}

}  // namespace detail

// Mann-Whitney: fraction of (positive, negative) pairs ranked correctly, ties 1/2.
inline double auroc(const LabeledScores& s) { return detail::auroc(detail::ThresholdSweep(s.scores, s.labels)); }

// Average precision with step interpolation over descending unique thresholds.
inline double aupr(const LabeledScores& s) { return detail::aupr(detail::ThresholdSweep(s.scores, s.labels)); }

// Best F1 over thresholds at every unique score (predict anomalous if score >= t).
inline double f1_max(const LabeledScores& s) { return detail::f1_max(detail::ThresholdSweep(s.scores, s.labels)); }

// ---------------------------------------------------------------------------
// Pixel level

struct PixelEval {
  Grid prediction;
  std::vector<std::uint8_t> mask;  // same shape as prediction, 1 = defect

  void validate() const {
    if (mask.size() != prediction.size()) fail(ErrorCode::shape_mismatch, "prediction and mask differ in shape");
  }
};

struct ProPoint {
  double fpr = 0.0;
  double overlap = 0.0;
};

// 8-connected component labels of a binary mask; -1 for background.
inline std::vector<int> label_components(std::span<const std::uint8_t> mask, std::size_t rows, std::size_t cols,
                                         int& count) {
  std::vector<int> labels(mask.size(), -1);
  std::vector<std::size_t> stack;
  count = 0;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || labels[start] >= 0) continue;
    labels[start] = count;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const long r = static_cast<long>(p / cols), c = static_cast<long>(p % cols);
      for (long dr = -1; dr <= 1; ++dr)
        for (long dc = -1; dc <= 1; ++dc) {
          const long nr = r + dr, nc = c + dc;
          if (nr < 0 || nc < 0 || nr >= static_cast<long>(rows) || nc >= static_cast<long>(cols)) continue;
          const std::size_t q = static_cast<std::size_t>(nr) * cols + static_cast<std::size_t>(nc);
          if (mask[q] && labels[q] < 0) {
            labels[q] = count;
            stack.push_back(q);
          }
        }
    }
    ++count;
  }
  return labels;
}

namespace detail {

struct PixelSample {
  double score;
  int component;  // global component id, -1 for normal pixels
};

struct PixelSamples {
  std::vector<PixelSample> samples;  // descending by score
  std::vector<double> component_size;
  std::uint64_t normal_pixels = 0;
};

inline PixelSamples collect_pixels(std::span<const PixelEval> evals) {
  PixelSamples out;
  std::size_t total = 0;
  for (const auto& e : evals) {
    e.validate();
    total += e.mask.size();
  }
  out.samples.reserve(total);
  for (const auto& e : evals) {
    int count = 0;
    auto labels = label_components(e.mask, e.prediction.rows, e.prediction.cols, count);
    const int base = static_cast<int>(out.component_size.size());
    out.component_size.resize(out.component_size.size() + static_cast<std::size_t>(count), 0.0);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (!std::isfinite(e.prediction.values[p])) fail(ErrorCode::invalid_argument, "predictions must be finite");
      const int c = labels[p] < 0 ? -1 : base + labels[p];
      out.samples.push_back({e.prediction.values[p], c});
      if (c >= 0)
        out.component_size[static_cast<std::size_t>(c)] += 1.0;
      else
        ++out.normal_pixels;
    }
  }
  std::sort(out.samples.begin(), out.samples.end(),
            [](const PixelSample& a, const PixelSample& b) { return a.score > b.score; });
  return out;
}

// Walks the PRO curve over a descending sweep of every unique predicted value,
// handing each point (after the initial (0, 0)) to `visit` until it returns false.
template <typename Visit>
void sweep_pro(const PixelSamples& px, Visit&& visit) {
  if (px.component_size.empty()) fail(ErrorCode::invalid_argument, "PRO needs at least one anomalous pixel");
  const auto normal_pixels = static_cast<double>(px.normal_pixels);
  const auto regions = static_cast<double>(px.component_size.size());
  const auto& v = px.samples;
  // Sum over regions of |region ∩ prediction| / |region|, updated per pixel.
  double overlap_sum = 0.0;
  std::uint64_t false_positives = 0;
  for (std::size_t k = 0; k < v.size();) {
    const double s = v[k].score;
    for (; k < v.size() && v[k].score == s; ++k) {
      const int c = v[k].component;
      if (c < 0)
        ++false_positives;
      else
        overlap_sum += 1.0 / px.component_size[static_cast<std::size_t>(c)];
    }
    const double fpr = normal_pixels > 0 ? static_cast<double>(false_positives) / normal_pixels : 0.0;
    if (!visit(ProPoint{fpr, overlap_sum / regions})) return;
  }
}

template <typename Visit>
void sweep_pro(std::span<const PixelEval> evals, Visit&& visit) {
  sweep_pro(collect_pixels(evals), std::forward<Visit>(visit));
}

}  // namespace detail

// Per-region overlap curve: mean overlap over all ground-truth regions
// (8-connected) against the false-positive rate on normal pixels. Starts at
// (0, 0), then one point per unique predicted value, descending.
inline std::vector<ProPoint> pro_curve(std::span<const PixelEval> evals) {
  std::vector<ProPoint> curve{{0.0, 0.0}};
  detail::sweep_pro(evals, [&](const ProPoint& p) {
    curve.push_back(p);
    return true;
  });
  return curve;
}

// Trapezoidal area under the PRO curve on [0, fpr_limit], divided by the limit.
// The curve is cut by linear interpolation at the limit, or held at its last
// value when it never reaches it.
inline double pro_area(std::span<const ProPoint> curve, double fpr_limit) {
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) fail(ErrorCode::invalid_argument, "PRO FPR limit must lie in (0, 1]");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto& a = curve[i - 1];
    const auto& b = curve[i];
    if (a.fpr >= fpr_limit) break;
    if (b.fpr <= fpr_limit) {
      area += (b.fpr - a.fpr) * (a.overlap + b.overlap) / 2.0;
    } else {
      const double t = (fpr_limit - a.fpr) / (b.fpr - a.fpr);
      const double cut = a.overlap + t * (b.overlap - a.overlap);
      area += (fpr_limit - a.fpr) * (a.overlap + cut) / 2.0;
    }
  }
  if (!curve.empty() && curve.back().fpr < fpr_limit) area += (fpr_limit - curve.back().fpr) * curve.back().overlap;
  return area / fpr_limit;
}

namespace detail {

inline double pro(const PixelSamples& px, double fpr_limit) {
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) fail(ErrorCode::invalid_argument, "PRO FPR limit must lie in (0, 1]");
  std::vector<ProPoint> curve{{0.0, 0.0}};
  sweep_pro(px, [&](const ProPoint& p) {
    curve.push_back(p);
    return p.fpr < fpr_limit;
  });
  return pro_area(curve, fpr_limit);
}

}  // namespace detail

inline double pro(std::span<const PixelEval> evals, double fpr_limit = 0.3) {
  return detail::pro(detail::collect_pixels(evals), fpr_limit);
}

struct PixelMetrics {
  double pauroc = 0.0;
  double pro = 0.0;
  double pf1_max = 0.0;
};

inline PixelMetrics pixel_metrics(std::span<const PixelEval> evals, double fpr_limit = 0.3) {
  const auto px = detail::collect_pixels(evals);
  std::vector<detail::SweepStep> steps;
  const auto& v = px.samples;
  for (std::size_t k = 0; k < v.size();) {
    detail::SweepStep step;
    const double s = v[k].score;
    for (; k < v.size() && v[k].score == s; ++k) (v[k].component >= 0 ? step.positives : step.negatives) += 1;
    steps.push_back(step);
  }
  const detail::ThresholdSweep sweep(std::move(steps), v.size() - px.normal_pixels, px.normal_pixels);
  PixelMetrics out;
  out.pauroc = detail::auroc(sweep);
  out.pf1_max = detail::f1_max(sweep);
  out.pro = detail::pro(px, fpr_limit);
  return out;
}

}  // namespace alfa
