#pragma once

// Global-to-local alignment of text prototypes.
//
// For each patch position the exporter provides a value summary u_L of the
// local window next to the global summary u_G. The projection W maps the global
// semantic space onto the local one (W u_G = u_L) and carries the global text
// prototypes into the local space before scoring local embeddings.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "alfa/embeddings.hpp"
#include "alfa/error.hpp"
#include "alfa/linalg.hpp"

namespace alfa {

struct PrototypePair {
  Vec normal;
  Vec abnormal;
};

// Per-polarity mean embedding, renormalized.
inline PrototypePair make_prototypes(const EmbeddedPromptSet& adapted) {
  PrototypePair out;
  for (Polarity p : {Polarity::normal, Polarity::abnormal}) {
    Vec sum;
    std::size_t n = 0;
    for (const auto& e : adapted.prompts) {
      if (e.prompt.polarity != p) continue;
      if (sum.empty()) sum.assign(e.embedding.size(), 0.0);
      if (e.embedding.size() != sum.size()) fail(ErrorCode::dimension_mismatch, "prompt embeddings differ in dimension");
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += e.embedding[i];
      ++n;
    }
    if (n == 0) fail(ErrorCode::empty_input, "no " + std::string(to_string(p)) + " prompts to build a prototype from");
    for (auto& v : sum) v /= static_cast<double>(n);
    try {
      (p == Polarity::normal ? out.normal : out.abnormal) = normalized(sum, 1e-9);
    } catch (const Error&) {
      fail(ErrorCode::degenerate, std::string(to_string(p)) + " prompt embeddings cancel out; prototype is undefined");
    }
  }
  return out;
}

// W = I + c a^T: the identity plus one rank-one correction. Stored factored,
// applied in O(d); dense() materializes the d x d matrix.
class RankOneProjection {
 public:
  RankOneProjection(Vec correction, Vec anchor, double scale)
      : correction_(std::move(correction)), anchor_(std::move(anchor)), scale_(scale) {}

  std::size_t dim() const { return anchor_.size(); }

  Vec apply(std::span<const double> x) const {
    const double coef = scale_ * dot(anchor_, x);
    Vec y(x.begin(), x.end());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += correction_[i] * coef;
    return y;
  }

  // Row-major d x d.
  std::vector<double> dense() const {
    const std::size_t d = dim();
    std::vector<double> w(d * d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) w[r * d + c] = correction_[r] * anchor_[c] * scale_;
      w[r * d + r] += 1.0;
    }
    return w;
  }

 private:
  Vec correction_;  // u_L - u_G
  Vec anchor_;      // u_G
  double scale_;    // 1 / (u_G . u_G)
};

// Arbitrary dense d x d map, row-major.
class DenseProjection {
 public:
  DenseProjection(std::size_t d, std::vector<double> w) : d_(d), w_(std::move(w)) {
    if (w_.size() != d * d) fail(ErrorCode::shape_mismatch, "dense projection needs d*d entries");
  }

  static DenseProjection scaled_identity(std::size_t d, double s) {
    std::vector<double> w(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] = s;
    return {d, std::move(w)};
  }

  std::size_t dim() const { return d_; }

  Vec apply(std::span<const double> x) const {
    if (x.size() != d_) fail(ErrorCode::dimension_mismatch, "projection input has wrong dimension");
    Vec y(d_, 0.0);
    for (std::size_t r = 0; r < d_; ++r) y[r] = dot(std::span<const double>(w_.data() + r * d_, d_), x);
    return y;
  }

 private:
  std::size_t d_;
  std::vector<double> w_;
};

// Minimum-Frobenius-deviation-from-identity solution of W u_G = u_L:
//   W = I + (u_L - u_G) u_G^T / (u_G^T u_G)
inline RankOneProjection solve_projection(std::span<const double> global_summary, std::span<const double> local_summary) {
  if (global_summary.size() != local_summary.size())
    fail(ErrorCode::dimension_mismatch, "global and local value summaries differ in dimension");
  const double gg = dot(global_summary, global_summary);
  if (!(gg > 0.0) || !std::isfinite(gg)) fail(ErrorCode::degenerate, "global value summary is zero; projection is singular");
  Vec correction(local_summary.begin(), local_summary.end());
  for (std::size_t i = 0; i < correction.size(); ++i) correction[i] -= global_summary[i];
  return {std::move(correction), Vec(global_summary.begin(), global_summary.end()), 1.0 / gg};
}

struct ProjectedPrototypes {
  PrototypePair prototypes;
  bool degenerate = false;  // W f = 0 for some polarity; global prototypes used instead
};

template <typename Projection>
ProjectedPrototypes project_prototypes(const Projection& w, const PrototypePair& global) {
  ProjectedPrototypes out;
  try {
    out.prototypes.normal = normalized(w.apply(global.normal));
    out.prototypes.abnormal = normalized(w.apply(global.abnormal));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::degenerate) throw;
    out.prototypes = global;
    out.degenerate = true;
  }
  return out;
}

// Local prototypes for every position of one scale.
struct LocalPrototypeGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<PrototypePair> cells;
  std::size_t degenerate_cells = 0;

  const PrototypePair& at(std::size_t i, std::size_t j) const { return cells[i * cols + j]; }
};

inline LocalPrototypeGrid align_prototypes(const ImageEmbeddings& image, int scale, const PrototypePair& global) {
  if (image.value_global.empty())
    fail(ErrorCode::missing_tensor, image.source_path + ": bundle has no value_summary_global");
  const auto& local = image.value_summary(scale);
  LocalPrototypeGrid out{local.rows, local.cols, {}, 0};
  out.cells.reserve(local.rows * local.cols);
  for (std::size_t i = 0; i < local.rows; ++i) {
    for (std::size_t j = 0; j < local.cols; ++j) {
      auto projected = project_prototypes(solve_projection(image.value_global, local.at(i, j)), global);
      out.degenerate_cells += projected.degenerate ? 1 : 0;
      out.cells.push_back(std::move(projected.prototypes));
    }
  }
  return out;
}

}  // namespace alfa
