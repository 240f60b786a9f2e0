#pragma once

// Few-shot memory bank of normal patch embeddings.
//
// Bank bundle (kind=bank): tensors "bank/s{S}" [N_ref, d]; meta "grid_h",
// "grid_w", "scales" and "sources" (JSON array of reference source paths).
// Row r of every scale comes from reference r / (grid_h*grid_w) at position
// (r % (grid_h*grid_w)) in row-major order.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alfa/bundle.hpp"
#include "alfa/embeddings.hpp"
#include "alfa/error.hpp"
#include "alfa/linalg.hpp"
#include "alfa/scoring.hpp"

namespace alfa {

struct BankProvenance {
  std::string source;
  std::size_t row = 0;  // grid position
  std::size_t col = 0;
};

class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(std::size_t dim, std::size_t grid_h, std::size_t grid_w, std::map<int, Matrix> rows,
             std::vector<std::string> sources)
      : dim_(dim), grid_h_(grid_h), grid_w_(grid_w), rows_(std::move(rows)), sources_(std::move(sources)) {}

  std::size_t dim() const { return dim_; }
  std::size_t grid_h() const { return grid_h_; }
  std::size_t grid_w() const { return grid_w_; }
  const std::vector<std::string>& sources() const { return sources_; }

  std::vector<int> scales() const {
    std::vector<int> out;
    for (const auto& [s, m] : rows_) out.push_back(s);
    return out;
  }

  const Matrix& rows(int scale) const {
    auto it = rows_.find(scale);
    if (it == rows_.end()) fail(ErrorCode::missing_tensor, "memory bank has no rows for scale " + std::to_string(scale));
    return it->second;
  }

  BankProvenance provenance(std::size_t r) const {
    const std::size_t per_image = grid_h_ * grid_w_;
    const std::size_t pos = r % per_image;
    return {sources_.at(r / per_image), pos / grid_w_, pos % grid_w_};
  }

 private:
  std::size_t dim_ = 0;
  std::size_t grid_h_ = 0;
  std::size_t grid_w_ = 0;
  std::map<int, Matrix> rows_;
  std::vector<std::string> sources_;
};

inline MemoryBank build_bank(std::span<const ImageEmbeddings> references, std::span<const int> scales) {
  if (references.empty()) fail(ErrorCode::empty_input, "memory bank needs at least one reference image");
  if (scales.empty()) fail(ErrorCode::empty_input, "memory bank needs at least one scale");
  const auto& first = references.front();
  std::map<int, Matrix> rows;
  std::vector<std::string> sources;
  for (int s : scales) rows[s] = Matrix(0, first.dim);
  for (const auto& ref : references) {
    if (ref.dim != first.dim || ref.grid_h != first.grid_h || ref.grid_w != first.grid_w)
      fail(ErrorCode::dimension_mismatch, "reference '" + ref.source_path + "' differs from '" + first.source_path +
                                              "' in embedding dimension or grid shape");
    sources.push_back(ref.source_path);
    for (int s : scales) {
      const auto& grid = ref.local(s);
      auto& m = rows[s];
      m.data.insert(m.data.end(), grid.vectors.data.begin(), grid.vectors.data.end());
      m.rows += grid.rows * grid.cols;
    }
  }
  return {first.dim, first.grid_h, first.grid_w, std::move(rows), std::move(sources)};
}

inline std::pair<Meta, std::vector<TensorData>> bank_bundle(const MemoryBank& bank) {
  const auto scales = bank.scales();
  Meta meta{{"kind", "bank"},
            {"embed_dim", std::to_string(bank.dim())},
            {"grid_h", std::to_string(bank.grid_h())},
            {"grid_w", std::to_string(bank.grid_w())},
            {"scales", format_scale_list(scales)},
            {"sources", nlohmann::json(bank.sources()).dump()}};
  std::vector<TensorData> tensors;
  for (int s : scales) {
    const auto& m = bank.rows(s);
    tensors.push_back(TensorData::f32(scale_key("bank", s), {m.rows, m.cols}, to_f32(m.data)));
  }
  return {std::move(meta), std::move(tensors)};
}

inline MemoryBank load_bank(const Bundle& b) {
  if (b.kind() != "bank") fail(ErrorCode::invalid_argument, "expected a bank bundle, got kind '" + std::string(b.kind()) + "'");
  const auto d = b.embed_dim();
  const auto grid_h = parse_positive(b.meta_at("grid_h"), "grid_h");
  const auto grid_w = parse_positive(b.meta_at("grid_w"), "grid_w");
  auto sources_json = nlohmann::json::parse(b.meta_at("sources"), nullptr, false);
  if (sources_json.is_discarded() || !sources_json.is_array())
    fail(ErrorCode::malformed_header, "bank meta 'sources' must be a JSON array");
  std::vector<std::string> sources;
  for (const auto& s : sources_json) sources.push_back(s.is_string() ? s.get<std::string>() : s.dump());

  std::map<int, Matrix> rows;
  for (int s : parse_scale_list(b.meta_at("scales"))) {
    auto t = b.f32(scale_key("bank", s));
    if (t.dim(0) != sources.size() * grid_h * grid_w)
      fail(ErrorCode::shape_mismatch, "bank scale " + std::to_string(s) + " row count does not match its sources");
    rows[s] = Matrix::from<float>(t.dim(0), d, t.data);
  }
  return {d, grid_h, grid_w, std::move(rows), std::move(sources)};
}

// Largest cosine similarity between `query` and any bank row (rows and query
// are unit-norm, so the dot product is the cosine).
inline double nearest_similarity(std::span<const double> query, const Matrix& bank) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < bank.rows; ++r) best = std::max(best, dot(query, bank.row(r)));
  return best;
}

// Per position (1 - max cos) / 2, clamped to [0, 1].
inline Grid memory_score(const EmbeddingGrid& query, const MemoryBank& bank, int scale) {
  const auto& rows = bank.rows(scale);
  if (rows.rows == 0) fail(ErrorCode::empty_input, "memory bank is empty");
  if (query.dim() != bank.dim())
    fail(ErrorCode::dimension_mismatch, "query dimension " + std::to_string(query.dim()) + " differs from bank dimension " +
                                            std::to_string(bank.dim()));
  Grid out(query.rows, query.cols);
  for (std::size_t i = 0; i < query.rows; ++i)
    for (std::size_t j = 0; j < query.cols; ++j)
      out.at(i, j) = std::clamp((1.0 - nearest_similarity(query.at(i, j), rows)) / 2.0, 0.0, 1.0);
  return out;
}

inline Grid memory_score(const ImageEmbeddings& image, const MemoryBank& bank, int scale) {
  return memory_score(image.local(scale), bank, scale);
}

// Harmonic fusion of the per-scale memory grids.
inline Grid memory_map(const ImageEmbeddings& image, const MemoryBank& bank, std::span<const int> scales) {
  std::vector<Grid> grids;
  for (int s : scales) grids.push_back(memory_score(image, bank, s));
  return harmonic_fuse(grids);
}

}  // namespace alfa
