#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "alfa/memory.hpp"
#include "oracles.hpp"

using namespace alfa;

namespace {

ImageEmbeddings random_image(std::mt19937_64& rng, const std::string& src, std::size_t h, std::size_t w, std::size_t d) {
  ImageEmbeddings img;
  img.source_path = src;
  img.dim = d;
  img.grid_h = h;
  img.grid_w = w;
  img.scales = {2, 3};
  for (int s : img.scales) {
    EmbeddingGrid g{h, w, Matrix(h * w, d)};
    for (std::size_t c = 0; c < h * w; ++c) {
      auto v = oracle::random_unit(rng, d);
      std::copy(v.begin(), v.end(), g.vectors.row(c).begin());
    }
    img.local_cls[s] = g;
  }
  return img;
}

}  // namespace

TEST(MemoryBank, RowCountsAndProvenance) {
  std::mt19937_64 rng(1);
  std::vector<ImageEmbeddings> refs{random_image(rng, "a", 2, 2, 4)};
  const std::vector<int> scales{2};
  auto bank = build_bank(refs, scales);
  EXPECT_EQ(bank.rows(2).rows, 4u);
  EXPECT_THROW(bank.rows(3), Error);

  refs.clear();
  for (int i = 0; i < 4; ++i) refs.push_back(random_image(rng, "r" + std::to_string(i), 15, 15, 8));
  const std::vector<int> both{2, 3};
  auto big = build_bank(refs, both);
  EXPECT_EQ(big.rows(2).rows, 900u);
  EXPECT_EQ(big.rows(3).rows, 900u);
  auto p = big.provenance(225 * 2 + 16);
  EXPECT_EQ(p.source, "r2");
  EXPECT_EQ(p.row, 1u);
  EXPECT_EQ(p.col, 1u);
}

TEST(MemoryBank, EmptyAndMismatchedInputs) {
  const std::vector<int> scales{2};
  EXPECT_THROW(build_bank(std::vector<ImageEmbeddings>{}, scales), Error);
  std::mt19937_64 rng(2);
  std::vector<ImageEmbeddings> refs{random_image(rng, "a", 2, 2, 4), random_image(rng, "b", 3, 2, 4)};
  EXPECT_THROW(build_bank(refs, scales), Error);
  std::vector<ImageEmbeddings> one{random_image(rng, "a", 2, 2, 4)};
  EXPECT_THROW(build_bank(one, std::vector<int>{}), Error);
}

TEST(MemoryScore, IdenticalOrthogonalOpposite) {
  ImageEmbeddings ref;
  ref.source_path = "ref";
  ref.dim = 2;
  ref.grid_h = ref.grid_w = 1;
  ref.local_cls[2] = EmbeddingGrid{1, 1, Matrix(1, 2)};
  ref.local_cls[2].vectors.data = {1, 0};
  const std::vector<int> scales{2};
  auto bank = build_bank(std::span(&ref, 1), scales);
  auto score_of = [&](double x, double y) {
    EmbeddingGrid q{1, 1, Matrix(1, 2)};
    q.vectors.data = {x, y};
    return memory_score(q, bank, 2).values[0];
  };
  EXPECT_DOUBLE_EQ(score_of(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(score_of(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(score_of(-1, 0), 1.0);
  EmbeddingGrid wrong{1, 1, Matrix(1, 3)};
  EXPECT_THROW(memory_score(wrong, bank, 2), Error);
}

TEST(MemoryScore, MatchesBruteForceNearestNeighbour) {
  std::mt19937_64 rng(3);
  std::vector<ImageEmbeddings> refs;
  for (int i = 0; i < 3; ++i) refs.push_back(random_image(rng, "r", 4, 4, 6));
  const std::vector<int> scales{2, 3};
  auto bank = build_bank(refs, scales);
  auto q = random_image(rng, "q", 4, 4, 6);
  for (int s : scales) {
    auto g = memory_score(q, bank, s);
    for (std::size_t c = 0; c < 16; ++c) {
      double best = -2;
      for (const auto& r : refs)
        for (std::size_t k = 0; k < 16; ++k) {
          double d = 0;
          for (std::size_t i = 0; i < 6; ++i) d += q.local_cls[s].vectors.row(c)[i] * r.local_cls.at(s).vectors.row(k)[i];
          best = std::max(best, d);
        }
      EXPECT_NEAR(g.values[c], (1 - best) / 2, 1e-12);
    }
  }
}

TEST(MemoryScore, ReferenceScoresZeroAgainstItself) {
  std::mt19937_64 rng(4);
  std::vector<ImageEmbeddings> refs{random_image(rng, "a", 3, 3, 5), random_image(rng, "b", 3, 3, 5)};
  const std::vector<int> scales{2, 3};
  auto bank = build_bank(refs, scales);
  auto m = memory_map(refs[1], bank, scales);
  for (double v : m.values) EXPECT_NEAR(v, 0.0, 1e-7);
}

TEST(MemoryScore, DuplicatesAndOrderDoNotMatter) {
  std::mt19937_64 rng(5);
  std::vector<ImageEmbeddings> refs{random_image(rng, "a", 3, 3, 5), random_image(rng, "b", 3, 3, 5),
                                    random_image(rng, "c", 3, 3, 5)};
  const std::vector<int> scales{2};
  auto q = random_image(rng, "q", 3, 3, 5);
  auto base = memory_score(q, build_bank(refs, scales), 2);
  auto dup = refs;
  dup.push_back(refs[0]);
  EXPECT_EQ(memory_score(q, build_bank(dup, scales), 2), base);
  std::reverse(refs.begin(), refs.end());
  EXPECT_EQ(memory_score(q, build_bank(refs, scales), 2), base);
}

TEST(MemoryBank, BundleRoundTrip) {
  std::mt19937_64 rng(6);
  std::vector<ImageEmbeddings> refs{random_image(rng, "x/a.alfb", 2, 3, 4), random_image(rng, "x/b.alfb", 2, 3, 4)};
  const std::vector<int> scales{2, 3};
  auto bank = build_bank(refs, scales);
  auto [meta, tensors] = bank_bundle(bank);
  auto loaded = load_bank(read_bundle(write_bundle(meta, tensors)));
  EXPECT_EQ(loaded.sources(), bank.sources());
  EXPECT_EQ(loaded.scales(), bank.scales());
  EXPECT_EQ(loaded.grid_h(), 2u);
  EXPECT_EQ(loaded.grid_w(), 3u);
  for (int s : scales) {
    ASSERT_EQ(loaded.rows(s).rows, 12u);
    for (std::size_t i = 0; i < loaded.rows(s).data.size(); ++i)
      EXPECT_EQ(loaded.rows(s).data[i], static_cast<double>(static_cast<float>(bank.rows(s).data[i])));
  }
  EXPECT_THROW(load_bank(read_bundle(write_bundle({{"kind", "text"}, {"embed_dim", "4"}}, {}))), Error);
}
