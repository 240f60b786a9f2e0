// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run everything, exit 1 if anything failed
//   acceptance --only N   run criterion N only (1-based)

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "alfa/aligner.hpp"
#include "alfa/bundle.hpp"
#include "alfa/metrics.hpp"
#include "alfa/pipeline.hpp"
#include "alfa/rtp.hpp"
#include "alfa/synth.hpp"
#include "oracles.hpp"

using namespace alfa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

struct Criterion {
  const char* name;
  double budget_s;  // <= 0: no time limit
  std::function<Outcome()> run;
};

char buf[512];

template <typename... A>
std::string fmt(const char* f, A... a) {
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

// --- 1 ---------------------------------------------------------------------

Outcome rtp_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1, 1);
  const Vec image{1.0, 0.0};
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rng() % 19);
    std::vector<double> sims;
    std::vector<bool> ab;
    for (int i = 0; i < n; ++i) {
      // every fourth pool quantized so ties and shared endpoints show up
      double s = u(rng);
      sims.push_back(t % 4 == 0 ? std::round(s * 5) / 5 : s);
      ab.push_back(rng() % 2 == 0);
    }
    ab[rng() % n] = false;
    std::size_t j = rng() % n;
    while (!ab[j] && std::count(ab.begin(), ab.end(), false) == 1) j = rng() % n;
    ab[j] = true;
    if (std::count(ab.begin(), ab.end(), false) == 0) ab[(j + 1) % n] = false;
    auto got = adapt_prompts(image, oracle::pool_with_sims(sims, ab), {});
    std::vector<bool> kept;
    for (const auto& d : got.diagnostics) kept.push_back(d.kept);
    if (kept != oracle::rtp_filter(sims, ab, 1.0, 1e-6)) ++mismatches;
  }
  return {mismatches == 0, fmt("1000 pools, %d mismatches", mismatches)};
}

// --- 2 ---------------------------------------------------------------------

Outcome closed_form() {
  double worst_hand = 0;
  auto check = [&](double got, double want) { worst_hand = std::max(worst_hand, std::fabs(got - want)); };
  check(interval_distance(3, {2, 5}), 0);
  check(interval_distance(1, {2, 5}), 1);
  check(interval_distance(7, {2, 5}), 2);
  // Point 0.5 vs normal [0, 0] and abnormal [0.5 + ln 3, ...]: delta = ln 3 at k = 1.
  const double l3 = std::log(3.0);
  SimilarityProfile prof{{}, {0.5, 0.5}, {0.5 + l3, 0.5 + l3}};
  check(contextual_score(0.5, prof, {1.0, 1e-6}), 0.5);
  SimilarityProfile inside{{}, {0.0, 1.0}, {0.2, 0.9}};
  check(contextual_score(0.5, inside, {}), 0.0);
  const auto e1 = Vec{1, 0, 0}, e2 = Vec{0, 1, 0};
  auto w = solve_projection(e1, e2);
  auto we1 = w.apply(e1);
  for (int i = 0; i < 3; ++i) check(we1[i], e2[i]);
  auto id = solve_projection(e2, e2).dense();
  for (int i = 0; i < 9; ++i) check(id[i], i % 4 == 0 ? 1.0 : 0.0);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0, 1);
  double worst_res = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = 2 + rng() % 1023;
    Vec ug(d), ul(d);
    for (auto& v : ug) v = n(rng);
    for (auto& v : ul) v = n(rng);
    auto y = solve_projection(ug, ul).apply(ug);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < d; ++i) {
      num += (y[i] - ul[i]) * (y[i] - ul[i]);
      den += ul[i] * ul[i];
    }
    worst_res = std::max(worst_res, std::sqrt(num / den));
  }
  return {worst_hand <= 1e-12 && worst_res <= 1e-9,
          fmt("hand values max err %.2e (<= 1e-12), residual max %.2e over 1000 instances (<= 1e-9)", worst_hand, worst_res)};
}

// --- 3 ---------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int t = 0; t < 500; ++t) {
    const int n = 2 + static_cast<int>(rng() % 199);
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(t % 2 ? std::round(u(rng) * 10) / 10 : u(rng));
      y.push_back(u(rng) < 0.3);
    }
    y[0] = 0;
    y[1] = 1;
    LabeledScores ls{s, y};
    worst = std::max({worst, std::fabs(auroc(ls) - oracle::auroc(s, y)), std::fabs(aupr(ls) - oracle::aupr(s, y)),
                      std::fabs(f1_max(ls) - oracle::f1_max(s, y))});

    std::vector<PixelEval> evals;
    const int images = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < images; ++i) evals.push_back(oracle::random_pixel_eval(rng, 8, 8, i == 0));
    std::vector<double> ps;
    std::vector<std::uint8_t> py;
    oracle::flatten(evals, ps, py);
    if (std::count(py.begin(), py.end(), 0) == 0) evals.push_back(PixelEval{Grid(8, 8, 0.0), std::vector<std::uint8_t>(64, 0)});
    ps.clear();
    py.clear();
    oracle::flatten(evals, ps, py);
    auto m = pixel_metrics(evals, 0.3);
    const double o_pro = oracle::pro(evals, 0.3);
    worst = std::max({worst, std::fabs(pro(evals, 0.3) - o_pro), std::fabs(m.pro - o_pro),
                      std::fabs(m.pauroc - oracle::auroc(ps, py)), std::fabs(m.pf1_max - oracle::f1_max(ps, py))});
  }
  return {worst <= 1e-9, fmt("500 instances, max deviation %.2e (<= 1e-9)", worst)};
}

// --- 4 ---------------------------------------------------------------------

struct FixtureRun {
  double auroc = 0;
  PixelMetrics pixel;
};

FixtureRun run_fixture(const SynthConfig& sc, bool adapt, bool with_pixels) {
  auto fx = synth_fixture(sc);
  PipelineConfig cfg;
  cfg.adapt = adapt;
  LabeledScores ls;
  std::vector<PixelEval> evals;
  for (std::size_t i = 0; i < fx.images.size(); ++i) {
    const auto& img = fx.images[i];
    auto s = score_image(img, fx.prompts, cfg);
    ls.scores.push_back(s.result.score);
    ls.labels.push_back(fx.anomalous[i] ? 1 : 0);
    if (with_pixels && img.gt_mask) {
      PixelEval e{s.result.map.full, std::vector<std::uint8_t>(img.gt_mask->size())};
      for (std::size_t p = 0; p < e.mask.size(); ++p) e.mask[p] = img.gt_mask->values[p] > 0.5;
      evals.push_back(std::move(e));
    }
  }
  FixtureRun r;
  r.auroc = auroc(ls);
  if (with_pixels) r.pixel = pixel_metrics(evals, 0.3);
  return r;
}

Outcome synthetic_e2e() {
  const auto start = std::chrono::steady_clock::now();
  auto main_run = run_fixture(SynthConfig{}, true, true);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  SynthConfig flat;
  flat.separation = 0.0;
  auto null_run = run_fixture(flat, true, false);
  const bool ok = main_run.auroc == 1.0 && main_run.pixel.pauroc >= 0.99 && main_run.pixel.pro >= 0.95 && secs < 10.0 &&
                  std::fabs(null_run.auroc - 0.5) <= 0.1;
  return {ok, fmt("AUROC %.4f (= 1), pAUROC %.4f (>= 0.99), PRO %.4f (>= 0.95), full run %.2f s (< 10); "
                  "separation 0 AUROC %.4f (0.5 +- 0.1)",
                  main_run.auroc, main_run.pixel.pauroc, main_run.pixel.pro, secs, null_run.auroc)};
}

// --- 5 ---------------------------------------------------------------------

Outcome bundle_round_trip() {
  std::mt19937_64 rng(5);
  int failures = 0, padded = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 1 + rng() % 9;
    Meta meta{{"kind", "text"}, {"embed_dim", std::to_string(d)}, {"note", "trial " + std::to_string(t)}};
    std::vector<TensorData> tensors;
    const int count = static_cast<int>(rng() % 6);
    for (int k = 0; k < count; ++k) {
      const bool f32 = rng() % 2 == 0;
      Shape shape;
      const int rank = 1 + static_cast<int>(rng() % 3);
      for (int r = 0; r < rank; ++r) shape.push_back(rng() % 7);  // zero-size dims too
      std::size_t elems = 1;
      for (auto s : shape) elems *= s;
      TensorData td{"t" + std::to_string(k), f32 ? DType::f32 : DType::u8, shape, std::vector<std::byte>(elems * (f32 ? 4 : 1))};
      for (auto& b : td.bytes) b = static_cast<std::byte>(rng() & 0xff);  // any bit pattern, NaNs included
      if (td.bytes.size() % 8) ++padded;
      tensors.push_back(std::move(td));
    }
    auto bytes = write_bundle(meta, tensors);
    auto back = read_bundle(bytes);
    auto data = back.tensor_data();
    bool same = back.meta() == meta && data.size() == tensors.size();
    for (std::size_t k = 0; same && k < data.size(); ++k)
      same = data[k].name == tensors[k].name && data[k].dtype == tensors[k].dtype && data[k].shape == tensors[k].shape &&
             data[k].bytes == tensors[k].bytes;
    same = same && write_bundle(back.meta(), data) == bytes;
    if (!same) ++failures;
  }
  return {failures == 0, fmt("100 bundles, %d mismatches, %d tensors needing padding", failures, padded)};
}

// --- 6 ---------------------------------------------------------------------

std::vector<std::string> pipeline_outputs(const fs::path& dir) {
  fs::remove_all(dir);
  SynthConfig sc;
  sc.normal_images = 10;
  sc.abnormal_images = 10;
  auto fx = synth_fixture(sc);
  write_fixture(fx, dir);
  std::vector<std::string> out;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path().lexically_relative(dir).string() + "=" + slurp(e.path()));
  std::sort(out.begin(), out.end());
  PipelineConfig cfg;
  cfg.jobs = 2;
  for (const auto& img : fx.images) {
    auto s = score_image(img, fx.prompts, cfg);
    out.push_back(result_json(s, "synthetic", "map.alfb").dump() + adapted_json(s.adapted).dump());
    auto [meta, tensors] = map_bundle(img, s);
    auto bytes = write_bundle(meta, tensors);
    out.emplace_back(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  return out;
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "alfa_acceptance_determinism";
  auto a = pipeline_outputs(root / "a");
  auto b = pipeline_outputs(root / "b");
  fs::remove_all(root);
  return {a == b, fmt("%zu outputs compared, %s", a.size(), a == b ? "byte-identical" : "DIFFER")};
}

// --- 7 ---------------------------------------------------------------------

Outcome ablation() {
  SynthConfig sc;
  sc.separation = 0.4;
  sc.overlap_fraction = 0.2;
  const double with = run_fixture(sc, true, false).auroc;
  const double without = run_fixture(sc, false, false).auroc;
  return {with > without, fmt("separation 0.4, overlap 0.2: AUROC filtered %.4f vs unfiltered %.4f (need strictly higher)",
                              with, without)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {"RTP oracle equivalence", 1.0, rtp_oracle},
      {"Closed-form checks", 5.0, closed_form},
      {"Metric oracles", 30.0, metric_oracles},
      {"Synthetic end-to-end", 0.0, synthetic_e2e},  // times itself
      {"Bundle round-trip", 1.0, bundle_round_trip},
      {"Determinism", 0.0, determinism},
      {"Ablation direction", 0.0, ablation},
  };
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N]\n");
      return 2;
    }
  }
  if (only < 0 || only > static_cast<int>(all.size())) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 2;
  }
  int failed = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    const auto& c = all[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.2f s", secs);
    if (c.budget_s > 0) {
      timing += fmt(" (< %.0f s)", c.budget_s);
      if (secs >= c.budget_s) o.ok = false;
    }
    if (!o.ok) ++failed;
    std::printf("%s [%zu] %s: %s; %s\n", o.ok ? "PASS" : "FAIL", i + 1, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
