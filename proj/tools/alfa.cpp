// alfa: command-line front end for the anomaly engine.
//
// Exit codes: 0 success, 1 usage error, 2 data error. Errors are printed to
// stderr as one JSON object per line.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "alfa/bundle.hpp"
#include "alfa/config.hpp"
#include "alfa/embeddings.hpp"
#include "alfa/evaluate.hpp"
#include "alfa/llm_http.hpp"
#include "alfa/memory.hpp"
#include "alfa/parallel.hpp"
#include "alfa/pipeline.hpp"
#include "alfa/prompts.hpp"
#include "alfa/rtp.hpp"
#include "alfa/scoring.hpp"
#include "alfa/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

void report(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

void warn(const std::string& message) { std::cerr << json{{"warning", message}}.dump() << "\n"; }

void write_json(const fs::path& path, const json& j) { alfa::write_file_atomic(path, j.dump(2) + "\n"); }

// Flags left unset fall back to the config file, then to built-in defaults.
struct Overrides {
  std::optional<double> k, epsilon, tau, sigma, memory_weight, pro_fpr;
  std::string scales;
  std::optional<unsigned> jobs;

  void apply(alfa::EngineConfig& c) const {
    if (k) c.rtp.k = *k;
    if (epsilon) c.rtp.epsilon = *epsilon;
    if (tau) c.scoring.tau = *tau;
    if (sigma) c.scoring.sigma = *sigma;
    if (memory_weight) c.scoring.memory_weight = *memory_weight;
    if (pro_fpr) c.pro_fpr = *pro_fpr;
    if (!scales.empty()) c.scoring.scales = alfa::parse_scale_list(scales);
    if (jobs) c.jobs = *jobs;
  }
};

std::vector<fs::path> bundles_under(const fs::path& dir) {
  if (!fs::is_directory(dir)) alfa::fail(alfa::ErrorCode::io, "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".alfb") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

alfa::ImageEmbeddings load_image(const fs::path& p) {
  auto b = alfa::read_bundle_file(p);
  if (b.kind() != "image") alfa::fail(alfa::ErrorCode::invalid_argument, p.string() + ": expected an image bundle");
  return alfa::load_image_embeddings(b);
}

alfa::EmbeddedPromptSet load_prompts(const fs::path& p) { return alfa::load_prompt_embeddings(alfa::read_bundle_file(p)); }

std::string class_of(const alfa::ImageEmbeddings& img, const alfa::EmbeddedPromptSet& pool) {
  auto it = img.meta.find("class");
  if (it != img.meta.end() && !it->second.empty()) return it->second;
  return pool.class_name;
}

// Scores one image and writes its result JSON and (optionally) map bundle.
void score_one(const fs::path& image_path, const alfa::EmbeddedPromptSet& pool, const alfa::PipelineConfig& pc,
               const alfa::MemoryBank* bank, const fs::path& out, const fs::path& map_out) {
  const auto image = load_image(image_path);
  const auto s = alfa::score_image(image, pool, pc, bank);
  std::string map_ref;
  if (!map_out.empty()) {
    auto [meta, tensors] = alfa::map_bundle(image, s);
    alfa::write_bundle_file(map_out, meta, tensors);
    const auto base = out.parent_path().empty() ? fs::path(".") : out.parent_path();
    map_ref = fs::relative(fs::absolute(map_out), fs::absolute(base)).generic_string();
  }
  write_json(out, alfa::result_json(s, class_of(image, pool), map_ref));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alfa: zero-shot anomaly scoring over exported embedding bundles", "alfa"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Engine config file (flat key = value)")->check(CLI::ExistingFile);
  Overrides ov;

  // prompts
  auto* prompts = app.add_subcommand("prompts", "Build the vanilla prompt pool (templates plus LLM) as JSON");
  std::string p_class, p_out, p_grammar, p_aliases, p_endpoint, p_model, p_cache;
  std::optional<int> p_llm_count;
  prompts->add_option("--class", p_class, "Object class name")->required();
  prompts->add_option("--out", p_out, "Output PromptSet JSON")->required();
  prompts->add_option("--grammar", p_grammar, "Template grammar JSON")->check(CLI::ExistingFile);
  prompts->add_option("--class-aliases", p_aliases, "Class alias JSON")->check(CLI::ExistingFile);
  prompts->add_option("--llm-count", p_llm_count, "LLM completions per polarity");
  prompts->add_option("--llm-endpoint", p_endpoint, "Completion endpoint URL");
  prompts->add_option("--llm-model", p_model, "Completion model id");
  prompts->add_option("--llm-cache", p_cache, "Completion cache JSON");

  // adapt
  auto* adapt = app.add_subcommand("adapt", "Filter the prompt pool for one image by contextual score");
  std::string a_image, a_prompts, a_out;
  adapt->add_option("--image-bundle", a_image, "Image bundle")->required();
  adapt->add_option("--prompt-bundle", a_prompts, "Prompt embedding bundle")->required();
  adapt->add_option("--out", a_out, "Output JSON")->required();
  adapt->add_option("--k", ov.k, "Logistic slope");
  adapt->add_option("--epsilon", ov.epsilon, "Keep prompts scoring above this");

  // score
  auto* score = app.add_subcommand("score", "Score images: global score, anomaly map, combined score");
  std::string s_image, s_images, s_prompts, s_bank, s_out, s_map_out, s_out_dir;
  bool s_no_adapt = false;
  score->add_option("--image-bundle", s_image, "Image bundle");
  score->add_option("--images", s_images, "Directory of image bundles (batch mode, with --out-dir)");
  score->add_option("--prompt-bundle", s_prompts, "Prompt embedding bundle")->required();
  score->add_option("--bank", s_bank, "Memory bank bundle (few-shot)");
  score->add_option("--out", s_out, "Result JSON (single image)");
  score->add_option("--map-out", s_map_out, "Map bundle (single image)");
  score->add_option("--out-dir", s_out_dir, "Output directory (batch mode)");
  score->add_option("--tau", ov.tau, "Softmax temperature");
  score->add_option("--scales", ov.scales, "Window scales, e.g. 2,3");
  score->add_option("--sigma", ov.sigma, "Smoothing sigma in image pixels");
  score->add_option("--memory-weight", ov.memory_weight, "Weight of the memory map");
  score->add_option("--k", ov.k, "Logistic slope");
  score->add_option("--epsilon", ov.epsilon, "Keep prompts scoring above this");
  score->add_flag("--no-adapt", s_no_adapt, "Score with the whole pool");
  score->add_option("--jobs", ov.jobs, "Worker threads")->check(CLI::PositiveNumber);

  // bank build
  auto* bank = app.add_subcommand("bank", "Few-shot memory bank");
  bank->require_subcommand(1);
  auto* bank_build = bank->add_subcommand("build", "Build a bank from reference image bundles");
  std::string b_dir, b_out;
  bank_build->add_option("--bundles", b_dir, "Directory of reference image bundles")->required();
  bank_build->add_option("--out", b_out, "Output bank bundle")->required();
  bank_build->add_option("--scales", ov.scales, "Window scales, e.g. 2,3");

  // eval
  auto* eval = app.add_subcommand("eval", "Image and pixel metrics over score results");
  std::string e_results, e_out;
  eval->add_option("--results", e_results, "Directory of result JSON files")->required();
  eval->add_option("--out", e_out, "Report JSON")->required();
  eval->add_option("--pro-fpr", ov.pro_fpr, "PRO integration limit");
  eval->add_option("--jobs", ov.jobs, "Worker threads")->check(CLI::PositiveNumber);

  // descriptors
  auto* desc = app.add_subcommand("descriptors", "Rank text descriptors by similarity to an image");
  std::string d_image, d_texts, d_out;
  std::size_t d_top = 5;
  desc->add_option("--image-bundle", d_image, "Image bundle")->required();
  desc->add_option("--descriptor-bundle", d_texts, "Text bundle whose rows are the descriptors")->required();
  desc->add_option("--top", d_top, "How many to keep")->capture_default_str();
  desc->add_option("--out", d_out, "Output JSON")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Write the synthetic test fixture");
  alfa::SynthConfig sc;
  std::string y_out;
  synth->add_option("--out-dir", y_out, "Output directory")->required();
  synth->add_option("--seed", sc.seed)->capture_default_str();
  synth->add_option("--dim", sc.dim)->capture_default_str();
  synth->add_option("--grid", sc.grid)->capture_default_str();
  synth->add_option("--separation", sc.separation, "0 identical cones, 1 orthogonal")->capture_default_str();
  synth->add_option("--normal", sc.normal_images)->capture_default_str();
  synth->add_option("--abnormal", sc.abnormal_images)->capture_default_str();
  synth->add_option("--prompts", sc.prompts_per_polarity, "Prompts per polarity")->capture_default_str();
  synth->add_option("--overlap", sc.overlap_fraction, "Share of abnormal prompts inside the normal cone")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (dynamic_cast<const CLI::ExtrasError*>(&e) || dynamic_cast<const CLI::RequiredError*>(&e) && app.get_subcommands().empty())
      std::cout << app.help();
    report("usage", e.what());
    return kUsageError;
  }

  try {
    alfa::EngineConfig config = config_path.empty() ? alfa::EngineConfig{} : alfa::load_config(config_path);
    ov.apply(config);
    config.validate();

    if (*prompts) {
      if (!p_grammar.empty()) config.grammar_path = p_grammar;
      if (!p_aliases.empty()) config.class_aliases_path = p_aliases;
      if (p_llm_count) config.llm.count = *p_llm_count;
      if (!p_endpoint.empty()) config.llm.endpoint = p_endpoint;
      if (!p_model.empty()) config.llm.model = p_model;
      if (!p_cache.empty()) config.llm.cache_path = p_cache;
      config.validate();
      std::unique_ptr<alfa::LlmTransport> transport;
      if (config.llm.count > 0 && !config.llm.endpoint.empty()) transport = std::make_unique<alfa::HttpTransport>(config.llm);
      std::vector<std::string> warnings;
      auto pool = alfa::build_vanilla_pool(config.grammar(), config.llm, p_class, transport.get(), &warnings);
      for (const auto& w : warnings) warn(w);
      write_json(p_out, alfa::to_json(pool));
    } else if (*adapt) {
      const auto image = load_image(a_image);
      const auto pool = load_prompts(a_prompts);
      write_json(a_out, alfa::adapted_json(alfa::adapt_prompts(image.cls, pool, config.rtp)));
    } else if (*score) {
      if (s_image.empty() == s_images.empty()) {
        report("usage", "score needs exactly one of --image-bundle or --images");
        return kUsageError;
      }
      if (!s_image.empty() && s_out.empty()) {
        report("usage", "--out is required with --image-bundle");
        return kUsageError;
      }
      if (!s_images.empty() && s_out_dir.empty()) {
        report("usage", "--out-dir is required with --images");
        return kUsageError;
      }
      const auto pool = load_prompts(s_prompts);
      std::optional<alfa::MemoryBank> memory;
      if (!s_bank.empty()) memory = alfa::load_bank(alfa::read_bundle_file(s_bank));
      auto pc = config.pipeline();
      pc.adapt = !s_no_adapt;
      const alfa::MemoryBank* bank_ptr = memory ? &*memory : nullptr;
      if (!s_image.empty()) {
        score_one(s_image, pool, pc, bank_ptr, s_out, s_map_out);
      } else {
        const auto inputs = bundles_under(s_images);
        if (inputs.empty()) alfa::fail(alfa::ErrorCode::empty_input, "no image bundles under '" + s_images + "'");
        fs::create_directories(s_out_dir);
        auto per_image = pc;
        per_image.jobs = 1;
        alfa::parallel_for(inputs.size(), config.jobs, [&](std::size_t i) {
          const auto rel = fs::relative(inputs[i], s_images);
          auto stem = fs::path(s_out_dir) / rel;
          stem.replace_extension();
          fs::create_directories(stem.parent_path());
          score_one(inputs[i], pool, per_image, bank_ptr, stem.string() + ".json", stem.string() + ".map.alfb");
        });
      }
    } else if (*bank_build) {
      std::vector<alfa::ImageEmbeddings> refs;
      for (const auto& p : bundles_under(b_dir)) {
        auto b = alfa::read_bundle_file(p);
        if (b.kind() == "image" && b.meta_or("content", "") != "anomaly_map") refs.push_back(alfa::load_image_embeddings(b));
      }
      auto built = alfa::build_bank(refs, config.scoring.scales);
      auto [meta, tensors] = alfa::bank_bundle(built);
      alfa::write_bundle_file(b_out, meta, tensors);
    } else if (*eval) {
      write_json(e_out, alfa::to_json(alfa::evaluate_directory(e_results, config.pro_fpr, config.jobs)));
    } else if (*desc) {
      const auto image = load_image(d_image);
      const auto texts = load_prompts(d_texts);
      std::vector<alfa::Descriptor> descriptors;
      for (const auto& p : texts.prompts) descriptors.push_back({p.prompt.text, p.embedding});
      json ranked = json::array();
      for (const auto& r : alfa::rank_descriptors(image.cls, descriptors, d_top))
        ranked.push_back({{"text", r.text}, {"similarity", r.similarity}});
      write_json(d_out, {{"image", image.source_path}, {"descriptors", ranked}});
    } else if (*synth) {
      const auto fx = alfa::synth_fixture(sc);
      const fs::path dir = y_out;
      fs::create_directories(dir / "images");
      alfa::write_fixture(fx, dir);
    }
  } catch (const alfa::Error& e) {
    report(std::string(alfa::to_string(e.code())), e.what());
    return kDataError;
  } catch (const std::exception& e) {
    report("io", e.what());
    return kDataError;
  }
  return 0;
}
