#pragma once

// Engine defaults from a flat "key = value" text file. '#' starts a comment.
// Relative paths are taken relative to the file's directory.
//
//   k = 1.0
//   scales = 2,3
//   grammar = grammar.json
//   llm.endpoint = http://localhost:8000/v1/completions

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "alfa/bundle.hpp"
#include "alfa/error.hpp"
#include "alfa/pipeline.hpp"
#include "alfa/prompts.hpp"

namespace alfa {

struct EngineConfig {
  RtpConfig rtp;
  ScoringConfig scoring;
  double pro_fpr = 0.3;
  unsigned jobs = 1;
  std::filesystem::path grammar_path;        // empty: built-in grammar
  std::filesystem::path class_aliases_path;  // empty: none beyond the grammar's
  LlmConfig llm;

  void validate() const {
    rtp.validate();
    scoring.validate();
    llm.validate();
    if (!(pro_fpr > 0.0 && pro_fpr <= 1.0)) fail(ErrorCode::invalid_argument, "pro_fpr must lie in (0, 1]");
    if (jobs == 0) fail(ErrorCode::invalid_argument, "jobs must be at least 1");
    for (const auto* p : {&grammar_path, &class_aliases_path})
      if (!p->empty() && !std::filesystem::exists(*p))
        fail(ErrorCode::io, "config references missing file '" + p->string() + "'");
  }

  PipelineConfig pipeline() const { return {rtp, true, scoring, jobs}; }

  TemplateGrammar grammar() const {
    TemplateGrammar g = grammar_path.empty() ? default_grammar() : grammar_from_json(read_json_file(grammar_path));
    if (!class_aliases_path.empty())
      for (auto& [k, v] : load_class_aliases(class_aliases_path)) g.class_aliases[k] = v;
    return g;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    fail(ErrorCode::parse, "config key '" + key + "': '" + text + "' is not a valid number");
  return v;
}

}  // namespace detail

inline void set_config_value(EngineConfig& c, const std::string& key, const std::string& value,
                             const std::filesystem::path& base = {}) {
  using detail::parse_number;
  auto path = [&] { return value.empty() ? std::filesystem::path{} : base / value; };
  if (key == "k") c.rtp.k = parse_number<double>(value, key);
  else if (key == "epsilon") c.rtp.epsilon = parse_number<double>(value, key);
  else if (key == "tau") c.scoring.tau = parse_number<double>(value, key);
  else if (key == "scales") c.scoring.scales = parse_scale_list(value);
  else if (key == "sigma") c.scoring.sigma = parse_number<double>(value, key);
  else if (key == "memory_weight") c.scoring.memory_weight = parse_number<double>(value, key);
  else if (key == "pro_fpr") c.pro_fpr = parse_number<double>(value, key);
  else if (key == "jobs") c.jobs = parse_number<unsigned>(value, key);
  else if (key == "grammar") c.grammar_path = path();
  else if (key == "class_aliases") c.class_aliases_path = path();
  else if (key == "llm.endpoint") c.llm.endpoint = value;
  else if (key == "llm.model") c.llm.model = value;
  else if (key == "llm.max_tokens") c.llm.max_tokens = parse_number<int>(value, key);
  else if (key == "llm.temperature") c.llm.temperature = parse_number<double>(value, key);
  else if (key == "llm.count") c.llm.count = parse_number<int>(value, key);
  else if (key == "llm.cache") c.llm.cache_path = path();
  else if (key == "llm.api_key_env") c.llm.api_key_env = value;
  else if (key == "llm.delay_ms") c.llm.delay_ms = parse_number<int>(value, key);
  else if (key == "llm.timeout_s") c.llm.timeout_s = parse_number<int>(value, key);
  else fail(ErrorCode::parse, "unknown config key '" + key + "'");
}

inline EngineConfig parse_config(std::string_view text, const std::filesystem::path& base = {}) {
  EngineConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::parse, "config line " + std::to_string(n) + ": expected 'key = value'");
    set_config_value(c, detail::trim(std::string_view(line).substr(0, eq)), detail::trim(std::string_view(line).substr(eq + 1)),
                     base);
  }
  return c;
}

inline EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  auto c = parse_config(ss.str(), path.parent_path());
  c.validate();
  return c;
}

}  // namespace alfa
