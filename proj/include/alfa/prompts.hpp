#pragma once

// Vanilla anomaly prompt pool: template-grammar expansion plus LLM-written
// descriptions served through a persistent cache.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "alfa/bundle.hpp"
#include "alfa/error.hpp"

namespace alfa {

// "{Ω}" marks the state phrase inside a template, "ς" the class name inside a state.
inline constexpr std::string_view kStatePlaceholder = "{\xCE\xA9}";
inline constexpr std::string_view kClassPlaceholder = "\xCF\x82";

enum class Polarity { normal, abnormal };
enum class PromptSource { from_template, from_llm };

constexpr std::string_view to_string(Polarity p) { return p == Polarity::normal ? "normal" : "abnormal"; }
constexpr std::string_view to_string(PromptSource s) { return s == PromptSource::from_template ? "template" : "llm"; }

inline Polarity parse_polarity(std::string_view s) {
  if (s == "normal") return Polarity::normal;
  if (s == "abnormal") return Polarity::abnormal;
  fail(ErrorCode::parse, "polarity must be 'normal' or 'abnormal', got '" + std::string(s) + "'");
}

inline PromptSource parse_source(std::string_view s) {
  if (s == "template") return PromptSource::from_template;
  if (s == "llm") return PromptSource::from_llm;
  fail(ErrorCode::parse, "prompt source must be 'template' or 'llm', got '" + std::string(s) + "'");
}

struct AnomalyPrompt {
  std::string text;
  Polarity polarity = Polarity::normal;
  PromptSource source = PromptSource::from_template;
  std::string class_name;

  bool operator==(const AnomalyPrompt&) const = default;
};

struct PromptCounts {
  std::size_t normal_template = 0;
  std::size_t abnormal_template = 0;
  std::size_t normal_llm = 0;
  std::size_t abnormal_llm = 0;

  std::size_t normal() const { return normal_template + normal_llm; }
  std::size_t abnormal() const { return abnormal_template + abnormal_llm; }
  bool operator==(const PromptCounts&) const = default;
};

struct PromptSet {
  std::string class_name;
  std::vector<AnomalyPrompt> prompts;

  PromptCounts counts() const {
    PromptCounts c;
    for (const auto& p : prompts) {
      const bool llm = p.source == PromptSource::from_llm;
      if (p.polarity == Polarity::normal)
        ++(llm ? c.normal_llm : c.normal_template);
      else
        ++(llm ? c.abnormal_llm : c.abnormal_template);
    }
    return c;
  }

  std::vector<const AnomalyPrompt*> with_polarity(Polarity p) const {
    std::vector<const AnomalyPrompt*> out;
    for (const auto& prompt : prompts)
      if (prompt.polarity == p) out.push_back(&prompt);
    return out;
  }

  void validate() const {
    for (const auto& p : prompts)
      if (p.text.empty()) fail(ErrorCode::invalid_argument, "prompt with empty text");
    auto c = counts();
    if (c.normal() == 0 || c.abnormal() == 0)
      fail(ErrorCode::empty_input, "prompt set for '" + class_name + "' needs at least one normal and one abnormal prompt");
  }
};

inline nlohmann::json to_json(const PromptSet& set) {
  nlohmann::json prompts = nlohmann::json::array();
  for (const auto& p : set.prompts)
    prompts.push_back({{"text", p.text}, {"polarity", to_string(p.polarity)}, {"source", to_string(p.source)}});
  return {{"class", set.class_name}, {"prompts", std::move(prompts)}};
}

inline PromptSet prompt_set_from_json(const nlohmann::json& j) {
  try {
    PromptSet set;
    set.class_name = j.at("class").get<std::string>();
    for (const auto& p : j.at("prompts")) {
      AnomalyPrompt prompt;
      prompt.text = p.at("text").get<std::string>();
      prompt.polarity = parse_polarity(p.at("polarity").get<std::string>());
      prompt.source = p.contains("source") ? parse_source(p.at("source").get<std::string>()) : PromptSource::from_template;
      prompt.class_name = set.class_name;
      set.prompts.push_back(std::move(prompt));
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed prompt set JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Template grammar

using ClassAliases = std::map<std::string, std::string>;

struct TemplateGrammar {
  std::vector<std::string> templates;
  std::vector<std::string> normal_states;
  std::vector<std::string> abnormal_states;
  std::vector<std::pair<std::string, std::string>> enhancements;
  ClassAliases class_aliases;

  const std::string& display_name(const std::string& class_name) const {
    auto it = class_aliases.find(class_name);
    return it == class_aliases.end() ? class_name : it->second;
  }
};

namespace detail {

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

inline std::string replace_all(std::string text, std::string_view needle, std::string_view value) {
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + value.size()))
    text.replace(pos, needle.size(), value);
  return text;
}

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Replaces whole-word occurrences of `word` only ("image" but not "images").
inline std::string replace_word(const std::string& text, std::string_view word, std::string_view value) {
  if (word.empty()) return text;
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, word.size(), word) == 0) {
      const bool left_ok = i == 0 || !is_word_char(text[i - 1]);
      const std::size_t end = i + word.size();
      const bool right_ok = end >= text.size() || !is_word_char(text[end]);
      if (left_ok && right_ok) {
        out += value;
        i = end;
        continue;
      }
    }
    out += text[i++];
  }
  return out;
}

}  // namespace detail

inline void validate_grammar(const TemplateGrammar& g) {
  if (g.templates.empty()) fail(ErrorCode::empty_input, "template grammar has no templates");
  if (g.normal_states.empty() || g.abnormal_states.empty())
    fail(ErrorCode::empty_input, "template grammar needs normal and abnormal states");
  for (const auto& t : g.templates)
    if (detail::count_occurrences(t, kStatePlaceholder) != 1)
      fail(ErrorCode::invalid_argument, "template must contain exactly one {\xCE\xA9}: '" + t + "'");
  for (const auto* states : {&g.normal_states, &g.abnormal_states})
    for (const auto& s : *states)
      if (detail::count_occurrences(s, kClassPlaceholder) != 1)
        fail(ErrorCode::invalid_argument, "state must contain exactly one \xCF\x82: '" + s + "'");
}

// The sample grammar: 8 templates, 9 states per polarity, image->photo.
inline TemplateGrammar default_grammar() {
  TemplateGrammar g;
  g.templates = {
      "an image of a {\xCE\xA9}",          "a close-up image of a {\xCE\xA9}",
      "an industrial image of a {\xCE\xA9}", "a manufacturing image of a {\xCE\xA9}",
      "a production image of a {\xCE\xA9}", "a textural image of a {\xCE\xA9}",
      "a surface image of a {\xCE\xA9}",    "a cross-section image of a {\xCE\xA9}",
  };
  g.normal_states = {
      "\xCF\x82",           "normal \xCF\x82",           "undamaged \xCF\x82",
      "flawless \xCF\x82",  "perfect \xCF\x82",          "unblemished \xCF\x82",
      "\xCF\x82 without flaw", "\xCF\x82 without defect", "\xCF\x82 without damage",
  };
  g.abnormal_states = {
      "abnormal \xCF\x82",  "damaged \xCF\x82",       "flawed \xCF\x82",
      "imperfect \xCF\x82", "impaired \xCF\x82",      "blemished \xCF\x82",
      "\xCF\x82 with flaw", "\xCF\x82 with defect",   "\xCF\x82 with damage",
  };
  g.enhancements = {{"image", "photo"}};
  return g;
}

inline TemplateGrammar grammar_from_json(const nlohmann::json& j) {
  try {
    TemplateGrammar g;
    g.templates = j.at("templates").get<std::vector<std::string>>();
    g.normal_states = j.at("normal_states").get<std::vector<std::string>>();
    g.abnormal_states = j.at("abnormal_states").get<std::vector<std::string>>();
    if (j.contains("enhancements"))
      for (const auto& e : j.at("enhancements")) g.enhancements.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    if (j.contains("class_aliases")) g.class_aliases = j.at("class_aliases").get<ClassAliases>();
    validate_grammar(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed template grammar: ") + e.what());
  }
}

inline nlohmann::json to_json(const TemplateGrammar& g) {
  nlohmann::json enh = nlohmann::json::array();
  for (const auto& [find, repl] : g.enhancements) enh.push_back({find, repl});
  return {{"templates", g.templates},
          {"normal_states", g.normal_states},
          {"abnormal_states", g.abnormal_states},
          {"enhancements", std::move(enh)},
          {"class_aliases", g.class_aliases}};
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

inline ClassAliases load_class_aliases(const std::filesystem::path& path) {
  auto j = read_json_file(path);
  if (!j.is_object()) fail(ErrorCode::parse, path.string() + ": class aliases must be a JSON object");
  try {
    return j.get<ClassAliases>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

// Cartesian product template x state per polarity, then one enhanced variant
// of every base prompt per (find, replace) pair. Output keeps generation order
// (normal block first) with later duplicates dropped.
inline PromptSet expand_templates(const TemplateGrammar& grammar, const std::string& class_name) {
  validate_grammar(grammar);
  const std::string& name = grammar.display_name(class_name);

  PromptSet set;
  set.class_name = class_name;
  std::set<std::pair<Polarity, std::string>> seen;
  auto emit = [&](Polarity polarity, std::string text) {
    if (seen.emplace(polarity, text).second)
      set.prompts.push_back({std::move(text), polarity, PromptSource::from_template, class_name});
  };

  for (Polarity polarity : {Polarity::normal, Polarity::abnormal}) {
    const auto& states = polarity == Polarity::normal ? grammar.normal_states : grammar.abnormal_states;
    std::vector<std::string> base;
    for (const auto& tmpl : grammar.templates)
      for (const auto& state : states)
        base.push_back(detail::replace_all(tmpl, kStatePlaceholder, detail::replace_all(state, kClassPlaceholder, name)));
    for (const auto& text : base) emit(polarity, text);
    for (const auto& [find, repl] : grammar.enhancements)
      for (const auto& text : base) emit(polarity, detail::replace_word(text, find, repl));
  }
  return set;
}

// ---------------------------------------------------------------------------
// LLM-generated prompts

struct LlmConfig {
  std::string endpoint;
  std::string model = "gpt-3.5-turbo-instruct";
  int max_tokens = 50;
  double temperature = 0.9;
  int count = 0;  // completions per polarity
  std::filesystem::path cache_path;
  std::string api_key_env = "ALFA_LLM_API_KEY";
  int delay_ms = 0;
  int timeout_s = 30;
  // "{class}" is replaced by the display name of the class.
  std::string abnormal_query =
      "Describe what the image will look like if there is an anomaly in the image of {class}. "
      "Please state the description beginning with: An abnormal image of {class}.";
  std::string normal_query =
      "Describe what the image will look like if there is no anomaly in the image of {class}. "
      "Please state the description beginning with: A normal image of {class}.";
  std::string abnormal_prefix = "An abnormal image of {class}";
  std::string normal_prefix = "A normal image of {class}";

  void validate() const {
    if (max_tokens <= 0) fail(ErrorCode::invalid_argument, "llm max_tokens must be positive");
    if (!(temperature >= 0.0)) fail(ErrorCode::invalid_argument, "llm temperature must be non-negative");
    if (count < 0) fail(ErrorCode::invalid_argument, "llm count must be non-negative");
  }

  std::string query(Polarity p, const std::string& display) const {
    return detail::replace_all(p == Polarity::abnormal ? abnormal_query : normal_query, "{class}", display);
  }
  std::string prefix(Polarity p, const std::string& display) const {
    return detail::replace_all(p == Polarity::abnormal ? abnormal_prefix : normal_prefix, "{class}", display);
  }
};

// Sends one completion request body and returns the raw response body.
// Implementations throw Error(network) when the endpoint cannot be reached.
class LlmTransport {
 public:
  virtual ~LlmTransport() = default;
  virtual std::string post(const std::string& json_body) = 0;
};

// JSON object "model/class/polarity/index" -> text.
class PromptCache {
 public:
  PromptCache() = default;
  explicit PromptCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.empty() || !std::filesystem::exists(path_)) return;
    auto j = read_json_file(path_);
    if (!j.is_object()) fail(ErrorCode::parse, path_.string() + ": prompt cache must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!value.is_string()) fail(ErrorCode::parse, path_.string() + ": cache entry '" + key + "' is not a string");
      entries_[key] = value.get<std::string>();
    }
  }

  static std::string key(const std::string& model, const std::string& class_name, Polarity p, int index) {
    return model + "/" + class_name + "/" + std::string(to_string(p)) + "/" + std::to_string(index);
  }

  const std::string* find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  void put(const std::string& key, std::string text) {
    entries_[key] = std::move(text);
    dirty_ = true;
  }

  void save() {
    if (!dirty_ || path_.empty()) return;
    write_file_atomic(path_, nlohmann::json(entries_).dump(2) + "\n");
    dirty_ = false;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::filesystem::path path_;
  std::map<std::string, std::string> entries_;
  bool dirty_ = false;
};

namespace detail {

inline std::string collapse_whitespace(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
    } else {
      if (space) out += ' ';
      out += c;
      space = false;
    }
  }
  return out;
}

inline std::size_t ifind(std::string_view haystack, std::string_view needle) {
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
  });
  return it == haystack.end() ? std::string_view::npos : static_cast<std::size_t>(it - haystack.begin());
}

}  // namespace detail

// Keeps one sentence: from the required prefix (when present) up to and
// including the first period after it. Returns "" when nothing usable is left.
inline std::string trim_to_sentence(std::string_view response, std::string_view prefix) {
  std::string text = detail::collapse_whitespace(response);
  std::size_t start = prefix.empty() ? std::string::npos : detail::ifind(text, prefix);
  std::size_t search_from = 0;
  if (start != std::string::npos) {
    search_from = start + prefix.size();
  } else {
    start = 0;
    while (start < text.size() && (text[start] == '"' || text[start] == '\'')) ++start;
    search_from = start;
  }
  auto period = text.find('.', search_from);
  std::string sentence = text.substr(start, period == std::string::npos ? std::string::npos : period - start + 1);
  while (!sentence.empty() && (sentence.back() == '"' || sentence.back() == '\'' || sentence.back() == ' '))
    sentence.pop_back();
  return sentence;
}

inline std::string completion_request_body(const LlmConfig& config, const std::string& query) {
  nlohmann::json body{{"model", config.model},
                      {"prompt", query},
                      {"max_tokens", config.max_tokens},
                      {"temperature", config.temperature}};
  return body.dump();
}

// Extracts choices[0].text; empty string when the response is malformed.
inline std::string parse_completion(const std::string& response_body) {
  auto j = nlohmann::json::parse(response_body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    return {};
  const auto& first = j["choices"][0];
  if (!first.is_object() || !first.contains("text") || !first["text"].is_string()) return {};
  return first["text"].get<std::string>();
}

// Issues `config.count` completions for one polarity. Cached entries are
// served without touching the network; once a request fails no further
// requests are attempted, and the call only errors if nothing could be served.
inline std::vector<AnomalyPrompt> llm_generate(const LlmConfig& config, const std::string& class_name, Polarity polarity,
                                               LlmTransport* transport, PromptCache& cache,
                                               const ClassAliases& aliases = {},
                                               std::vector<std::string>* warnings = nullptr) {
  config.validate();
  std::vector<AnomalyPrompt> out;
  if (config.count == 0) return out;

  auto alias = aliases.find(class_name);
  const std::string display = alias == aliases.end() ? class_name : alias->second;
  const std::string body = completion_request_body(config, config.query(polarity, display));
  const std::string prefix = config.prefix(polarity, display);
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  std::set<std::string> seen;
  bool network_down = transport == nullptr;
  std::string network_error = transport ? "" : "no LLM endpoint configured";
  bool requested = false;
  for (int i = 0; i < config.count; ++i) {
    const auto key = PromptCache::key(config.model, class_name, polarity, i);
    std::string text;
    if (const auto* cached = cache.find(key)) {
      text = *cached;
    } else {
      if (network_down) continue;
      if (requested && config.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(config.delay_ms));
      requested = true;
      std::string response;
      try {
        response = transport->post(body);
      } catch (const Error& e) {
        network_down = true;
        network_error = e.what();
        warn("llm request failed for " + key + ": " + e.what());
        continue;
      }
      text = trim_to_sentence(parse_completion(response), prefix);
      if (text.empty()) {
        warn("malformed llm response for " + key + ", skipped");
        continue;
      }
      cache.put(key, text);
    }
    if (seen.insert(text).second) out.push_back({text, polarity, PromptSource::from_llm, class_name});
  }
  cache.save();
  if (network_down && out.empty())
    fail(ErrorCode::network, "no LLM prompts for '" + class_name + "' (" + std::string(to_string(polarity)) +
                                 "): " + network_error + " and no cache entries");
  return out;
}

// Template prompts (generation order) followed by LLM prompts (cache index
// order), normal before abnormal within each source.
inline PromptSet build_vanilla_pool(const TemplateGrammar& grammar, const LlmConfig& llm, const std::string& class_name,
                                    LlmTransport* transport, std::vector<std::string>* warnings = nullptr) {
  PromptSet pool = expand_templates(grammar, class_name);
  if (llm.count > 0) {
    PromptCache cache(llm.cache_path);
    std::set<std::pair<Polarity, std::string>> seen;
    for (const auto& p : pool.prompts) seen.emplace(p.polarity, p.text);
    for (Polarity polarity : {Polarity::normal, Polarity::abnormal}) {
      for (auto& p : llm_generate(llm, class_name, polarity, transport, cache, grammar.class_aliases, warnings))
        if (seen.emplace(p.polarity, p.text).second) pool.prompts.push_back(std::move(p));
    }
  }
  return pool;
}

}  // namespace alfa
