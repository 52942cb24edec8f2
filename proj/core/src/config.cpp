// SPDX-License-Identifier: Apache-2.0
#include "capvqa/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "capvqa/error.hpp"
#include "json.hpp"

namespace capvqa {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& value) {
  std::filesystem::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

// Replaces ${VAR} with the environment value; unset variables are an error.
std::string interpolate_env(const std::string& text) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("${", pos);
    if (open == std::string::npos) {
      out += text.substr(pos);
      break;
    }
    const auto close = text.find('}', open);
    if (close == std::string::npos) {
      throw Error(ErrorCode::kConfig, "unterminated ${ in secret value");
    }
    out += text.substr(pos, open - pos);
    const std::string name = text.substr(open + 2, close - open - 2);
    const char* value = std::getenv(name.c_str());
    if (value == nullptr) {
      throw Error(ErrorCode::kConfig, "environment variable " + name + " is not set");
    }
    out += value;
    pos = close + 1;
  }
  return out;
}

BackendSpec parse_backend(const json& j, BackendKind kind,
                          const std::filesystem::path& base) {
  BackendSpec spec;
  spec.config.kind = kind;
  const std::string type = j.value("type", std::string("openai"));
  if (type == "openai") {
    spec.type = BackendSpec::Type::openai;
  } else if (type == "mock-scripted") {
    spec.type = BackendSpec::Type::scripted_mock;
  } else if (type == "mock-embed") {
    spec.type = BackendSpec::Type::mock_embed;
  } else {
    throw Error(ErrorCode::kConfig, "unknown backend type '" + type + "'");
  }
  auto& c = spec.config;
  c.base_url = j.value("base_url", std::string());
  c.model = j.value("model", std::string());
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.backoff_base_s = j.value("backoff_base_s", c.backoff_base_s);
  c.backoff_cap_s = j.value("backoff_cap_s", c.backoff_cap_s);
  spec.api_key_env = j.value("api_key_env", std::string());
  if (j.contains("api_key")) {
    c.api_key = interpolate_env(j.at("api_key").get<std::string>());
  } else if (!spec.api_key_env.empty()) {
    if (const char* value = std::getenv(spec.api_key_env.c_str())) c.api_key = value;
  }
  if (j.contains("script")) spec.script = resolve(base, j.at("script").get<std::string>());
  spec.dim = j.value("dim", spec.dim);
  return spec;
}

DecodingParams parse_decoding(const json& j) {
  DecodingParams d;
  d.temperature = j.value("temperature", d.temperature);
  d.top_p = j.value("top_p", d.top_p);
  d.frequency_penalty = j.value("frequency_penalty", d.frequency_penalty);
  d.presence_penalty = j.value("presence_penalty", d.presence_penalty);
  d.max_tokens = j.value("max_tokens", d.max_tokens);
  d.validate();
  return d;
}

std::vector<MatchPolicy> parse_policy_list(const json& j) {
  if (j.is_string()) return parse_policies(j.get<std::string>());
  std::vector<MatchPolicy> out;
  for (const auto& item : j) {
    if (item.is_number()) {
      out.push_back(MatchPolicy::semantic(item.get<double>()));
    } else {
      out.push_back(parse_policy(item.get<std::string>()));
    }
  }
  return out;
}

ordered_json decoding_json(const DecodingParams& d) {
  return {{"temperature", d.temperature},
          {"top_p", d.top_p},
          {"frequency_penalty", d.frequency_penalty},
          {"presence_penalty", d.presence_penalty},
          {"max_tokens", d.max_tokens}};
}

ordered_json backend_json(const BackendSpec& spec) {
  ordered_json j;
  switch (spec.type) {
    case BackendSpec::Type::openai: j["type"] = "openai"; break;
    case BackendSpec::Type::scripted_mock: j["type"] = "mock-scripted"; break;
    case BackendSpec::Type::mock_embed: j["type"] = "mock-embed"; break;
  }
  if (spec.type == BackendSpec::Type::openai) {
    const auto& c = spec.config;
    j["base_url"] = c.base_url;
    j["model"] = c.model;
    j["timeout_s"] = c.timeout_s;
    j["max_retries"] = c.max_retries;
    j["max_in_flight"] = c.max_in_flight;
    j["backoff_base_s"] = c.backoff_base_s;
    j["backoff_cap_s"] = c.backoff_cap_s;
    if (!spec.api_key_env.empty()) j["api_key_env"] = spec.api_key_env;
    if (c.api_key) j["api_key"] = "<redacted>";
  }
  if (spec.type == BackendSpec::Type::scripted_mock) j["script"] = spec.script.string();
  if (spec.type == BackendSpec::Type::mock_embed) j["dim"] = spec.dim;
  return j;
}

void check_backend(const std::optional<BackendSpec>& spec, const char* role,
                   BackendKind kind) {
  if (!spec) throw Error(ErrorCode::kConfig, std::string(role) + " backend is required");
  const bool chat_type = spec->type == BackendSpec::Type::scripted_mock;
  const bool embed_type = spec->type == BackendSpec::Type::mock_embed;
  if ((kind == BackendKind::chat && embed_type) ||
      (kind == BackendKind::embedding && chat_type)) {
    throw Error(ErrorCode::kConfig, std::string(role) + " backend has the wrong kind");
  }
  if (spec->type == BackendSpec::Type::openai) spec->config.validate();
  if (chat_type && spec->script.empty()) {
    throw Error(ErrorCode::kConfig, std::string(role) + " mock needs a script file");
  }
}

}  // namespace

BackendSpec BackendSpec::from_flag(std::string_view flag, BackendKind kind) {
  BackendSpec spec;
  spec.config.kind = kind;
  if (kind == BackendKind::chat) {
    constexpr std::string_view kPrefix = "mock:";
    if (flag.substr(0, kPrefix.size()) != kPrefix || flag.size() == kPrefix.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "chat backend flag must be mock:FILE, got '" + std::string(flag) + "'");
    }
    spec.type = Type::scripted_mock;
    spec.script = std::string(flag.substr(kPrefix.size()));
    return spec;
  }
  spec.type = Type::mock_embed;
  if (flag == "mock") return spec;
  if (flag.substr(0, 5) == "mock:") {
    const auto digits = flag.substr(5);
    std::size_t dim = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), dim);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && dim > 0) {
      spec.dim = dim;
      return spec;
    }
  }
  throw Error(ErrorCode::kInvalidArgument,
              "embedding backend flag must be mock or mock:DIM, got '" +
                  std::string(flag) + "'");
}

void RunConfig::validate() const {
  if (dataset_path.empty()) throw Error(ErrorCode::kConfig, "dataset path is required");
  keywords.validate();
  check_backend(caption_backend, "caption", BackendKind::chat);
  check_backend(answer_backend, "answer", BackendKind::chat);
  if (context != ContextKind::general_caption) {
    check_backend(text_embedding_backend, "text_embedding", BackendKind::embedding);
  }
  if (policies.empty()) throw Error(ErrorCode::kConfig, "at least one match policy is required");
  for (const auto& p : policies) p.validate();
  error_policy.validate();
  const bool semantic =
      error_policy.kind == MatchPolicy::Kind::semantic ||
      std::any_of(policies.begin(), policies.end(), [](const MatchPolicy& p) {
        return p.kind == MatchPolicy::Kind::semantic;
      });
  if (semantic) {
    check_backend(eval_embedding_backend, "eval_embedding", BackendKind::embedding);
  }
  answer_decoding.validate();
  if (caption_decoding) caption_decoding->validate();
  if (workers < 1) throw Error(ErrorCode::kConfig, "workers must be >= 1");
  if (run_root.empty()) throw Error(ErrorCode::kConfig, "run_root is required");
  if (limit && *limit == 0) throw Error(ErrorCode::kConfig, "limit must be >= 1");
  if (image_pattern.find("{image_id}") == std::string::npos) {
    throw Error(ErrorCode::kConfig, "image pattern must contain {image_id}");
  }
}

ImageRef RunConfig::image_for(const QuestionRecord& question) const {
  std::string name = image_pattern;
  const std::string placeholder = "{image_id}";
  for (auto pos = name.find(placeholder); pos != std::string::npos;
       pos = name.find(placeholder, pos + question.image_id.size())) {
    name.replace(pos, placeholder.size(), question.image_id);
  }
  ImageRef ref{question.image_id, name};
  if (!image_root.empty()) {
    ImageRef probe{question.image_id, image_root};
    ref.location = probe.is_url()
                       ? (image_root.back() == '/' ? image_root : image_root + "/") + name
                       : (std::filesystem::path(image_root) / name).string();
  }
  return ref;
}

RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir) {
  const json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorCode::kConfig, "run config is not a JSON object");
  }
  static const std::set<std::string> kKnown = {
      "dataset", "images", "context", "keywords", "backends", "answer_decoding",
      "caption_decoding", "policies", "error_policy", "workers", "run_root", "limit"};
  for (const auto& [key, value] : root.items()) {
    if (!kKnown.count(key)) throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
  }

  RunConfig config;
  try {
    if (root.contains("dataset")) {
      const auto& d = root["dataset"];
      config.dataset_path = resolve(base_dir, d.at("path").get<std::string>());
      config.dataset_format =
          d.contains("format") ? parse_dataset_format(d["format"].get<std::string>())
                               : infer_dataset_format(config.dataset_path);
    }
    if (root.contains("images")) {
      const auto& i = root["images"];
      const std::string image_root = i.value("root", std::string());
      config.image_root =
          image_root.empty() || ImageRef{"", image_root}.is_url()
              ? image_root
              : resolve(base_dir, image_root).string();
      config.image_pattern = i.value("pattern", config.image_pattern);
    }
    if (root.contains("context")) {
      config.context = parse_context_kind(root["context"].get<std::string>());
    }
    if (root.contains("keywords")) {
      const auto& k = root["keywords"];
      config.keywords.k = k.value("k", config.keywords.k);
      if (k.contains("ngram_range")) {
        const auto& r = k["ngram_range"];
        config.keywords.ngrams = {r.at(0).get<int>(), r.at(1).get<int>()};
      }
      if (k.contains("mmr_diversity") && !k["mmr_diversity"].is_null()) {
        config.keywords.mmr_diversity = k["mmr_diversity"].get<double>();
      }
      if (k.contains("stopwords")) {
        config.stopwords_path = resolve(base_dir, k["stopwords"].get<std::string>());
      }
    }
    if (root.contains("backends")) {
      const auto& b = root["backends"];
      if (b.contains("caption")) {
        config.caption_backend = parse_backend(b["caption"], BackendKind::chat, base_dir);
      }
      if (b.contains("answer")) {
        config.answer_backend = parse_backend(b["answer"], BackendKind::chat, base_dir);
      }
      if (b.contains("text_embedding")) {
        config.text_embedding_backend =
            parse_backend(b["text_embedding"], BackendKind::embedding, base_dir);
      }
      if (b.contains("eval_embedding")) {
        config.eval_embedding_backend =
            parse_backend(b["eval_embedding"], BackendKind::embedding, base_dir);
      }
    }
    if (root.contains("answer_decoding")) {
      config.answer_decoding = parse_decoding(root["answer_decoding"]);
    }
    if (root.contains("caption_decoding") && !root["caption_decoding"].is_null()) {
      config.caption_decoding = parse_decoding(root["caption_decoding"]);
    }
    if (root.contains("policies")) config.policies = parse_policy_list(root["policies"]);
    if (root.contains("error_policy")) {
      const auto& e = root["error_policy"];
      config.error_policy = e.is_number() ? MatchPolicy::semantic(e.get<double>())
                                          : parse_policy(e.get<std::string>());
    }
    config.workers = root.value("workers", config.workers);
    if (root.contains("run_root")) {
      config.run_root = resolve(base_dir, root["run_root"].get<std::string>());
    }
    if (root.contains("limit") && !root["limit"].is_null()) {
      config.limit = root["limit"].get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed run config: ") + e.what());
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), path.parent_path());
}

std::string config_snapshot(const RunConfig& config) {
  ordered_json j;
  j["dataset"] = {{"path", config.dataset_path.string()},
                  {"format", std::string(to_string(config.dataset_format))}};
  j["images"] = {{"root", config.image_root}, {"pattern", config.image_pattern}};
  j["context"] = std::string(to_string(config.context));
  ordered_json keywords;
  keywords["k"] = config.keywords.k;
  keywords["ngram_range"] = {config.keywords.ngrams.lo, config.keywords.ngrams.hi};
  keywords["mmr_diversity"] = config.keywords.mmr_diversity
                                  ? ordered_json(*config.keywords.mmr_diversity)
                                  : ordered_json(nullptr);
  keywords["stopwords"] =
      config.stopwords_path ? config.stopwords_path->string() : std::string("<built-in>");
  j["keywords"] = keywords;
  ordered_json backends = ordered_json::object();
  if (config.caption_backend) backends["caption"] = backend_json(*config.caption_backend);
  if (config.answer_backend) backends["answer"] = backend_json(*config.answer_backend);
  if (config.text_embedding_backend) {
    backends["text_embedding"] = backend_json(*config.text_embedding_backend);
  }
  if (config.eval_embedding_backend) {
    backends["eval_embedding"] = backend_json(*config.eval_embedding_backend);
  }
  j["backends"] = backends;
  j["answer_decoding"] = decoding_json(config.answer_decoding);
  j["caption_decoding"] = config.caption_decoding
                              ? decoding_json(*config.caption_decoding)
                              : ordered_json(nullptr);
  ordered_json policies = ordered_json::array();
  for (const auto& p : config.policies) policies.push_back(p.label());
  j["policies"] = policies;
  j["error_policy"] = config.error_policy.label();
  j["workers"] = config.workers;
  j["run_root"] = config.run_root.string();
  j["limit"] = config.limit ? ordered_json(*config.limit) : ordered_json(nullptr);
  return j.dump(2);
}

}  // namespace capvqa
