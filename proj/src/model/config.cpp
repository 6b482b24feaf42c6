#include "pmkg/model/config.hpp"

#include <array>
#include <utility>

#include "pmkg/error.hpp"

namespace pmkg {

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::array<std::pair<E, const char*>, N>& table, const std::string& s,
             const char* what) {
  for (const auto& [value, name] : table) {
    if (s == name) return value;
  }
  std::string options;
  for (const auto& [value, name] : table) options += std::string(options.empty() ? "" : "|") + name;
  fail_usage("bad-option", std::string(what) + " '" + s + "' (expected " + options + ")");
}

template <typename E, std::size_t N>
std::string name_of(const std::array<std::pair<E, const char*>, N>& table, E v) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::array<std::pair<AttentionScore, const char*>, 2> kScores{
    {{AttentionScore::concat, "concat"}, {AttentionScore::dot, "dot"}}};
constexpr std::array<std::pair<AttentionQuery, const char*>, 2> kQueries{
    {{AttentionQuery::target, "target"}, {AttentionQuery::neighbor, "neighbor"}}};
constexpr std::array<std::pair<FusionPromptMode, const char*>, 2> kPrompts{
    {{FusionPromptMode::generated, "generated"}, {FusionPromptMode::shared, "shared"}}};
constexpr std::array<std::pair<ProjectionInterpretation, const char*>, 1> kProjections{
    {{ProjectionInterpretation::transd, "transd"}}};
constexpr std::array<std::pair<Ablation, const char*>, 5> kAblations{
    {{Ablation::none, "none"},
     {Ablation::semantic, "semantic"},
     {Ablation::pool, "pool"},
     {Ablation::fusion_prompt, "fusion-prompt"},
     {Ablation::pool_tuning, "pool-tuning"}}};

}  // namespace

std::string to_string(AttentionScore v) { return name_of(kScores, v); }
std::string to_string(AttentionQuery v) { return name_of(kQueries, v); }
std::string to_string(FusionPromptMode v) { return name_of(kPrompts, v); }
std::string to_string(ProjectionInterpretation v) { return name_of(kProjections, v); }
std::string to_string(Ablation v) { return name_of(kAblations, v); }

AttentionScore parse_attention_score(const std::string& s) { return parse_enum(kScores, s, "attention score"); }
AttentionQuery parse_attention_query(const std::string& s) { return parse_enum(kQueries, s, "attention query"); }
FusionPromptMode parse_fusion_prompt_mode(const std::string& s) {
  return parse_enum(kPrompts, s, "fusion prompt");
}
ProjectionInterpretation parse_projection_interpretation(const std::string& s) {
  return parse_enum(kProjections, s, "projection interpretation");
}
Ablation parse_ablation(const std::string& s) { return parse_enum(kAblations, s, "ablation"); }

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { fail_usage("bad-config", what); };
  if (dim == 0) bad("dim must be positive");
  if (pool_size == 0) bad("pool size must be at least 1");
  if (!(slope >= 0.0 && slope <= 1.0)) bad("slope must lie in [0,1]");
  if (!(temperature > 0.0)) bad("temperature must be positive");
  if (!(pool_weight >= 0.0)) bad("pool weight must be non-negative");
  if (!(margin > 0.0)) bad("margin must be positive");
  if (!(inner_lr >= 0.0)) bad("inner learning rate must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0,1)");
}

}  // namespace pmkg
