#pragma once

#include <cstddef>
#include <string>

namespace pmkg {

// How the neighbor attention score combines query and key.
enum class AttentionScore { concat, dot };
// Which embedding queries the neighbor attention: the target entity or each
// neighbor's own entity.
enum class AttentionQuery { target, neighbor };
// fp_r generated from task context, or one learned vector shared by all tasks.
enum class FusionPromptMode { generated, shared };
// Which projection vector multiplies the entity in the dynamic projection.
enum class ProjectionInterpretation { transd };

enum class Ablation { none, semantic, pool, fusion_prompt, pool_tuning };

std::string to_string(AttentionScore v);
std::string to_string(AttentionQuery v);
std::string to_string(FusionPromptMode v);
std::string to_string(ProjectionInterpretation v);
std::string to_string(Ablation v);
AttentionScore parse_attention_score(const std::string& s);
AttentionQuery parse_attention_query(const std::string& s);
FusionPromptMode parse_fusion_prompt_mode(const std::string& s);
ProjectionInterpretation parse_projection_interpretation(const std::string& s);
Ablation parse_ablation(const std::string& s);

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t key_dim = 0;  // 0 means "same as dim"
  std::size_t pool_size = 64;
  double slope = 0.01;
  double temperature = 0.1;
  std::size_t pool_negatives = 1024;
  double pool_weight = 0.05;
  double margin = 1.0;
  double inner_lr = 5e-4;
  double dropout = 0.2;
  AttentionScore attention_score = AttentionScore::concat;
  AttentionQuery attention_query = AttentionQuery::target;
  FusionPromptMode fusion_prompt = FusionPromptMode::generated;
  ProjectionInterpretation projection = ProjectionInterpretation::transd;
  Ablation ablation = Ablation::none;
  bool second_order = false;

  std::size_t effective_key_dim() const noexcept { return key_dim == 0 ? dim : key_dim; }
  // Dimension of support-pair vectors, task embeddings and pool entries.
  std::size_t pair_dim() const noexcept { return 2 * dim; }

  bool uses_semantics() const noexcept { return ablation != Ablation::semantic; }
  bool uses_pool() const noexcept { return uses_semantics() && ablation != Ablation::pool; }
  bool uses_fusion_prompt() const noexcept {
    return uses_semantics() && ablation != Ablation::fusion_prompt;
  }
  bool uses_pool_tuning() const noexcept {
    return uses_pool() && ablation != Ablation::pool_tuning && pool_weight > 0.0;
  }

  void validate() const;
};

}  // namespace pmkg
