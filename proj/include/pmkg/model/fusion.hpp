#pragma once

#include "pmkg/numerics/mlp.hpp"

namespace pmkg {

// fp_r = g_fp([s_r ; r_r])
Var make_fusion_prompt(const MlpVars& generator, Var semantic, Var relational);

// mr_r = Φ_fuse([r_r ; p_r ; fp_r]). An invalid `prompt` or `fusion_prompt`
// stands for the zero vector of its slot (ablation by zero-substitution).
Var fuse(const MlpVars& fuser, Var relational, Var prompt, Var fusion_prompt);

}  // namespace pmkg
