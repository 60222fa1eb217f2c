#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sidrec/dataset.hpp"
#include "sidrec/decode.hpp"
#include "sidrec/policy.hpp"

namespace sidrec {

enum class RewardKind { Binary, Rank, Uncertainty };

RewardKind reward_kind_from_string(const std::string& name);
std::string to_string(RewardKind kind);

struct AlignConfig {
    int group_size = 16;      // G
    double alpha_min = 0.0;   // difficulty-weight floor
    double gamma1 = 1.0;      // confidence pair weight vs partial negatives
    double gamma2 = 0.5;      // confidence pair weight vs root-level negatives
    double clip_eps = 0.2;    // 0 disables the clipped surrogate
    double kl_beta = 0.0;     // reference-policy KL weight; pinned at 0
    double learning_rate = 0.02;
    int epochs = 8;
    std::uint64_t seed = 7;
    double adv_eps = 1e-6;
    RewardKind reward = RewardKind::Uncertainty;
    int batch_size = 16;
    int eval_interval = 30;   // steps between dynamics rows
    int probe_size = 128;
};

struct SftConfig {
    double learning_rate = 0.3;
    int epochs = 40;
    int batch_size = 32;
    int eval_interval = 0;  // 0 = twice per epoch
    int patience = 3;
    std::uint64_t seed = 7;
};

// Instance-level difficulty weight from the ground truth's 0-indexed beam
// rank: alpha_min + (1 - alpha_min) * rank0 / (G - 1).
double difficulty_weight(int rank0, int group_size, double alpha_min);

// Clipped-surrogate group policy loss with per-token probability ratios
// against the rollout snapshot:
//   -(1/G) sum_i (1/L) sum_t min(ratio * A_i, clip(ratio) * A_i)
// (unclipped when clip_eps == 0). Gradients are accumulated into the policy
// scaled by grad_scale; grad_scale == 0 skips backprop entirely so the
// contribution is exactly zero. Throws StaleSnapshot on shape mismatch.
double grpo_loss(Policy& policy, const Policy& snapshot, const RolloutGroup& group,
                 std::span<const double> advantages, double clip_eps, double grad_scale = 1.0);

// Logistic pairwise ranking loss (1/|S|) sum log(1 + exp(c - c*)); 0 on an
// empty set.
double rank_loss(double c_star, std::span<const double> c_set);

struct AuxBreakdown {
    double l_rank_partial = 0.0;
    double l_rank_wrong = 0.0;
    double total = 0.0;
};

// gamma1 * rank_loss(c*, partial negatives) + gamma2 * rank_loss(c*, wrong
// negatives), with c(y*) always computed by teacher forcing. Gradients are
// accumulated scaled by grad_scale.
AuxBreakdown aux_confidence_loss(Policy& policy, std::span<const int> context_tokens,
                                 const RolloutGroup& group, const SemanticId& y_star,
                                 double gamma1, double gamma2, double grad_scale = 1.0);

struct InstanceBreakdown {
    double l_grpo = 0.0;
    double lambda_diff = 0.0;
    double l_main = 0.0;  // lambda_diff * l_grpo
    double l_rank_partial = 0.0;
    double l_rank_wrong = 0.0;
    double l_aux = 0.0;
    int gt_rank = 0;
};

struct LossBreakdown {
    std::vector<InstanceBreakdown> instances;
    // Batch means.
    double l_grpo = 0.0;
    double lambda_diff = 0.0;
    double l_main = 0.0;
    double l_rank_partial = 0.0;
    double l_rank_wrong = 0.0;
    double l_aux = 0.0;
    double l_total = 0.0;
};

// One alignment step: snapshot the policy, roll out a beam group per
// context, derive rewards, advantages and difficulty weights, and apply a
// single gradient update of mean(lambda * L_GRPO + L_Aux) over the batch.
LossBreakdown train_step(Policy& policy, std::span<const Example> batch,
                         const AlignConfig& config);

// Same computation without the parameter update (used for step-0 logging).
LossBreakdown evaluate_losses(Policy& policy, std::span<const Example> batch,
                              const AlignConfig& config);

struct EvalPoint {
    int step = 0;
    double hr10 = 0.0;
};

struct SftResult {
    std::vector<EvalPoint> history;
    int best_step = 0;
    double best_hr10 = 0.0;
};

// Minibatch SFT with periodic HR@10 validation and patience-based early
// stopping; the policy is left at the best validation checkpoint.
SftResult run_sft(Policy& policy, const SplitDataset& splits, const SftConfig& config);

struct AlignmentResult {
    int steps = 0;
};

// Uncertainty-aware alignment for a fixed epoch budget. Emits one dynamics
// row per eval interval (plus step 0) to `dynamics_csv_path` with columns
// step,hr1,hrG,unique_items,l_grpo,l_main,l_aux,mean_lambda. Probe contexts
// are a seeded subset of the validation split, drawn independently of the
// alignment hyperparameters so curves are comparable across settings.
AlignmentResult run_alignment(Policy& policy, const SplitDataset& splits,
                              const AlignConfig& config, const std::string& dynamics_csv_path);

}  // namespace sidrec
