#pragma once

#include <span>
#include <vector>

#include "sidrec/decode.hpp"
#include "sidrec/semantic_id.hpp"

namespace sidrec {

// 1 iff the generated SID matches the ground truth.
double reward_binary(const SemanticId& y, const SemanticId& y_star);

// 1 if correct, else -1/ln(rank1 + 1) for the candidate's 1-indexed rank.
// Throws InvalidRank for rank1 < 1.
double reward_rank(const SemanticId& y, const SemanticId& y_star, int rank1);

// Uncertainty-weighted rewards aligned with the group's candidate order:
// the ground truth gets 1; each incorrect candidate gets minus its softmax
// share of the incorrect set's logprob mass, so the incorrect rewards sum to
// exactly -1. A lone correct candidate gets 1.
std::vector<double> reward_uncertainty(const RolloutGroup& group, const SemanticId& y_star);

// Group-normalized advantages (r - mean) / (population std + eps); an
// all-equal group yields all zeros up to the eps guard.
std::vector<double> normalize_advantages(std::span<const double> rewards, double eps);

struct RewardVector {
    std::vector<double> r;
    double mu_r = 0.0;
    double sigma_r = 0.0;  // population std
    std::vector<double> advantages;
    double eps = 1e-6;
};

RewardVector compute_reward_vector(const RolloutGroup& group, const SemanticId& y_star,
                                   double eps);

}  // namespace sidrec
