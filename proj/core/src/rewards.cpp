#include "sidrec/rewards.hpp"

#include <cmath>
#include <limits>

#include "sidrec/errors.hpp"

namespace sidrec {

double reward_binary(const SemanticId& y, const SemanticId& y_star) {
    return y == y_star ? 1.0 : 0.0;
}

double reward_rank(const SemanticId& y, const SemanticId& y_star, int rank1) {
    if (rank1 < 1) throw InvalidRank("reward_rank: rank must be 1-indexed");
    if (y == y_star) return 1.0;
    return -1.0 / std::log(static_cast<double>(rank1) + 1.0);
}

std::vector<double> reward_uncertainty(const RolloutGroup& group, const SemanticId& y_star) {
    const int n = static_cast<int>(group.candidates.size());
    std::vector<double> r(n, 0.0);

    double max_s = -std::numeric_limits<double>::infinity();
    int n_neg = 0;
    for (int i = 0; i < n; ++i) {
        if (group.candidates[i].sid == y_star) continue;
        max_s = std::max(max_s, group.candidates[i].logprob);
        ++n_neg;
    }

    if (n_neg == 0) {
        // Degenerate group: the lone candidate is the ground truth.
        for (int i = 0; i < n; ++i) r[i] = 1.0;
        return r;
    }

    double denom = 0.0;
    for (int i = 0; i < n; ++i) {
        if (group.candidates[i].sid == y_star) continue;
        denom += std::exp(group.candidates[i].logprob - max_s);
    }
    for (int i = 0; i < n; ++i) {
        if (group.candidates[i].sid == y_star) {
            r[i] = 1.0;
        } else {
            r[i] = -std::exp(group.candidates[i].logprob - max_s) / denom;
        }
    }
    return r;
}

std::vector<double> normalize_advantages(std::span<const double> rewards, double eps) {
    const int n = static_cast<int>(rewards.size());
    if (n < 1) throw DegenerateInput("normalize_advantages: empty group");
    double mu = 0.0;
    for (double v : rewards) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : rewards) var += (v - mu) * (v - mu);
    const double sigma = std::sqrt(var / n);
    std::vector<double> adv(n);
    for (int i = 0; i < n; ++i) adv[i] = (rewards[i] - mu) / (sigma + eps);
    return adv;
}

RewardVector compute_reward_vector(const RolloutGroup& group, const SemanticId& y_star,
                                   double eps) {
    RewardVector out;
    out.eps = eps;
    out.r = reward_uncertainty(group, y_star);
    const int n = static_cast<int>(out.r.size());
    for (double v : out.r) out.mu_r += v;
    out.mu_r /= n;
    double var = 0.0;
    for (double v : out.r) var += (v - out.mu_r) * (v - out.mu_r);
    out.sigma_r = std::sqrt(var / n);
    out.advantages = normalize_advantages(out.r, eps);
    return out;
}

}  // namespace sidrec
