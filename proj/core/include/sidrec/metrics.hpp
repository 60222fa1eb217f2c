#pragma once

#include <span>
#include <string>
#include <vector>

#include "sidrec/dataset.hpp"
#include "sidrec/policy.hpp"
#include "sidrec/semantic_id.hpp"

namespace sidrec {

struct MetricsReport {
    double hr1 = 0.0;
    double hr5 = 0.0;
    double hr10 = 0.0;
    double ndcg5 = 0.0;
    double ndcg10 = 0.0;
    int n_examples = 0;
};

int hit_rate_at_k(std::span<const SemanticId> ranked, const SemanticId& y_star, int k);

// Single-relevant-item NDCG: 1/log2(pos + 1) for the 1-indexed position of
// y* within the first k, else 0.
double ndcg_at_k(std::span<const SemanticId> ranked, const SemanticId& y_star, int k);

// Mean metrics over constrained beam lists of the given width.
MetricsReport evaluate(const Policy& policy, std::span<const Example> examples, int beam_size);

struct DynamicsRow {
    double hr1 = 0.0;
    double hrG = 0.0;           // hit anywhere in the width-G rollout
    double mean_unique = 0.0;   // mean unique valid items per rollout
};

// Probe metrics on a fixed context set under the current policy.
DynamicsRow dynamics_row(const Policy& policy, std::span<const Example> probes, int group_size);

void save_metrics_csv(const MetricsReport& report, const std::string& path);

}  // namespace sidrec
