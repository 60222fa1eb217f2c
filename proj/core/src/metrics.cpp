#include "sidrec/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sidrec/decode.hpp"
#include "sidrec/errors.hpp"

namespace sidrec {

int hit_rate_at_k(std::span<const SemanticId> ranked, const SemanticId& y_star, int k) {
    const int limit = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int i = 0; i < limit; ++i) {
        if (ranked[i] == y_star) return 1;
    }
    return 0;
}

double ndcg_at_k(std::span<const SemanticId> ranked, const SemanticId& y_star, int k) {
    const int limit = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int i = 0; i < limit; ++i) {
        if (ranked[i] == y_star) return 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return 0.0;
}

MetricsReport evaluate(const Policy& policy, std::span<const Example> examples, int beam_size) {
    if (examples.empty()) throw DegenerateInput("evaluate: empty example set");
    MetricsReport report;
    report.n_examples = static_cast<int>(examples.size());
    std::vector<SemanticId> ranked;
    for (const auto& ex : examples) {
        const auto tokens = encode_prompt(policy.vocab(), ex.context);
        const RolloutGroup group = constrained_beam_search(policy, tokens, beam_size);
        ranked.clear();
        for (const auto& cand : group.candidates) ranked.push_back(cand.sid);
        report.hr1 += hit_rate_at_k(ranked, ex.target, 1);
        report.hr5 += hit_rate_at_k(ranked, ex.target, 5);
        report.hr10 += hit_rate_at_k(ranked, ex.target, 10);
        report.ndcg5 += ndcg_at_k(ranked, ex.target, 5);
        report.ndcg10 += ndcg_at_k(ranked, ex.target, 10);
    }
    report.hr1 /= report.n_examples;
    report.hr5 /= report.n_examples;
    report.hr10 /= report.n_examples;
    report.ndcg5 /= report.n_examples;
    report.ndcg10 /= report.n_examples;
    return report;
}

DynamicsRow dynamics_row(const Policy& policy, std::span<const Example> probes, int group_size) {
    if (probes.empty()) throw DegenerateInput("dynamics_row: empty probe set");
    DynamicsRow row;
    for (const auto& ex : probes) {
        const auto tokens = encode_prompt(policy.vocab(), ex.context);
        RolloutGroup group = constrained_beam_search(policy, tokens, group_size);
        set_ground_truth(group, ex.target);
        row.hr1 += (!group.candidates.empty() && group.candidates[0].sid == ex.target) ? 1.0 : 0.0;
        row.hrG += group.gt_in_beam ? 1.0 : 0.0;
        row.mean_unique += unique_valid_items(group, policy.catalog());
    }
    const double n = static_cast<double>(probes.size());
    row.hr1 /= n;
    row.hrG /= n;
    row.mean_unique /= n;
    return row;
}

void save_metrics_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_metrics_csv: cannot open " + path);
    char line[256];
    std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g,%.10g,%.10g,%d", report.hr1, report.hr5,
                  report.hr10, report.ndcg5, report.ndcg10, report.n_examples);
    out << "hr1,hr5,hr10,ndcg5,ndcg10,n_examples\n" << line << '\n';
}

}  // namespace sidrec
