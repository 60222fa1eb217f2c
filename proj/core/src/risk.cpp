#include "sidrec/risk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sidrec/decode.hpp"
#include "sidrec/errors.hpp"
#include "sidrec/metrics.hpp"

namespace sidrec {

double hybrid_score(double s_gen, double s_conf, double lambda) {
    return std::exp(s_gen) + lambda * s_conf;
}

std::vector<ScoredCandidate> score_candidates(const Policy& policy,
                                              std::span<const int> context_tokens, int beam_size,
                                              double lambda) {
    const RolloutGroup group = constrained_beam_search(policy, context_tokens, beam_size);
    std::vector<ScoredCandidate> out;
    out.reserve(group.candidates.size());
    for (const auto& cand : group.candidates) {
        ScoredCandidate sc;
        sc.sid = cand.sid;
        sc.s_gen = cand.logprob;
        sc.s_conf = policy.confidence_query(context_tokens, cand.sid);
        sc.score = hybrid_score(sc.s_gen, sc.s_conf, lambda);
        out.push_back(std::move(sc));
    }
    return out;
}

std::vector<ScoredCandidate> confidence_rerank(std::vector<ScoredCandidate> candidates,
                                               double lambda) {
    for (auto& c : candidates) c.score = hybrid_score(c.s_gen, c.s_conf, lambda);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const ScoredCandidate& a, const ScoredCandidate& b) {
                         return a.score > b.score;
                     });
    return candidates;
}

std::optional<std::vector<ScoredCandidate>> user_rejection(
    std::span<const ScoredCandidate> candidates, double threshold) {
    if (candidates.empty()) throw DegenerateInput("user_rejection: empty candidate list");
    double max_score = candidates[0].score;
    for (const auto& c : candidates) max_score = std::max(max_score, c.score);
    if (max_score < threshold) return std::nullopt;
    return std::vector<ScoredCandidate>(candidates.begin(), candidates.end());
}

std::vector<ScoredCandidate> item_truncation(std::span<const ScoredCandidate> candidates,
                                             double threshold) {
    std::vector<ScoredCandidate> out;
    for (const auto& c : candidates) {
        if (c.score < threshold) break;
        out.push_back(c);
    }
    return out;
}

namespace {

struct ScoredExample {
    std::vector<ScoredCandidate> list;  // reranked, score-descending
    SemanticId target;
};

std::vector<ScoredExample> score_examples(const Policy& policy, std::span<const Example> examples,
                                          double lambda, int beam_size) {
    std::vector<ScoredExample> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        const auto tokens = encode_prompt(policy.vocab(), ex.context);
        ScoredExample se;
        se.list = confidence_rerank(score_candidates(policy, tokens, beam_size, lambda), lambda);
        se.target = ex.target;
        out.push_back(std::move(se));
    }
    return out;
}

std::vector<SemanticId> sids_of(const std::vector<ScoredCandidate>& list) {
    std::vector<SemanticId> out;
    out.reserve(list.size());
    for (const auto& c : list) out.push_back(c.sid);
    return out;
}

}  // namespace

std::vector<RejectionCurvePoint> rejection_curve(const Policy& policy,
                                                 std::span<const Example> examples, double lambda,
                                                 std::span<const double> thresholds,
                                                 int beam_size) {
    const auto scored = score_examples(policy, examples, lambda, beam_size);
    std::vector<RejectionCurvePoint> curve;
    for (double threshold : thresholds) {
        RejectionCurvePoint point;
        point.threshold = threshold;
        int served = 0;
        double ndcg_sum = 0.0;
        for (const auto& se : scored) {
            const auto decision = user_rejection(se.list, threshold);
            if (!decision) continue;
            ++served;
            ndcg_sum += ndcg_at_k(sids_of(*decision), se.target, 10);
        }
        point.coverage = static_cast<double>(served) / static_cast<double>(scored.size());
        point.ndcg10 = served > 0 ? ndcg_sum / served : 0.0;
        curve.push_back(point);
    }
    return curve;
}

std::vector<TruncationCurvePoint> truncation_curve(const Policy& policy,
                                                   std::span<const Example> examples,
                                                   double lambda,
                                                   std::span<const double> thresholds,
                                                   int beam_size) {
    const auto scored = score_examples(policy, examples, lambda, beam_size);
    std::vector<TruncationCurvePoint> curve;
    for (double threshold : thresholds) {
        TruncationCurvePoint point;
        point.threshold = threshold;
        double length_sum = 0.0;
        double precision_sum = 0.0;
        int non_empty = 0;
        for (const auto& se : scored) {
            const auto list = item_truncation(se.list, threshold);
            length_sum += static_cast<double>(list.size());
            if (list.empty()) continue;
            ++non_empty;
            const double hit = hit_rate_at_k(sids_of(list), se.target,
                                             static_cast<int>(list.size()));
            precision_sum += hit / static_cast<double>(list.size());
        }
        point.mean_length = length_sum / static_cast<double>(scored.size());
        point.precision = non_empty > 0 ? precision_sum / non_empty : 0.0;
        curve.push_back(point);
    }
    return curve;
}

std::vector<double> quantile_thresholds(std::vector<double> scores, int n_points) {
    if (scores.empty() || n_points < 1) return {};
    std::sort(scores.begin(), scores.end());
    std::vector<double> out;
    out.reserve(n_points);
    for (int k = 0; k < n_points; ++k) {
        const double q = n_points == 1 ? 0.0 : static_cast<double>(k) / (n_points - 1);
        const auto idx = static_cast<std::size_t>(q * (scores.size() - 1));
        out.push_back(scores[idx]);
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void save_rejection_csv(std::span<const RejectionCurvePoint> curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_rejection_csv: cannot open " + path);
    out << "threshold,coverage,ndcg10\n";
    char line[128];
    for (const auto& p : curve) {
        std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g", p.threshold, p.coverage, p.ndcg10);
        out << line << '\n';
    }
}

void save_truncation_csv(std::span<const TruncationCurvePoint> curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_truncation_csv: cannot open " + path);
    out << "threshold,mean_length,precision\n";
    char line[128];
    for (const auto& p : curve) {
        std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g", p.threshold, p.mean_length,
                      p.precision);
        out << line << '\n';
    }
}

}  // namespace sidrec
