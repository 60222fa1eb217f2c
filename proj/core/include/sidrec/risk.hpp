#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sidrec/dataset.hpp"
#include "sidrec/policy.hpp"
#include "sidrec/semantic_id.hpp"

namespace sidrec {

struct ScoredCandidate {
    SemanticId sid;
    double s_gen = 0.0;   // sequence log-likelihood
    double s_conf = 0.0;  // explicit confidence c(y) in (0,1)
    double score = 0.0;   // exp(s_gen) + lambda * s_conf
};

double hybrid_score(double s_gen, double s_conf, double lambda);

// Beam list of the given width with hybrid scores attached.
std::vector<ScoredCandidate> score_candidates(const Policy& policy,
                                              std::span<const int> context_tokens, int beam_size,
                                              double lambda);

// Stable sort by hybrid score descending; recomputes scores for `lambda`.
// With lambda == 0 the result keeps the original beam order.
std::vector<ScoredCandidate> confidence_rerank(std::vector<ScoredCandidate> candidates,
                                               double lambda);

// Serve the list unless the maximum hybrid score falls below the threshold.
// nullopt means the request is rejected.
std::optional<std::vector<ScoredCandidate>> user_rejection(
    std::span<const ScoredCandidate> candidates, double threshold);

// Maximal prefix of a score-sorted list whose every item clears the
// threshold (possibly empty).
std::vector<ScoredCandidate> item_truncation(std::span<const ScoredCandidate> candidates,
                                             double threshold);

struct RejectionCurvePoint {
    double threshold = 0.0;
    double coverage = 0.0;  // fraction of requests served
    double ndcg10 = 0.0;    // over served requests only
};

struct TruncationCurvePoint {
    double threshold = 0.0;
    double mean_length = 0.0;
    double precision = 0.0;  // hits / |list| over served non-empty lists
};

std::vector<RejectionCurvePoint> rejection_curve(const Policy& policy,
                                                 std::span<const Example> examples, double lambda,
                                                 std::span<const double> thresholds,
                                                 int beam_size);

std::vector<TruncationCurvePoint> truncation_curve(const Policy& policy,
                                                   std::span<const Example> examples,
                                                   double lambda,
                                                   std::span<const double> thresholds,
                                                   int beam_size);

// Evenly spaced quantiles of observed scores, ascending; a deterministic
// threshold grid for the curves above.
std::vector<double> quantile_thresholds(std::vector<double> scores, int n_points);

void save_rejection_csv(std::span<const RejectionCurvePoint> curve, const std::string& path);
void save_truncation_csv(std::span<const TruncationCurvePoint> curve, const std::string& path);

}  // namespace sidrec
