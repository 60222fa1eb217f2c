#pragma once

#include <span>
#include <string>
#include <vector>

#include "sidrec/policy.hpp"
#include "sidrec/semantic_id.hpp"

namespace sidrec {

struct Candidate {
    SemanticId sid;
    double logprob = 0.0;  // exact s(y) under the trie-masked policy
};

// The beam-search candidate set for one context. Candidates are pairwise
// distinct, sorted by logprob non-increasing with ties broken by
// lexicographic code order, and every candidate resolves to a catalog item.
struct RolloutGroup {
    std::vector<int> context_tokens;
    std::vector<Candidate> candidates;
    int group_size = 0;   // requested G
    int gt_rank = -1;     // index of y* if present, else group_size - 1
    bool gt_in_beam = false;
};

// Exact top-min(G, |catalog|) complete SIDs by s(y), found with a width-G
// beam over the prefix trie. Deterministic. Throws EmptyCatalog.
RolloutGroup constrained_beam_search(const Policy& policy, std::span<const int> context_tokens,
                                     int group_size);

// 0-indexed position of y* among the candidates, or G-1 when absent.
int rank_of(const RolloutGroup& group, const SemanticId& y_star);

// Fills gt_rank / gt_in_beam from y*.
void set_ground_truth(RolloutGroup& group, const SemanticId& y_star);

// Distinct catalog-resolving candidates; an independent recount of what the
// group invariants already guarantee, kept for the collapse diagnostics.
int unique_valid_items(const RolloutGroup& group, const Catalog& catalog);

// Debug dump: one JSON line per group with candidates, s values and ranks.
void dump_rollouts(std::span<const RolloutGroup> groups, const std::string& path);

}  // namespace sidrec
