#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sidrec/catalog.hpp"
#include "sidrec/semantic_id.hpp"

namespace sidrec {

// History window fed to the policy; longer histories are truncated to the
// most recent entries.
inline constexpr int kMaxHistory = 10;

// Users and items below this many interactions are dropped before
// splitting.
inline constexpr int kCoreThreshold = 5;

struct Interaction {
    int user_id = 0;
    int item_index = 0;  // index into the catalog
    std::int64_t timestamp = 0;
};

struct Example {
    std::vector<SemanticId> context;  // 1..kMaxHistory most recent SIDs
    SemanticId target;
    int user_id = 0;
};

struct SplitDataset {
    std::vector<Example> train;
    std::vector<Example> valid;
    std::vector<Example> test;
};

struct DataGenConfig {
    int n_users = 300;
    double mean_history = 14.0;
    // Probability that a user's level-0 preference state persists from one
    // interaction to the next; at 1.0 every item of a user shares the
    // level-0 code.
    double stickiness = 0.97;
    // Probability that the next interaction re-consumes an item from the
    // visible history window instead of a fresh subtree draw. Repeats are
    // the learnable easy end of the difficulty spectrum.
    double repeat_prob = 0.35;
    std::uint64_t seed = 1;
};

// Synthetic interaction corpus: each user runs a sticky Markov chain over
// level-0 codes and emits either a re-consumed item from their recent
// window or a uniform draw from the current code's subtree. Timestamps are
// the per-user interaction index. Deterministic per seed.
std::vector<Interaction> generate_dataset(const Catalog& catalog, const DataGenConfig& config);

// Per-user chronological split. Users with fewer than kCoreThreshold
// interactions are dropped; of the rest, the last tenth of interactions
// (at least one) becomes test targets, the tenth before that validation
// targets, and everything earlier is the train segment. The first
// interaction only ever serves as context. Throws InsufficientData when no
// user survives the filter.
SplitDataset chronological_split(const Catalog& catalog, std::span<const Interaction> interactions);

// Flat token-id sequence [BOS] sid tokens [SEP] ... [QUERY]. Throws
// EmptyContext on an empty history.
std::vector<int> encode_prompt(const Vocab& vocab, std::span<const SemanticId> context);

// Natural-language rendering of the prompt with bracketed SID tokens.
std::string render_prompt_text(std::span<const SemanticId> context);

// JSONL persistence, one example per line:
//   {"context":[[c0,...],...],"target":[c0,...],"user":u}
// A dataset is stored as three files <stem>.train.jsonl, <stem>.valid.jsonl,
// <stem>.test.jsonl. Round trips are exact; malformed lines raise
// SchemaError naming the line.
void save_jsonl(const SplitDataset& dataset, const std::string& stem);
SplitDataset load_jsonl(const std::string& stem);

}  // namespace sidrec
