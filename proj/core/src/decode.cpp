#include "sidrec/decode.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "sidrec/errors.hpp"

namespace sidrec {

namespace {

struct Hypothesis {
    std::vector<int> codes;
    Eigen::VectorXd hidden;
    double logprob = 0.0;
};

bool better(const std::vector<int>& codes_a, double s_a, const std::vector<int>& codes_b,
            double s_b) {
    if (s_a != s_b) return s_a > s_b;
    return codes_a < codes_b;  // lexicographic tie-break
}

}  // namespace

RolloutGroup constrained_beam_search(const Policy& policy, std::span<const int> context_tokens,
                                     int group_size) {
    const Catalog& catalog = policy.catalog();
    if (catalog.size() == 0) throw EmptyCatalog("constrained_beam_search: empty catalog");
    if (group_size < 1) throw DegenerateInput("constrained_beam_search: G must be >= 1");

    const Vocab& vocab = policy.vocab();

    RolloutGroup group;
    group.context_tokens.assign(context_tokens.begin(), context_tokens.end());
    group.group_size = group_size;

    std::vector<Hypothesis> beam;
    beam.push_back(Hypothesis{{}, policy.encode_context(context_tokens), 0.0});

    struct Expansion {
        int parent;
        int code;
        double logprob;
        std::vector<int> codes;
    };

    for (int level = 0; level < vocab.levels; ++level) {
        std::vector<Expansion> expansions;
        for (int p = 0; p < static_cast<int>(beam.size()); ++p) {
            const auto valid = catalog.trie.valid_next_codes(beam[p].codes);
            const Eigen::VectorXd logits = policy.level_logits(beam[p].hidden, level);
            for (int c : valid) {
                Expansion e;
                e.parent = p;
                e.code = c;
                e.logprob =
                    beam[p].logprob + ad::masked_log_softmax_pick_value(logits, valid, c);
                e.codes = beam[p].codes;
                e.codes.push_back(c);
                expansions.push_back(std::move(e));
            }
        }
        std::sort(expansions.begin(), expansions.end(), [](const Expansion& a, const Expansion& b) {
            return better(a.codes, a.logprob, b.codes, b.logprob);
        });
        if (static_cast<int>(expansions.size()) > group_size) expansions.resize(group_size);

        std::vector<Hypothesis> next;
        next.reserve(expansions.size());
        const bool last = (level + 1 == vocab.levels);
        for (auto& e : expansions) {
            Hypothesis hyp;
            hyp.codes = std::move(e.codes);
            hyp.logprob = e.logprob;
            if (!last) {
                hyp.hidden = policy.gru_step(beam[e.parent].hidden, vocab.code_token(level, e.code));
            }
            next.push_back(std::move(hyp));
        }
        beam = std::move(next);
    }

    group.candidates.reserve(beam.size());
    for (auto& hyp : beam) {
        group.candidates.push_back(Candidate{SemanticId(std::move(hyp.codes)), hyp.logprob});
    }
    return group;
}

int rank_of(const RolloutGroup& group, const SemanticId& y_star) {
    for (int i = 0; i < static_cast<int>(group.candidates.size()); ++i) {
        if (group.candidates[i].sid == y_star) return i;
    }
    return group.group_size - 1;
}

void set_ground_truth(RolloutGroup& group, const SemanticId& y_star) {
    group.gt_rank = rank_of(group, y_star);
    group.gt_in_beam = group.gt_rank < static_cast<int>(group.candidates.size()) &&
                       group.candidates[group.gt_rank].sid == y_star;
}

int unique_valid_items(const RolloutGroup& group, const Catalog& catalog) {
    std::unordered_set<int> items;
    for (const auto& cand : group.candidates) {
        if (auto item = catalog.trie.resolve(cand.sid)) items.insert(*item);
    }
    return static_cast<int>(items.size());
}

void dump_rollouts(std::span<const RolloutGroup> groups, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("dump_rollouts: cannot open " + path);
    for (const auto& group : groups) {
        nlohmann::json j;
        j["context_tokens"] = group.context_tokens;
        j["group_size"] = group.group_size;
        j["gt_rank"] = group.gt_rank;
        j["gt_in_beam"] = group.gt_in_beam;
        j["candidates"] = nlohmann::json::array();
        for (int i = 0; i < static_cast<int>(group.candidates.size()); ++i) {
            j["candidates"].push_back({{"rank", i},
                                       {"sid", group.candidates[i].sid.codes},
                                       {"s", group.candidates[i].logprob}});
        }
        out << j.dump() << '\n';
    }
}

}  // namespace sidrec
