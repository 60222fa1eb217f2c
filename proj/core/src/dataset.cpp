#include "sidrec/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "sidrec/errors.hpp"
#include "sidrec/rng.hpp"

namespace sidrec {

using json = nlohmann::json;

std::vector<Interaction> generate_dataset(const Catalog& catalog, const DataGenConfig& config) {
    if (config.n_users < 1) throw DegenerateInput("generate_dataset: n_users must be >= 1");
    if (catalog.size() < 1) throw EmptyCatalog("generate_dataset: empty catalog");

    // Group items by level-0 code.
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < catalog.size(); ++i) {
        groups[catalog.sid_of(i).codes[0]].push_back(i);
    }
    std::vector<int> codes;
    for (const auto& [code, items] : groups) codes.push_back(code);

    Rng rng(config.seed);
    // Preference states are uniform over occupied level-0 codes, so users
    // spread across subtrees of different sizes (concentrated subtrees make
    // easy users, diffuse ones hard users).
    auto random_code = [&]() { return codes[rng.range(0, static_cast<int>(codes.size()))]; };

    std::vector<Interaction> out;
    std::vector<int> window;
    for (int u = 0; u < config.n_users; ++u) {
        const int length = std::max(2, rng.poisson(config.mean_history));
        int state = random_code();
        window.clear();
        for (int t = 0; t < length; ++t) {
            int item;
            if (t > 0 && rng.uniform() < config.repeat_prob) {
                item = window[rng.range(0, static_cast<int>(window.size()))];
            } else {
                if (t > 0 && rng.uniform() >= config.stickiness) state = random_code();
                const auto& pool = groups.at(state);
                item = pool[rng.range(0, static_cast<int>(pool.size()))];
            }
            out.push_back(Interaction{u, item, t});
            window.push_back(item);
            if (static_cast<int>(window.size()) > kMaxHistory) window.erase(window.begin());
        }
    }
    return out;
}

SplitDataset chronological_split(const Catalog& catalog,
                                 std::span<const Interaction> interactions) {
    std::map<int, std::vector<Interaction>> by_user;
    for (const auto& it : interactions) by_user[it.user_id].push_back(it);

    SplitDataset splits;
    bool any_user = false;
    for (auto& [user, seq] : by_user) {
        std::stable_sort(seq.begin(), seq.end(),
                         [](const Interaction& a, const Interaction& b) {
                             return a.timestamp < b.timestamp;
                         });
        const int n = static_cast<int>(seq.size());
        if (n < kCoreThreshold) continue;
        any_user = true;

        const int n_test = std::max(1, n / 10);
        const int n_valid = std::max(1, n / 10);
        const int n_train = n - n_valid - n_test;

        auto make_example = [&](int target_pos) {
            Example ex;
            ex.user_id = user;
            const int start = std::max(0, target_pos - kMaxHistory);
            for (int t = start; t < target_pos; ++t) {
                ex.context.push_back(catalog.sid_of(seq[t].item_index));
            }
            ex.target = catalog.sid_of(seq[target_pos].item_index);
            return ex;
        };

        // The first interaction has no context and only ever serves as one.
        for (int t = 1; t < n_train; ++t) splits.train.push_back(make_example(t));
        for (int t = n_train; t < n_train + n_valid; ++t) splits.valid.push_back(make_example(t));
        for (int t = n_train + n_valid; t < n; ++t) splits.test.push_back(make_example(t));
    }
    if (!any_user) throw InsufficientData("chronological_split: no user survives 5-core filtering");
    return splits;
}

std::vector<int> encode_prompt(const Vocab& vocab, std::span<const SemanticId> context) {
    if (context.empty()) throw EmptyContext("encode_prompt: empty context");
    std::vector<int> tokens;
    tokens.reserve(2 + context.size() * (vocab.levels + 1));
    tokens.push_back(vocab.bos());
    for (std::size_t i = 0; i < context.size(); ++i) {
        if (i > 0) tokens.push_back(vocab.sep());
        for (int l = 0; l < vocab.levels; ++l) {
            tokens.push_back(vocab.code_token(l, context[i].codes[l]));
        }
    }
    tokens.push_back(vocab.query());
    return tokens;
}

std::string render_prompt_text(std::span<const SemanticId> context) {
    if (context.empty()) throw EmptyContext("render_prompt_text: empty context");
    std::string out = "The user has interacted with items ";
    for (std::size_t i = 0; i < context.size(); ++i) {
        if (i > 0) out += ", ";
        out += render_sid(context[i]);
    }
    out += " in chronological order. Can you predict the next possible item that the user may expect?";
    return out;
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

void save_split(const std::vector<Example>& examples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_jsonl: cannot open " + path);
    for (const auto& ex : examples) {
        json j;
        j["context"] = json::array();
        for (const auto& sid : ex.context) j["context"].push_back(sid.codes);
        j["target"] = ex.target.codes;
        j["user"] = ex.user_id;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("save_jsonl: write failed for " + path);
}

std::vector<Example> load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_jsonl: cannot open " + path);
    std::vector<Example> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            Example ex;
            for (const auto& sid : j.at("context")) {
                ex.context.emplace_back(sid.get<std::vector<int>>());
            }
            ex.target = SemanticId(j.at("target").get<std::vector<int>>());
            ex.user_id = j.at("user").get<int>();
            out.push_back(std::move(ex));
        } catch (const json::exception& e) {
            throw SchemaError("load_jsonl: " + path + " line " + std::to_string(line_no) + ": " +
                              e.what());
        }
    }
    return out;
}

}  // namespace

void save_jsonl(const SplitDataset& dataset, const std::string& stem) {
    save_split(dataset.train, stem + ".train.jsonl");
    save_split(dataset.valid, stem + ".valid.jsonl");
    save_split(dataset.test, stem + ".test.jsonl");
}

SplitDataset load_jsonl(const std::string& stem) {
    SplitDataset dataset;
    dataset.train = load_split(stem + ".train.jsonl");
    dataset.valid = load_split(stem + ".valid.jsonl");
    dataset.test = load_split(stem + ".test.jsonl");
    return dataset;
}

}  // namespace sidrec
