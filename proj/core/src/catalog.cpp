#include "sidrec/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "sidrec/errors.hpp"
#include "sidrec/rng.hpp"

namespace sidrec {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// SidTrie

SidTrie::SidTrie(int levels, int codebook_size)
    : levels_(levels), codebook_size_(codebook_size) {
    nodes_.push_back(Node{std::vector<std::int32_t>(codebook_size_, -1), -1});
}

void SidTrie::insert(const SemanticId& sid, int item_index) {
    int node = 0;
    for (int l = 0; l < levels_; ++l) {
        const int c = sid.codes[l];
        if (nodes_[node].child[c] < 0) {
            nodes_[node].child[c] = static_cast<std::int32_t>(nodes_.size());
            nodes_.push_back(Node{std::vector<std::int32_t>(codebook_size_, -1), -1});
        }
        node = nodes_[node].child[c];
    }
    nodes_[node].item = item_index;
}

int SidTrie::walk(std::span<const int> prefix) const {
    if (nodes_.empty()) return -1;
    int node = 0;
    for (int c : prefix) {
        if (c < 0 || c >= codebook_size_) return -1;
        node = nodes_[node].child[c];
        if (node < 0) return -1;
    }
    return node;
}

bool SidTrie::contains_prefix(std::span<const int> prefix) const {
    return walk(prefix) >= 0;
}

std::vector<int> SidTrie::valid_next_codes(std::span<const int> prefix) const {
    const int node = walk(prefix);
    if (node < 0) throw UnknownPrefix("valid_next_codes: prefix not in trie");
    std::vector<int> out;
    if (static_cast<int>(prefix.size()) == levels_) return out;  // leaf
    for (int c = 0; c < codebook_size_; ++c) {
        if (nodes_[node].child[c] >= 0) out.push_back(c);
    }
    return out;
}

std::optional<int> SidTrie::resolve(const SemanticId& sid) const {
    if (sid.level_count() != levels_) return std::nullopt;
    const int node = walk(sid.codes);
    if (node < 0 || nodes_[node].item < 0) return std::nullopt;
    return nodes_[node].item;
}

// ---------------------------------------------------------------------------
// Residual quantization

namespace {

int nearest_centroid(const Eigen::VectorXd& v, const Eigen::MatrixXd& codebook) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < codebook.rows(); ++c) {
        const double d = (v.transpose() - codebook.row(c)).squaredNorm();
        if (d < best_d) {  // strict: ties keep the lowest index
            best_d = d;
            best = c;
        }
    }
    return best;
}

// Codes at one level sorted by distance to the residual, ties by index.
std::vector<int> codes_by_distance(const Eigen::VectorXd& residual,
                                   const Eigen::MatrixXd& codebook) {
    const int k = static_cast<int>(codebook.rows());
    std::vector<double> dist(k);
    for (int c = 0; c < k; ++c) {
        dist[c] = (residual.transpose() - codebook.row(c)).squaredNorm();
    }
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dist[a] < dist[b]; });
    return order;
}

// 50 fixed Lloyd iterations; empty clusters keep their previous centroid.
Eigen::MatrixXd kmeans(const Eigen::MatrixXd& data, int k, Rng& rng) {
    const int n = static_cast<int>(data.rows());
    const int d = static_cast<int>(data.cols());
    Eigen::MatrixXd centroids(k, d);

    // Init by sampling data points: a seeded shuffle without replacement,
    // cycling when n < k.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        std::swap(perm[i], perm[rng.range(0, i + 1)]);
    }
    for (int c = 0; c < k; ++c) centroids.row(c) = data.row(perm[c % n]);

    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < 50; ++iter) {
        for (int i = 0; i < n; ++i) {
            assign[i] = nearest_centroid(data.row(i).transpose(), centroids);
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            sums.row(assign[i]) += data.row(i);
            ++counts[assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) centroids.row(c) = sums.row(c) / counts[c];
        }
    }
    return centroids;
}

}  // namespace

SemanticId residual_quantize(const Eigen::VectorXd& v,
                             const std::vector<Eigen::MatrixXd>& codebooks) {
    SemanticId sid;
    Eigen::VectorXd residual = v;
    for (const auto& codebook : codebooks) {
        const int c = nearest_centroid(residual, codebook);
        sid.codes.push_back(c);
        residual -= codebook.row(c).transpose();
    }
    return sid;
}

namespace {

// Depth-first search over (code, residual) chains in per-level distance
// order. The first leaf visited that is not yet taken becomes the item's
// SID. For a collision-free item this is exactly residual_quantize; on
// collision it first moves the deepest level to the nearest free centroid
// and walks up a level only when the subtree below is saturated.
bool assign_free_sid(const Eigen::VectorXd& residual, int level,
                     const std::vector<Eigen::MatrixXd>& codebooks,
                     const std::unordered_set<SemanticId, SemanticIdHash>& taken,
                     SemanticId& out) {
    const int levels = static_cast<int>(codebooks.size());
    if (level == levels) return taken.find(out) == taken.end();
    for (int c : codes_by_distance(residual, codebooks[level])) {
        out.codes[level] = c;
        const Eigen::VectorXd next = residual - codebooks[level].row(c).transpose();
        if (assign_free_sid(next, level + 1, codebooks, taken, out)) return true;
    }
    return false;
}

}  // namespace

Catalog build_catalog(const Eigen::MatrixXd& embeddings, int levels, int codebook_size,
                      std::uint64_t seed) {
    const int n = static_cast<int>(embeddings.rows());
    if (n < 1 || levels < 2 || codebook_size < 2) {
        throw DegenerateInput("build_catalog: need N >= 1, L >= 2, K >= 2");
    }
    if (!embeddings.allFinite()) {
        throw DegenerateInput("build_catalog: embeddings contain non-finite values");
    }
    const double capacity = std::pow(static_cast<double>(codebook_size), levels);
    if (static_cast<double>(n) > capacity) {
        throw CapacityExceeded("build_catalog: N exceeds K^L");
    }

    Rng rng(seed);
    Catalog catalog;
    catalog.levels = levels;
    catalog.codebook_size = codebook_size;

    // Residual k-means, one codebook per level.
    Eigen::MatrixXd residuals = embeddings;
    for (int l = 0; l < levels; ++l) {
        Rng level_rng = rng.fork(static_cast<std::uint64_t>(l) + 1);
        catalog.codebooks.push_back(kmeans(residuals, codebook_size, level_rng));
        const Eigen::MatrixXd& codebook = catalog.codebooks.back();
        for (int i = 0; i < n; ++i) {
            const int c = nearest_centroid(residuals.row(i).transpose(), codebook);
            residuals.row(i) -= codebook.row(c);
        }
    }

    // Assign pairwise-distinct SIDs in item order.
    std::unordered_set<SemanticId, SemanticIdHash> taken;
    catalog.trie = SidTrie(levels, codebook_size);
    catalog.items.reserve(n);
    for (int i = 0; i < n; ++i) {
        SemanticId sid;
        sid.codes.assign(levels, 0);
        if (!assign_free_sid(embeddings.row(i).transpose(), 0, catalog.codebooks, taken, sid)) {
            throw CapacityExceeded("build_catalog: no free SID for item " + std::to_string(i));
        }
        taken.insert(sid);
        catalog.trie.insert(sid, i);
        catalog.items.push_back(CatalogItem{"item_" + std::to_string(i), sid,
                                            embeddings.row(i).transpose()});
    }
    return catalog;
}

Eigen::MatrixXd clustered_embeddings(int n_items, int dim, int n_clusters, double noise,
                                     double size_skew, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd centers(n_clusters, dim);
    for (int c = 0; c < n_clusters; ++c) {
        for (int j = 0; j < dim; ++j) centers(c, j) = rng.normal();
    }
    std::vector<double> weights(n_clusters);
    double total = 0.0;
    for (int c = 0; c < n_clusters; ++c) {
        weights[c] = std::pow(static_cast<double>(c + 1), -size_skew);
        total += weights[c];
    }
    Eigen::MatrixXd out(n_items, dim);
    for (int i = 0; i < n_items; ++i) {
        double u = rng.uniform() * total;
        int c = 0;
        double acc = weights[0];
        while (u > acc && c + 1 < n_clusters) acc += weights[++c];
        for (int j = 0; j < dim; ++j) out(i, j) = centers(c, j) + noise * rng.normal();
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON persistence

void save_catalog(const Catalog& catalog, const std::string& path) {
    json j;
    j["levels"] = catalog.levels;
    j["codebook_size"] = catalog.codebook_size;
    j["items"] = json::array();
    for (const auto& item : catalog.items) {
        json e;
        e["id"] = item.id;
        e["sid"] = item.sid.codes;
        e["embedding"] = std::vector<double>(item.embedding.data(),
                                             item.embedding.data() + item.embedding.size());
        j["items"].push_back(std::move(e));
    }
    j["codebooks"] = json::array();
    for (const auto& codebook : catalog.codebooks) {
        json rows = json::array();
        for (int r = 0; r < codebook.rows(); ++r) {
            rows.push_back(std::vector<double>(codebook.row(r).begin(), codebook.row(r).end()));
        }
        j["codebooks"].push_back(std::move(rows));
    }
    std::ofstream out(path);
    if (!out) throw IoError("save_catalog: cannot open " + path);
    out << j.dump();
    if (!out) throw IoError("save_catalog: write failed for " + path);
}

Catalog load_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_catalog: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("load_catalog: ") + e.what());
    }
    Catalog catalog;
    try {
        catalog.levels = j.at("levels").get<int>();
        catalog.codebook_size = j.at("codebook_size").get<int>();
        for (const auto& rows : j.at("codebooks")) {
            Eigen::MatrixXd codebook(rows.size(), rows.at(0).size());
            for (int r = 0; r < codebook.rows(); ++r) {
                const auto row = rows.at(r).get<std::vector<double>>();
                for (int c = 0; c < codebook.cols(); ++c) codebook(r, c) = row[c];
            }
            catalog.codebooks.push_back(std::move(codebook));
        }
        catalog.trie = SidTrie(catalog.levels, catalog.codebook_size);
        int index = 0;
        for (const auto& e : j.at("items")) {
            CatalogItem item;
            item.id = e.at("id").get<std::string>();
            item.sid = SemanticId(e.at("sid").get<std::vector<int>>());
            const auto emb = e.at("embedding").get<std::vector<double>>();
            item.embedding = Eigen::Map<const Eigen::VectorXd>(emb.data(), emb.size());
            catalog.trie.insert(item.sid, index++);
            catalog.items.push_back(std::move(item));
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("load_catalog: ") + e.what());
    }
    return catalog;
}

}  // namespace sidrec
