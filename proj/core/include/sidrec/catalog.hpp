#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sidrec/semantic_id.hpp"

namespace sidrec {

// Prefix trie of the catalog's SIDs. A full-depth path exists in the trie
// iff it is the SID of exactly one catalog item.
class SidTrie {
  public:
    SidTrie() = default;
    SidTrie(int levels, int codebook_size);

    void insert(const SemanticId& sid, int item_index);

    // Exactly the codes c such that prefix||c extends to at least one
    // catalog SID. Throws UnknownPrefix if the prefix is not in the trie.
    // The empty prefix is the root. A full-depth prefix yields an empty set.
    std::vector<int> valid_next_codes(std::span<const int> prefix) const;

    // Item index for a full-depth path, or nullopt if not a catalog SID.
    std::optional<int> resolve(const SemanticId& sid) const;

    bool contains_prefix(std::span<const int> prefix) const;

    int levels() const { return levels_; }

  private:
    struct Node {
        std::vector<std::int32_t> child;  // codebook_size entries, -1 = absent
        std::int32_t item = -1;           // set on full-depth nodes
    };

    // Returns node index or -1.
    int walk(std::span<const int> prefix) const;

    int levels_ = 0;
    int codebook_size_ = 0;
    std::vector<Node> nodes_;  // nodes_[0] is the root
};

struct CatalogItem {
    std::string id;
    SemanticId sid;
    Eigen::VectorXd embedding;
};

// Item <-> SID bijection plus the prefix trie. Immutable after construction.
struct Catalog {
    int levels = 0;
    int codebook_size = 0;
    std::vector<CatalogItem> items;
    // codebooks[l] is K x d: one centroid per row.
    std::vector<Eigen::MatrixXd> codebooks;
    SidTrie trie;

    Vocab vocab() const { return Vocab{levels, codebook_size}; }
    int size() const { return static_cast<int>(items.size()); }
    const SemanticId& sid_of(int item_index) const { return items[item_index].sid; }
};

// Greedy residual quantization: codes[l] is the centroid at level l nearest
// to the l-th residual (ties broken by lowest code index), and the residual
// is updated as r <- r - centroid.
SemanticId residual_quantize(const Eigen::VectorXd& v,
                             const std::vector<Eigen::MatrixXd>& codebooks);

// Builds the SID space from item embeddings (rows of `embeddings`) via
// residual k-means: per level, 50 Lloyd iterations on the residuals with
// seeded data-point initialization. SID collisions are resolved by moving
// the later item to the nearest free slot, preferring changes at the deepest
// level and walking up only when a subtree is saturated. Deterministic for a
// fixed seed.
//
// Throws CapacityExceeded if N > K^L and DegenerateInput on non-finite
// embeddings.
Catalog build_catalog(const Eigen::MatrixXd& embeddings, int levels, int codebook_size,
                      std::uint64_t seed);

// Synthetic item embeddings with cluster structure, so that level-0 codes of
// the quantized catalog align with semantic groups. Cluster sizes follow a
// power law with exponent `size_skew` (0 = uniform), giving subtrees of very
// different breadths.
Eigen::MatrixXd clustered_embeddings(int n_items, int dim, int n_clusters, double noise,
                                     double size_skew, std::uint64_t seed);

// JSON persistence: {"levels":L,"codebook_size":K,"items":[{"id":...,
// "sid":[...]},...],"codebooks":[[[...]]]}. Embeddings are persisted so a
// reloaded catalog can re-quantize.
void save_catalog(const Catalog& catalog, const std::string& path);
Catalog load_catalog(const std::string& path);

}  // namespace sidrec
