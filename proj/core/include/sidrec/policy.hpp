#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sidrec/autodiff.hpp"
#include "sidrec/catalog.hpp"
#include "sidrec/dataset.hpp"

namespace sidrec {

struct PolicyDims {
    int d_model = 16;
    int hidden = 32;
    double init_sigma = 0.1;
};

// Autoregressive categorical policy over SID tokens: token embeddings, a
// gated recurrent context encoder, one linear head per SID level, and a
// dedicated confidence head that is only used by the append-and-query
// confidence computation (it cannot influence SID generation).
//
// Forward passes are pure given the parameters. The next-token distribution
// is always the softmax restricted to the catalog trie's valid codes, so
// every generated sequence resolves to a real item.
class Policy {
  public:
    Policy(std::shared_ptr<const Catalog> catalog, PolicyDims dims, std::uint64_t seed);

    const Catalog& catalog() const { return *catalog_; }
    std::shared_ptr<const Catalog> catalog_ptr() const { return catalog_; }
    const Vocab& vocab() const { return vocab_; }
    const PolicyDims& dims() const { return dims_; }
    std::uint64_t init_seed() const { return init_seed_; }

    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }

    // --- plain forward -----------------------------------------------------

    Eigen::VectorXd encode_context(std::span<const int> tokens) const;
    Eigen::VectorXd gru_step(const Eigen::VectorXd& h, int token) const;
    Eigen::VectorXd level_logits(const Eigen::VectorXd& h, int level) const;

    // Raw logits for the next level given a code prefix. Downstream softmax
    // must be restricted to the trie's valid codes.
    Eigen::VectorXd step_logits(std::span<const int> context_tokens,
                                std::span<const int> prefix_codes) const;

    // Cumulative constrained log-probability s(y) = sum_t log P(y_t | ...).
    // Throws InvalidPath unless y is a catalog SID.
    double sequence_logprob(std::span<const int> context_tokens, const SemanticId& y) const;

    // Length-normalized negative log-likelihood, -s(y)/L.
    double implicit_uncertainty(std::span<const int> context_tokens, const SemanticId& y) const;

    // Append-and-query confidence c(y) in (0,1): encode context||y, then read
    // the normalized probability of the high-confidence token.
    double confidence_query(std::span<const int> context_tokens, const SemanticId& y) const;

    // c from the two confidence logits; invariant to a common shift.
    static double confidence_from_logits(double logit_high, double logit_low);

    // --- tape forward (building blocks for differentiable losses) ----------

    ad::NodeRef tape_encode_context(ad::Tape& tape, std::span<const int> tokens) const;
    ad::NodeRef tape_gru_step(ad::Tape& tape, ad::NodeRef h, int token) const;
    ad::NodeRef tape_level_logits(ad::Tape& tape, ad::NodeRef h, int level) const;
    // Scalar node for c(y) given the encoded context.
    ad::NodeRef tape_confidence(ad::Tape& tape, ad::NodeRef h_ctx, const SemanticId& y) const;

    // --- training ----------------------------------------------------------

    // Mean over the batch of -s(y*)/L. Accumulates gradients into params()
    // (callers zero the gradients first).
    double sft_loss(std::span<const Example> batch);

    void sgd_update(double learning_rate);

    // Deep immutable copy of the policy (parameters included).
    std::shared_ptr<const Policy> snapshot() const;

    bool same_shape(const Policy& other) const;

  private:
    struct GruIds {
        int wz, uz, bz, wr, ur, br, wh, uh, bh;
    };

    template <class Engine>
    typename Engine::Vec gru_cell(Engine& e, typename Engine::Vec x,
                                  typename Engine::Vec h) const;
    template <class Engine>
    typename Engine::Vec confidence_features(Engine& e, typename Engine::Vec h_ctx,
                                             const SemanticId& y) const;

    std::shared_ptr<const Catalog> catalog_;
    Vocab vocab_;
    PolicyDims dims_;
    std::uint64_t init_seed_ = 0;

    ad::ParamStore params_;
    int embed_ = -1;
    GruIds gru_{};
    std::vector<int> heads_;
    int conf_w_ = -1;
    int conf_b_ = -1;
};

using PolicySnapshot = std::shared_ptr<const Policy>;

// Full softmax over the codebook with invalid codes at exactly zero.
Eigen::VectorXd masked_softmax(const Eigen::VectorXd& logits, std::span<const int> valid);

// Checkpoint file: single-line JSON header (shapes, vocab, seed, stage),
// newline, then the flat little-endian 64-bit parameter block. Round trips
// are bit-exact.
void save_checkpoint(const Policy& policy, const std::string& path, const std::string& stage);
// Loads parameters into an already-constructed policy of matching shape;
// returns the stored stage label.
std::string load_checkpoint(Policy& policy, const std::string& path);

}  // namespace sidrec
