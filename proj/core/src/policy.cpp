#include "sidrec/policy.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sidrec/errors.hpp"
#include "sidrec/rng.hpp"

namespace sidrec {

using json = nlohmann::json;

namespace {

// The two evaluation engines below share the GRU/head formulas via the
// templates in Policy, so the plain and tape forward paths compute
// identical floating-point values.

struct PlainEngine {
    using Vec = Eigen::VectorXd;
    const ad::ParamStore& p;

    Vec param_row(int pid, int row) const { return p.value(pid).row(row).transpose(); }
    Vec param_col(int pid) const { return p.value(pid).col(0); }
    Vec matvec(int pid, const Vec& x) const { return p.value(pid) * x; }
    Vec add(const Vec& a, const Vec& b) const { return a + b; }
    Vec mul(const Vec& a, const Vec& b) const { return a.cwiseProduct(b); }
    Vec affine(const Vec& a, double scale, double shift) const {
        return (scale * a.array() + shift).matrix();
    }
    Vec sigmoid(const Vec& a) const {
        Vec y(a.size());
        for (int k = 0; k < a.size(); ++k) y[k] = 1.0 / (1.0 + std::exp(-a[k]));
        return y;
    }
    Vec tanh(const Vec& a) const {
        Vec y(a.size());
        for (int k = 0; k < a.size(); ++k) y[k] = std::tanh(a[k]);
        return y;
    }
    Vec concat(const Vec& a, const Vec& b) const {
        Vec y(a.size() + b.size());
        y << a, b;
        return y;
    }
};

struct TapeEngine {
    using Vec = ad::NodeRef;
    ad::Tape& t;

    Vec param_row(int pid, int row) { return t.param_row(pid, row); }
    Vec param_col(int pid) { return t.param_col(pid); }
    Vec matvec(int pid, Vec x) { return t.matvec(pid, x); }
    Vec add(Vec a, Vec b) { return t.add(a, b); }
    Vec mul(Vec a, Vec b) { return t.mul(a, b); }
    Vec affine(Vec a, double scale, double shift) { return t.affine(a, scale, shift); }
    Vec sigmoid(Vec a) { return t.sigmoid(a); }
    Vec tanh(Vec a) { return t.tanh(a); }
    Vec concat(Vec a, Vec b) { return t.concat(a, b); }
};

}  // namespace

template <class Engine>
typename Engine::Vec Policy::gru_cell(Engine& e, typename Engine::Vec x,
                                      typename Engine::Vec h) const {
    auto z = e.sigmoid(e.add(e.add(e.matvec(gru_.wz, x), e.matvec(gru_.uz, h)),
                             e.param_col(gru_.bz)));
    auto r = e.sigmoid(e.add(e.add(e.matvec(gru_.wr, x), e.matvec(gru_.ur, h)),
                             e.param_col(gru_.br)));
    auto hh = e.tanh(e.add(e.add(e.matvec(gru_.wh, x), e.matvec(gru_.uh, e.mul(r, h))),
                           e.param_col(gru_.bh)));
    return e.add(e.mul(e.affine(z, -1.0, 1.0), h), e.mul(z, hh));
}

template <class Engine>
typename Engine::Vec Policy::confidence_features(Engine& e, typename Engine::Vec h_ctx,
                                                 const SemanticId& y) const {
    auto h = h_ctx;
    typename Engine::Vec summary{};
    for (int l = 0; l < vocab_.levels; ++l) {
        auto x = e.param_row(embed_, vocab_.code_token(l, y.codes[l]));
        summary = (l == 0) ? x : e.add(summary, x);
        h = gru_cell(e, x, h);
    }
    summary = e.affine(summary, 1.0 / vocab_.levels, 0.0);
    return e.concat(h, summary);
}

Policy::Policy(std::shared_ptr<const Catalog> catalog, PolicyDims dims, std::uint64_t seed)
    : catalog_(std::move(catalog)), dims_(dims), init_seed_(seed) {
    vocab_ = catalog_->vocab();
    const int d = dims_.d_model;
    const int h = dims_.hidden;

    embed_ = params_.add("embed", vocab_.size(), d);
    gru_.wz = params_.add("gru.wz", h, d);
    gru_.uz = params_.add("gru.uz", h, h);
    gru_.bz = params_.add("gru.bz", h, 1);
    gru_.wr = params_.add("gru.wr", h, d);
    gru_.ur = params_.add("gru.ur", h, h);
    gru_.br = params_.add("gru.br", h, 1);
    gru_.wh = params_.add("gru.wh", h, d);
    gru_.uh = params_.add("gru.uh", h, h);
    gru_.bh = params_.add("gru.bh", h, 1);
    for (int l = 0; l < vocab_.levels; ++l) {
        heads_.push_back(params_.add("head." + std::to_string(l), vocab_.codebook_size, h));
    }
    conf_w_ = params_.add("conf.w", 2, h + d);
    conf_b_ = params_.add("conf.b", 2, 1);

    // Gaussian init for embeddings and recurrent weights; biases and output
    // heads start at zero so the untrained policy is exactly uniform over
    // valid codes and the untrained confidence is exactly 0.5.
    Rng rng(seed);
    auto gaussian = [&](int pid) {
        auto& m = params_.value(pid);
        for (int c = 0; c < m.cols(); ++c) {
            for (int r = 0; r < m.rows(); ++r) m(r, c) = rng.normal(0.0, dims_.init_sigma);
        }
    };
    gaussian(embed_);
    for (int pid : {gru_.wz, gru_.uz, gru_.wr, gru_.ur, gru_.wh, gru_.uh}) gaussian(pid);
}

// --------------------------------------------------------------------------
// Plain forward

Eigen::VectorXd Policy::gru_step(const Eigen::VectorXd& h, int token) const {
    PlainEngine e{params_};
    return gru_cell(e, e.param_row(embed_, token), h);
}

Eigen::VectorXd Policy::encode_context(std::span<const int> tokens) const {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(dims_.hidden);
    for (int t : tokens) h = gru_step(h, t);
    return h;
}

Eigen::VectorXd Policy::level_logits(const Eigen::VectorXd& h, int level) const {
    return params_.value(heads_[level]) * h;
}

Eigen::VectorXd Policy::step_logits(std::span<const int> context_tokens,
                                    std::span<const int> prefix_codes) const {
    const int level = static_cast<int>(prefix_codes.size());
    if (level >= vocab_.levels) throw PrefixTooLong("step_logits: prefix has no next level");
    Eigen::VectorXd h = encode_context(context_tokens);
    for (int l = 0; l < level; ++l) h = gru_step(h, vocab_.code_token(l, prefix_codes[l]));
    return level_logits(h, level);
}

double Policy::sequence_logprob(std::span<const int> context_tokens, const SemanticId& y) const {
    if (!catalog_->trie.resolve(y)) throw InvalidPath("sequence_logprob: y is not a catalog SID");
    Eigen::VectorXd h = encode_context(context_tokens);
    std::vector<int> prefix;
    double s = 0.0;
    for (int l = 0; l < vocab_.levels; ++l) {
        const auto valid = catalog_->trie.valid_next_codes(prefix);
        s += ad::masked_log_softmax_pick_value(level_logits(h, l), valid, y.codes[l]);
        if (l + 1 < vocab_.levels) h = gru_step(h, vocab_.code_token(l, y.codes[l]));
        prefix.push_back(y.codes[l]);
    }
    return s;
}

double Policy::implicit_uncertainty(std::span<const int> context_tokens,
                                    const SemanticId& y) const {
    return -sequence_logprob(context_tokens, y) / vocab_.levels;
}

double Policy::confidence_from_logits(double logit_high, double logit_low) {
    return 1.0 / (1.0 + std::exp(-(logit_high - logit_low)));
}

double Policy::confidence_query(std::span<const int> context_tokens, const SemanticId& y) const {
    if (!catalog_->trie.resolve(y)) throw InvalidPath("confidence_query: y is not a catalog SID");
    PlainEngine e{params_};
    Eigen::VectorXd feat = confidence_features(e, encode_context(context_tokens), y);
    const Eigen::VectorXd logits = params_.value(conf_w_) * feat + params_.value(conf_b_).col(0);
    return confidence_from_logits(logits[0], logits[1]);
}

// --------------------------------------------------------------------------
// Tape forward

ad::NodeRef Policy::tape_gru_step(ad::Tape& tape, ad::NodeRef h, int token) const {
    TapeEngine e{tape};
    return gru_cell(e, tape.param_row(embed_, token), h);
}

ad::NodeRef Policy::tape_encode_context(ad::Tape& tape, std::span<const int> tokens) const {
    ad::NodeRef h = tape.zeros(dims_.hidden);
    for (int t : tokens) h = tape_gru_step(tape, h, t);
    return h;
}

ad::NodeRef Policy::tape_level_logits(ad::Tape& tape, ad::NodeRef h, int level) const {
    return tape.matvec(heads_[level], h);
}

ad::NodeRef Policy::tape_confidence(ad::Tape& tape, ad::NodeRef h_ctx, const SemanticId& y) const {
    TapeEngine e{tape};
    ad::NodeRef feat = confidence_features(e, h_ctx, y);
    ad::NodeRef logits = tape.add(tape.matvec(conf_w_, feat), tape.param_col(conf_b_));
    return tape.sigmoid(tape.pick_diff(logits, 0, 1));
}

// --------------------------------------------------------------------------
// SFT loss

double Policy::sft_loss(std::span<const Example> batch) {
    if (batch.empty()) throw DegenerateInput("sft_loss: empty batch");
    ad::Tape tape(&params_);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& ex : batch) {
        if (!catalog_->trie.resolve(ex.target)) {
            throw InvalidPath("sft_loss: target is not a catalog SID");
        }
        tape.reset();
        const auto tokens = encode_prompt(vocab_, ex.context);
        ad::NodeRef h = tape_encode_context(tape, tokens);
        ad::NodeRef acc = -1;
        std::vector<int> prefix;
        for (int l = 0; l < vocab_.levels; ++l) {
            const auto valid = catalog_->trie.valid_next_codes(prefix);
            ad::NodeRef lp =
                tape.masked_log_softmax_pick(tape_level_logits(tape, h, l), valid, ex.target.codes[l]);
            acc = (l == 0) ? lp : tape.add(acc, lp);
            if (l + 1 < vocab_.levels) {
                h = tape_gru_step(tape, h, vocab_.code_token(l, ex.target.codes[l]));
            }
            prefix.push_back(ex.target.codes[l]);
        }
        ad::NodeRef loss = tape.affine(acc, -1.0 / vocab_.levels, 0.0);
        tape.backward(loss, inv_batch);
        total += tape.scalar(loss) * inv_batch;
    }
    return total;
}

void Policy::sgd_update(double learning_rate) {
    for (int pid = 0; pid < params_.count(); ++pid) {
        params_.value(pid) -= learning_rate * params_.grad(pid);
    }
}

std::shared_ptr<const Policy> Policy::snapshot() const {
    return std::make_shared<const Policy>(*this);
}

bool Policy::same_shape(const Policy& other) const {
    if (params_.count() != other.params_.count()) return false;
    for (int pid = 0; pid < params_.count(); ++pid) {
        if (params_.value(pid).rows() != other.params_.value(pid).rows() ||
            params_.value(pid).cols() != other.params_.value(pid).cols()) {
            return false;
        }
    }
    return vocab_.levels == other.vocab_.levels &&
           vocab_.codebook_size == other.vocab_.codebook_size;
}

// --------------------------------------------------------------------------
// Masked softmax helper

Eigen::VectorXd masked_softmax(const Eigen::VectorXd& logits, std::span<const int> valid) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(logits.size());
    std::vector<double> probs;
    ad::masked_softmax_probs(logits, valid, probs);
    for (std::size_t k = 0; k < valid.size(); ++k) out[valid[k]] = probs[k];
    return out;
}

// --------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const Policy& policy, const std::string& path, const std::string& stage) {
    const auto& params = policy.params();
    json header;
    header["format"] = "sidrec-checkpoint-v1";
    header["stage"] = stage;
    header["seed"] = policy.init_seed();
    header["levels"] = policy.vocab().levels;
    header["codebook_size"] = policy.vocab().codebook_size;
    header["vocab_size"] = policy.vocab().size();
    header["d_model"] = policy.dims().d_model;
    header["hidden"] = policy.dims().hidden;
    header["param_count"] = params.scalar_count();
    header["params"] = json::array();
    for (int pid = 0; pid < params.count(); ++pid) {
        header["params"].push_back({{"name", params.name(pid)},
                                    {"rows", params.value(pid).rows()},
                                    {"cols", params.value(pid).cols()}});
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out << header.dump() << '\n';
    const auto flat = params.flatten();
    static_assert(sizeof(double) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(flat.data()),
                  static_cast<std::streamsize>(flat.size() * sizeof(double)));
    } else {
        for (double v : flat) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            char buf[8];
            for (int k = 0; k < 8; ++k) buf[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
            out.write(buf, 8);
        }
    }
    if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

std::string load_checkpoint(Policy& policy, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("load_checkpoint: missing header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("load_checkpoint: bad header: ") + e.what());
    }

    auto& params = policy.params();
    try {
        if (header.at("format").get<std::string>() != "sidrec-checkpoint-v1") {
            throw SchemaError("load_checkpoint: unknown format");
        }
        if (header.at("levels").get<int>() != policy.vocab().levels ||
            header.at("codebook_size").get<int>() != policy.vocab().codebook_size ||
            header.at("d_model").get<int>() != policy.dims().d_model ||
            header.at("hidden").get<int>() != policy.dims().hidden ||
            header.at("param_count").get<int>() != params.scalar_count()) {
            throw SchemaError("load_checkpoint: shape mismatch with policy");
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("load_checkpoint: header: ") + e.what());
    }

    const int n = params.scalar_count();
    std::vector<double> flat(n);
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(flat.data()),
                static_cast<std::streamsize>(flat.size() * sizeof(double)));
        if (!in) throw SchemaError("load_checkpoint: truncated parameter block");
    } else {
        for (int i = 0; i < n; ++i) {
            char buf[8];
            in.read(buf, 8);
            if (!in) throw SchemaError("load_checkpoint: truncated parameter block");
            std::uint64_t bits = 0;
            for (int k = 0; k < 8; ++k) {
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[k])) << (8 * k);
            }
            flat[i] = std::bit_cast<double>(bits);
        }
    }
    params.unflatten(flat);
    return header.at("stage").get<std::string>();
}

}  // namespace sidrec
