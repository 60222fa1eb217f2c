#include "sidrec/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "sidrec/errors.hpp"
#include "sidrec/metrics.hpp"
#include "sidrec/rewards.hpp"
#include "sidrec/rng.hpp"

namespace sidrec {

RewardKind reward_kind_from_string(const std::string& name) {
    if (name == "binary") return RewardKind::Binary;
    if (name == "rank") return RewardKind::Rank;
    if (name == "uncertainty") return RewardKind::Uncertainty;
    throw ConfigError("reward: unknown kind '" + name + "' (binary|rank|uncertainty)");
}

std::string to_string(RewardKind kind) {
    switch (kind) {
        case RewardKind::Binary: return "binary";
        case RewardKind::Rank: return "rank";
        case RewardKind::Uncertainty: return "uncertainty";
    }
    return "?";
}

double difficulty_weight(int rank0, int group_size, double alpha_min) {
    if (group_size < 2) throw DegenerateInput("difficulty_weight: G must be >= 2");
    if (rank0 < 0 || rank0 > group_size - 1) {
        throw InvalidRank("difficulty_weight: rank0 out of [0, G-1]");
    }
    return alpha_min + (1.0 - alpha_min) * static_cast<double>(rank0) /
                           static_cast<double>(group_size - 1);
}

namespace {

inline double softplus_value(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Per-token log-probs of a candidate under frozen parameters, computed with
// the same masked-softmax kernel as the tape path so the ratios are exactly
// 1 while the live policy still equals the snapshot.
std::vector<double> old_token_logprobs(const Policy& snapshot, const Eigen::VectorXd& h_ctx,
                                       const SemanticId& y) {
    const Vocab& vocab = snapshot.vocab();
    const SidTrie& trie = snapshot.catalog().trie;
    std::vector<double> out;
    Eigen::VectorXd h = h_ctx;
    std::vector<int> prefix;
    for (int l = 0; l < vocab.levels; ++l) {
        const auto valid = trie.valid_next_codes(prefix);
        out.push_back(
            ad::masked_log_softmax_pick_value(snapshot.level_logits(h, l), valid, y.codes[l]));
        if (l + 1 < vocab.levels) h = snapshot.gru_step(h, vocab.code_token(l, y.codes[l]));
        prefix.push_back(y.codes[l]);
    }
    return out;
}

ad::NodeRef build_grpo(ad::Tape& tape, const Policy& policy, const Policy& snapshot,
                       ad::NodeRef h_ctx, const Eigen::VectorXd& h_ctx_old,
                       const RolloutGroup& group, std::span<const double> advantages,
                       double clip_eps) {
    const Vocab& vocab = policy.vocab();
    const SidTrie& trie = policy.catalog().trie;
    const int n = static_cast<int>(group.candidates.size());

    ad::NodeRef acc = -1;
    for (int i = 0; i < n; ++i) {
        const SemanticId& y = group.candidates[i].sid;
        const auto old_lp = old_token_logprobs(snapshot, h_ctx_old, y);
        ad::NodeRef h = h_ctx;
        std::vector<int> prefix;
        for (int l = 0; l < vocab.levels; ++l) {
            const auto valid = trie.valid_next_codes(prefix);
            ad::NodeRef lp = tape.masked_log_softmax_pick(policy.tape_level_logits(tape, h, l),
                                                          valid, y.codes[l]);
            ad::NodeRef ratio = tape.exp(tape.affine(lp, 1.0, -old_lp[l]));
            ad::NodeRef term;
            if (clip_eps > 0.0) {
                ad::NodeRef unclipped = tape.affine(ratio, advantages[i], 0.0);
                ad::NodeRef clipped =
                    tape.affine(tape.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps),
                                advantages[i], 0.0);
                term = tape.min(unclipped, clipped);
            } else {
                term = tape.affine(ratio, advantages[i], 0.0);
            }
            acc = (acc < 0) ? term : tape.add(acc, term);
            if (l + 1 < vocab.levels) {
                h = policy.tape_gru_step(tape, h, vocab.code_token(l, y.codes[l]));
            }
            prefix.push_back(y.codes[l]);
        }
    }
    return tape.affine(acc, -1.0 / (static_cast<double>(n) * vocab.levels), 0.0);
}

struct AuxNodes {
    ad::NodeRef total = -1;  // -1 when there is nothing to backprop
    double l_rank_partial = 0.0;
    double l_rank_wrong = 0.0;
    double value = 0.0;
};

AuxNodes build_aux(ad::Tape& tape, const Policy& policy, ad::NodeRef h_ctx,
                   const RolloutGroup& group, const SemanticId& y_star, double gamma1,
                   double gamma2) {
    ad::NodeRef c_star = policy.tape_confidence(tape, h_ctx, y_star);

    ad::NodeRef acc_partial = -1;
    ad::NodeRef acc_wrong = -1;
    int n_partial = 0;
    int n_wrong = 0;
    for (const auto& cand : group.candidates) {
        if (cand.sid == y_star) continue;
        ad::NodeRef c = policy.tape_confidence(tape, h_ctx, cand.sid);
        ad::NodeRef pair = tape.softplus(tape.sub(c, c_star));
        if (classify_negative(cand.sid, y_star) == NegativeClass::Partial) {
            acc_partial = (acc_partial < 0) ? pair : tape.add(acc_partial, pair);
            ++n_partial;
        } else {
            acc_wrong = (acc_wrong < 0) ? pair : tape.add(acc_wrong, pair);
            ++n_wrong;
        }
    }

    AuxNodes out;
    ad::NodeRef l_partial = -1;
    ad::NodeRef l_wrong = -1;
    if (n_partial > 0) {
        l_partial = tape.affine(acc_partial, 1.0 / n_partial, 0.0);
        out.l_rank_partial = tape.scalar(l_partial);
    }
    if (n_wrong > 0) {
        l_wrong = tape.affine(acc_wrong, 1.0 / n_wrong, 0.0);
        out.l_rank_wrong = tape.scalar(l_wrong);
    }
    out.value = gamma1 * out.l_rank_partial + gamma2 * out.l_rank_wrong;

    if (l_partial >= 0 && l_wrong >= 0) {
        out.total = tape.add(tape.affine(l_partial, gamma1, 0.0), tape.affine(l_wrong, gamma2, 0.0));
    } else if (l_partial >= 0) {
        out.total = tape.affine(l_partial, gamma1, 0.0);
    } else if (l_wrong >= 0) {
        out.total = tape.affine(l_wrong, gamma2, 0.0);
    }
    return out;
}

}  // namespace

double grpo_loss(Policy& policy, const Policy& snapshot, const RolloutGroup& group,
                 std::span<const double> advantages, double clip_eps, double grad_scale) {
    if (!policy.same_shape(snapshot)) {
        throw StaleSnapshot("grpo_loss: snapshot shape differs from policy");
    }
    if (advantages.size() != group.candidates.size()) {
        throw DegenerateInput("grpo_loss: advantage count differs from candidates");
    }
    ad::Tape tape(&policy.params());
    ad::NodeRef h_ctx = policy.tape_encode_context(tape, group.context_tokens);
    const Eigen::VectorXd h_ctx_old = snapshot.encode_context(group.context_tokens);
    ad::NodeRef node =
        build_grpo(tape, policy, snapshot, h_ctx, h_ctx_old, group, advantages, clip_eps);
    if (grad_scale != 0.0) tape.backward(node, grad_scale);
    return tape.scalar(node);
}

double rank_loss(double c_star, std::span<const double> c_set) {
    if (c_set.empty()) return 0.0;
    double sum = 0.0;
    for (double c : c_set) sum += softplus_value(c - c_star);
    return sum / static_cast<double>(c_set.size());
}

AuxBreakdown aux_confidence_loss(Policy& policy, std::span<const int> context_tokens,
                                 const RolloutGroup& group, const SemanticId& y_star,
                                 double gamma1, double gamma2, double grad_scale) {
    ad::Tape tape(&policy.params());
    ad::NodeRef h_ctx = policy.tape_encode_context(tape, context_tokens);
    const AuxNodes nodes = build_aux(tape, policy, h_ctx, group, y_star, gamma1, gamma2);
    if (nodes.total >= 0 && grad_scale != 0.0) tape.backward(nodes.total, grad_scale);
    return AuxBreakdown{nodes.l_rank_partial, nodes.l_rank_wrong, nodes.value};
}

namespace {

LossBreakdown run_batch(Policy& policy, std::span<const Example> batch, const AlignConfig& config,
                        bool apply_update) {
    if (batch.empty()) throw DegenerateInput("train_step: empty batch");
    if (config.kl_beta != 0.0) {
        throw ConfigError("kl_beta: only 0 is supported (KL regularization is disabled)");
    }
    const PolicySnapshot snap = policy.snapshot();
    auto& params = policy.params();
    params.zero_grads();

    LossBreakdown bd;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const bool aux_on = config.gamma1 != 0.0 || config.gamma2 != 0.0;
    ad::Tape tape(&params);

    for (const auto& ex : batch) {
        tape.reset();
        const auto tokens = encode_prompt(policy.vocab(), ex.context);
        RolloutGroup group = constrained_beam_search(*snap, tokens, config.group_size);
        set_ground_truth(group, ex.target);

        std::vector<double> rewards;
        rewards.reserve(group.candidates.size());
        switch (config.reward) {
            case RewardKind::Binary:
                for (const auto& cand : group.candidates) {
                    rewards.push_back(reward_binary(cand.sid, ex.target));
                }
                break;
            case RewardKind::Rank:
                for (int i = 0; i < static_cast<int>(group.candidates.size()); ++i) {
                    rewards.push_back(reward_rank(group.candidates[i].sid, ex.target, i + 1));
                }
                break;
            case RewardKind::Uncertainty:
                rewards = reward_uncertainty(group, ex.target);
                break;
        }
        const auto advantages = normalize_advantages(rewards, config.adv_eps);

        InstanceBreakdown inst;
        inst.gt_rank = group.gt_rank;
        inst.lambda_diff = difficulty_weight(group.gt_rank, config.group_size, config.alpha_min);

        ad::NodeRef h_ctx = policy.tape_encode_context(tape, tokens);
        const Eigen::VectorXd h_ctx_old = snap->encode_context(tokens);
        ad::NodeRef grpo_node = build_grpo(tape, policy, *snap, h_ctx, h_ctx_old, group,
                                           advantages, config.clip_eps);
        inst.l_grpo = tape.scalar(grpo_node);
        inst.l_main = inst.lambda_diff * inst.l_grpo;

        if (aux_on) {
            const AuxNodes aux =
                build_aux(tape, policy, h_ctx, group, ex.target, config.gamma1, config.gamma2);
            inst.l_rank_partial = aux.l_rank_partial;
            inst.l_rank_wrong = aux.l_rank_wrong;
            inst.l_aux = aux.value;
            if (aux.total >= 0) tape.backward(aux.total, inv_batch);
        } else {
            // Report the unweighted pair losses without touching gradients.
            const double c_star = policy.confidence_query(tokens, ex.target);
            std::vector<double> c_partial;
            std::vector<double> c_wrong;
            for (const auto& cand : group.candidates) {
                if (cand.sid == ex.target) continue;
                const double c = policy.confidence_query(tokens, cand.sid);
                if (classify_negative(cand.sid, ex.target) == NegativeClass::Partial) {
                    c_partial.push_back(c);
                } else {
                    c_wrong.push_back(c);
                }
            }
            inst.l_rank_partial = rank_loss(c_star, c_partial);
            inst.l_rank_wrong = rank_loss(c_star, c_wrong);
            inst.l_aux = 0.0;
        }

        // A zero difficulty weight contributes exactly nothing to the update.
        if (inst.lambda_diff != 0.0) tape.backward(grpo_node, inst.lambda_diff * inv_batch);

        bd.instances.push_back(inst);
        bd.l_grpo += inst.l_grpo * inv_batch;
        bd.lambda_diff += inst.lambda_diff * inv_batch;
        bd.l_main += inst.l_main * inv_batch;
        bd.l_rank_partial += inst.l_rank_partial * inv_batch;
        bd.l_rank_wrong += inst.l_rank_wrong * inv_batch;
        bd.l_aux += inst.l_aux * inv_batch;
        bd.l_total += (inst.l_main + inst.l_aux) * inv_batch;
    }

    if (apply_update) policy.sgd_update(config.learning_rate);
    return bd;
}

}  // namespace

LossBreakdown train_step(Policy& policy, std::span<const Example> batch,
                         const AlignConfig& config) {
    return run_batch(policy, batch, config, true);
}

LossBreakdown evaluate_losses(Policy& policy, std::span<const Example> batch,
                              const AlignConfig& config) {
    LossBreakdown bd = run_batch(policy, batch, config, false);
    policy.params().zero_grads();
    return bd;
}

// ---------------------------------------------------------------------------
// Stage runners

namespace {

std::vector<Example> gather(const std::vector<Example>& pool, std::span<const int> indices,
                            int begin, int end) {
    std::vector<Example> out;
    out.reserve(end - begin);
    for (int k = begin; k < end; ++k) out.push_back(pool[indices[k]]);
    return out;
}

void shuffle_indices(std::vector<int>& indices, Rng& rng) {
    for (int i = static_cast<int>(indices.size()) - 1; i > 0; --i) {
        std::swap(indices[i], indices[rng.range(0, i + 1)]);
    }
}

}  // namespace

SftResult run_sft(Policy& policy, const SplitDataset& splits, const SftConfig& config) {
    if (splits.train.empty() || splits.valid.empty()) {
        throw InsufficientData("run_sft: train and valid splits must be non-empty");
    }
    const int n = static_cast<int>(splits.train.size());
    const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const int eval_interval =
        config.eval_interval > 0 ? config.eval_interval : std::max(1, steps_per_epoch / 2);

    Rng rng(config.seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    SftResult result;
    std::vector<double> best = policy.params().flatten();
    double best_hr10 = evaluate(policy, splits.valid, 10).hr10;
    result.history.push_back(EvalPoint{0, best_hr10});
    result.best_hr10 = best_hr10;
    int since_best = 0;
    int step = 0;
    bool stop = false;

    for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
        shuffle_indices(order, rng);
        for (int begin = 0; begin < n && !stop; begin += config.batch_size) {
            const int end = std::min(n, begin + config.batch_size);
            const auto batch = gather(splits.train, order, begin, end);
            policy.params().zero_grads();
            policy.sft_loss(batch);
            policy.sgd_update(config.learning_rate);
            ++step;
            if (step % eval_interval == 0) {
                const double hr10 = evaluate(policy, splits.valid, 10).hr10;
                result.history.push_back(EvalPoint{step, hr10});
                if (hr10 > best_hr10) {
                    best_hr10 = hr10;
                    best = policy.params().flatten();
                    result.best_step = step;
                    result.best_hr10 = hr10;
                    since_best = 0;
                } else if (++since_best >= config.patience) {
                    stop = true;
                }
            }
        }
    }
    policy.params().unflatten(best);
    return result;
}

AlignmentResult run_alignment(Policy& policy, const SplitDataset& splits,
                              const AlignConfig& config, const std::string& dynamics_csv_path) {
    if (splits.train.empty() || splits.valid.empty()) {
        throw InsufficientData("run_alignment: train and valid splits must be non-empty");
    }

    // Probe contexts drawn once per run, from the seed alone, so dynamics
    // curves are comparable across hyperparameter settings.
    Rng probe_rng(config.seed ^ 0x70726f6265ull);
    std::vector<int> probe_order(splits.valid.size());
    std::iota(probe_order.begin(), probe_order.end(), 0);
    shuffle_indices(probe_order, probe_rng);
    const int n_probes = std::min<int>(config.probe_size, static_cast<int>(splits.valid.size()));
    std::vector<Example> probes;
    probes.reserve(n_probes);
    for (int k = 0; k < n_probes; ++k) probes.push_back(splits.valid[probe_order[k]]);

    std::ofstream csv(dynamics_csv_path);
    if (!csv) throw IoError("run_alignment: cannot open " + dynamics_csv_path);
    csv << "step,hr1,hrG,unique_items,l_grpo,l_main,l_aux,mean_lambda\n";
    auto emit = [&](int step, const DynamicsRow& row, double l_grpo, double l_main, double l_aux,
                    double mean_lambda) {
        char line[512];
        std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", step,
                      row.hr1, row.hrG, row.mean_unique, l_grpo, l_main, l_aux, mean_lambda);
        csv << line << '\n';
    };

    const int n = static_cast<int>(splits.train.size());
    Rng rng(config.seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    // Step-0 row: probe metrics plus a dry loss pass on the first batch.
    {
        const int end = std::min(n, config.batch_size);
        std::vector<Example> first(splits.train.begin(), splits.train.begin() + end);
        const LossBreakdown dry = evaluate_losses(policy, first, config);
        emit(0, dynamics_row(policy, probes, config.group_size), dry.l_grpo, dry.l_main, dry.l_aux,
             dry.lambda_diff);
    }

    AlignmentResult result;
    double sum_grpo = 0.0, sum_main = 0.0, sum_aux = 0.0, sum_lambda = 0.0;
    int interval_count = 0;
    int step = 0;
    int last_logged = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_indices(order, rng);
        for (int begin = 0; begin < n; begin += config.batch_size) {
            const int end = std::min(n, begin + config.batch_size);
            const auto batch = gather(splits.train, order, begin, end);
            const LossBreakdown bd = train_step(policy, batch, config);
            ++step;
            sum_grpo += bd.l_grpo;
            sum_main += bd.l_main;
            sum_aux += bd.l_aux;
            sum_lambda += bd.lambda_diff;
            ++interval_count;
            if (step % config.eval_interval == 0) {
                emit(step, dynamics_row(policy, probes, config.group_size),
                     sum_grpo / interval_count, sum_main / interval_count,
                     sum_aux / interval_count, sum_lambda / interval_count);
                sum_grpo = sum_main = sum_aux = sum_lambda = 0.0;
                interval_count = 0;
                last_logged = step;
            }
        }
    }
    if (step != last_logged && interval_count > 0) {
        emit(step, dynamics_row(policy, probes, config.group_size), sum_grpo / interval_count,
             sum_main / interval_count, sum_aux / interval_count, sum_lambda / interval_count);
    }
    result.steps = step;
    return result;
}

}  // namespace sidrec
