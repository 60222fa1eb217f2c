// Pipeline driver: synthetic catalog + interactions, two-stage training,
// evaluation, risk curves and the ablation ladder.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sidrec/catalog.hpp"
#include "sidrec/dataset.hpp"
#include "sidrec/decode.hpp"
#include "sidrec/errors.hpp"
#include "sidrec/metrics.hpp"
#include "sidrec/policy.hpp"
#include "sidrec/risk.hpp"
#include "sidrec/rng.hpp"
#include "sidrec/run_config.hpp"
#include "sidrec/train.hpp"

namespace fs = std::filesystem;
using namespace sidrec;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha_min;
    std::optional<double> gamma1;
    std::optional<double> gamma2;
    std::optional<double> clip_eps;
    std::optional<double> lambda_hybrid;
};

RunConfig load_config(const std::string& path, const Overrides& o) {
    RunConfig c = load_run_config(path);
    if (o.seed) c.seed = *o.seed;
    if (o.alpha_min) c.alpha_min = *o.alpha_min;
    if (o.gamma1) c.gamma1 = *o.gamma1;
    if (o.gamma2) c.gamma2 = *o.gamma2;
    if (o.clip_eps) c.clip_eps = *o.clip_eps;
    if (o.lambda_hybrid) c.lambda_hybrid = *o.lambda_hybrid;
    if (c.alpha_min < 0.0 || c.alpha_min > 1.0) {
        throw ConfigError("config: alpha_min must lie in [0, 1]");
    }
    return c;
}

std::string report_path(const RunConfig& c, const std::string& name) {
    fs::create_directories(c.report_dir);
    return (fs::path(c.report_dir) / name).string();
}

std::shared_ptr<const Catalog> load_catalog_ptr(const RunConfig& c) {
    return std::make_shared<const Catalog>(load_catalog(c.catalog_path));
}

Policy make_policy(const RunConfig& c, std::shared_ptr<const Catalog> catalog) {
    return Policy(std::move(catalog), PolicyDims{c.d_model, c.hidden, c.init_sigma}, c.seed);
}

std::vector<Example> probe_subset(const RunConfig& c, const SplitDataset& splits) {
    Rng rng(c.seed ^ 0x70726f6265ull);  // same probe stream as run_alignment
    std::vector<int> order(splits.valid.size());
    std::iota(order.begin(), order.end(), 0);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
        std::swap(order[i], order[rng.range(0, i + 1)]);
    }
    const int n = std::min<int>(c.probe_size, static_cast<int>(splits.valid.size()));
    std::vector<Example> probes;
    for (int k = 0; k < n; ++k) probes.push_back(splits.valid[order[k]]);
    return probes;
}

int cmd_quantize(const RunConfig& c) {
    const Eigen::MatrixXd embeddings = clustered_embeddings(
        c.n_items, c.embed_dim, c.n_clusters, c.cluster_noise, c.cluster_skew,
        c.seed ^ 0x656d62ull);
    const Catalog catalog = build_catalog(embeddings, c.levels, c.codebook_size, c.seed);
    save_catalog(catalog, c.catalog_path);
    std::printf("catalog: %d items, %d levels x %d codes -> %s\n", catalog.size(), catalog.levels,
                catalog.codebook_size, c.catalog_path.c_str());
    std::printf("example sid: %s\n", render_sid(catalog.sid_of(0)).c_str());
    return 0;
}

int cmd_gen_data(const RunConfig& c) {
    const auto catalog = load_catalog_ptr(c);
    DataGenConfig gen;
    gen.n_users = c.n_users;
    gen.mean_history = c.mean_history;
    gen.stickiness = c.stickiness;
    gen.repeat_prob = c.repeat_prob;
    gen.seed = c.seed ^ 0x64617461ull;
    const auto interactions = generate_dataset(*catalog, gen);
    const SplitDataset splits = chronological_split(*catalog, interactions);
    save_jsonl(splits, c.dataset_stem);
    std::printf("interactions: %zu, examples: train %zu / valid %zu / test %zu -> %s.*.jsonl\n",
                interactions.size(), splits.train.size(), splits.valid.size(), splits.test.size(),
                c.dataset_stem.c_str());
    return 0;
}

int cmd_sft(const RunConfig& c) {
    const auto catalog = load_catalog_ptr(c);
    const SplitDataset splits = load_jsonl(c.dataset_stem);
    Policy policy = make_policy(c, catalog);
    const SftResult result = run_sft(policy, splits, c.sft_config());
    save_checkpoint(policy, c.sft_checkpoint, "sft");

    std::ofstream csv(report_path(c, "sft_history.csv"));
    csv << "step,hr10\n";
    for (const auto& p : result.history) {
        char line[64];
        std::snprintf(line, sizeof(line), "%d,%.10g", p.step, p.hr10);
        csv << line << '\n';
    }
    std::printf("sft: best valid HR@10 %.4f at step %d -> %s\n", result.best_hr10,
                result.best_step, c.sft_checkpoint.c_str());
    return 0;
}

int cmd_align(const RunConfig& c, const std::string& dynamics_csv,
              const std::string& checkpoint_out) {
    const auto catalog = load_catalog_ptr(c);
    const SplitDataset splits = load_jsonl(c.dataset_stem);
    Policy policy = make_policy(c, catalog);
    load_checkpoint(policy, c.sft_checkpoint);

    const std::string csv_path =
        dynamics_csv.empty() ? report_path(c, "dynamics.csv") : dynamics_csv;
    const std::string ckpt_path = checkpoint_out.empty() ? c.align_checkpoint : checkpoint_out;
    const AlignmentResult result = run_alignment(policy, splits, c.align_config(), csv_path);
    save_checkpoint(policy, ckpt_path, "aligned");
    std::printf("alignment: %d steps, dynamics -> %s, checkpoint -> %s\n", result.steps,
                csv_path.c_str(), ckpt_path.c_str());
    return 0;
}

int cmd_eval(const RunConfig& c, const std::string& checkpoint) {
    const auto catalog = load_catalog_ptr(c);
    const SplitDataset splits = load_jsonl(c.dataset_stem);
    Policy policy = make_policy(c, catalog);
    load_checkpoint(policy, checkpoint.empty() ? c.align_checkpoint : checkpoint);
    const MetricsReport report = evaluate(policy, splits.test, c.eval_beam);
    save_metrics_csv(report, report_path(c, "metrics.csv"));
    std::printf("test (%d examples, beam %d): HR@1 %.4f HR@5 %.4f HR@10 %.4f "
                "NDCG@5 %.4f NDCG@10 %.4f\n",
                report.n_examples, c.eval_beam, report.hr1, report.hr5, report.hr10, report.ndcg5,
                report.ndcg10);
    return 0;
}

int cmd_risk(const RunConfig& c, const std::string& checkpoint) {
    const auto catalog = load_catalog_ptr(c);
    const SplitDataset splits = load_jsonl(c.dataset_stem);
    Policy policy = make_policy(c, catalog);
    load_checkpoint(policy, checkpoint.empty() ? c.align_checkpoint : checkpoint);

    // Threshold grids from observed score quantiles.
    std::vector<double> max_scores;
    std::vector<double> all_scores;
    for (const auto& ex : splits.test) {
        const auto tokens = encode_prompt(policy.vocab(), ex.context);
        const auto cands = score_candidates(policy, tokens, c.eval_beam, c.lambda_hybrid);
        double best = cands.empty() ? 0.0 : cands[0].score;
        for (const auto& cand : cands) {
            best = std::max(best, cand.score);
            all_scores.push_back(cand.score);
        }
        max_scores.push_back(best);
    }
    const auto rej_grid = quantile_thresholds(max_scores, c.risk_grid);
    const auto trunc_grid = quantile_thresholds(all_scores, c.risk_grid);

    const auto rejection =
        rejection_curve(policy, splits.test, c.lambda_hybrid, rej_grid, c.eval_beam);
    const auto truncation =
        truncation_curve(policy, splits.test, c.lambda_hybrid, trunc_grid, c.eval_beam);
    save_rejection_csv(rejection, report_path(c, "risk_rejection.csv"));
    save_truncation_csv(truncation, report_path(c, "risk_truncation.csv"));
    std::printf("risk curves over %zu test examples (lambda %.2f): %zu rejection points, "
                "%zu truncation points\n",
                splits.test.size(), c.lambda_hybrid, rejection.size(), truncation.size());
    return 0;
}

int cmd_dynamics(const RunConfig& c, const std::string& checkpoint,
                 const std::string& dump_path) {
    const auto catalog = load_catalog_ptr(c);
    const SplitDataset splits = load_jsonl(c.dataset_stem);
    Policy policy = make_policy(c, catalog);
    load_checkpoint(policy, checkpoint.empty() ? c.align_checkpoint : checkpoint);
    const auto probes = probe_subset(c, splits);
    const DynamicsRow row = dynamics_row(policy, probes, c.group_size);

    std::ofstream csv(report_path(c, "dynamics_probe.csv"));
    csv << "hr1,hrG,unique_items\n";
    char line[128];
    std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g", row.hr1, row.hrG, row.mean_unique);
    csv << line << '\n';

    if (!dump_path.empty()) {
        std::vector<RolloutGroup> groups;
        for (const auto& ex : probes) {
            const auto tokens = encode_prompt(policy.vocab(), ex.context);
            RolloutGroup group = constrained_beam_search(policy, tokens, c.group_size);
            set_ground_truth(group, ex.target);
            groups.push_back(std::move(group));
        }
        dump_rollouts(groups, dump_path);
    }
    std::printf("probe (%zu contexts, G=%d): HR@1 %.4f HR@G %.4f unique %.2f\n", probes.size(),
                c.group_size, row.hr1, row.hrG, row.mean_unique);
    return 0;
}

struct AblationVariant {
    std::string name;
    bool align = true;
    RewardKind reward = RewardKind::Uncertainty;
    double alpha_min = 1.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
};

int cmd_ablation(const RunConfig& c) {
    const auto catalog = load_catalog_ptr(c);
    const SplitDataset splits = load_jsonl(c.dataset_stem);

    Policy policy = make_policy(c, catalog);
    const SftResult sft = run_sft(policy, splits, c.sft_config());
    std::printf("ablation sft: best valid HR@10 %.4f\n", sft.best_hr10);
    const std::vector<double> sft_params = policy.params().flatten();

    // Uniform weighting (alpha_min = 1) disables the difficulty mechanism;
    // gamma = 0 disables confidence alignment. Variant (c) turns difficulty
    // back on, (d) is the full configuration.
    const std::vector<AblationVariant> variants = {
        {"a_sft", false, RewardKind::Uncertainty, 1.0, 0.0, 0.0},
        {"b1_binary", true, RewardKind::Binary, 1.0, 0.0, 0.0},
        {"b2_rank", true, RewardKind::Rank, 1.0, 0.0, 0.0},
        {"b3_uncertainty", true, RewardKind::Uncertainty, 1.0, 0.0, 0.0},
        {"c_difficulty", true, RewardKind::Uncertainty, c.alpha_min, 0.0, 0.0},
        {"d_full", true, RewardKind::Uncertainty, c.alpha_min, c.gamma1, c.gamma2},
    };

    std::ofstream csv(report_path(c, "ablation.csv"));
    csv << "variant,aligned,reward,alpha_min,gamma1,gamma2,hr1,hr5,hr10,ndcg5,ndcg10\n";
    for (const auto& v : variants) {
        policy.params().unflatten(sft_params);
        if (v.align) {
            AlignConfig ac = c.align_config();
            ac.reward = v.reward;
            ac.alpha_min = v.alpha_min;
            ac.gamma1 = v.gamma1;
            ac.gamma2 = v.gamma2;
            run_alignment(policy, splits, ac, report_path(c, "dynamics_" + v.name + ".csv"));
        }
        const MetricsReport m = evaluate(policy, splits.test, c.eval_beam);
        char line[512];
        std::snprintf(line, sizeof(line), "%s,%d,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                      v.name.c_str(), v.align ? 1 : 0, to_string(v.reward).c_str(), v.alpha_min,
                      v.gamma1, v.gamma2, m.hr1, m.hr5, m.hr10, m.ndcg5, m.ndcg10);
        csv << line << '\n';
        std::printf("ablation %-15s HR@10 %.4f NDCG@10 %.4f\n", v.name.c_str(), m.hr10, m.ndcg10);
    }
    std::printf("ablation table -> %s\n", report_path(c, "ablation.csv").c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic-ID generative recommender with uncertainty-aware alignment"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides overrides;
    std::string checkpoint;
    std::string dynamics_csv;
    std::string checkpoint_out;
    std::string dump_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Run config JSON")->required();
        cmd->add_option("--seed", overrides.seed, "Override config seed");
        cmd->add_option("--alpha-min", overrides.alpha_min, "Override difficulty-weight floor");
        cmd->add_option("--gamma1", overrides.gamma1, "Override partial-negative pair weight");
        cmd->add_option("--gamma2", overrides.gamma2, "Override wrong-negative pair weight");
        cmd->add_option("--clip-eps", overrides.clip_eps, "Override surrogate clip width");
        cmd->add_option("--lambda", overrides.lambda_hybrid, "Override hybrid score weight");
        return cmd;
    };

    auto* quantize = add_common(app.add_subcommand("quantize", "Build the SID catalog"));
    auto* gen_data = add_common(app.add_subcommand("gen-data", "Generate and split interactions"));
    auto* sft = add_common(app.add_subcommand("sft", "Supervised fine-tuning stage"));
    auto* align = add_common(app.add_subcommand("align", "Uncertainty-aware alignment stage"));
    align->add_option("--dynamics-csv", dynamics_csv, "Dynamics CSV path");
    align->add_option("--checkpoint-out", checkpoint_out, "Aligned checkpoint path");
    auto* eval_cmd = add_common(app.add_subcommand("eval", "Ranking metrics on the test split"));
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
    auto* risk = add_common(app.add_subcommand("risk", "Rejection and truncation curves"));
    risk->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
    auto* dynamics = add_common(app.add_subcommand("dynamics", "Probe-set rollout diagnostics"));
    dynamics->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
    dynamics->add_option("--dump-rollouts", dump_path, "Write probe rollouts as JSONL");
    auto* ablation = add_common(app.add_subcommand("ablation", "Reward/weighting ablation ladder"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        const RunConfig config = load_config(config_path, overrides);
        if (quantize->parsed()) return cmd_quantize(config);
        if (gen_data->parsed()) return cmd_gen_data(config);
        if (sft->parsed()) return cmd_sft(config);
        if (align->parsed()) return cmd_align(config, dynamics_csv, checkpoint_out);
        if (eval_cmd->parsed()) return cmd_eval(config, checkpoint);
        if (risk->parsed()) return cmd_risk(config, checkpoint);
        if (dynamics->parsed()) return cmd_dynamics(config, checkpoint, dump_path);
        if (ablation->parsed()) return cmd_ablation(config);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
