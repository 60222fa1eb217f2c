#pragma once

#include <cstdint>
#include <string>

#include "sidrec/train.hpp"

namespace sidrec {

// Everything a pipeline run needs; a run is reproducible from this struct
// alone. The JSON config file must contain exactly these keys (missing or
// unknown keys raise ConfigError naming the key).
struct RunConfig {
    std::uint64_t seed = 7;

    // catalog
    int levels = 4;
    int codebook_size = 16;
    int n_items = 300;
    int embed_dim = 8;
    int n_clusters = 12;
    double cluster_noise = 0.15;
    double cluster_skew = 1.2;

    // data
    int n_users = 500;
    double mean_history = 14.0;
    double stickiness = 0.97;
    double repeat_prob = 0.35;

    // policy
    int d_model = 16;
    int hidden = 32;
    double init_sigma = 0.1;

    // sft
    double sft_learning_rate = 0.3;
    int sft_epochs = 40;
    int sft_batch_size = 32;
    int sft_eval_interval = 0;  // 0 = twice per epoch
    int patience = 3;

    // alignment
    int group_size = 16;
    double alpha_min = 0.0;
    double gamma1 = 1.0;
    double gamma2 = 0.5;
    double clip_eps = 0.2;
    double kl_beta = 0.0;
    double adv_eps = 1e-6;
    double align_learning_rate = 0.02;
    int align_epochs = 8;
    int align_batch_size = 16;
    int align_eval_interval = 30;
    std::string reward = "uncertainty";
    int probe_size = 128;

    // evaluation and risk
    int eval_beam = 10;
    double lambda_hybrid = 0.5;
    int risk_grid = 11;

    // artifact paths
    std::string catalog_path = "catalog.json";
    std::string dataset_stem = "dataset";
    std::string sft_checkpoint = "sft.ckpt";
    std::string align_checkpoint = "aligned.ckpt";
    std::string report_dir = ".";

    AlignConfig align_config() const;
    SftConfig sft_config() const;
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);

}  // namespace sidrec
