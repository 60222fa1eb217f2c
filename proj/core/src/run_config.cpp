#include "sidrec/run_config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "sidrec/errors.hpp"

namespace sidrec {

using json = nlohmann::json;

AlignConfig RunConfig::align_config() const {
    AlignConfig c;
    c.group_size = group_size;
    c.alpha_min = alpha_min;
    c.gamma1 = gamma1;
    c.gamma2 = gamma2;
    c.clip_eps = clip_eps;
    c.kl_beta = kl_beta;
    c.learning_rate = align_learning_rate;
    c.epochs = align_epochs;
    c.seed = seed;
    c.adv_eps = adv_eps;
    c.reward = reward_kind_from_string(reward);
    c.batch_size = align_batch_size;
    c.eval_interval = align_eval_interval;
    c.probe_size = probe_size;
    return c;
}

SftConfig RunConfig::sft_config() const {
    SftConfig c;
    c.learning_rate = sft_learning_rate;
    c.epochs = sft_epochs;
    c.batch_size = sft_batch_size;
    c.eval_interval = sft_eval_interval;
    c.patience = patience;
    c.seed = seed;
    return c;
}

namespace {

class Reader {
  public:
    explicit Reader(const json& j) : j_(j) {}

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(std::string("config: missing key '") + key + "'");
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("config: bad value for key '") + key + "'");
        }
    }

    void check_unknown() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError("config: unknown key '" + key + "'");
            }
        }
    }

  private:
    const json& j_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_run_config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }

    RunConfig c;
    Reader r(j);
    r.get("seed", c.seed);
    r.get("levels", c.levels);
    r.get("codebook_size", c.codebook_size);
    r.get("n_items", c.n_items);
    r.get("embed_dim", c.embed_dim);
    r.get("n_clusters", c.n_clusters);
    r.get("cluster_noise", c.cluster_noise);
    r.get("cluster_skew", c.cluster_skew);
    r.get("n_users", c.n_users);
    r.get("mean_history", c.mean_history);
    r.get("stickiness", c.stickiness);
    r.get("repeat_prob", c.repeat_prob);
    r.get("d_model", c.d_model);
    r.get("hidden", c.hidden);
    r.get("init_sigma", c.init_sigma);
    r.get("sft_learning_rate", c.sft_learning_rate);
    r.get("sft_epochs", c.sft_epochs);
    r.get("sft_batch_size", c.sft_batch_size);
    r.get("sft_eval_interval", c.sft_eval_interval);
    r.get("patience", c.patience);
    r.get("group_size", c.group_size);
    r.get("alpha_min", c.alpha_min);
    r.get("gamma1", c.gamma1);
    r.get("gamma2", c.gamma2);
    r.get("clip_eps", c.clip_eps);
    r.get("kl_beta", c.kl_beta);
    r.get("adv_eps", c.adv_eps);
    r.get("align_learning_rate", c.align_learning_rate);
    r.get("align_epochs", c.align_epochs);
    r.get("align_batch_size", c.align_batch_size);
    r.get("align_eval_interval", c.align_eval_interval);
    r.get("reward", c.reward);
    r.get("probe_size", c.probe_size);
    r.get("eval_beam", c.eval_beam);
    r.get("lambda_hybrid", c.lambda_hybrid);
    r.get("risk_grid", c.risk_grid);
    r.get("catalog_path", c.catalog_path);
    r.get("dataset_stem", c.dataset_stem);
    r.get("sft_checkpoint", c.sft_checkpoint);
    r.get("align_checkpoint", c.align_checkpoint);
    r.get("report_dir", c.report_dir);
    r.check_unknown();

    if (c.alpha_min < 0.0 || c.alpha_min > 1.0) {
        throw ConfigError("config: alpha_min must lie in [0, 1]");
    }
    reward_kind_from_string(c.reward);  // validates
    return c;
}

void save_run_config(const RunConfig& c, const std::string& path) {
    json j;
    j["seed"] = c.seed;
    j["levels"] = c.levels;
    j["codebook_size"] = c.codebook_size;
    j["n_items"] = c.n_items;
    j["embed_dim"] = c.embed_dim;
    j["n_clusters"] = c.n_clusters;
    j["cluster_noise"] = c.cluster_noise;
    j["cluster_skew"] = c.cluster_skew;
    j["n_users"] = c.n_users;
    j["mean_history"] = c.mean_history;
    j["stickiness"] = c.stickiness;
    j["repeat_prob"] = c.repeat_prob;
    j["d_model"] = c.d_model;
    j["hidden"] = c.hidden;
    j["init_sigma"] = c.init_sigma;
    j["sft_learning_rate"] = c.sft_learning_rate;
    j["sft_epochs"] = c.sft_epochs;
    j["sft_batch_size"] = c.sft_batch_size;
    j["sft_eval_interval"] = c.sft_eval_interval;
    j["patience"] = c.patience;
    j["group_size"] = c.group_size;
    j["alpha_min"] = c.alpha_min;
    j["gamma1"] = c.gamma1;
    j["gamma2"] = c.gamma2;
    j["clip_eps"] = c.clip_eps;
    j["kl_beta"] = c.kl_beta;
    j["adv_eps"] = c.adv_eps;
    j["align_learning_rate"] = c.align_learning_rate;
    j["align_epochs"] = c.align_epochs;
    j["align_batch_size"] = c.align_batch_size;
    j["align_eval_interval"] = c.align_eval_interval;
    j["reward"] = c.reward;
    j["probe_size"] = c.probe_size;
    j["eval_beam"] = c.eval_beam;
    j["lambda_hybrid"] = c.lambda_hybrid;
    j["risk_grid"] = c.risk_grid;
    j["catalog_path"] = c.catalog_path;
    j["dataset_stem"] = c.dataset_stem;
    j["sft_checkpoint"] = c.sft_checkpoint;
    j["align_checkpoint"] = c.align_checkpoint;
    j["report_dir"] = c.report_dir;

    std::ofstream out(path);
    if (!out) throw IoError("save_run_config: cannot open " + path);
    out << j.dump(2) << '\n';
}

}  // namespace sidrec
