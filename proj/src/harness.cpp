#include "dpin/harness.hpp"

#include <algorithm>
#include <charconv>

#include "dpin/grad_check.hpp"

namespace dpin::harness {

std::string format_real(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

std::string metrics_csv_header() {
    return "run_id,seed,variant,epoch,R_ad,R_fee,mean_episode_reward,loss";
}

std::string metrics_csv_line(const MetricsRow& row) {
    return row.run_id + "," + std::to_string(row.seed) + "," + row.variant + "," +
           std::to_string(row.epoch) + "," + format_real(row.r_ad) + "," +
           format_real(row.r_fee) + "," + format_real(row.mean_episode_reward) +
           "," + format_real(row.loss);
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = metrics_csv_header() + "\n";
    for (const MetricsRow& r : rows) out += metrics_csv_line(r) + "\n";
    return out;
}

const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> v = {
        "full", "no_cl", "no_ipau", "no_ipiu", "no_mcim",
        "drop_pulldown_leave", "drop_pulldown_leave_click"};
    return v;
}

model::AblationFlags variant_flags(const std::string& variant,
                                   model::AblationFlags base) {
    if (variant == "full") return base;
    if (variant == "no_cl") { base.no_cl = true; return base; }
    if (variant == "no_ipau") { base.no_ipau = true; return base; }
    if (variant == "no_ipiu") { base.no_ipiu = true; return base; }
    if (variant == "no_mcim") { base.no_mcim = true; return base; }
    if (variant == "drop_pulldown_leave") { base.drop_pulldown_leave = true; return base; }
    if (variant == "drop_pulldown_leave_click") {
        base.drop_pulldown_leave = true;
        base.drop_click = true;
        return base;
    }
    throw ConfigError("unknown ablation variant '" + variant + "'");
}

model::DpinModel build_model(const ExperimentConfig& cfg) {
    feat::EmbeddingTables tables;
    tables.item_vocab = cfg.sim.catalog_ads + cfg.sim.catalog_organics + 1;
    tables.k = cfg.sim.k;
    tables.n_users = cfg.sim.user_population;
    tables.n_contexts = cfg.sim.contexts;
    tables.dims = cfg.model.dims;
    return model::DpinModel(cfg.model, tables, cfg.sim.max_ads_per_page);
}

agent::TrainConfig train_config(const ExperimentConfig& cfg) {
    agent::TrainConfig tc;
    tc.hyper = cfg.training.hyper;
    tc.epochs = cfg.training.epochs;
    tc.hard_target_sync = cfg.training.target_update == "hard";
    tc.hard_sync_every = cfg.training.hard_sync_every;
    tc.eval_every = cfg.training.eval_every;
    return tc;
}

MetricsRow evaluate_policy(const nn::ParamSet& params, const ExperimentConfig& cfg,
                           const model::DpinModel& m, int n_episodes,
                           std::uint64_t seed) {
    const sim::Policy policy = agent::greedy_policy(params, m, cfg.sim);
    const sim::OfflineLog trace =
        sim::generate_offline_log(policy, n_episodes, cfg.sim, seed);
    MetricsRow row;
    row.seed = seed;
    row.variant = cfg.eval.ablation_name.empty() ? "full" : cfg.eval.ablation_name;
    row.run_id = row.variant + "-s" + std::to_string(seed);
    for (const sim::Transition& tr : trace.transitions) {
        row.r_ad += tr.r_ad;
        row.r_fee += tr.r_fee;
    }
    row.mean_episode_reward =
        n_episodes > 0 ? (row.r_ad + row.r_fee) / static_cast<double>(n_episodes)
                       : 0.0;
    return row;
}

std::vector<MetricsRow> run_ablation(const ExperimentConfig& base,
                                     const std::vector<std::uint64_t>& seeds) {
    base.validate();
    std::vector<MetricsRow> rows;
    for (const std::uint64_t seed : seeds) {
        ExperimentConfig cfg = base;
        cfg.sim.seed = seed;
        cfg.training.hyper.seed = seed;
        const sim::OfflineLog log =
            sim::generate_offline_log({}, cfg.sim.log_requests, cfg.sim, seed);
        for (const std::string& variant : ablation_variants()) {
            ExperimentConfig vcfg = cfg;
            vcfg.model.ablation = variant_flags(variant, base.model.ablation);
            const model::DpinModel m = build_model(vcfg);
            const agent::TrainConfig tc = train_config(vcfg);
            const agent::TrainResult result = agent::train(log, m, tc);
            MetricsRow row = evaluate_policy(result.params, vcfg, m,
                                             vcfg.eval.episodes, vcfg.eval.seed);
            row.seed = seed;
            row.variant = variant;
            row.run_id = variant + "-s" + std::to_string(seed);
            row.epoch = result.history.empty() ? 0 : result.history.back().epoch;
            row.loss = result.history.empty() ? 0.0 : result.history.back().mean_loss;
            rows.push_back(std::move(row));
        }
    }
    // Deterministic order: variant first (canonical order), then seed.
    const auto& variants = ablation_variants();
    auto variant_index = [&](const std::string& v) {
        return static_cast<int>(std::find(variants.begin(), variants.end(), v) -
                                variants.begin());
    };
    std::stable_sort(rows.begin(), rows.end(),
                     [&](const MetricsRow& a, const MetricsRow& b) {
                         const int ia = variant_index(a.variant);
                         const int ib = variant_index(b.variant);
                         if (ia != ib) return ia < ib;
                         return a.seed < b.seed;
                     });
    return rows;
}

GradCheckSummary gradcheck_q_value(const ExperimentConfig& cfg, int instances,
                                   double eps, std::uint64_t seed) {
    if (instances < 1) throw ConfigError("gradcheck: instances must be >= 1");
    cfg.validate();
    const model::DpinModel m = build_model(cfg);
    const int episodes = std::max(4, instances / 2);
    const sim::OfflineLog log =
        sim::generate_offline_log({}, episodes, cfg.sim, seed ^ 0x6C06ull);
    if (log.transitions.empty())
        throw ConsistencyError("gradcheck: exploratory log came back empty");

    // The check point damps the output layer so |Q| is small; a central
    // difference at eps=1e-6 then stays above double rounding noise even for
    // coordinates whose gradient nearly cancels (the softmax weight paths).
    const double kOutputDamp = 1e-3;
    const std::string last = ".l" + std::to_string(cfg.model.mlp3.size());

    GradCheckSummary summary;
    summary.instances = instances;
    for (int i = 0; i < instances; ++i) {
        const sim::Transition& tr =
            log.transitions[static_cast<std::size_t>(i) % log.transitions.size()];
        nn::ParamSet params = m.init_params(seed + static_cast<std::uint64_t>(i));
        for (auto& [name, w] : params.values)
            if (name == "qhead" + last + ".w" || name == "qhead" + last + ".b")
                for (std::size_t j = 0; j < w.size(); ++j) w[j] *= kOutputDamp;
        nn::ParamSet analytic = params.zeros_like();
        nn::Graph g(true);
        const nn::Graph::Ref q = m.build_q(g, tr.state, tr.action, params);
        g.backward(q);
        g.grads_into(analytic);
        const auto f = [&](const nn::ParamSet& p) {
            return m.q_value(tr.state, tr.action, p);
        };
        const nn::GradCheckReport rep = nn::grad_check(params, f, analytic, eps);
        summary.coords_checked += rep.coords_checked;
        if (!rep.analytic_finite)
            throw ConsistencyError("gradcheck: " + rep.failure);
        if (rep.max_rel_err > summary.max_rel_err) {
            summary.max_rel_err = rep.max_rel_err;
            summary.worst = rep.worst_param + "[" +
                            std::to_string(rep.worst_index) + "] (instance " +
                            std::to_string(i) + ")";
        }
    }
    return summary;
}

}  // namespace dpin::harness
