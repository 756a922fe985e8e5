#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpin/agent.hpp"
#include "dpin/checkpoint.hpp"
#include "dpin/config.hpp"
#include "dpin/harness.hpp"
#include "dpin/kernels.hpp"
#include "dpin/log_io.hpp"
#include "dpin/oracle.hpp"

namespace fs = std::filesystem;
using dpin::harness::ExperimentConfig;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config file");
    cmd->add_option("--set", opts.overrides,
                    "override a config value, e.g. --set sim.seed=3");
    cmd->add_option("--out", opts.out_dir,
                    "output directory (overrides [eval].output_dir and "
                    "DPIN_OUTPUT_DIR)");
}

ExperimentConfig load_config(const CommonOpts& opts) {
    ExperimentConfig cfg = opts.config_path.empty()
                               ? ExperimentConfig{}
                               : ExperimentConfig::from_file(opts.config_path);
    for (const std::string& kv : opts.overrides) cfg.apply_override(kv);
    if (const char* env = std::getenv("DPIN_OUTPUT_DIR"); env && *env)
        cfg.eval.output_dir = env;
    if (!opts.out_dir.empty()) cfg.eval.output_dir = opts.out_dir;
    cfg.validate();
    return cfg;
}

fs::path ensure_out_dir(const ExperimentConfig& cfg) {
    fs::path dir(cfg.eval.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw dpin::IoError("cannot create output dir '" + dir.string() + "'");
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dpin::IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw dpin::IoError("failed writing '" + path.string() + "'");
}

void check_log_matches(const ExperimentConfig& cfg, const dpin::sim::OfflineLog& log) {
    ExperimentConfig log_side = cfg;
    log_side.sim = log.cfg;
    if (log_side.serialize() != cfg.serialize())
        throw dpin::ConfigError(
            "the [sim] section does not match the log header; train on the "
            "config that generated the log");
}

int cmd_generate_log(const CommonOpts& opts, int requests) {
    const ExperimentConfig cfg = load_config(opts);
    const int n = requests > 0 ? requests : cfg.sim.log_requests;
    const dpin::sim::OfflineLog log =
        dpin::sim::generate_offline_log({}, n, cfg.sim, cfg.sim.seed);
    const fs::path dir = ensure_out_dir(cfg);
    const fs::path path = dir / "offline_log.jsonl";
    dpin::logio::write_offline_log(log, path.string());
    std::cout << "offline_log: path=" << path.string()
              << " transitions=" << log.transitions.size()
              << " mean_order=" << dpin::harness::format_real(log.stats.mean_order)
              << " mean_click=" << dpin::harness::format_real(log.stats.mean_click)
              << " mean_pulldown="
              << dpin::harness::format_real(log.stats.mean_pulldown)
              << " mean_leave=" << dpin::harness::format_real(log.stats.mean_leave)
              << "\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, std::string log_path) {
    const ExperimentConfig cfg = load_config(opts);
    const fs::path dir = ensure_out_dir(cfg);
    if (log_path.empty()) log_path = (dir / "offline_log.jsonl").string();
    const dpin::sim::OfflineLog log = dpin::logio::read_offline_log(log_path);
    check_log_matches(cfg, log);

    const dpin::model::DpinModel m = dpin::harness::build_model(cfg);
    const dpin::agent::TrainConfig tc = dpin::harness::train_config(cfg);
    const dpin::agent::EvalCallback eval =
        [&](const dpin::nn::ParamSet& params, int) {
            const dpin::harness::MetricsRow row = dpin::harness::evaluate_policy(
                params, cfg, m, cfg.eval.episodes, cfg.eval.seed);
            return std::array<double, 3>{row.r_ad, row.r_fee,
                                         row.mean_episode_reward};
        };
    const dpin::agent::TrainResult result = dpin::agent::train(log, m, tc, eval);

    const std::string variant =
        cfg.eval.ablation_name.empty() ? "full" : cfg.eval.ablation_name;
    std::vector<dpin::harness::MetricsRow> rows;
    for (const dpin::agent::EpochRecord& rec : result.history) {
        if (!rec.evaluated) continue;
        dpin::harness::MetricsRow row;
        row.variant = variant;
        row.seed = cfg.training.hyper.seed;
        row.run_id = variant + "-s" + std::to_string(row.seed);
        row.epoch = rec.epoch;
        row.r_ad = rec.r_ad;
        row.r_fee = rec.r_fee;
        row.mean_episode_reward = rec.mean_episode_reward;
        row.loss = rec.mean_loss;
        rows.push_back(std::move(row));
    }
    write_text(dir / "metrics.csv", dpin::harness::metrics_csv(rows));
    dpin::ckpt::save(result.params, cfg.hash(), (dir / "checkpoint.bin").string());
    std::cout << "train: epochs=" << result.history.size() << " final_loss="
              << dpin::harness::format_real(result.history.back().mean_loss)
              << " checkpoint=" << (dir / "checkpoint.bin").string() << "\n";
    return 0;
}

int cmd_evaluate(const CommonOpts& opts, std::string ckpt_path) {
    const ExperimentConfig cfg = load_config(opts);
    const fs::path dir = ensure_out_dir(cfg);
    if (ckpt_path.empty()) ckpt_path = (dir / "checkpoint.bin").string();
    const dpin::nn::ParamSet params = dpin::ckpt::load(ckpt_path, cfg.hash());
    const dpin::model::DpinModel m = dpin::harness::build_model(cfg);
    dpin::harness::MetricsRow row = dpin::harness::evaluate_policy(
        params, cfg, m, cfg.eval.episodes, cfg.eval.seed);
    const std::string csv = dpin::harness::metrics_csv({row});
    write_text(dir / "eval.csv", csv);
    std::cout << csv;
    return 0;
}

int cmd_ablate(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    const fs::path dir = ensure_out_dir(cfg);
    const std::vector<dpin::harness::MetricsRow> rows =
        dpin::harness::run_ablation(cfg, cfg.eval.ablation_seeds);
    write_text(dir / "ablation.csv", dpin::harness::metrics_csv(rows));
    std::cout << "ablation: rows=" << rows.size() << " file="
              << (dir / "ablation.csv").string() << "\n";
    return 0;
}

int cmd_gradcheck(const CommonOpts& opts, int instances, double eps) {
    const ExperimentConfig cfg = load_config(opts);
    const dpin::harness::GradCheckSummary s =
        dpin::harness::gradcheck_q_value(cfg, instances, eps, 20260101ull);
    std::cout << "gradcheck: max_rel_err=" << dpin::harness::format_real(s.max_rel_err)
              << " coords=" << s.coords_checked << " instances=" << s.instances;
    if (!s.worst.empty()) std::cout << " worst=" << s.worst;
    std::cout << "\n";
    return s.max_rel_err <= 1e-4 ? 0 : 1;
}

int cmd_oracle(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    const fs::path dir = ensure_out_dir(cfg);
    const dpin::oracle::OracleResult res =
        dpin::oracle::value_iteration_oracle(cfg.sim, cfg.training.hyper.gamma);
    std::string csv = "user,page,ads_used,action_pattern,q,is_best\n";
    for (const dpin::oracle::OracleState& st : res.states) {
        for (const dpin::oracle::OracleEntry& e : st.entries) {
            csv += std::to_string(st.user) + "," + std::to_string(st.page) + "," +
                   std::to_string(st.ads_used) + "," +
                   std::to_string(e.action.pattern()) + "," +
                   dpin::harness::format_real(e.q) + "," +
                   (e.action == st.best ? "1" : "0") + "\n";
        }
    }
    write_text(dir / "oracle_q.csv", csv);
    std::cout << "oracle: states=" << res.states.size() << " extra_backup_delta="
              << dpin::harness::format_real(res.extra_backup_delta) << " file="
              << (dir / "oracle_q.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DPIN ads-allocation research bench"};
    app.require_subcommand(0, 1);

    CommonOpts gen_opts, train_opts, eval_opts, abl_opts, grad_opts, oracle_opts;
    int gen_requests = 0;
    std::string train_log, eval_ckpt;
    int grad_instances = 20;
    double grad_eps = 1e-6;

    CLI::App* gen = app.add_subcommand("generate-log",
                                       "run the exploratory policy and write the offline log");
    add_common(gen, gen_opts);
    gen->add_option("--requests", gen_requests,
                    "episode count (default: [sim].log_requests)");

    CLI::App* train = app.add_subcommand("train", "offline DQN training on a log");
    add_common(train, train_opts);
    train->add_option("--log", train_log, "offline log path (default: <out>/offline_log.jsonl)");

    CLI::App* eval = app.add_subcommand("evaluate", "greedy evaluation of a checkpoint");
    add_common(eval, eval_opts);
    eval->add_option("--checkpoint", eval_ckpt,
                     "checkpoint path (default: <out>/checkpoint.bin)");

    CLI::App* abl = app.add_subcommand("ablate", "train and evaluate every ablation variant");
    add_common(abl, abl_opts);

    CLI::App* grad = app.add_subcommand("gradcheck",
                                        "finite-difference check of the Q gradient");
    add_common(grad, grad_opts);
    grad->add_option("--instances", grad_instances, "seeded instances to check");
    grad->add_option("--eps", grad_eps, "central-difference step");

    CLI::App* orc = app.add_subcommand("oracle", "exact Q* by value iteration on a tiny MDP");
    add_common(orc, oracle_opts);

    if (argc <= 1) {
        std::cout << app.help();
        return 2;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_generate_log(gen_opts, gen_requests);
        if (train->parsed()) return cmd_train(train_opts, train_log);
        if (eval->parsed()) return cmd_evaluate(eval_opts, eval_ckpt);
        if (abl->parsed()) return cmd_ablate(abl_opts);
        if (grad->parsed()) return cmd_gradcheck(grad_opts, grad_instances, grad_eps);
        if (orc->parsed()) return cmd_oracle(oracle_opts);
        std::cout << app.help();
        return 2;
    } catch (const dpin::ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
    } catch (const dpin::IoError& e) {
        std::cerr << "error: io: " << e.what() << "\n";
    } catch (const dpin::DataError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
    } catch (const dpin::ConsistencyError& e) {
        std::cerr << "error: consistency: " << e.what() << "\n";
    } catch (const dpin::FeasibilityError& e) {
        std::cerr << "error: feasibility: " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
    }
    return 1;
}
