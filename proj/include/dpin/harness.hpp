#pragma once

#include <string>
#include <vector>

#include "dpin/agent.hpp"
#include "dpin/config.hpp"
#include "dpin/model.hpp"

namespace dpin::harness {

struct MetricsRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string variant = "full";
    int epoch = 0;
    double r_ad = 0.0;
    double r_fee = 0.0;
    double mean_episode_reward = 0.0;
    double loss = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);
std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string format_real(double x);  // shortest round-trip decimal

// Ablation variants in canonical order; "full" is the unablated model.
const std::vector<std::string>& ablation_variants();
// Flags for a variant, layered on top of the base config's flags.
model::AblationFlags variant_flags(const std::string& variant,
                                   model::AblationFlags base);

// Model wired to the experiment's catalog and page geometry.
model::DpinModel build_model(const ExperimentConfig& cfg);

agent::TrainConfig train_config(const ExperimentConfig& cfg);

// Runs n_episodes greedy episodes and sums the reward components.
MetricsRow evaluate_policy(const nn::ParamSet& params, const ExperimentConfig& cfg,
                           const model::DpinModel& m, int n_episodes,
                           std::uint64_t seed);

// Generates one log per seed and trains + evaluates every variant on it.
// Rows come back sorted by (variant order, seed).
std::vector<MetricsRow> run_ablation(const ExperimentConfig& base,
                                     const std::vector<std::uint64_t>& seeds);

struct GradCheckSummary {
    double max_rel_err = 0.0;
    std::string worst;
    std::size_t coords_checked = 0;
    int instances = 0;
};

// End-to-end finite-difference check of dQ/dtheta over seeded (params,
// state, action) instances drawn from an exploratory log.
GradCheckSummary gradcheck_q_value(const ExperimentConfig& cfg, int instances,
                                   double eps, std::uint64_t seed);

}  // namespace dpin::harness
