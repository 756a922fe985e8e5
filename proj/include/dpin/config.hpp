#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpin/model.hpp"
#include "dpin/sim.hpp"
#include "dpin/tensor.hpp"

namespace dpin::harness {

struct TrainSection {
    nn::TrainingHyper hyper;
    int epochs = 5;
    std::string target_update = "soft";  // "soft" (Polyak) or "hard"
    int hard_sync_every = 500;
    int eval_every = 0;  // 0 = evaluate after the final epoch only
};

struct EvalSection {
    int episodes = 100;
    std::uint64_t seed = 123;
    std::string output_dir = "out";
    std::string ablation_name;  // label stamped on single train/evaluate runs
    std::vector<std::uint64_t> ablation_seeds = {1, 2, 3, 4, 5};
};

// Structured-text config with sections [sim], [model], [training], [eval].
// Unknown sections or keys are rejected; parse(serialize(x)) == x.
struct ExperimentConfig {
    sim::SimConfig sim;
    model::DpinConfig model;
    TrainSection training;
    EvalSection eval;

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_string(const std::string& text);
    void apply_override(const std::string& key_eq_value);  // "sim.seed=3"
    std::string serialize() const;
    std::uint64_t hash() const;  // FNV-1a over the canonical serialization
    void validate() const;
};

}  // namespace dpin::harness
