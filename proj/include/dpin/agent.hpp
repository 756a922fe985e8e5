#pragma once

#include <functional>
#include <optional>
#include <span>

#include "dpin/model.hpp"
#include "dpin/optimizer.hpp"
#include "dpin/sim.hpp"

namespace dpin::agent {

// Slowly updated copy of the online network; shape-identical at all times.
struct TargetNet {
    nn::ParamSet params;
};

// Argmax of Q over the feasible actions, ties broken by smallest bit
// pattern. nullopt when no action is feasible (terminal signal).
std::optional<feat::Action> greedy_action(const feat::State& s,
                                          const nn::ParamSet& params,
                                          const model::DpinModel& m,
                                          const sim::SimConfig& cfg);

sim::Policy greedy_policy(const nn::ParamSet& params, const model::DpinModel& m,
                          const sim::SimConfig& cfg);
sim::Policy epsilon_greedy_policy(const nn::ParamSet& params,
                                  const model::DpinModel& m,
                                  const sim::SimConfig& cfg, double epsilon);

struct TdResult {
    double loss = 0.0;
    nn::ParamSet grads;
};

// Mean squared TD error over the batch. The bootstrap term maxes the target
// network over the next state's feasible actions and is detached: gradients
// flow only through Q(s, a). Terminal transitions bootstrap zero.
TdResult td_loss(std::span<const sim::Transition> batch, const nn::ParamSet& online,
                 const TargetNet& target, double gamma, const model::DpinModel& m,
                 const sim::SimConfig& cfg);

void soft_update(TargetNet& target, const nn::ParamSet& online, double tau);

// Seeded uniform-without-replacement pass over the transitions; every index
// appears exactly once per epoch.
class ReplayView {
public:
    ReplayView(std::size_t n, std::uint64_t seed) : n_(n), rng_(Rng::splitmix(seed)) {}
    std::vector<std::size_t> epoch_indices();

private:
    std::size_t n_;
    Rng rng_;
};

struct TrainConfig {
    nn::TrainingHyper hyper;
    int epochs = 5;
    bool hard_target_sync = false;  // default is Polyak soft updates with tau
    int hard_sync_every = 500;
    int eval_every = 0;  // 0 = evaluate only after the final epoch
};

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    bool evaluated = false;
    double r_ad = 0.0, r_fee = 0.0, mean_episode_reward = 0.0;
};

struct TrainResult {
    nn::ParamSet params;
    std::vector<EpochRecord> history;
};

// r_ad, r_fee, mean episode reward for the parameters after `epoch`.
using EvalCallback = std::function<std::array<double, 3>(const nn::ParamSet&, int)>;

TrainResult train(const sim::OfflineLog& log, const model::DpinModel& m,
                  const TrainConfig& tc, const EvalCallback& eval = {});

}  // namespace dpin::agent
