#include "dpin/agent.hpp"

#include <algorithm>
#include <cmath>

namespace dpin::agent {

std::optional<feat::Action> greedy_action(const feat::State& s,
                                          const nn::ParamSet& params,
                                          const model::DpinModel& m,
                                          const sim::SimConfig& cfg) {
    const std::vector<feat::Action> acts = sim::feasible_actions(s, cfg);
    if (acts.empty()) return std::nullopt;
    const std::vector<double> qs = m.q_values(s, acts, params);
    std::size_t best = 0;
    std::uint32_t best_pattern = acts[0].pattern();
    for (std::size_t i = 1; i < acts.size(); ++i) {
        const std::uint32_t pat = acts[i].pattern();
        if (qs[i] > qs[best] || (qs[i] == qs[best] && pat < best_pattern)) {
            best = i;
            best_pattern = pat;
        }
    }
    return acts[best];
}

sim::Policy greedy_policy(const nn::ParamSet& params, const model::DpinModel& m,
                          const sim::SimConfig& cfg) {
    return [&params, &m, cfg](const feat::State& s,
                              std::span<const feat::Action> feasible, Rng&) {
        auto a = greedy_action(s, params, m, cfg);
        if (!a) throw FeasibilityError("greedy policy called on a starved state");
        (void)feasible;
        return *a;
    };
}

sim::Policy epsilon_greedy_policy(const nn::ParamSet& params,
                                  const model::DpinModel& m,
                                  const sim::SimConfig& cfg, double epsilon) {
    if (epsilon < 0 || epsilon > 1)
        throw ConfigError("epsilon must be in [0,1]");
    return [&params, &m, cfg, epsilon](const feat::State& s,
                                       std::span<const feat::Action> feasible,
                                       Rng& rng) {
        if (rng.uniform() < epsilon)
            return feasible[static_cast<std::size_t>(rng.uniform_int(feasible.size()))];
        auto a = greedy_action(s, params, m, cfg);
        if (!a) throw FeasibilityError("greedy policy called on a starved state");
        return *a;
    };
}

TdResult td_loss(std::span<const sim::Transition> batch, const nn::ParamSet& online,
                 const TargetNet& target, double gamma, const model::DpinModel& m,
                 const sim::SimConfig& cfg) {
    if (batch.empty()) throw ConfigError("td_loss: empty batch");
    if (gamma < 0 || gamma > 1) throw ConfigError("td_loss: gamma must be in [0,1]");
    TdResult out;
    out.grads = online.zeros_like();
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    nn::Graph g(true);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const sim::Transition& tr = batch[i];
        double bootstrap = 0.0;
        if (!tr.done) {
            const std::vector<feat::Action> acts =
                sim::feasible_actions(tr.next_state, cfg);
            if (!acts.empty()) {
                const std::vector<double> qs =
                    m.q_values(tr.next_state, acts, target.params);
                bootstrap = *std::max_element(qs.begin(), qs.end());
            }
        }
        const double y = tr.r_ad + tr.r_fee + gamma * bootstrap;
        g.reset();
        nn::Graph::Ref q;
        try {
            q = m.build_q(g, tr.state, tr.action, online);
        } catch (const FeasibilityError& e) {
            throw DataError("transition " + std::to_string(i) +
                            " (episode " + std::to_string(tr.episode_id) +
                            ", t=" + std::to_string(tr.t) +
                            ") stores an infeasible action: " + e.what());
        }
        const double delta = g.scalar(q) - y;
        out.loss += delta * delta * inv_n;
        g.backward(q, 2.0 * delta * inv_n);
        g.grads_into(out.grads);
    }
    return out;
}

void soft_update(TargetNet& target, const nn::ParamSet& online, double tau) {
    nn::polyak_update(target.params, online, tau);
}

std::vector<std::size_t> ReplayView::epoch_indices() {
    std::vector<std::size_t> idx(n_);
    for (std::size_t i = 0; i < n_; ++i) idx[i] = i;
    for (std::size_t i = n_; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng_.uniform_int(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

TrainResult train(const sim::OfflineLog& log, const model::DpinModel& m,
                  const TrainConfig& tc, const EvalCallback& eval) {
    if (log.transitions.empty()) throw ConfigError("train: empty offline log");
    // learning_rate 0 is allowed here and freezes the parameters (updates are
    // skipped); adam_step itself demands a positive rate.
    if (tc.hyper.learning_rate < 0) throw ConfigError("train: negative learning_rate");
    if (tc.hyper.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (tc.hyper.gamma < 0 || tc.hyper.gamma > 1)
        throw ConfigError("train: gamma must be in [0,1]");
    if (tc.hyper.tau < 0 || tc.hyper.tau > 1)
        throw ConfigError("train: tau must be in [0,1]");
    if (tc.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (tc.hard_target_sync && tc.hard_sync_every < 1)
        throw ConfigError("train: hard_sync_every must be >= 1");

    TrainResult result;
    result.params = m.init_params(tc.hyper.seed);
    TargetNet target{result.params};
    ReplayView replay(log.transitions.size(), tc.hyper.seed ^ 0x5EED5EEDull);

    std::vector<sim::Transition> batch;
    long step = 0;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const std::vector<std::size_t> order = replay.epoch_indices();
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(tc.hyper.batch_size)) {
            const std::size_t end = std::min(
                order.size(), start + static_cast<std::size_t>(tc.hyper.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i)
                batch.push_back(log.transitions[order[i]]);
            TdResult td = td_loss(batch, result.params, target, tc.hyper.gamma, m,
                                  log.cfg);
            if (tc.hyper.learning_rate > 0)
                nn::adam_step(result.params, td.grads, tc.hyper);
            ++step;
            if (tc.hard_target_sync) {
                if (step % tc.hard_sync_every == 0)
                    nn::copy_values(target.params, result.params);
            } else {
                soft_update(target, result.params, tc.hyper.tau);
            }
            loss_sum += td.loss * static_cast<double>(batch.size());
            seen += batch.size();
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = loss_sum / static_cast<double>(seen);
        const bool last = epoch + 1 == tc.epochs;
        if (eval && (last || (tc.eval_every > 0 && (epoch + 1) % tc.eval_every == 0))) {
            const auto metrics = eval(result.params, epoch);
            rec.evaluated = true;
            rec.r_ad = metrics[0];
            rec.r_fee = metrics[1];
            rec.mean_episode_reward = metrics[2];
        }
        result.history.push_back(rec);
    }
    return result;
}

}  // namespace dpin::agent
