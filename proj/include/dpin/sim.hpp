#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dpin/features.hpp"
#include "dpin/rng.hpp"

namespace dpin::sim {

struct SimConfig {
    int k = 5;                  // slots per page
    int max_pages = 8;          // hard episode cap
    int max_ads_per_page = 2;
    int user_population = 32;
    int catalog_ads = 60;
    int catalog_organics = 120;
    int candidate_ads = 18;      // per request
    int candidate_organics = 40; // per request
    int contexts = 4;
    double interaction_strength = 0.25;
    double ad_fatigue = 0.8;
    double pulldown_base = 0.8;
    double ad_pulldown_penalty = 0.5;
    double affinity_bias = -3.0;
    double affinity_spread = 0.8;
    double bid_min = 0.5, bid_max = 1.5;
    double price_min = 10.0, price_max = 50.0;
    double fee_min = 0.02, fee_max = 0.08;
    double order_rate_min = 0.25, order_rate_max = 0.6;
    int history_window = 12;   // completed episodes of history kept per user
    int warmup_requests = 0;   // unlogged episodes run before recording
    int log_requests = 500;    // default episode count for generate-log
    std::uint64_t seed = 1;

    void validate() const;
};

struct Catalog {
    std::vector<feat::Item> ads;
    std::vector<feat::Item> organics;

    static Catalog build(const SimConfig& cfg);
    int vocab() const {
        return static_cast<int>(ads.size() + organics.size());
    }
};

// Deterministic per-(user, item) preference, centered on zero.
double affinity(const SimConfig& cfg, int user_id, int item_id);
// affinity_bias + affinity(); the self term of the click logit.
double base_affinity(const SimConfig& cfg, int user_id, int item_id);
double order_rate(const SimConfig& cfg, int item_id);

// Exact per-slot click probabilities for an arrangement.
std::vector<double> click_probs(const feat::PageRecord& arrangement, int user_id,
                                const SimConfig& cfg);
// Probability the user pulls down to the next page after this arrangement.
double continue_prob(const feat::PageRecord& arrangement, const SimConfig& cfg);

struct UserOutcome {
    std::vector<std::uint8_t> clicked;  // per slot
    std::vector<std::uint8_t> ordered;  // per slot; implies clicked
    bool continues = false;             // pull-down
    bool leaves = false;
};

UserOutcome user_response(const feat::PageRecord& arrangement, int user_id,
                          const SimConfig& cfg, Rng& rng);

struct StepOutcome {
    double r_ad = 0.0;
    double r_fee = 0.0;
    std::vector<feat::PageRecord> feedback;  // pages appended to histories
    feat::State next_state;
    bool done = false;
};

// All feasible slot assignments in ascending bit-pattern order; empty when
// the remaining candidates cannot fill a page (episode-end signal).
std::vector<feat::Action> feasible_actions(const feat::State& s, const SimConfig& cfg);

// Deterministic state update for an already-drawn user outcome: rewards,
// feedback pages, item removal, termination. step() draws the outcome and
// applies it.
StepOutcome apply_outcome(const feat::State& s, const feat::Action& a,
                          const UserOutcome& resp, const SimConfig& cfg);

StepOutcome step(const feat::State& s, const feat::Action& a, const SimConfig& cfg,
                 Rng& rng);

struct Transition {
    feat::State state;
    feat::Action action;
    double r_ad = 0.0;
    double r_fee = 0.0;
    feat::State next_state;
    bool done = false;
    int episode_id = 0;
    int t = 0;
};

struct SeqStats {
    double mean_order = 0.0;
    double mean_click = 0.0;
    double mean_pulldown = 0.0;
    double mean_leave = 0.0;
    std::int64_t states_seen = 0;
};

struct OfflineLog {
    std::vector<Transition> transitions;
    SeqStats stats;
    SimConfig cfg;
};

// Chooses an action given the state and its feasible actions.
using Policy =
    std::function<feat::Action(const feat::State&, std::span<const feat::Action>, Rng&)>;

// Runs `n_requests` recorded episodes (after cfg.warmup_requests unrecorded
// ones) with persistent per-user histories. A null policy means the uniform
// exploratory policy. Deterministic in (cfg, seed).
OfflineLog generate_offline_log(const Policy& policy, int n_requests,
                                const SimConfig& cfg, std::uint64_t seed);

}  // namespace dpin::sim
