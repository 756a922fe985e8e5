#pragma once

#include <vector>

#include "dpin/sim.hpp"

namespace dpin::oracle {

// Exact expected one-page reward: enumerates every user-response outcome
// (per-slot none/click/click+order) with its probability.
double expected_reward(const feat::PageRecord& arrangement, int user_id,
                       const sim::SimConfig& cfg);

struct OracleEntry {
    feat::Action action;
    double q = 0.0;
};

struct OracleState {
    int user = 0;
    int page = 0;
    int ads_used = 0;
    int orgs_used = 0;
    std::vector<OracleEntry> entries;  // feasible actions, ascending pattern
    double v = 0.0;
    feat::Action best;  // argmax, smallest-pattern tie-break
};

struct OracleResult {
    std::vector<OracleState> states;
    // Sup-norm change of one extra Bellman backup applied after convergence.
    double extra_backup_delta = 0.0;

    const OracleState* find(int user, int page, int ads_used) const;
    double q_of(int user, int page, int ads_used, const feat::Action& a) const;
};

// Exact Q* for enumerable configs. Requires fixed candidate lists
// (candidate_ads == catalog_ads and candidate_organics == catalog_organics)
// and refuses state spaces above 10^4 states, reporting the count.
OracleResult value_iteration_oracle(const sim::SimConfig& cfg, double gamma);

}  // namespace dpin::oracle
