#include "dpin/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace dpin::oracle {

namespace {

constexpr std::size_t kMaxStates = 10000;
constexpr double kConvergence = 1e-10;

// Per-slot outcomes: none, click without order, click with order.
double enumerate_outcomes(const feat::PageRecord& arrangement,
                          const std::vector<double>& click_p,
                          const sim::SimConfig& cfg, std::size_t slot,
                          double prob, double reward) {
    if (slot == arrangement.slots.size()) return prob * reward;
    const feat::Item& item = arrangement.slots[slot].item;
    const double pc = click_p[slot];
    const double ro = sim::order_rate(cfg, item.item_id);
    const double click_reward = item.is_ad ? item.bid : 0.0;
    const double order_reward = item.fee_rate * item.price;
    double total = 0.0;
    total += enumerate_outcomes(arrangement, click_p, cfg, slot + 1,
                                prob * (1.0 - pc), reward);
    total += enumerate_outcomes(arrangement, click_p, cfg, slot + 1,
                                prob * pc * (1.0 - ro), reward + click_reward);
    total += enumerate_outcomes(arrangement, click_p, cfg, slot + 1,
                                prob * pc * ro,
                                reward + click_reward + order_reward);
    return total;
}

struct Key {
    int user, page, ads_used;
    bool operator<(const Key& o) const {
        if (user != o.user) return user < o.user;
        if (page != o.page) return page < o.page;
        return ads_used < o.ads_used;
    }
};

}  // namespace

double expected_reward(const feat::PageRecord& arrangement, int user_id,
                       const sim::SimConfig& cfg) {
    const std::vector<double> pc = sim::click_probs(arrangement, user_id, cfg);
    return enumerate_outcomes(arrangement, pc, cfg, 0, 1.0, 0.0);
}

const OracleState* OracleResult::find(int user, int page, int ads_used) const {
    for (const OracleState& s : states)
        if (s.user == user && s.page == page && s.ads_used == ads_used) return &s;
    return nullptr;
}

double OracleResult::q_of(int user, int page, int ads_used,
                          const feat::Action& a) const {
    const OracleState* s = find(user, page, ads_used);
    if (!s) throw ConsistencyError("oracle: unknown state queried");
    for (const OracleEntry& e : s->entries)
        if (e.action == a) return e.q;
    throw ConsistencyError("oracle: action not feasible in queried state");
}

OracleResult value_iteration_oracle(const sim::SimConfig& cfg, double gamma) {
    cfg.validate();
    if (gamma < 0 || gamma > 1)
        throw ConfigError("oracle: gamma must be in [0,1]");
    if (cfg.candidate_ads != cfg.catalog_ads ||
        cfg.candidate_organics != cfg.catalog_organics)
        throw ConfigError(
            "oracle: candidates must equal the catalog (fixed lists) for the "
            "state space to be enumerable");

    const sim::Catalog catalog = sim::Catalog::build(cfg);

    // Candidate lists are the full catalog in order, so a state is determined
    // by (user, page, ads consumed); organics consumed = page*k - ads consumed.
    auto make_state = [&](int user, int page, int ads_used) {
        feat::State s;
        s.user_id = user;
        s.context_id = 0;
        s.page_index = page;
        s.ads.assign(catalog.ads.begin() + ads_used, catalog.ads.end());
        const int orgs_used = page * cfg.k - ads_used;
        s.organics.assign(catalog.organics.begin() + orgs_used,
                          catalog.organics.end());
        return s;
    };

    // Reachability sweep.
    std::map<Key, std::vector<feat::Action>> reachable;
    std::vector<Key> frontier;
    for (int u = 0; u < cfg.user_population; ++u) frontier.push_back({u, 0, 0});
    while (!frontier.empty()) {
        const Key key = frontier.back();
        frontier.pop_back();
        if (reachable.count(key)) continue;
        const feat::State s = make_state(key.user, key.page, key.ads_used);
        std::vector<feat::Action> acts = sim::feasible_actions(s, cfg);
        if (acts.empty()) continue;  // starved states are terminal, not stored
        reachable.emplace(key, acts);
        if (reachable.size() > kMaxStates)
            throw ConfigError("oracle: state space exceeds " +
                              std::to_string(kMaxStates) + " states");
        if (key.page + 1 < cfg.max_pages) {
            for (const feat::Action& a : reachable.at(key))
                frontier.push_back(
                    {key.user, key.page + 1, key.ads_used + a.popcount()});
        }
    }

    // Bellman backups to convergence. Transitions only move to higher page
    // indices, so this settles after max_pages sweeps; iterate to be sure.
    std::map<Key, double> value;
    std::map<Key, std::vector<double>> qvals;
    for (const auto& [key, acts] : reachable) {
        value[key] = 0.0;
        qvals[key].assign(acts.size(), 0.0);
    }

    auto backup = [&](bool write) {
        double delta = 0.0;
        for (const auto& [key, acts] : reachable) {
            const feat::State s = make_state(key.user, key.page, key.ads_used);
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < acts.size(); ++i) {
                const feat::PageRecord arr =
                    feat::arrange_target(s, acts[i], cfg.max_ads_per_page);
                double q = expected_reward(arr, key.user, cfg);
                if (key.page + 1 < cfg.max_pages) {
                    const Key next{key.user, key.page + 1,
                                   key.ads_used + acts[i].popcount()};
                    auto it = value.find(next);
                    if (it != value.end())
                        q += gamma * sim::continue_prob(arr, cfg) * it->second;
                }
                delta = std::max(delta, std::abs(q - qvals.at(key)[i]));
                if (write) qvals.at(key)[i] = q;
                best = std::max(best, q);
            }
            if (write) value[key] = best;
        }
        return delta;
    };

    double delta = backup(true);
    int sweeps = 1;
    while (delta >= kConvergence && sweeps < cfg.max_pages + 8) {
        delta = backup(true);
        ++sweeps;
    }

    OracleResult result;
    result.extra_backup_delta = backup(false);
    for (const auto& [key, acts] : reachable) {
        OracleState st;
        st.user = key.user;
        st.page = key.page;
        st.ads_used = key.ads_used;
        st.orgs_used = key.page * cfg.k - key.ads_used;
        const std::vector<double>& qs = qvals.at(key);
        std::size_t best = 0;
        for (std::size_t i = 0; i < acts.size(); ++i) {
            st.entries.push_back({acts[i], qs[i]});
            if (qs[i] > qs[best]) best = i;  // ascending pattern order already
        }
        st.v = qs[best];
        st.best = acts[best];
        result.states.push_back(std::move(st));
    }
    return result;
}

}  // namespace dpin::oracle
