#include "dpin/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <numeric>

namespace dpin::sim {

namespace {

double hash01(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t x = Rng::splitmix(a ^ Rng::splitmix(b ^ Rng::splitmix(c)));
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void SimConfig::validate() const {
    if (k < 1 || k > 16) throw ConfigError("sim: k must be in [1,16]");
    if (max_pages < 1) throw ConfigError("sim: max_pages must be >= 1");
    if (max_ads_per_page < 1 || max_ads_per_page > k)
        throw ConfigError("sim: max_ads_per_page must be in [1,k]");
    if (user_population < 1) throw ConfigError("sim: user_population must be >= 1");
    if (catalog_ads < 1 || catalog_organics < k)
        throw ConfigError("sim: catalog too small for one page");
    if (candidate_ads < 0 || candidate_ads > catalog_ads)
        throw ConfigError("sim: candidate_ads out of range");
    if (candidate_organics < k || candidate_organics > catalog_organics)
        throw ConfigError("sim: candidate_organics must cover at least one page");
    if (contexts < 1) throw ConfigError("sim: contexts must be >= 1");
    if (pulldown_base < 0 || pulldown_base > 1)
        throw ConfigError("sim: pulldown_base must be in [0,1]");
    if (ad_pulldown_penalty < 0 || ad_pulldown_penalty > 1)
        throw ConfigError("sim: ad_pulldown_penalty must be in [0,1]");
    if (bid_min < 0 || bid_min > bid_max) throw ConfigError("sim: bad bid range");
    if (price_min < 0 || price_min > price_max)
        throw ConfigError("sim: bad price range");
    if (fee_min < 0 || fee_max > 1 || fee_min > fee_max)
        throw ConfigError("sim: bad fee range");
    if (order_rate_min < 0 || order_rate_max > 1 || order_rate_min > order_rate_max)
        throw ConfigError("sim: bad order_rate range");
    if (history_window < 0) throw ConfigError("sim: history_window must be >= 0");
    if (warmup_requests < 0) throw ConfigError("sim: warmup_requests must be >= 0");
    if (log_requests < 1) throw ConfigError("sim: log_requests must be >= 1");
}

Catalog Catalog::build(const SimConfig& cfg) {
    cfg.validate();
    Rng rng(Rng::splitmix(cfg.seed ^ 0xCA7A106ull));
    Catalog cat;
    cat.ads.reserve(static_cast<std::size_t>(cfg.catalog_ads));
    for (int i = 0; i < cfg.catalog_ads; ++i) {
        feat::Item it;
        it.item_id = i;
        it.is_ad = true;
        it.bid = rng.uniform(cfg.bid_min, cfg.bid_max);
        it.price = rng.uniform(cfg.price_min, cfg.price_max);
        it.fee_rate = rng.uniform(cfg.fee_min, cfg.fee_max);
        it.category_id = i % 8;
        cat.ads.push_back(it);
    }
    cat.organics.reserve(static_cast<std::size_t>(cfg.catalog_organics));
    for (int i = 0; i < cfg.catalog_organics; ++i) {
        feat::Item it;
        it.item_id = cfg.catalog_ads + i;
        it.is_ad = false;
        it.price = rng.uniform(cfg.price_min, cfg.price_max);
        it.fee_rate = rng.uniform(cfg.fee_min, cfg.fee_max);
        it.category_id = i % 8;
        cat.organics.push_back(it);
    }
    return cat;
}

double affinity(const SimConfig& cfg, int user_id, int item_id) {
    return cfg.affinity_spread *
           (2.0 * hash01(cfg.seed, 0xAFF1ull + static_cast<std::uint64_t>(user_id),
                         static_cast<std::uint64_t>(item_id)) -
            1.0);
}

double base_affinity(const SimConfig& cfg, int user_id, int item_id) {
    return cfg.affinity_bias + affinity(cfg, user_id, item_id);
}

double order_rate(const SimConfig& cfg, int item_id) {
    return cfg.order_rate_min +
           (cfg.order_rate_max - cfg.order_rate_min) *
               hash01(cfg.seed, 0x02DE2ull, static_cast<std::uint64_t>(item_id));
}

std::vector<double> click_probs(const feat::PageRecord& arrangement, int user_id,
                                const SimConfig& cfg) {
    const int k = arrangement.k();
    std::vector<double> probs(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const feat::Item& item = arrangement.slots[static_cast<std::size_t>(i)].item;
        double logit = base_affinity(cfg, user_id, item.item_id);
        double neighborhood = 0.0;
        int adjacent_ads = 0;
        for (int j = std::max(0, i - 1); j <= std::min(k - 1, i + 1); ++j) {
            const feat::Item& other = arrangement.slots[static_cast<std::size_t>(j)].item;
            neighborhood += affinity(cfg, user_id, other.item_id);
            if (j != i && other.is_ad) ++adjacent_ads;
        }
        logit += cfg.interaction_strength * neighborhood;
        logit -= cfg.ad_fatigue * adjacent_ads;
        probs[static_cast<std::size_t>(i)] = logistic(logit);
    }
    return probs;
}

double continue_prob(const feat::PageRecord& arrangement, const SimConfig& cfg) {
    int n_ads = 0;
    for (const feat::PageSlot& slot : arrangement.slots)
        if (slot.item.is_ad) ++n_ads;
    const double share = static_cast<double>(n_ads) / arrangement.k();
    const double p = cfg.pulldown_base * (1.0 - cfg.ad_pulldown_penalty * share);
    return std::clamp(p, 0.0, 1.0);
}

UserOutcome user_response(const feat::PageRecord& arrangement, int user_id,
                          const SimConfig& cfg, Rng& rng) {
    const int k = arrangement.k();
    UserOutcome out;
    out.clicked.assign(static_cast<std::size_t>(k), 0);
    out.ordered.assign(static_cast<std::size_t>(k), 0);
    const std::vector<double> probs = click_probs(arrangement, user_id, cfg);
    for (int i = 0; i < k; ++i) {
        if (rng.bernoulli(probs[static_cast<std::size_t>(i)])) {
            out.clicked[static_cast<std::size_t>(i)] = 1;
            const feat::Item& item = arrangement.slots[static_cast<std::size_t>(i)].item;
            if (rng.bernoulli(order_rate(cfg, item.item_id)))
                out.ordered[static_cast<std::size_t>(i)] = 1;
        }
    }
    out.continues = rng.bernoulli(continue_prob(arrangement, cfg));
    out.leaves = !out.continues;
    return out;
}

std::vector<feat::Action> feasible_actions(const feat::State& s, const SimConfig& cfg) {
    if (s.terminal) throw FeasibilityError("feasible_actions: state is terminal");
    std::vector<feat::Action> out;
    const int k = cfg.k;
    const int max_ads =
        std::min<int>(cfg.max_ads_per_page, static_cast<int>(s.ads.size()));
    const int organics = static_cast<int>(s.organics.size());
    for (std::uint32_t pattern = 0; pattern < (1u << k); ++pattern) {
        const int pop = std::popcount(pattern);
        if (pop <= max_ads && k - pop <= organics)
            out.push_back(feat::Action::from_pattern(pattern, k));
    }
    return out;
}

StepOutcome apply_outcome(const feat::State& s, const feat::Action& a,
                          const UserOutcome& resp, const SimConfig& cfg) {
    if (a.k() != cfg.k)
        throw FeasibilityError("step: action has " + std::to_string(a.k()) +
                               " bits, page has " + std::to_string(cfg.k) + " slots");
    const feat::PageRecord arrangement = feat::arrange_target(s, a, cfg.max_ads_per_page);

    StepOutcome out;
    bool any_click = false, any_order = false;
    for (int i = 0; i < cfg.k; ++i) {
        const feat::Item& item = arrangement.slots[static_cast<std::size_t>(i)].item;
        if (resp.clicked[static_cast<std::size_t>(i)]) {
            any_click = true;
            if (item.is_ad) out.r_ad += item.bid;
        }
        if (resp.ordered[static_cast<std::size_t>(i)]) {
            any_order = true;
            out.r_fee += item.fee_rate * item.price;
        }
    }

    feat::State next = s;
    const int used_ads = a.popcount();
    next.ads.erase(next.ads.begin(), next.ads.begin() + used_ads);
    next.organics.erase(next.organics.begin(),
                        next.organics.begin() + (cfg.k - used_ads));
    next.page_index = s.page_index + 1;

    const bool capped = next.page_index >= cfg.max_pages;
    const bool starved = feasible_actions(next, cfg).empty();
    out.done = resp.leaves || capped || starved;

    auto filed = [&](feat::FeedbackKind kind) {
        feat::PageRecord page = arrangement;
        page.kind = kind;
        return page;
    };
    if (any_order) {
        next.hist_order.push_back(filed(feat::FeedbackKind::Order));
        out.feedback.push_back(next.hist_order.back());
    }
    if (any_click) {
        next.hist_click.push_back(filed(feat::FeedbackKind::Click));
        out.feedback.push_back(next.hist_click.back());
    }
    if (out.done) {
        next.hist_leave.push_back(filed(feat::FeedbackKind::Leave));
        out.feedback.push_back(next.hist_leave.back());
    } else {
        next.hist_pulldown.push_back(filed(feat::FeedbackKind::PullDown));
        out.feedback.push_back(next.hist_pulldown.back());
    }
    next.terminal = out.done;
    out.next_state = std::move(next);
    return out;
}

StepOutcome step(const feat::State& s, const feat::Action& a, const SimConfig& cfg,
                 Rng& rng) {
    const feat::PageRecord arrangement =
        feat::arrange_target(s, a, cfg.max_ads_per_page);
    const UserOutcome resp = user_response(arrangement, s.user_id, cfg, rng);
    return apply_outcome(s, a, resp, cfg);
}

namespace {

struct UserStore {
    // Completed-episode buckets (trimmed to cfg.history_window) plus the
    // episode currently in flight.
    struct Bucket {
        std::vector<feat::PageRecord> pages[4];
    };
    std::deque<Bucket> done;
    Bucket current;

    void append(const feat::PageRecord& page) {
        current.pages[static_cast<int>(page.kind)].push_back(page);
    }
    void finish_episode(int window) {
        done.push_back(std::move(current));
        current = Bucket{};
        while (static_cast<int>(done.size()) > window) done.pop_front();
    }
    std::vector<feat::PageRecord> assemble(feat::FeedbackKind kind) const {
        std::vector<feat::PageRecord> out;
        for (const Bucket& b : done) {
            const auto& pages = b.pages[static_cast<int>(kind)];
            out.insert(out.end(), pages.begin(), pages.end());
        }
        const auto& pages = current.pages[static_cast<int>(kind)];
        out.insert(out.end(), pages.begin(), pages.end());
        return out;
    }
};

std::vector<feat::Item> sample_ordered(const std::vector<feat::Item>& pool,
                                       int count, Rng& rng) {
    std::vector<int> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < count; ++i) {
        const std::size_t j =
            static_cast<std::size_t>(i) +
            static_cast<std::size_t>(rng.uniform_int(idx.size() - static_cast<std::size_t>(i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(count));
    std::sort(idx.begin(), idx.end());
    std::vector<feat::Item> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i : idx) out.push_back(pool[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace

OfflineLog generate_offline_log(const Policy& policy, int n_requests,
                                const SimConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (n_requests < 0) throw ConfigError("generate_offline_log: negative request count");
    const Catalog catalog = Catalog::build(cfg);
    Rng rng(Rng::splitmix(seed ^ 0x106EEDull));
    std::vector<UserStore> users(static_cast<std::size_t>(cfg.user_population));

    OfflineLog log;
    log.cfg = cfg;
    double sum_order = 0, sum_click = 0, sum_pull = 0, sum_leave = 0;
    std::int64_t n_states = 0;

    const int total = cfg.warmup_requests + n_requests;
    for (int req = 0; req < total; ++req) {
        const bool recorded = req >= cfg.warmup_requests;
        const int episode_id = req - cfg.warmup_requests;
        const int user_id = static_cast<int>(rng.uniform_int(
            static_cast<std::uint64_t>(cfg.user_population)));
        UserStore& store = users[static_cast<std::size_t>(user_id)];

        feat::State s;
        s.user_id = user_id;
        s.context_id = static_cast<int>(
            rng.uniform_int(static_cast<std::uint64_t>(cfg.contexts)));
        s.ads = sample_ordered(catalog.ads, cfg.candidate_ads, rng);
        s.organics = sample_ordered(catalog.organics, cfg.candidate_organics, rng);
        s.hist_order = store.assemble(feat::FeedbackKind::Order);
        s.hist_click = store.assemble(feat::FeedbackKind::Click);
        s.hist_pulldown = store.assemble(feat::FeedbackKind::PullDown);
        s.hist_leave = store.assemble(feat::FeedbackKind::Leave);

        for (int t = 0;; ++t) {
            const std::vector<feat::Action> acts = feasible_actions(s, cfg);
            if (acts.empty()) break;
            const feat::Action a =
                policy ? policy(s, acts, rng)
                       : acts[static_cast<std::size_t>(rng.uniform_int(acts.size()))];
            StepOutcome out = step(s, a, cfg, rng);
            feat::State next = std::move(out.next_state);
            if (recorded) {
                sum_order += static_cast<double>(s.hist_order.size());
                sum_click += static_cast<double>(s.hist_click.size());
                sum_pull += static_cast<double>(s.hist_pulldown.size());
                sum_leave += static_cast<double>(s.hist_leave.size());
                ++n_states;
                Transition tr;
                tr.state = std::move(s);
                tr.action = a;
                tr.r_ad = out.r_ad;
                tr.r_fee = out.r_fee;
                tr.next_state = next;
                tr.done = out.done;
                tr.episode_id = episode_id;
                tr.t = t;
                log.transitions.push_back(std::move(tr));
            }
            for (const feat::PageRecord& page : out.feedback) store.append(page);
            if (out.done) break;
            s = std::move(next);
        }
        store.finish_episode(cfg.history_window);
    }

    if (n_states > 0) {
        log.stats.mean_order = sum_order / static_cast<double>(n_states);
        log.stats.mean_click = sum_click / static_cast<double>(n_states);
        log.stats.mean_pulldown = sum_pull / static_cast<double>(n_states);
        log.stats.mean_leave = sum_leave / static_cast<double>(n_states);
        log.stats.states_seen = n_states;
    }
    return log;
}

}  // namespace dpin::sim
