#include "dpin/log_io.hpp"

#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace dpin::logio {

using nlohmann::json;

namespace {

json sim_config_json(const sim::SimConfig& c) {
    return json{{"k", c.k},
                {"max_pages", c.max_pages},
                {"max_ads_per_page", c.max_ads_per_page},
                {"user_population", c.user_population},
                {"catalog_ads", c.catalog_ads},
                {"catalog_organics", c.catalog_organics},
                {"candidate_ads", c.candidate_ads},
                {"candidate_organics", c.candidate_organics},
                {"contexts", c.contexts},
                {"interaction_strength", c.interaction_strength},
                {"ad_fatigue", c.ad_fatigue},
                {"pulldown_base", c.pulldown_base},
                {"ad_pulldown_penalty", c.ad_pulldown_penalty},
                {"affinity_bias", c.affinity_bias},
                {"affinity_spread", c.affinity_spread},
                {"bid_min", c.bid_min},
                {"bid_max", c.bid_max},
                {"price_min", c.price_min},
                {"price_max", c.price_max},
                {"fee_min", c.fee_min},
                {"fee_max", c.fee_max},
                {"order_rate_min", c.order_rate_min},
                {"order_rate_max", c.order_rate_max},
                {"history_window", c.history_window},
                {"warmup_requests", c.warmup_requests},
                {"log_requests", c.log_requests},
                {"seed", c.seed}};
}

sim::SimConfig sim_config_from_json(const json& j) {
    sim::SimConfig c;
    c.k = j.at("k");
    c.max_pages = j.at("max_pages");
    c.max_ads_per_page = j.at("max_ads_per_page");
    c.user_population = j.at("user_population");
    c.catalog_ads = j.at("catalog_ads");
    c.catalog_organics = j.at("catalog_organics");
    c.candidate_ads = j.at("candidate_ads");
    c.candidate_organics = j.at("candidate_organics");
    c.contexts = j.at("contexts");
    c.interaction_strength = j.at("interaction_strength");
    c.ad_fatigue = j.at("ad_fatigue");
    c.pulldown_base = j.at("pulldown_base");
    c.ad_pulldown_penalty = j.at("ad_pulldown_penalty");
    c.affinity_bias = j.at("affinity_bias");
    c.affinity_spread = j.at("affinity_spread");
    c.bid_min = j.at("bid_min");
    c.bid_max = j.at("bid_max");
    c.price_min = j.at("price_min");
    c.price_max = j.at("price_max");
    c.fee_min = j.at("fee_min");
    c.fee_max = j.at("fee_max");
    c.order_rate_min = j.at("order_rate_min");
    c.order_rate_max = j.at("order_rate_max");
    c.history_window = j.at("history_window");
    c.warmup_requests = j.at("warmup_requests");
    c.log_requests = j.at("log_requests");
    c.seed = j.at("seed");
    return c;
}

json page_json(const feat::PageRecord& p) {
    json ids = json::array();
    for (const feat::PageSlot& s : p.slots) ids.push_back(s.item.item_id);
    return json{{"k", feat::feedback_name(p.kind)}, {"i", std::move(ids)}};
}

json pages_json(const std::vector<feat::PageRecord>& pages) {
    json arr = json::array();
    const std::size_t start =
        pages.size() > kHistoryCap ? pages.size() - kHistoryCap : 0;
    for (std::size_t i = start; i < pages.size(); ++i)
        arr.push_back(page_json(pages[i]));
    return arr;
}

json ids_json(const std::vector<feat::Item>& items) {
    json arr = json::array();
    for (const feat::Item& it : items) arr.push_back(it.item_id);
    return arr;
}

json state_to_json(const feat::State& s) {
    return json{{"u", s.user_id},
                {"c", s.context_id},
                {"p", s.page_index},
                {"t", s.terminal ? 1 : 0},
                {"ads", ids_json(s.ads)},
                {"org", ids_json(s.organics)},
                {"h",
                 json{{"order", pages_json(s.hist_order)},
                      {"click", pages_json(s.hist_click)},
                      {"pulldown", pages_json(s.hist_pulldown)},
                      {"leave", pages_json(s.hist_leave)}}},
                {"hl", json::array({s.hist_order.size(), s.hist_click.size(),
                                    s.hist_pulldown.size(), s.hist_leave.size()})}};
}

struct ItemIndex {
    std::unordered_map<int, feat::Item> by_id;

    explicit ItemIndex(const sim::Catalog& cat) {
        for (const feat::Item& it : cat.ads) by_id.emplace(it.item_id, it);
        for (const feat::Item& it : cat.organics) by_id.emplace(it.item_id, it);
    }
    const feat::Item& get(int id) const {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw DataError("log references unknown item id " + std::to_string(id));
        return it->second;
    }
};

feat::FeedbackKind kind_from_name(const std::string& name) {
    if (name == "order") return feat::FeedbackKind::Order;
    if (name == "click") return feat::FeedbackKind::Click;
    if (name == "pulldown") return feat::FeedbackKind::PullDown;
    if (name == "leave") return feat::FeedbackKind::Leave;
    if (name == "target") return feat::FeedbackKind::TargetNone;
    throw DataError("log has unknown feedback kind '" + name + "'");
}

feat::PageRecord page_from_json(const json& j, const ItemIndex& index) {
    feat::PageRecord p;
    p.kind = kind_from_name(j.at("k").get<std::string>());
    const json& ids = j.at("i");
    p.slots.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        p.slots[i].item = index.get(ids[i].get<int>());
        p.slots[i].position = static_cast<int>(i) + 1;
    }
    return p;
}

std::vector<feat::PageRecord> pages_from_json(const json& j, const ItemIndex& index) {
    std::vector<feat::PageRecord> out;
    out.reserve(j.size());
    for (const json& pj : j) out.push_back(page_from_json(pj, index));
    return out;
}

feat::State state_from_json(const json& j, const ItemIndex& index) {
    feat::State s;
    s.user_id = j.at("u");
    s.context_id = j.at("c");
    s.page_index = j.at("p");
    s.terminal = j.at("t").get<int>() != 0;
    for (const json& id : j.at("ads")) s.ads.push_back(index.get(id.get<int>()));
    for (const json& id : j.at("org")) s.organics.push_back(index.get(id.get<int>()));
    const json& h = j.at("h");
    s.hist_order = pages_from_json(h.at("order"), index);
    s.hist_click = pages_from_json(h.at("click"), index);
    s.hist_pulldown = pages_from_json(h.at("pulldown"), index);
    s.hist_leave = pages_from_json(h.at("leave"), index);
    return s;
}

}  // namespace

std::string state_json(const feat::State& s) { return state_to_json(s).dump(); }

void write_offline_log(const sim::OfflineLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    json header{{"schema", "dpin.offline_log"},
                {"version", kSchemaVersion},
                {"history_cap", kHistoryCap},
                {"sim", sim_config_json(log.cfg)}};
    out << header.dump() << "\n";
    for (const sim::Transition& tr : log.transitions) {
        json a = json::array();
        for (auto b : tr.action.bits) a.push_back(static_cast<int>(b));
        json line{{"ep", tr.episode_id}, {"t", tr.t},
                  {"s", state_to_json(tr.state)}, {"a", std::move(a)},
                  {"r_ad", tr.r_ad},  {"r_fee", tr.r_fee},
                  {"done", tr.done ? 1 : 0}, {"ns", state_to_json(tr.next_state)}};
        out << line.dump() << "\n";
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

sim::OfflineLog read_offline_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("log '" + path + "' is empty");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError("log '" + path + "' has a bad header: " + e.what());
    }
    if (header.value("schema", "") != "dpin.offline_log")
        throw DataError("log '" + path + "' is not a dpin offline log");
    if (header.value("version", -1) != kSchemaVersion)
        throw DataError("log '" + path + "' has unsupported schema version");

    sim::OfflineLog log;
    log.cfg = sim_config_from_json(header.at("sim"));
    const sim::Catalog catalog = sim::Catalog::build(log.cfg);
    const ItemIndex index(catalog);

    double sums[4] = {0, 0, 0, 0};
    std::int64_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("log '" + path + "' line " + std::to_string(n + 2) +
                            ": " + e.what());
        }
        sim::Transition tr;
        tr.episode_id = j.at("ep");
        tr.t = j.at("t");
        tr.state = state_from_json(j.at("s"), index);
        for (const json& b : j.at("a"))
            tr.action.bits.push_back(static_cast<std::uint8_t>(b.get<int>()));
        tr.r_ad = j.at("r_ad");
        tr.r_fee = j.at("r_fee");
        tr.done = j.at("done").get<int>() != 0;
        tr.next_state = state_from_json(j.at("ns"), index);
        tr.next_state.terminal = tr.done;
        const json& hl = j.at("s").at("hl");
        for (int i = 0; i < 4; ++i) sums[i] += hl[static_cast<std::size_t>(i)].get<double>();
        ++n;
        log.transitions.push_back(std::move(tr));
    }
    if (n > 0) {
        log.stats.mean_order = sums[0] / static_cast<double>(n);
        log.stats.mean_click = sums[1] / static_cast<double>(n);
        log.stats.mean_pulldown = sums[2] / static_cast<double>(n);
        log.stats.mean_leave = sums[3] / static_cast<double>(n);
        log.stats.states_seen = n;
    }
    return log;
}

}  // namespace dpin::logio
