#include "dpin/features.hpp"

#include <algorithm>

namespace dpin::feat {

const char* feedback_name(FeedbackKind k) {
    switch (k) {
        case FeedbackKind::Order: return "order";
        case FeedbackKind::Click: return "click";
        case FeedbackKind::PullDown: return "pulldown";
        case FeedbackKind::Leave: return "leave";
        case FeedbackKind::TargetNone: return "target";
    }
    return "?";
}

PageRecord PageRecord::padding(int k) {
    PageRecord p;
    p.is_padding = true;
    p.kind = FeedbackKind::TargetNone;
    p.slots.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) p.slots[static_cast<std::size_t>(i)].position = i + 1;
    return p;
}

const std::vector<PageRecord>& State::history(FeedbackKind k) const {
    switch (k) {
        case FeedbackKind::Order: return hist_order;
        case FeedbackKind::Click: return hist_click;
        case FeedbackKind::PullDown: return hist_pulldown;
        case FeedbackKind::Leave: return hist_leave;
        default: throw ConsistencyError("no history for target feedback kind");
    }
}

int Action::popcount() const {
    int n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
}

std::uint32_t Action::pattern() const {
    std::uint32_t p = 0;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) p |= (1u << i);
    return p;
}

Action Action::from_pattern(std::uint32_t pattern, int k) {
    Action a;
    a.bits.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) a.bits[static_cast<std::size_t>(i)] = (pattern >> i) & 1u;
    return a;
}

int EmbeddingTables::item_row(int item_id) const {
    if (item_id >= 0 && item_id < item_vocab - 1) return item_id;
    return item_vocab - 1;  // OOV row
}

void EmbeddingTables::init_params(nn::ParamSet& params, Rng& rng) const {
    auto table = [&](int rows, int cols) {
        nn::Tensor t(rows, cols);
        nn::glorot_init(t, rows, cols, rng);
        return t;
    };
    params.insert("embed.item", table(item_vocab, dims.d_item));
    params.insert("embed.pos", table(k, dims.d_pos));
    params.insert("embed.fb", table(kFeedbackKinds, dims.d_fb));
    params.insert("embed.user", table(n_users, dims.d_user));
    params.insert("embed.ctx", table(n_contexts, dims.d_ctx));
}

PaddedSeq truncate_or_pad(const std::vector<PageRecord>& seq, int n, int k) {
    if (n < 1) throw ConfigError("truncate_or_pad: n must be >= 1");
    PaddedSeq out;
    out.pages.reserve(static_cast<std::size_t>(n));
    out.real.reserve(static_cast<std::size_t>(n));
    const int keep = std::min<int>(n, static_cast<int>(seq.size()));
    for (int i = 0; i < n - keep; ++i) {
        out.pages.push_back(PageRecord::padding(k));
        out.real.push_back(false);
    }
    for (int i = static_cast<int>(seq.size()) - keep;
         i < static_cast<int>(seq.size()); ++i) {
        out.pages.push_back(seq[static_cast<std::size_t>(i)]);
        out.real.push_back(true);
    }
    return out;
}

nn::Tensor embed_page(const PageRecord& p, const nn::ParamSet& params,
                      const EmbeddingTables& tables) {
    nn::Graph g(false);
    return g.value(embed_page(g, p, params, tables));
}

nn::Graph::Ref embed_page(nn::Graph& g, const PageRecord& p,
                          const nn::ParamSet& params, const EmbeddingTables& tables) {
    const int k = p.k();
    if (k != tables.k)
        throw DimensionError("embed_page: page has " + std::to_string(k) +
                             " slots, tables expect " + std::to_string(tables.k));
    if (p.is_padding)
        return g.input(nn::Tensor(k, tables.dims.d()));
    std::vector<int> item_ids, pos_ids, fb_ids;
    item_ids.reserve(static_cast<std::size_t>(k));
    pos_ids.reserve(static_cast<std::size_t>(k));
    fb_ids.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const PageSlot& slot = p.slots[static_cast<std::size_t>(i)];
        if (slot.position != i + 1)
            throw ConsistencyError("embed_page: slot " + std::to_string(i) +
                                   " has position " + std::to_string(slot.position));
        item_ids.push_back(tables.item_row(slot.item.item_id));
        pos_ids.push_back(i);
        fb_ids.push_back(static_cast<int>(p.kind));
    }
    const nn::Graph::Ref items =
        g.gather_rows(g.param(params, "embed.item"), std::move(item_ids));
    const nn::Graph::Ref poss =
        g.gather_rows(g.param(params, "embed.pos"), std::move(pos_ids));
    const nn::Graph::Ref fbs =
        g.gather_rows(g.param(params, "embed.fb"), std::move(fb_ids));
    const nn::Graph::Ref parts[] = {items, poss, fbs};
    return g.concat_cols(parts);
}

PageRecord arrange_target(const State& s, const Action& a, int max_ads_per_page) {
    const int k = a.k();
    const int ads_needed = a.popcount();
    const int organics_needed = k - ads_needed;
    if (ads_needed > max_ads_per_page)
        throw FeasibilityError("action places " + std::to_string(ads_needed) +
                               " ads but max_ads_per_page is " +
                               std::to_string(max_ads_per_page));
    if (ads_needed > static_cast<int>(s.ads.size()))
        throw FeasibilityError("action places " + std::to_string(ads_needed) +
                               " ads but only " + std::to_string(s.ads.size()) +
                               " candidates remain");
    if (organics_needed > static_cast<int>(s.organics.size()))
        throw FeasibilityError("action needs " + std::to_string(organics_needed) +
                               " organic items but only " +
                               std::to_string(s.organics.size()) + " remain");
    PageRecord page;
    page.kind = FeedbackKind::TargetNone;
    page.slots.resize(static_cast<std::size_t>(k));
    std::size_t next_ad = 0, next_organic = 0;
    for (int i = 0; i < k; ++i) {
        PageSlot& slot = page.slots[static_cast<std::size_t>(i)];
        slot.position = i + 1;
        slot.item = a.bits[static_cast<std::size_t>(i)] ? s.ads[next_ad++]
                                                        : s.organics[next_organic++];
    }
    return page;
}

std::pair<PageRecord, nn::Tensor> cross_target(const State& s, const Action& a,
                                               const nn::ParamSet& params,
                                               const EmbeddingTables& tables,
                                               int max_ads_per_page) {
    PageRecord page = arrange_target(s, a, max_ads_per_page);
    nn::Tensor e = embed_page(page, params, tables);
    return {std::move(page), std::move(e)};
}

}  // namespace dpin::feat
