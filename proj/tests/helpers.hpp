#pragma once

#include <vector>

#include "dpin/features.hpp"
#include "dpin/rng.hpp"
#include "dpin/tensor.hpp"

namespace testutil {

inline dpin::feat::Item make_item(int id, bool is_ad, double price = 20.0,
                                  double fee = 0.05, double bid = 1.0) {
    dpin::feat::Item it;
    it.item_id = id;
    it.is_ad = is_ad;
    it.price = price;
    it.fee_rate = fee;
    it.bid = is_ad ? bid : 0.0;
    it.category_id = id % 8;
    return it;
}

inline dpin::feat::PageRecord make_page(const std::vector<int>& item_ids,
                                        dpin::feat::FeedbackKind kind,
                                        bool ads = false) {
    dpin::feat::PageRecord p;
    p.kind = kind;
    p.slots.resize(item_ids.size());
    for (std::size_t i = 0; i < item_ids.size(); ++i) {
        p.slots[i].item = make_item(item_ids[i], ads);
        p.slots[i].position = static_cast<int>(i) + 1;
    }
    return p;
}

inline dpin::feat::EmbeddingTables small_tables(int k, int vocab = 24,
                                                int users = 4, int contexts = 2) {
    dpin::feat::EmbeddingTables t;
    t.item_vocab = vocab;
    t.k = k;
    t.n_users = users;
    t.n_contexts = contexts;
    t.dims.d_item = 4;
    t.dims.d_pos = 3;
    t.dims.d_fb = 3;
    t.dims.d_user = 4;
    t.dims.d_ctx = 4;
    return t;
}

inline dpin::feat::State make_state(int n_ads, int n_organics, int k = 5) {
    (void)k;
    dpin::feat::State s;
    for (int i = 0; i < n_ads; ++i) s.ads.push_back(make_item(i, true));
    for (int i = 0; i < n_organics; ++i)
        s.organics.push_back(make_item(100 + i, false));
    return s;
}

}  // namespace testutil
