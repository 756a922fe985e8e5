#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpin/graph.hpp"
#include "dpin/rng.hpp"
#include "dpin/tensor.hpp"

namespace dpin::feat {

enum class FeedbackKind : int { Order = 0, Click = 1, PullDown = 2, Leave = 3, TargetNone = 4 };
inline constexpr int kFeedbackKinds = 5;
const char* feedback_name(FeedbackKind k);

struct Item {
    int item_id = -1;
    bool is_ad = false;
    double price = 0.0;     // currency units
    double fee_rate = 0.0;  // service-fee fraction
    double bid = 0.0;       // per-click, ads only
    int category_id = 0;
};

struct PageSlot {
    Item item;
    int position = 0;  // 1..K
};

// One page as shown to the user: K slots plus the feedback kind the page is
// filed under. Target pages use TargetNone (no feedback yet). Padding pages
// embed to the zero matrix and are skipped by the model.
struct PageRecord {
    std::vector<PageSlot> slots;
    FeedbackKind kind = FeedbackKind::TargetNone;
    bool is_padding = false;

    static PageRecord padding(int k);
    int k() const { return static_cast<int>(slots.size()); }
};

struct State {
    std::vector<Item> ads;       // remaining candidate ads, order fixed
    std::vector<Item> organics;  // remaining candidate organics, order fixed
    int user_id = 0;
    int context_id = 0;
    std::vector<PageRecord> hist_order, hist_click, hist_pulldown, hist_leave;
    int page_index = 0;
    bool terminal = false;

    const std::vector<PageRecord>& history(FeedbackKind k) const;
};

// Length-K bit vector; bit k set means slot k+1 shows an ad.
struct Action {
    std::vector<std::uint8_t> bits;

    int k() const { return static_cast<int>(bits.size()); }
    int popcount() const;
    std::uint32_t pattern() const;  // slot 1 is the least significant bit
    static Action from_pattern(std::uint32_t pattern, int k);
    bool operator==(const Action& o) const { return bits == o.bits; }
};

struct EmbeddingDims {
    int d_item = 8;
    int d_pos = 4;
    int d_fb = 4;
    int d_user = 8;
    int d_ctx = 8;
    int d() const { return d_item + d_pos + d_fb; }
};

// Table shapes; the tensors themselves live in a ParamSet under the names
// embed.item / embed.pos / embed.fb / embed.user / embed.ctx. The last item
// row is reserved for out-of-vocabulary ids.
struct EmbeddingTables {
    int item_vocab = 0;  // rows including the OOV row
    int k = 0;           // positions
    int n_users = 0;     // user segments
    int n_contexts = 0;
    EmbeddingDims dims;

    int item_row(int item_id) const;
    int user_row(int user_id) const { return user_id % n_users; }
    int context_row(int context_id) const { return context_id % n_contexts; }
    void init_params(nn::ParamSet& params, Rng& rng) const;
};

struct PaddedSeq {
    std::vector<PageRecord> pages;  // exactly N entries
    std::vector<bool> real;         // true where the record is genuine
};

// Keeps the N most recent records, padding the front with padding pages.
PaddedSeq truncate_or_pad(const std::vector<PageRecord>& seq, int n, int k);

// Page embedding matrix: row k = item || position[k] || feedback(kind).
nn::Tensor embed_page(const PageRecord& p, const nn::ParamSet& params,
                      const EmbeddingTables& tables);
nn::Graph::Ref embed_page(nn::Graph& g, const PageRecord& p,
                          const nn::ParamSet& params, const EmbeddingTables& tables);

// Interleaves the candidate lists according to the action, preserving the
// internal order of each list. Throws FeasibilityError naming the violated
// constraint.
PageRecord arrange_target(const State& s, const Action& a, int max_ads_per_page);

std::pair<PageRecord, nn::Tensor> cross_target(const State& s, const Action& a,
                                               const nn::ParamSet& params,
                                               const EmbeddingTables& tables,
                                               int max_ads_per_page);

}  // namespace dpin::feat
