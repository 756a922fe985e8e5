#include "dpin/model.hpp"

#include <cmath>

namespace dpin::model {

using nn::Graph;
using Ref = nn::Graph::Ref;

std::vector<ChannelConfig> DpinConfig::make_channels() const {
    std::vector<ChannelConfig> out;
    out.reserve(static_cast<std::size_t>(channels));
    for (int t = 1; t <= channels; ++t) {
        ChannelConfig c;
        c.m = ablation.no_cl ? 1 : t;
        c.n_kernels = n_kernels;
        c.heads = heads;
        c.d_h = d_h();
        out.push_back(c);
    }
    return out;
}

void DpinConfig::validate(int k) const {
    if (channels < 1) throw ConfigError("model: channels must be >= 1");
    if (channels > k)
        throw ConfigError("model: " + std::to_string(channels) +
                          " channels need receptive fields up to " +
                          std::to_string(channels) + " but the page has only " +
                          std::to_string(k) + " slots");
    if (seq_len < 1) throw ConfigError("model: seq_len must be >= 1");
    if (n_kernels < 1) throw ConfigError("model: n_kernels must be >= 1");
    if (heads < 1) throw ConfigError("model: heads must be >= 1");
    for (const auto* widths : {&mlp1, &mlp2, &mlp3}) {
        if (widths->empty()) throw ConfigError("model: empty MLP width list");
        for (int w : *widths)
            if (w < 1) throw ConfigError("model: MLP widths must be positive");
    }
    if (d_h() % heads != 0)
        throw ConfigError("model: d_h " + std::to_string(d_h()) +
                          " not divisible by heads " + std::to_string(heads));
    if (dims.d_item < 1 || dims.d_pos < 1 || dims.d_fb < 1 || dims.d_user < 1 ||
        dims.d_ctx < 1)
        throw ConfigError("model: embedding dims must be positive");
}

Ref ipau(Graph& g, Ref h1, const nn::ParamSet& params, const std::string& prefix,
         const std::vector<int>& mlp1_widths) {
    const int n_c = g.value(h1).cols();
    const Ref q = g.matmul(h1, g.param(params, prefix + ".attn.wq"));
    const Ref k = g.matmul(h1, g.param(params, prefix + ".attn.wk"));
    const Ref v = g.matmul(h1, g.param(params, prefix + ".attn.wv"));
    const Ref h2 = g.sdpa(q, k, v, std::sqrt(static_cast<double>(n_c)));
    return nn::mlp(g, g.avg_pool_rows(h2), params, prefix + ".mlp1", mlp1_widths);
}

Ref ipiu_interact(Graph& g, Ref target, std::span<const Ref> seq,
                  const std::vector<bool>& mask, const nn::ParamSet& params,
                  const std::string& prefix, int heads) {
    if (mask.size() != seq.size())
        throw DimensionError("ipiu_interact: mask length " +
                             std::to_string(mask.size()) + " vs sequence " +
                             std::to_string(seq.size()));
    std::vector<Ref> rows;
    rows.reserve(seq.size() + 1);
    rows.push_back(target);
    for (std::size_t i = 0; i < seq.size(); ++i)
        if (mask[i]) rows.push_back(seq[i]);
    const Ref x = g.stack_rows(rows);
    const int d_h = g.value(x).cols();
    if (d_h % heads != 0)
        throw ConfigError("ipiu_interact: width " + std::to_string(d_h) +
                          " not divisible by " + std::to_string(heads) + " heads");
    const int d_k = d_h / heads;
    const Ref xq = g.matmul(x, g.param(params, prefix + ".ipiu.wq"));
    const Ref xk = g.matmul(x, g.param(params, prefix + ".ipiu.wk"));
    const Ref xv = g.matmul(x, g.param(params, prefix + ".ipiu.wv"));
    std::vector<Ref> head_out;
    head_out.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const int c0 = h * d_k, c1 = (h + 1) * d_k;
        head_out.push_back(g.sdpa(g.slice_cols(xq, c0, c1),
                                  g.slice_cols(xk, c0, c1),
                                  g.slice_cols(xv, c0, c1),
                                  std::sqrt(static_cast<double>(d_k))));
    }
    const Ref merged = g.concat_cols(head_out);
    const Ref projected = g.matmul(merged, g.param(params, prefix + ".ipiu.wo"));
    return g.row(projected, 0);
}

Ref denoise(Graph& g, Ref z_x, std::span<const Ref> pulldown,
            const std::vector<bool>& mask, const nn::ParamSet& params,
            const std::string& prefix, const std::vector<int>& mlp2_widths,
            Ref* weights_out) {
    if (mask.size() != pulldown.size())
        throw DimensionError("denoise: mask length " + std::to_string(mask.size()) +
                             " vs sequence " + std::to_string(pulldown.size()));
    std::vector<Ref> kept;
    for (std::size_t i = 0; i < pulldown.size(); ++i)
        if (mask[i]) kept.push_back(pulldown[i]);
    const int d_h = g.value(z_x).cols();
    if (kept.empty()) {
        if (weights_out) *weights_out = -1;
        return g.input(nn::Tensor(1, d_h));
    }
    std::vector<Ref> feature_rows;
    feature_rows.reserve(kept.size());
    for (Ref h : kept) {
        const Ref parts[] = {h, z_x, g.mul(h, z_x), g.sub(h, z_x)};
        feature_rows.push_back(g.concat_cols(parts));
    }
    std::vector<int> widths = mlp2_widths;
    widths.push_back(1);  // scalar logit per page
    const Ref logits =
        nn::mlp(g, g.stack_rows(feature_rows), params, prefix + ".mlp2", widths);
    const Ref weights = g.softmax_rows(g.transpose(logits));
    if (weights_out) *weights_out = weights;
    return g.matmul(weights, g.stack_rows(kept));
}

DpinModel::DpinModel(DpinConfig cfg, feat::EmbeddingTables tables,
                     int max_ads_per_page)
    : cfg_(std::move(cfg)), tables_(std::move(tables)), max_ads_(max_ads_per_page) {
    cfg_.validate(tables_.k);
    if (tables_.item_vocab < 2) throw ConfigError("model: item vocab too small");
    if (tables_.n_users < 1 || tables_.n_contexts < 1)
        throw ConfigError("model: user/context tables must be non-empty");
    channels_ = cfg_.make_channels();
}

nn::ParamSet DpinModel::init_params(std::uint64_t seed) const {
    nn::ParamSet params;
    Rng rng(Rng::splitmix(seed ^ 0xD1A0CAFEULL));
    tables_.init_params(params, rng);
    const int d = cfg_.dims.d();
    const int d_h = cfg_.d_h();
    if (!cfg_.ablation.no_mcim) {
        for (int t = 0; t < cfg_.channels; ++t) {
            const ChannelConfig& ch = channels_[static_cast<std::size_t>(t)];
            const std::string prefix = "ch" + std::to_string(t);
            nn::Tensor kw(ch.n_kernels, ch.m * d);
            nn::glorot_init(kw, ch.m * d, ch.n_kernels, rng);
            params.insert(prefix + ".conv.w", std::move(kw));
            params.insert(prefix + ".conv.b", nn::Tensor(1, ch.n_kernels));
            if (!cfg_.ablation.no_ipau) {
                for (const char* name : {".attn.wq", ".attn.wk", ".attn.wv"}) {
                    nn::Tensor w(ch.n_kernels, ch.n_kernels);
                    nn::glorot_init(w, ch.n_kernels, ch.n_kernels, rng);
                    params.insert(prefix + name, std::move(w));
                }
            }
            nn::mlp_init(params, prefix + ".mlp1", ch.n_kernels, cfg_.mlp1, rng);
            if (!cfg_.ablation.no_ipiu) {
                for (const char* name : {".ipiu.wq", ".ipiu.wk", ".ipiu.wv", ".ipiu.wo"}) {
                    nn::Tensor w(d_h, d_h);
                    nn::glorot_init(w, d_h, d_h, rng);
                    params.insert(prefix + name, std::move(w));
                }
                std::vector<int> w2 = cfg_.mlp2;
                w2.push_back(1);
                nn::mlp_init(params, prefix + ".mlp2", 4 * d_h, w2, rng);
            }
        }
    }
    const int head_in =
        (cfg_.ablation.no_mcim ? d : 8 * cfg_.channels * d_h) +
        cfg_.dims.d_ctx + cfg_.dims.d_user;
    std::vector<int> w3 = cfg_.mlp3;
    w3.push_back(1);
    nn::mlp_init(params, "qhead", head_in, w3, rng);
    return params;
}

Ref DpinModel::encode_page_channel(Graph& g, Ref e, int t,
                                   const nn::ParamSet& params) const {
    const ChannelConfig& ch = channels_[static_cast<std::size_t>(t)];
    const std::string prefix = "ch" + std::to_string(t);
    const Ref h1 = g.conv_page(e, g.param(params, prefix + ".conv.w"), ch.m,
                               g.param(params, prefix + ".conv.b"));
    if (cfg_.ablation.no_ipau)
        return nn::mlp(g, g.avg_pool_rows(h1), params, prefix + ".mlp1", cfg_.mlp1);
    return ipau(g, h1, params, prefix, cfg_.mlp1);
}

DpinModel::StateCtx DpinModel::encode_state(Graph& g, const feat::State& s,
                                            const nn::ParamSet& params) const {
    StateCtx ctx;
    ctx.seq_h.resize(static_cast<std::size_t>(cfg_.channels));
    const feat::FeedbackKind kinds[4] = {
        feat::FeedbackKind::Order, feat::FeedbackKind::Click,
        feat::FeedbackKind::PullDown, feat::FeedbackKind::Leave};
    if (!cfg_.ablation.no_mcim) {
        for (int ki = 0; ki < 4; ++ki) {
            const feat::FeedbackKind kind = kinds[ki];
            const bool dropped =
                (cfg_.ablation.drop_pulldown_leave &&
                 (kind == feat::FeedbackKind::PullDown ||
                  kind == feat::FeedbackKind::Leave)) ||
                (cfg_.ablation.drop_click && kind == feat::FeedbackKind::Click);
            if (dropped) continue;
            std::vector<feat::PageRecord> real;
            for (const feat::PageRecord& p : s.history(kind))
                if (!p.is_padding) real.push_back(p);
            const feat::PaddedSeq padded =
                feat::truncate_or_pad(real, cfg_.seq_len, tables_.k);
            for (std::size_t i = 0; i < padded.pages.size(); ++i) {
                if (!padded.real[i]) continue;
                const Ref e = feat::embed_page(g, padded.pages[i], params, tables_);
                for (int t = 0; t < cfg_.channels; ++t)
                    ctx.seq_h[static_cast<std::size_t>(t)][static_cast<std::size_t>(ki)]
                        .push_back(encode_page_channel(g, e, t, params));
            }
        }
    }
    ctx.e_user = g.gather_rows(g.param(params, "embed.user"),
                               {tables_.user_row(s.user_id)});
    ctx.e_ctx = g.gather_rows(g.param(params, "embed.ctx"),
                              {tables_.context_row(s.context_id)});
    return ctx;
}

Ref DpinModel::q_head(Graph& g, const StateCtx& ctx, const feat::State& s,
                      const feat::Action& a, const nn::ParamSet& params,
                      Trace* trace) const {
    const feat::PageRecord target = feat::arrange_target(s, a, max_ads_);
    const Ref e_t = feat::embed_page(g, target, params, tables_);
    std::vector<int> w3 = cfg_.mlp3;
    w3.push_back(1);
    if (cfg_.ablation.no_mcim) {
        const Ref parts[] = {g.avg_pool_rows(e_t), ctx.e_ctx, ctx.e_user};
        return nn::mlp(g, g.concat_cols(parts), params, "qhead", w3);
    }
    std::vector<Ref> channel_vecs;
    channel_vecs.reserve(static_cast<std::size_t>(cfg_.channels));
    if (trace) trace->channel_parts.resize(static_cast<std::size_t>(cfg_.channels));
    for (int t = 0; t < cfg_.channels; ++t) {
        const std::string prefix = "ch" + std::to_string(t);
        const auto& seqs = ctx.seq_h[static_cast<std::size_t>(t)];
        const Ref h_t = encode_page_channel(g, e_t, t, params);
        const auto& pulldown = seqs[static_cast<std::size_t>(
            static_cast<int>(feat::FeedbackKind::PullDown))];
        const std::vector<bool> pd_mask(pulldown.size(), true);
        auto interact = [&](int kind_idx) {
            const auto& seq = seqs[static_cast<std::size_t>(kind_idx)];
            if (cfg_.ablation.no_ipiu) {
                // Order-free pooling of the history pages replaces the unit.
                if (seq.empty()) return g.input(nn::Tensor(1, cfg_.d_h()));
                return g.avg_pool_rows(g.stack_rows(seq));
            }
            const std::vector<bool> mask(seq.size(), true);
            return ipiu_interact(g, h_t, seq, mask, params, prefix, cfg_.heads);
        };
        auto denoised = [&](Ref z_x) {
            if (cfg_.ablation.no_ipiu) {
                if (pulldown.empty()) return g.input(nn::Tensor(1, cfg_.d_h()));
                return g.avg_pool_rows(g.stack_rows(pulldown));
            }
            return denoise(g, z_x, pulldown, pd_mask, params, prefix, cfg_.mlp2);
        };
        const Ref z_o = interact(static_cast<int>(feat::FeedbackKind::Order));
        const Ref z_c = interact(static_cast<int>(feat::FeedbackKind::Click));
        const Ref z_p = interact(static_cast<int>(feat::FeedbackKind::PullDown));
        const Ref z_l = interact(static_cast<int>(feat::FeedbackKind::Leave));
        const Ref z_p_o = denoised(z_o);
        const Ref z_p_c = denoised(z_c);
        const Ref z_p_l = denoised(z_l);
        const Ref parts[] = {z_o, z_c, z_p, z_l, z_p_o, z_p_c, z_p_l, h_t};
        channel_vecs.push_back(g.concat_cols(parts));
        if (trace) {
            auto& slot = trace->channel_parts[static_cast<std::size_t>(t)];
            const Ref refs[8] = {z_o, z_c, z_p, z_l, z_p_o, z_p_c, z_p_l, h_t};
            for (int i = 0; i < 8; ++i) slot[static_cast<std::size_t>(i)] = g.value(refs[i]);
        }
    }
    const Ref e_mcim = g.concat_cols(channel_vecs);
    if (trace) trace->e_mcim = g.value(e_mcim);
    const Ref parts[] = {e_mcim, ctx.e_ctx, ctx.e_user};
    return nn::mlp(g, g.concat_cols(parts), params, "qhead", w3);
}

Ref DpinModel::build_q(Graph& g, const feat::State& s, const feat::Action& a,
                       const nn::ParamSet& params, Trace* trace) const {
    const StateCtx ctx = encode_state(g, s, params);
    return q_head(g, ctx, s, a, params, trace);
}

double DpinModel::q_value(const feat::State& s, const feat::Action& a,
                          const nn::ParamSet& params, Trace* trace) const {
    Graph g(false);
    return g.scalar(build_q(g, s, a, params, trace));
}

std::vector<double> DpinModel::q_values(const feat::State& s,
                                        std::span<const feat::Action> actions,
                                        const nn::ParamSet& params) const {
    Graph g(false);
    const StateCtx ctx = encode_state(g, s, params);
    std::vector<double> out;
    out.reserve(actions.size());
    const std::size_t base = g.mark();
    for (const feat::Action& a : actions) {
        out.push_back(g.scalar(q_head(g, ctx, s, a, params, nullptr)));
        g.rollback(base);
    }
    return out;
}

}  // namespace dpin::model
