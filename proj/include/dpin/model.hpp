#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpin/features.hpp"
#include "dpin/graph.hpp"
#include "dpin/tensor.hpp"

namespace dpin::model {

struct ChannelConfig {
    int m = 1;          // receptive field (conv window rows)
    int n_kernels = 16; // conv output channels
    int heads = 2;      // inter-page attention heads
    int d_h = 32;       // page representation width (last mlp1 width)
};

struct AblationFlags {
    bool no_cl = false;
    bool no_ipau = false;
    bool no_ipiu = false;
    bool no_mcim = false;
    bool drop_pulldown_leave = false;
    bool drop_click = false;
};

struct DpinConfig {
    int channels = 5;  // T
    int seq_len = 10;  // N, history pages kept per feedback kind
    int n_kernels = 16;
    int heads = 2;
    std::vector<int> mlp1 = {128, 64, 32};  // last width is d_h
    std::vector<int> mlp2 = {128, 64, 32};  // hidden; scalar logit appended
    std::vector<int> mlp3 = {128, 64, 32};  // hidden; scalar Q appended
    feat::EmbeddingDims dims;
    AblationFlags ablation;

    int d_h() const { return mlp1.back(); }
    // Receptive fields grow with the channel index: m_t = t (all 1 under
    // no_cl, where the conv degenerates to a per-slot projection).
    std::vector<ChannelConfig> make_channels() const;
    void validate(int k) const;
};

// --- standalone units (also exercised directly by tests) ---

// Conv features -> page representation h: self-attention with Q/K/V
// projections (prefix + ".attn.wq|wk|wv"), average pooling, then MLP1.
nn::Graph::Ref ipau(nn::Graph& g, nn::Graph::Ref h1, const nn::ParamSet& params,
                    const std::string& prefix, const std::vector<int>& mlp1_widths);

// Multi-head self-attention over [target; history pages]; masked entries are
// excluded from the attended set (zero attention weight). Returns the output
// row at the target position, projected back to d_h.
nn::Graph::Ref ipiu_interact(nn::Graph& g, nn::Graph::Ref target,
                             std::span<const nn::Graph::Ref> seq,
                             const std::vector<bool>& mask,
                             const nn::ParamSet& params, const std::string& prefix,
                             int heads);

// Attention-weighted pull-down summary; weights are softmaxed scalar logits
// of MLP2 over (h || z || h*z || h-z). All pull-down pages masked -> zero
// vector. weights_out, when given, receives the 1 x n_unmasked weight row.
nn::Graph::Ref denoise(nn::Graph& g, nn::Graph::Ref z_x,
                       std::span<const nn::Graph::Ref> pulldown,
                       const std::vector<bool>& mask, const nn::ParamSet& params,
                       const std::string& prefix, const std::vector<int>& mlp2_widths,
                       nn::Graph::Ref* weights_out = nullptr);

// --- the assembled Q-network ---

class DpinModel {
public:
    DpinModel(DpinConfig cfg, feat::EmbeddingTables tables, int max_ads_per_page);

    const DpinConfig& config() const { return cfg_; }
    const feat::EmbeddingTables& tables() const { return tables_; }
    int max_ads_per_page() const { return max_ads_; }

    nn::ParamSet init_params(std::uint64_t seed) const;

    struct Trace {
        nn::Tensor e_mcim;
        // Per channel: z_o, z_c, z_p, z_l, z_p_o, z_p_c, z_p_l, h_t.
        std::vector<std::array<nn::Tensor, 8>> channel_parts;
    };

    // Builds Q(s, a) on the given graph; with a recording graph the result
    // supports backward(). Throws FeasibilityError for infeasible actions.
    nn::Graph::Ref build_q(nn::Graph& g, const feat::State& s, const feat::Action& a,
                           const nn::ParamSet& params, Trace* trace = nullptr) const;

    double q_value(const feat::State& s, const feat::Action& a,
                   const nn::ParamSet& params, Trace* trace = nullptr) const;

    // Q for many actions on one state; history encodings are shared via tape
    // rollback, so this is much cheaper than repeated q_value calls.
    std::vector<double> q_values(const feat::State& s,
                                 std::span<const feat::Action> actions,
                                 const nn::ParamSet& params) const;

private:
    struct StateCtx {
        // seq_h[t][kind] = per-channel representations of the real pages.
        std::vector<std::array<std::vector<nn::Graph::Ref>, 4>> seq_h;
        nn::Graph::Ref e_user = -1;
        nn::Graph::Ref e_ctx = -1;
    };

    nn::Graph::Ref encode_page_channel(nn::Graph& g, nn::Graph::Ref e, int t,
                                       const nn::ParamSet& params) const;
    StateCtx encode_state(nn::Graph& g, const feat::State& s,
                          const nn::ParamSet& params) const;
    nn::Graph::Ref q_head(nn::Graph& g, const StateCtx& ctx, const feat::State& s,
                          const feat::Action& a, const nn::ParamSet& params,
                          Trace* trace) const;

    DpinConfig cfg_;
    feat::EmbeddingTables tables_;
    int max_ads_ = 1;
    std::vector<ChannelConfig> channels_;
};

}  // namespace dpin::model
