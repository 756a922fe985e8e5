#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dpin/grad_check.hpp"
#include "dpin/model.hpp"
#include "dpin/rng.hpp"
#include "helpers.hpp"

using namespace dpin;
using feat::Action;
using feat::FeedbackKind;
using feat::PageRecord;
using model::DpinConfig;
using model::DpinModel;
using nn::Graph;
using nn::ParamSet;
using nn::Tensor;
using testutil::make_item;
using testutil::make_page;

namespace {

Tensor random_tensor(int r, int c, Rng& rng) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

DpinConfig tiny_config() {
    DpinConfig cfg;
    cfg.channels = 2;
    cfg.seq_len = 4;
    cfg.n_kernels = 4;
    cfg.heads = 2;
    cfg.mlp1 = {16, 8};
    cfg.mlp2 = {16, 8};
    cfg.mlp3 = {16, 8};
    cfg.dims.d_item = 6;
    cfg.dims.d_pos = 3;
    cfg.dims.d_fb = 3;
    cfg.dims.d_user = 4;
    cfg.dims.d_ctx = 4;
    return cfg;
}

feat::EmbeddingTables tiny_tables(int k = 3) {
    feat::EmbeddingTables t;
    t.item_vocab = 21;
    t.k = k;
    t.n_users = 2;
    t.n_contexts = 2;
    t.dims = tiny_config().dims;
    return t;
}

// Ads have ids 0..7, organics 8..19 so everything stays in-vocabulary.
feat::State tiny_state(bool with_history = true) {
    feat::State s;
    for (int i = 0; i < 4; ++i) s.ads.push_back(make_item(i, true));
    for (int i = 8; i < 15; ++i) s.organics.push_back(make_item(i, false));
    s.user_id = 1;
    s.context_id = 0;
    if (with_history) {
        s.hist_order.push_back(make_page({8, 9, 10}, FeedbackKind::Order));
        s.hist_click.push_back(make_page({11, 0, 12}, FeedbackKind::Click));
        s.hist_pulldown.push_back(make_page({8, 11, 9}, FeedbackKind::PullDown));
        s.hist_pulldown.push_back(make_page({13, 14, 1}, FeedbackKind::PullDown));
        s.hist_pulldown.push_back(make_page({9, 13, 8}, FeedbackKind::PullDown));
        s.hist_leave.push_back(make_page({10, 12, 14}, FeedbackKind::Leave));
    }
    return s;
}

DpinModel tiny_model(DpinConfig cfg = tiny_config()) {
    return DpinModel(std::move(cfg), tiny_tables(), /*max_ads_per_page=*/2);
}

}  // namespace

// ------------------------------------------------------------------ ipau --

TEST_CASE("ipau with identity projections and identity mlp passes rows through") {
    const int n_c = 4;
    ParamSet params;
    params.insert("ch.attn.wq", Tensor::identity(n_c));
    params.insert("ch.attn.wk", Tensor::identity(n_c));
    params.insert("ch.attn.wv", Tensor::identity(n_c));
    params.insert("ch.mlp1.l0.w", Tensor::identity(n_c));
    params.insert("ch.mlp1.l0.b", Tensor(1, n_c));

    Rng rng(31);
    const Tensor r = random_tensor(1, n_c, rng);
    Tensor h1(3, n_c);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < n_c; ++j) h1.at(i, j) = r[static_cast<std::size_t>(j)];

    Graph g(false);
    const auto h = model::ipau(g, g.input(h1), params, "ch", {n_c});
    const Tensor& out = g.value(h);
    REQUIRE(out.cols() == n_c);
    for (int j = 0; j < n_c; ++j)
        CHECK(std::abs(out[static_cast<std::size_t>(j)] - r[static_cast<std::size_t>(j)]) <= 1e-12);
}

TEST_CASE("ipau output width equals the last mlp1 width") {
    Rng rng(32);
    ParamSet params;
    for (const char* n : {"ch.attn.wq", "ch.attn.wk", "ch.attn.wv"})
        params.insert(n, random_tensor(4, 4, rng));
    nn::mlp_init(params, "ch.mlp1", 4, {16, 8}, rng);
    Graph g(false);
    const auto h = model::ipau(g, g.input(random_tensor(3, 4, rng)), params, "ch",
                               {16, 8});
    CHECK(g.value(h).rows() == 1);
    CHECK(g.value(h).cols() == 8);
}

TEST_CASE("ipau matches a step-by-step oracle") {
    Rng rng(33);
    const int n_c = 4;
    ParamSet params;
    params.insert("ch.attn.wq", random_tensor(n_c, n_c, rng));
    params.insert("ch.attn.wk", random_tensor(n_c, n_c, rng));
    params.insert("ch.attn.wv", random_tensor(n_c, n_c, rng));
    nn::mlp_init(params, "ch.mlp1", n_c, {5}, rng);
    const Tensor h1 = random_tensor(3, n_c, rng);

    Graph g(false);
    const Tensor& out = g.value(model::ipau(g, g.input(h1), params, "ch", {5}));

    // Independent recomputation with the standalone forwards.
    const Tensor q = nn::matmul(h1, params.at("ch.attn.wq"));
    const Tensor k = nn::matmul(h1, params.at("ch.attn.wk"));
    const Tensor v = nn::matmul(h1, params.at("ch.attn.wv"));
    const Tensor h2 = nn::sdpa(q, k, v, std::sqrt(static_cast<double>(n_c)));
    const Tensor pooled = nn::avg_pool_rows(h2);
    const Tensor expect = nn::mlp_forward(pooled, params, "ch.mlp1", {5});
    REQUIRE(out.cols() == expect.cols());
    for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(std::abs(out[i] - expect[i]) <= 1e-10);
}

// --------------------------------------------------------- ipiu_interact --

TEST_CASE("ipiu with no history returns the projected target row") {
    const int d_h = 4;
    ParamSet params;
    for (const char* n : {"ch.ipiu.wq", "ch.ipiu.wk", "ch.ipiu.wv", "ch.ipiu.wo"})
        params.insert(n, Tensor::identity(d_h));
    Rng rng(41);
    const Tensor h_t = random_tensor(1, d_h, rng);
    Graph g(false);
    const auto z = model::ipiu_interact(g, g.input(h_t), {}, {}, params, "ch", 2);
    CHECK(g.value(z) == h_t);
}

TEST_CASE("ipiu with one history row equal to the target returns the target") {
    const int d_h = 4;
    ParamSet params;
    for (const char* n : {"ch.ipiu.wq", "ch.ipiu.wk", "ch.ipiu.wv", "ch.ipiu.wo"})
        params.insert(n, Tensor::identity(d_h));
    Rng rng(42);
    const Tensor h_t = random_tensor(1, d_h, rng);
    Graph g(false);
    const Graph::Ref target = g.input(h_t);
    const Graph::Ref hist[] = {g.input(h_t)};
    const auto z =
        model::ipiu_interact(g, target, hist, {true}, params, "ch", 1);
    const Tensor& out = g.value(z);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == h_t[i]);
}

TEST_CASE("ipiu matches an independent multi-head oracle") {
    Rng rng(43);
    const int d_h = 6, heads = 2, n = 4, d_k = d_h / heads;
    ParamSet params;
    for (const char* nme : {"ch.ipiu.wq", "ch.ipiu.wk", "ch.ipiu.wv", "ch.ipiu.wo"})
        params.insert(nme, random_tensor(d_h, d_h, rng));

    const Tensor h_t = random_tensor(1, d_h, rng);
    std::vector<Tensor> hist;
    for (int i = 0; i < n; ++i) hist.push_back(random_tensor(1, d_h, rng));

    Graph g(false);
    std::vector<Graph::Ref> hist_refs;
    for (const Tensor& h : hist) hist_refs.push_back(g.input(h));
    const auto z = model::ipiu_interact(g, g.input(h_t), hist_refs,
                                        std::vector<bool>(n, true), params, "ch",
                                        heads);
    const Tensor& out = g.value(z);

    // Oracle: explicit loops over heads and rows.
    Tensor x(n + 1, d_h);
    for (int j = 0; j < d_h; ++j) x.at(0, j) = h_t[static_cast<std::size_t>(j)];
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d_h; ++j)
            x.at(i + 1, j) = hist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    const Tensor xq = nn::matmul(x, params.at("ch.ipiu.wq"));
    const Tensor xk = nn::matmul(x, params.at("ch.ipiu.wk"));
    const Tensor xv = nn::matmul(x, params.at("ch.ipiu.wv"));
    Tensor merged(n + 1, d_h);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < n + 1; ++i) {
            std::vector<double> logits(static_cast<std::size_t>(n + 1), 0.0);
            double mx = -1e300;
            for (int j = 0; j < n + 1; ++j) {
                double dot = 0;
                for (int c = 0; c < d_k; ++c)
                    dot += xq.at(i, h * d_k + c) * xk.at(j, h * d_k + c);
                logits[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(d_k));
                mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
            }
            double sum = 0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                sum += l;
            }
            for (int c = 0; c < d_k; ++c) {
                double acc = 0;
                for (int j = 0; j < n + 1; ++j)
                    acc += logits[static_cast<std::size_t>(j)] / sum * xv.at(j, h * d_k + c);
                merged.at(i, h * d_k + c) = acc;
            }
        }
    }
    const Tensor projected = nn::matmul(merged, params.at("ch.ipiu.wo"));
    for (int j = 0; j < d_h; ++j)
        CHECK(std::abs(out[static_cast<std::size_t>(j)] - projected.at(0, j)) <= 1e-10);
}

TEST_CASE("ipiu ignores masked rows bit for bit") {
    Rng rng(44);
    const int d_h = 6;
    ParamSet params;
    for (const char* nme : {"ch.ipiu.wq", "ch.ipiu.wk", "ch.ipiu.wv", "ch.ipiu.wo"})
        params.insert(nme, random_tensor(d_h, d_h, rng));
    const Tensor h_t = random_tensor(1, d_h, rng);
    const Tensor real = random_tensor(1, d_h, rng);
    const Tensor junk1 = random_tensor(1, d_h, rng);
    const Tensor junk2 = random_tensor(1, d_h, rng);

    auto run = [&](const Tensor& masked_row) {
        Graph g(false);
        const Graph::Ref seq[] = {g.input(real), g.input(masked_row)};
        return g.value(model::ipiu_interact(g, g.input(h_t), seq, {true, false},
                                            params, "ch", 2));
    };
    CHECK(run(junk1) == run(junk2));
}

// ----------------------------------------------------------------- denoise --

TEST_CASE("denoise with a single unmasked page returns that page") {
    Rng rng(51);
    const int d_h = 6;
    ParamSet params;
    nn::mlp_init(params, "ch.mlp2", 4 * d_h, {8, 1}, rng);
    const Tensor z_x = random_tensor(1, d_h, rng);
    const Tensor h1 = random_tensor(1, d_h, rng);
    Graph g(false);
    const Graph::Ref seq[] = {g.input(h1)};
    const auto z = model::denoise(g, g.input(z_x), seq, {true}, params, "ch", {8});
    CHECK(g.value(z) == h1);
}

TEST_CASE("denoise with identical pages returns that page with uniform weights") {
    Rng rng(52);
    const int d_h = 6;
    ParamSet params;
    nn::mlp_init(params, "ch.mlp2", 4 * d_h, {8, 1}, rng);
    const Tensor z_x = random_tensor(1, d_h, rng);
    const Tensor v = random_tensor(1, d_h, rng);
    Graph g(false);
    std::vector<Graph::Ref> seq;
    for (int i = 0; i < 4; ++i) seq.push_back(g.input(v));
    Graph::Ref weights = -1;
    const auto z = model::denoise(g, g.input(z_x), seq, std::vector<bool>(4, true),
                                  params, "ch", {8}, &weights);
    const Tensor& w = g.value(weights);
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(w[i] == doctest::Approx(0.25).epsilon(1e-12));
    const Tensor& out = g.value(z);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(std::abs(out[i] - v[i]) <= 1e-12);
}

TEST_CASE("denoise weights are a distribution and the sum matches an oracle") {
    Rng rng(53);
    const int d_h = 6;
    ParamSet params;
    nn::mlp_init(params, "ch.mlp2", 4 * d_h, {12, 6, 1}, rng);
    const Tensor z_x = random_tensor(1, d_h, rng);
    std::vector<Tensor> pages;
    for (int i = 0; i < 5; ++i) pages.push_back(random_tensor(1, d_h, rng));

    Graph g(false);
    std::vector<Graph::Ref> seq;
    for (const Tensor& p : pages) seq.push_back(g.input(p));
    Graph::Ref weights = -1;
    const auto z = model::denoise(g, g.input(z_x), seq, std::vector<bool>(5, true),
                                  params, "ch", {12, 6}, &weights);
    const Tensor& w = g.value(weights);
    double sum = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        CHECK(w[i] >= 0.0);
        sum += w[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);

    // Oracle: logits through mlp_forward, softmax by hand, weighted sum.
    std::vector<double> logits;
    for (const Tensor& p : pages) {
        Tensor f(1, 4 * d_h);
        for (int j = 0; j < d_h; ++j) {
            f[static_cast<std::size_t>(j)] = p[static_cast<std::size_t>(j)];
            f[static_cast<std::size_t>(d_h + j)] = z_x[static_cast<std::size_t>(j)];
            f[static_cast<std::size_t>(2 * d_h + j)] =
                p[static_cast<std::size_t>(j)] * z_x[static_cast<std::size_t>(j)];
            f[static_cast<std::size_t>(3 * d_h + j)] =
                p[static_cast<std::size_t>(j)] - z_x[static_cast<std::size_t>(j)];
        }
        logits.push_back(nn::mlp_forward(f, params, "ch.mlp2", {12, 6, 1})[0]);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double zsum = 0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        zsum += l;
    }
    const Tensor& out = g.value(z);
    for (int j = 0; j < d_h; ++j) {
        double expect = 0;
        for (std::size_t i = 0; i < pages.size(); ++i)
            expect += logits[i] / zsum * pages[i][static_cast<std::size_t>(j)];
        CHECK(std::abs(out[static_cast<std::size_t>(j)] - expect) <= 1e-10);
    }
}

TEST_CASE("denoise with everything masked returns the zero vector") {
    Rng rng(54);
    const int d_h = 4;
    ParamSet params;
    nn::mlp_init(params, "ch.mlp2", 4 * d_h, {4, 1}, rng);
    Graph g(false);
    const Graph::Ref seq[] = {g.input(random_tensor(1, d_h, rng))};
    const auto z = model::denoise(g, g.input(random_tensor(1, d_h, rng)), seq,
                                  {false}, params, "ch", {4});
    const Tensor& out = g.value(z);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

// ----------------------------------------------------- assembled Q-network --

TEST_CASE("channel output is 8 vectors of width d_h; empty histories degrade") {
    const DpinModel m = tiny_model();
    ParamSet params = m.init_params(7);
    feat::State s = tiny_state(/*with_history=*/false);
    Action a;
    a.bits = {1, 0, 0};

    DpinModel::Trace trace;
    m.q_value(s, a, params, &trace);
    REQUIRE(trace.channel_parts.size() == 2);
    for (const auto& parts : trace.channel_parts) {
        for (const Tensor& p : parts) {
            CHECK(p.rows() == 1);
            CHECK(p.cols() == 8);
            CHECK(p.all_finite());
        }
        // z_o == z_c == z_p == z_l (attention over the lone target row)
        CHECK(parts[0] == parts[1]);
        CHECK(parts[0] == parts[2]);
        CHECK(parts[0] == parts[3]);
        // denoised parts are zero vectors
        for (int pi = 4; pi <= 6; ++pi)
            for (std::size_t i = 0; i < parts[static_cast<std::size_t>(pi)].size(); ++i)
                CHECK(parts[static_cast<std::size_t>(pi)][i] == 0.0);
    }
    CHECK(trace.e_mcim.cols() == 2 * 8 * 8);
}

TEST_CASE("e_mcim width is 8*T*d_h at paper defaults") {
    DpinConfig cfg;  // defaults: T=5, mlp1 ends at 32
    feat::EmbeddingTables tables;
    tables.item_vocab = 40;
    tables.k = 5;
    tables.n_users = 4;
    tables.n_contexts = 2;
    tables.dims = cfg.dims;
    const DpinModel m(cfg, tables, 2);
    ParamSet params = m.init_params(3);

    feat::State s;
    for (int i = 0; i < 6; ++i) s.ads.push_back(make_item(i, true));
    for (int i = 10; i < 22; ++i) s.organics.push_back(make_item(i, false));
    Action a;
    a.bits = {1, 0, 1, 0, 0};
    DpinModel::Trace trace;
    m.q_value(s, a, params, &trace);
    CHECK(trace.e_mcim.cols() == 8 * 5 * 32);
    CHECK(trace.e_mcim.cols() == 1280);
}

TEST_CASE("all-zero weights collapse Q to the final bias for every action") {
    const DpinModel m = tiny_model();
    ParamSet params = m.init_params(9);
    params.zero_values();
    params.at("qhead.l2.b")[0] = 0.37;
    const feat::State s = tiny_state();
    for (std::uint32_t p : {0u, 1u, 2u, 3u, 5u, 6u})
        CHECK(m.q_value(s, Action::from_pattern(p, 3), params) == 0.37);
}

TEST_CASE("q_values with shared encoding matches q_value bit for bit") {
    const DpinModel m = tiny_model();
    ParamSet params = m.init_params(11);
    const feat::State s = tiny_state();
    std::vector<Action> acts;
    for (std::uint32_t p : {0u, 1u, 2u, 4u, 3u, 5u})
        acts.push_back(Action::from_pattern(p, 3));
    const std::vector<double> qs = m.q_values(s, acts, params);
    for (std::size_t i = 0; i < acts.size(); ++i)
        CHECK(qs[i] == m.q_value(s, acts[i], params));
}

TEST_CASE("padded history pages cannot influence q_value") {
    const DpinModel m = tiny_model();
    ParamSet params = m.init_params(13);
    feat::State s = tiny_state();
    Action a;
    a.bits = {0, 1, 0};
    const double before = m.q_value(s, a, params);

    // Corrupt every history with padding-marked pages full of real items.
    feat::State corrupted = s;
    for (auto* hist : {&corrupted.hist_order, &corrupted.hist_click,
                       &corrupted.hist_pulldown, &corrupted.hist_leave}) {
        PageRecord junk = make_page({2, 3, 14}, FeedbackKind::PullDown);
        junk.is_padding = true;
        hist->push_back(junk);
        junk = make_page({1, 9, 10}, FeedbackKind::Click);
        junk.is_padding = true;
        hist->insert(hist->begin(), junk);
    }
    CHECK(m.q_value(corrupted, a, params) == before);
}

TEST_CASE("feasibility errors surface from q_value") {
    const DpinModel m = tiny_model();
    ParamSet params = m.init_params(15);
    const feat::State s = tiny_state();
    Action too_many;
    too_many.bits = {1, 1, 1};  // max_ads_per_page is 2
    CHECK_THROWS_AS(m.q_value(s, too_many, params), FeasibilityError);
}

TEST_CASE("zeroing one channel changes only its slice of e_mcim") {
    const DpinModel m = tiny_model();
    ParamSet params = m.init_params(17);
    const feat::State s = tiny_state();
    Action a;
    a.bits = {1, 0, 0};

    DpinModel::Trace base;
    m.q_value(s, a, params, &base);

    ParamSet zeroed = params;
    for (auto& [name, t] : zeroed.values)
        if (name.rfind("ch1.", 0) == 0) t.zero();
    DpinModel::Trace after;
    m.q_value(s, a, zeroed, &after);

    const int slice = 8 * 8;  // 8 parts x d_h
    bool ch1_changed = false;
    for (int j = 0; j < base.e_mcim.cols(); ++j) {
        if (j < slice) {
            CHECK(base.e_mcim[static_cast<std::size_t>(j)] ==
                  after.e_mcim[static_cast<std::size_t>(j)]);
        } else {
            ch1_changed |= base.e_mcim[static_cast<std::size_t>(j)] !=
                           after.e_mcim[static_cast<std::size_t>(j)];
        }
    }
    CHECK(ch1_changed);
}

TEST_CASE("ablation flags add and remove exactly their parameters") {
    auto names = [](const DpinConfig& cfg) {
        const DpinModel m(cfg, tiny_tables(), 2);
        std::vector<std::string> out;
        for (const auto& [name, t] : m.init_params(1).values) out.push_back(name);
        return out;
    };
    const auto full = names(tiny_config());

    DpinConfig no_ipau = tiny_config();
    no_ipau.ablation.no_ipau = true;
    for (const std::string& n : names(no_ipau)) CHECK(n.find(".attn.") == std::string::npos);

    DpinConfig no_ipiu = tiny_config();
    no_ipiu.ablation.no_ipiu = true;
    for (const std::string& n : names(no_ipiu)) {
        CHECK(n.find(".ipiu.") == std::string::npos);
        CHECK(n.find(".mlp2") == std::string::npos);
    }

    DpinConfig no_mcim = tiny_config();
    no_mcim.ablation.no_mcim = true;
    for (const std::string& n : names(no_mcim)) {
        CHECK(n.rfind("ch", 0) != 0);  // only embeddings and the q-head remain
    }
    CHECK(std::count_if(full.begin(), full.end(), [](const std::string& n) {
              return n.rfind("ch", 0) == 0;
          }) > 0);

    DpinConfig no_cl = tiny_config();
    no_cl.ablation.no_cl = true;
    const DpinModel m(no_cl, tiny_tables(), 2);
    const ParamSet p = m.init_params(1);
    const int d = tiny_config().dims.d();
    CHECK(p.at("ch0.conv.w").cols() == d);      // single-row windows
    CHECK(p.at("ch1.conv.w").cols() == d);
}

TEST_CASE("no_ipiu makes q_value invariant to history permutations") {
    DpinConfig cfg = tiny_config();
    cfg.ablation.no_ipiu = true;
    const DpinModel m = tiny_model(cfg);
    ParamSet params = m.init_params(19);

    feat::State s = tiny_state();
    Action a;
    a.bits = {1, 0, 0};
    const double before = m.q_value(s, a, params);

    std::swap(s.hist_pulldown[0], s.hist_pulldown[2]);
    std::swap(s.hist_pulldown[1], s.hist_pulldown[2]);
    const double after = m.q_value(s, a, params);
    CHECK(std::abs(before - after) <= 1e-12);
}

TEST_CASE("drop flags blank their sequences") {
    DpinConfig cfg = tiny_config();
    cfg.ablation.drop_pulldown_leave = true;
    cfg.ablation.drop_click = true;
    const DpinModel m = tiny_model(cfg);
    ParamSet params = m.init_params(21);

    feat::State s = tiny_state();
    Action a;
    a.bits = {0, 0, 1};
    const double with_noise = m.q_value(s, a, params);

    feat::State cleared = s;
    cleared.hist_click.clear();
    cleared.hist_pulldown.clear();
    cleared.hist_leave.clear();
    CHECK(m.q_value(cleared, a, params) == with_noise);

    // The order sequence still matters.
    feat::State no_order = cleared;
    no_order.hist_order.clear();
    CHECK(m.q_value(no_order, a, params) != with_noise);
}

TEST_CASE("no_mcim scores same-popcount arrangements identically") {
    DpinConfig cfg = tiny_config();
    cfg.ablation.no_mcim = true;
    const DpinModel m = tiny_model(cfg);
    ParamSet params = m.init_params(23);
    const feat::State s = tiny_state();
    // Same item multiset, different slots: pooled target embedding is equal.
    const double q1 = m.q_value(s, Action::from_pattern(0b001, 3), params);
    const double q2 = m.q_value(s, Action::from_pattern(0b010, 3), params);
    const double q3 = m.q_value(s, Action::from_pattern(0b100, 3), params);
    CHECK(q1 == doctest::Approx(q2).epsilon(1e-12));
    CHECK(q2 == doctest::Approx(q3).epsilon(1e-12));
}

TEST_CASE("end-to-end gradient matches finite differences on tiny configs") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const DpinModel m = tiny_model();
        ParamSet params = m.init_params(100 + seed);
        // Damped output layer keeps the eps=1e-6 differences above rounding
        // noise on near-cancelling coordinates.
        for (const char* n : {"qhead.l2.w", "qhead.l2.b"}) {
            Tensor& w = params.at(n);
            for (std::size_t j = 0; j < w.size(); ++j) w[j] *= 1e-3;
        }
        const feat::State s = tiny_state();
        Action a;
        a.bits = {1, 0, 1};

        ParamSet analytic = params.zeros_like();
        Graph g(true);
        const Graph::Ref q = m.build_q(g, s, a, params);
        g.backward(q);
        g.grads_into(analytic);

        const auto f = [&](const ParamSet& p) { return m.q_value(s, a, p); };
        const auto rep = dpin::nn::grad_check(params, f, analytic, 1e-6);
        REQUIRE(rep.analytic_finite);
        CHECK(rep.max_rel_err <= 1e-4);
    }
}

TEST_CASE("config validation rejects broken shapes") {
    DpinConfig cfg = tiny_config();
    cfg.channels = 4;  // needs receptive field 4 on a 3-slot page
    CHECK_THROWS_AS(DpinModel(cfg, tiny_tables(), 2), ConfigError);

    cfg = tiny_config();
    cfg.heads = 3;  // d_h = 8 not divisible
    CHECK_THROWS_AS(DpinModel(cfg, tiny_tables(), 2), ConfigError);

    cfg = tiny_config();
    cfg.mlp1.clear();
    CHECK_THROWS_AS(DpinModel(cfg, tiny_tables(), 2), ConfigError);
}
