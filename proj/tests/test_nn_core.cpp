#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "dpin/grad_check.hpp"
#include "dpin/graph.hpp"
#include "dpin/optimizer.hpp"
#include "dpin/rng.hpp"
#include "dpin/tensor.hpp"

using dpin::ConfigError;
using dpin::DimensionError;
using dpin::Rng;
using dpin::nn::Graph;
using dpin::nn::ParamSet;
using dpin::nn::Tensor;
using dpin::nn::TrainingHyper;

namespace {

Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Scalarizes an arbitrary output with a fixed projection so gradients can be
// finite-difference checked: scalar = mean_rows(out * proj) . ones.
Graph::Ref scalarize(Graph& g, Graph::Ref out, const Tensor& proj) {
    const Tensor& v = g.value(out);
    REQUIRE(proj.rows() == v.rows());
    REQUIRE(proj.cols() == v.cols());
    Graph::Ref pooled = g.avg_pool_rows(g.mul(out, g.input(proj)));
    Tensor ones(v.cols(), 1);
    ones.fill(1.0);
    return g.matmul(pooled, g.input(ones));
}

using BuildFn = std::function<Graph::Ref(Graph&, const ParamSet&)>;

// Runs the tape for analytic grads and central differences for numeric ones.
double checked_rel_err(ParamSet& params, const BuildFn& build, const Tensor& proj) {
    ParamSet analytic = params.zeros_like();
    {
        Graph g(true);
        Graph::Ref s = scalarize(g, build(g, params), proj);
        g.backward(s);
        g.grads_into(analytic);
    }
    const auto f = [&](const ParamSet& p) {
        Graph g(false);
        return g.scalar(scalarize(g, build(g, p), proj));
    };
    const auto rep = dpin::nn::grad_check(params, f, analytic, 1e-6);
    REQUIRE(rep.analytic_finite);
    return rep.max_rel_err;
}

}  // namespace

// ---------------------------------------------------------------- affine --

TEST_CASE("affine identity and zero-weight cases") {
    const Tensor x = Tensor::vec({1.0, 0.0});
    const Tensor out = dpin::nn::affine(x, Tensor::identity(2), Tensor::vec({0.0, 0.0}));
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 0.0);

    const Tensor zeros(2, 3);
    const Tensor out2 =
        dpin::nn::affine(Tensor::vec({1.0, 1.0}), zeros, Tensor::vec({5.0, 5.0, 5.0}));
    for (int j = 0; j < 3; ++j) CHECK(out2[static_cast<std::size_t>(j)] == 5.0);
}

TEST_CASE("affine matches an independent dot-product oracle") {
    Rng rng(101);
    const Tensor x = random_tensor(1, 4, rng);
    const Tensor w = random_tensor(4, 3, rng);
    const Tensor b = random_tensor(1, 3, rng);
    const Tensor out = dpin::nn::affine(x, w, b);
    for (int j = 0; j < 3; ++j) {
        double expect = b[static_cast<std::size_t>(j)];
        for (int i = 0; i < 4; ++i) expect += x[static_cast<std::size_t>(i)] * w.at(i, j);
        CHECK(std::abs(out[static_cast<std::size_t>(j)] - expect) <= 1e-12);
    }
}

TEST_CASE("affine rejects mismatched shapes naming both") {
    const Tensor x = Tensor::vec({1.0, 2.0, 3.0});
    const Tensor w(2, 2);
    try {
        dpin::nn::affine(x, w, Tensor::vec({0.0, 0.0}));
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("1x3") != std::string::npos);
        CHECK(msg.find("2x2") != std::string::npos);
    }
}

// ------------------------------------------------------------------- mlp --

TEST_CASE("mlp output width follows the last layer width") {
    Rng rng(7);
    ParamSet params;
    dpin::nn::mlp_init(params, "net", 40, {128, 64, 32}, rng);
    const Tensor x = random_tensor(1, 40, rng);
    const Tensor out = dpin::nn::mlp_forward(x, params, "net", {128, 64, 32});
    CHECK(out.rows() == 1);
    CHECK(out.cols() == 32);
}

TEST_CASE("mlp with all-zero parameters returns the zero vector") {
    Rng rng(8);
    ParamSet params;
    dpin::nn::mlp_init(params, "net", 6, {5, 4}, rng);
    params.zero_values();
    const Tensor out = dpin::nn::mlp_forward(random_tensor(1, 6, rng), params, "net", {5, 4});
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("mlp rejects an empty width list") {
    ParamSet params;
    Rng rng(1);
    CHECK_THROWS_AS(dpin::nn::mlp_init(params, "net", 4, {}, rng), ConfigError);
}

TEST_CASE("mlp gradient matches central finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(900 + seed);
        ParamSet params;
        dpin::nn::mlp_init(params, "net", 5, {6, 4, 3}, rng);
        const Tensor x = random_tensor(1, 5, rng);
        const Tensor proj = random_tensor(1, 3, rng);
        const BuildFn build = [&x](Graph& g, const ParamSet& p) {
            return dpin::nn::mlp(g, g.input(x), p, "net", {6, 4, 3});
        };
        CHECK(checked_rel_err(params, build, proj) <= 1e-4);
    }
}

// ----------------------------------------------------------- softmax_rows --

TEST_CASE("softmax of a constant row is uniform") {
    const Tensor out = dpin::nn::softmax_rows(Tensor::vec({0.0, 0.0, 0.0}));
    for (int j = 0; j < 3; ++j) CHECK(out[static_cast<std::size_t>(j)] == 1.0 / 3.0);
}

TEST_CASE("softmax dominance limit") {
    const Tensor out = dpin::nn::softmax_rows(Tensor::vec({100.0, 0.0, 0.0}));
    CHECK(out[0] >= 1.0 - 1e-6);
}

TEST_CASE("softmax rows sum to one and stay nonnegative") {
    Rng rng(55);
    for (int rep = 0; rep < 50; ++rep) {
        const Tensor m = random_tensor(4, 4, rng, -100.0, 100.0);
        const Tensor out = dpin::nn::softmax_rows(m);
        for (int i = 0; i < out.rows(); ++i) {
            double sum = 0.0;
            for (int j = 0; j < out.cols(); ++j) {
                CHECK(out.at(i, j) >= 0.0);
                sum += out.at(i, j);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("softmax gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(910 + seed);
        ParamSet params;
        params.insert("m", random_tensor(3, 4, rng));
        const Tensor proj = random_tensor(3, 4, rng);
        const BuildFn build = [](Graph& g, const ParamSet& p) {
            return g.softmax_rows(g.param(p, "m"));
        };
        CHECK(checked_rel_err(params, build, proj) <= 1e-4);
    }
}

// ------------------------------------------------------------------ sdpa --

TEST_CASE("sdpa with a single row returns the value row") {
    Rng rng(60);
    const Tensor q = random_tensor(1, 4, rng), k = random_tensor(1, 4, rng);
    const Tensor v = random_tensor(1, 4, rng);
    const Tensor out = dpin::nn::sdpa(q, k, v, 2.0);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(out[i] == v[i]);
}

TEST_CASE("sdpa with identical value rows returns that row") {
    Rng rng(61);
    const Tensor q = random_tensor(3, 4, rng), k = random_tensor(3, 4, rng);
    Tensor v(3, 4);
    const Tensor row = random_tensor(1, 4, rng);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) v.at(i, j) = row[static_cast<std::size_t>(j)];
    const Tensor out = dpin::nn::sdpa(q, k, v, 2.0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(std::abs(out.at(i, j) - row[static_cast<std::size_t>(j)]) <= 1e-12);
}

TEST_CASE("sdpa matches a step-by-step oracle") {
    Rng rng(62);
    const Tensor q = random_tensor(3, 4, rng), k = random_tensor(3, 4, rng);
    const Tensor v = random_tensor(3, 4, rng);
    const double scale = 2.0;
    const Tensor out = dpin::nn::sdpa(q, k, v, scale);
    for (int i = 0; i < 3; ++i) {
        double logits[3];
        for (int j = 0; j < 3; ++j) {
            double dot = 0;
            for (int c = 0; c < 4; ++c) dot += q.at(i, c) * k.at(j, c);
            logits[j] = dot / scale;
        }
        const double mx = std::max({logits[0], logits[1], logits[2]});
        double weights[3], sum = 0;
        for (int j = 0; j < 3; ++j) {
            weights[j] = std::exp(logits[j] - mx);
            sum += weights[j];
        }
        for (int c = 0; c < 4; ++c) {
            double expect = 0;
            for (int j = 0; j < 3; ++j) expect += weights[j] / sum * v.at(j, c);
            CHECK(std::abs(out.at(i, c) - expect) <= 1e-12);
        }
    }
}

TEST_CASE("sdpa rejects mismatched shapes and bad scale") {
    Rng rng(63);
    const Tensor q = random_tensor(3, 4, rng);
    const Tensor k = random_tensor(3, 5, rng);
    CHECK_THROWS_AS(dpin::nn::sdpa(q, k, q, 2.0), DimensionError);
    CHECK_THROWS_AS(dpin::nn::sdpa(q, q, q, 0.0), ConfigError);
}

TEST_CASE("sdpa gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(920 + seed);
        ParamSet params;
        params.insert("q", random_tensor(3, 4, rng));
        params.insert("k", random_tensor(3, 4, rng));
        params.insert("v", random_tensor(3, 4, rng));
        const Tensor proj = random_tensor(3, 4, rng);
        const BuildFn build = [](Graph& g, const ParamSet& p) {
            return g.sdpa(g.param(p, "q"), g.param(p, "k"), g.param(p, "v"), 2.0);
        };
        CHECK(checked_rel_err(params, build, proj) <= 1e-4);
    }
}

// ------------------------------------------------------------- conv_page --

TEST_CASE("conv_page output shape is (K-m+1) x n_c") {
    Rng rng(70);
    const Tensor e = random_tensor(10, 16, rng);
    const Tensor kernels = random_tensor(32, 3 * 16, rng);
    const Tensor bias(1, 32);
    const Tensor out = dpin::nn::conv_page(e, kernels, 3, bias);
    CHECK(out.rows() == 8);
    CHECK(out.cols() == 32);

    const Tensor kernels_full = random_tensor(32, 10 * 16, rng);
    const Tensor single = dpin::nn::conv_page(e, kernels_full, 10, bias);
    CHECK(single.rows() == 1);
    CHECK(single.cols() == 32);
}

TEST_CASE("conv_page sliding sums over a column") {
    Tensor e(4, 1);
    e[0] = 1; e[1] = 2; e[2] = 3; e[3] = 4;
    Tensor kernel(1, 2);
    kernel.fill(1.0);
    const Tensor out = dpin::nn::conv_page(e, kernel, 2, Tensor(1, 1));
    CHECK(out.rows() == 3);
    CHECK(out.at(0, 0) == 3.0);
    CHECK(out.at(1, 0) == 5.0);
    CHECK(out.at(2, 0) == 7.0);
}

TEST_CASE("conv_page rejects windows larger than the page") {
    Rng rng(71);
    const Tensor e = random_tensor(3, 4, rng);
    const Tensor kernels = random_tensor(2, 5 * 4, rng);
    CHECK_THROWS_AS(dpin::nn::conv_page(e, kernels, 5, Tensor(1, 2)), DimensionError);
}

TEST_CASE("conv_page gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(930 + seed);
        ParamSet params;
        params.insert("e", random_tensor(5, 3, rng));
        params.insert("k", random_tensor(4, 2 * 3, rng));
        params.insert("b", random_tensor(1, 4, rng));
        const Tensor proj = random_tensor(4, 4, rng);
        const BuildFn build = [](Graph& g, const ParamSet& p) {
            return g.conv_page(g.param(p, "e"), g.param(p, "k"), 2, g.param(p, "b"));
        };
        CHECK(checked_rel_err(params, build, proj) <= 1e-4);
    }
}

// --------------------------------------------------------- avg_pool_rows --

TEST_CASE("avg_pool_rows columnwise means") {
    const Tensor out = dpin::nn::avg_pool_rows(Tensor::from_rows({{1, 1}, {3, 3}}));
    CHECK(out[0] == 2.0);
    CHECK(out[1] == 2.0);

    Rng rng(80);
    const Tensor row = random_tensor(1, 5, rng);
    const Tensor same = dpin::nn::avg_pool_rows(row);
    for (std::size_t i = 0; i < row.size(); ++i) CHECK(same[i] == row[i]);

    const Tensor m = random_tensor(5, 3, rng);
    const Tensor pooled = dpin::nn::avg_pool_rows(m);
    for (int j = 0; j < 3; ++j) {
        double sum = 0;
        for (int i = 0; i < 5; ++i) sum += m.at(i, j);
        CHECK(std::abs(pooled[static_cast<std::size_t>(j)] - sum / 5.0) <= 1e-12);
    }
}

TEST_CASE("avg_pool_rows gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(940 + seed);
        ParamSet params;
        params.insert("m", random_tensor(4, 3, rng));
        const Tensor proj = random_tensor(1, 3, rng);
        const BuildFn build = [](Graph& g, const ParamSet& p) {
            return g.avg_pool_rows(g.param(p, "m"));
        };
        CHECK(checked_rel_err(params, build, proj) <= 1e-4);
    }
}

// ------------------------------------------------------------- adam_step --

TEST_CASE("adam with zero gradients is an exact no-op on fresh state") {
    Rng rng(90);
    ParamSet params;
    params.insert("w", random_tensor(3, 3, rng));
    const Tensor before = params.at("w");
    TrainingHyper hyper;
    hyper.learning_rate = 1e-3;
    dpin::nn::adam_step(params, params.zeros_like(), hyper);
    CHECK(params.at("w") == before);
}

TEST_CASE("adam first step moves by about -lr") {
    ParamSet params;
    Tensor w(1, 1);
    w[0] = 0.5;
    params.insert("w", std::move(w));
    ParamSet grads = params.zeros_like();
    grads.at("w")[0] = 1.0;
    TrainingHyper hyper;
    hyper.learning_rate = 1e-3;
    dpin::nn::adam_step(params, grads, hyper);
    const double delta = 0.5 - params.at("w")[0];
    CHECK(delta == doctest::Approx(1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam on f(w)=w^2 matches a hand-stepped oracle and descends") {
    ParamSet params;
    Tensor w0(1, 1);
    w0[0] = 1.0;
    params.insert("w", std::move(w0));
    TrainingHyper hyper;
    hyper.learning_rate = 0.1;

    // Independent re-implementation of two bias-corrected updates.
    double w = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
        const double g = 2.0 * w;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mhat = m / (1.0 - std::pow(0.9, t));
        const double vhat = v / (1.0 - std::pow(0.999, t));
        w -= hyper.learning_rate * mhat / (std::sqrt(vhat) + 1e-8);
    }

    for (int t = 0; t < 2; ++t) {
        ParamSet grads = params.zeros_like();
        grads.at("w")[0] = 2.0 * params.at("w")[0];
        dpin::nn::adam_step(params, grads, hyper);
    }
    CHECK(params.at("w")[0] == doctest::Approx(w).epsilon(1e-12));
    CHECK(params.at("w")[0] * params.at("w")[0] < 1.0);
}

TEST_CASE("adam rejects missing gradient keys") {
    Rng rng(91);
    ParamSet params;
    params.insert("a", random_tensor(2, 2, rng));
    params.insert("b", random_tensor(2, 2, rng));
    ParamSet grads;
    grads.insert("a", Tensor(2, 2));
    TrainingHyper hyper;
    CHECK_THROWS_AS(dpin::nn::adam_step(params, grads, hyper),
                    dpin::ConsistencyError);
}

// ------------------------------------------------------------ grad_check --

TEST_CASE("grad_check on w^2 at w=3") {
    ParamSet params;
    Tensor w(1, 1);
    w[0] = 3.0;
    params.insert("w", std::move(w));
    ParamSet analytic = params.zeros_like();
    analytic.at("w")[0] = 6.0;
    const auto f = [](const ParamSet& p) {
        const double x = p.at("w")[0];
        return x * x;
    };
    const auto rep = dpin::nn::grad_check(params, f, analytic, 1e-6);
    CHECK(rep.max_rel_err <= 1e-10);
}

TEST_CASE("grad_check on a constant function reports zero error") {
    ParamSet params;
    params.insert("w", Tensor(1, 3));
    const auto f = [](const ParamSet&) { return 4.2; };
    const auto rep = dpin::nn::grad_check(params, f, params.zeros_like(), 1e-6);
    CHECK(rep.max_rel_err == 0.0);
}

TEST_CASE("grad_check flags non-finite analytic gradients with the path") {
    ParamSet params;
    params.insert("w", Tensor(1, 2));
    ParamSet analytic = params.zeros_like();
    analytic.at("w")[1] = std::numeric_limits<double>::quiet_NaN();
    const auto f = [](const ParamSet&) { return 0.0; };
    const auto rep = dpin::nn::grad_check(params, f, analytic, 1e-6);
    CHECK_FALSE(rep.analytic_finite);
    CHECK(rep.failure.find("w[1]") != std::string::npos);
    CHECK_FALSE(rep.passed(1e-4));
}

TEST_CASE("grad_check enforces the eps range") {
    ParamSet params;
    params.insert("w", Tensor(1, 1));
    const auto f = [](const ParamSet&) { return 0.0; };
    CHECK_THROWS_AS(dpin::nn::grad_check(params, f, params.zeros_like(), 1e-9),
                    ConfigError);
    CHECK_THROWS_AS(dpin::nn::grad_check(params, f, params.zeros_like(), 1e-3),
                    ConfigError);
}

// ---------------------------------------------------------------- purity --

TEST_CASE("forwards are pure: identical inputs give identical bits") {
    Rng rng(500);
    const Tensor q = random_tensor(3, 4, rng), k = random_tensor(3, 4, rng);
    const Tensor v = random_tensor(3, 4, rng);
    const Tensor a = dpin::nn::sdpa(q, k, v, 2.0);
    const Tensor b = dpin::nn::sdpa(q, k, v, 2.0);
    CHECK(a == b);
    CHECK(a.all_finite());
}

TEST_CASE("tensor dims must be strictly positive") {
    CHECK_THROWS_AS(Tensor(0, 3), DimensionError);
    CHECK_THROWS_AS(Tensor(2, -1), DimensionError);
}
