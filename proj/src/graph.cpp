#include "dpin/graph.hpp"

#include <cmath>
#include <limits>

#include "dpin/kernels.hpp"

namespace dpin::nn {

namespace {
const Tensor kEmpty{};
}

Graph::Ref Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
}

Graph::Ref Graph::input(Tensor v) {
    Node n;
    n.op = Op::Input;
    n.val = std::move(v);
    return push(std::move(n));
}

Graph::Ref Graph::param(const ParamSet& params, const std::string& name) {
    auto it = param_cache_.find(name);
    if (it != param_cache_.end()) return it->second;
    Node n;
    n.op = Op::Param;
    n.bound = &params.at(name);
    Ref r = push(std::move(n));
    param_cache_.emplace(name, r);
    param_refs_.emplace_back(name, r);
    return r;
}

Graph::Ref Graph::matmul(Ref a, Ref b) {
    const Tensor& av = node_value(a);
    const Tensor& bv = node_value(b);
    if (av.cols() != bv.rows())
        throw DimensionError("matmul: shape mismatch " + av.shape_str() +
                             " vs " + bv.shape_str());
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    const auto& k = kern::active();
    n.val = Tensor(av.rows(), bv.cols());
    for (int i = 0; i < av.rows(); ++i) {
        double* dst = n.val.row(i);
        const double* arow = av.row(i);
        for (int p = 0; p < av.cols(); ++p)
            k.axpy(arow[p], bv.row(p), dst, static_cast<std::size_t>(bv.cols()));
    }
    return push(std::move(n));
}

Graph::Ref Graph::matmul_nt(Ref a, Ref b) {
    const Tensor& av = node_value(a);
    const Tensor& bv = node_value(b);
    if (av.cols() != bv.cols())
        throw DimensionError("matmul_nt: shape mismatch " + av.shape_str() +
                             " vs " + bv.shape_str());
    Node n;
    n.op = Op::MatMulNT;
    n.a = a;
    n.b = b;
    const auto& k = kern::active();
    n.val = Tensor(av.rows(), bv.rows());
    for (int i = 0; i < av.rows(); ++i)
        for (int j = 0; j < bv.rows(); ++j)
            n.val.at(i, j) =
                k.dot(av.row(i), bv.row(j), static_cast<std::size_t>(av.cols()));
    return push(std::move(n));
}

Graph::Ref Graph::add(Ref a, Ref b) {
    const Tensor& av = node_value(a);
    const Tensor& bv = node_value(b);
    check_same_shape(av, bv, "add");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.val = Tensor(av.rows(), av.cols());
    kern::active().vadd(av.data(), bv.data(), n.val.data(), av.size());
    return push(std::move(n));
}

Graph::Ref Graph::sub(Ref a, Ref b) {
    const Tensor& av = node_value(a);
    const Tensor& bv = node_value(b);
    check_same_shape(av, bv, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.val = Tensor(av.rows(), av.cols());
    kern::active().vsub(av.data(), bv.data(), n.val.data(), av.size());
    return push(std::move(n));
}

Graph::Ref Graph::mul(Ref a, Ref b) {
    const Tensor& av = node_value(a);
    const Tensor& bv = node_value(b);
    check_same_shape(av, bv, "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.val = Tensor(av.rows(), av.cols());
    kern::active().vmul(av.data(), bv.data(), n.val.data(), av.size());
    return push(std::move(n));
}

Graph::Ref Graph::scale(Ref a, double s) {
    const Tensor& av = node_value(a);
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.x0 = s;
    n.val = av;
    kern::active().scal(s, n.val.data(), n.val.size());
    return push(std::move(n));
}

Graph::Ref Graph::add_row_broadcast(Ref m, Ref b) {
    const Tensor& mv = node_value(m);
    const Tensor& bv = node_value(b);
    if (bv.rows() != 1 || bv.cols() != mv.cols())
        throw DimensionError("add_row_broadcast: shape mismatch " +
                             mv.shape_str() + " vs " + bv.shape_str());
    Node n;
    n.op = Op::AddRB;
    n.a = m;
    n.b = b;
    n.val = Tensor(mv.rows(), mv.cols());
    for (int i = 0; i < mv.rows(); ++i)
        kern::active().vadd(mv.row(i), bv.data(), n.val.row(i),
                            static_cast<std::size_t>(mv.cols()));
    return push(std::move(n));
}

Graph::Ref Graph::relu(Ref a) {
    const Tensor& av = node_value(a);
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.val = Tensor(av.rows(), av.cols());
    kern::active().relu(av.data(), n.val.data(), av.size());
    return push(std::move(n));
}

Graph::Ref Graph::softmax_rows(Ref a) {
    const Tensor& av = node_value(a);
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = a;
    n.val = Tensor(av.rows(), av.cols());
    for (int i = 0; i < av.rows(); ++i) {
        const double* x = av.row(i);
        double* y = n.val.row(i);
        double mx = x[0];
        for (int j = 1; j < av.cols(); ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (int j = 0; j < av.cols(); ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        kern::active().scal(1.0 / sum, y, static_cast<std::size_t>(av.cols()));
    }
    return push(std::move(n));
}

Graph::Ref Graph::conv_page(Ref e, Ref kernels, int m, Ref bias) {
    const Tensor& ev = node_value(e);
    const Tensor& kv = node_value(kernels);
    const Tensor& bv = node_value(bias);
    const int rows = ev.rows();
    const int d = ev.cols();
    if (m < 1 || m > rows)
        throw DimensionError("conv_page: window of " + std::to_string(m) +
                             " rows does not fit page with " +
                             std::to_string(rows) + " rows");
    if (kv.cols() != m * d)
        throw DimensionError("conv_page: kernel width " + kv.shape_str() +
                             " does not match window " + std::to_string(m) +
                             "x" + std::to_string(d));
    if (bv.rows() != 1 || bv.cols() != kv.rows())
        throw DimensionError("conv_page: bias " + bv.shape_str() +
                             " does not match kernel count " +
                             std::to_string(kv.rows()));
    const int out_rows = rows - m + 1;
    const int n_c = kv.rows();
    Node n;
    n.op = Op::ConvPage;
    n.a = e;
    n.b = kernels;
    n.c = bias;
    n.i0 = m;
    n.val = Tensor(out_rows, n_c);
    const auto& k = kern::active();
    const std::size_t win = static_cast<std::size_t>(m) * d;
    for (int i = 0; i < out_rows; ++i) {
        const double* window = ev.row(i);  // m full rows, contiguous
        double* dst = n.val.row(i);
        for (int j = 0; j < n_c; ++j)
            dst[j] = k.dot(window, kv.row(j), win) + bv[static_cast<std::size_t>(j)];
    }
    return push(std::move(n));
}

Graph::Ref Graph::avg_pool_rows(Ref a) {
    const Tensor& av = node_value(a);
    Node n;
    n.op = Op::AvgPoolRows;
    n.a = a;
    n.val = Tensor(1, av.cols());
    const auto& k = kern::active();
    for (int i = 0; i < av.rows(); ++i)
        k.axpy(1.0, av.row(i), n.val.data(), static_cast<std::size_t>(av.cols()));
    k.scal(1.0 / av.rows(), n.val.data(), static_cast<std::size_t>(av.cols()));
    return push(std::move(n));
}

Graph::Ref Graph::concat_cols(std::span<const Ref> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const int rows = node_value(parts[0]).rows();
    int cols = 0;
    for (Ref r : parts) {
        const Tensor& t = node_value(r);
        if (t.rows() != rows)
            throw DimensionError("concat_cols: row mismatch " +
                                 std::to_string(rows) + " vs " + t.shape_str());
        cols += t.cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.list.assign(parts.begin(), parts.end());
    n.val = Tensor(rows, cols);
    int off = 0;
    for (Ref r : parts) {
        const Tensor& t = node_value(r);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < t.cols(); ++j) n.val.at(i, off + j) = t.at(i, j);
        off += t.cols();
    }
    return push(std::move(n));
}

Graph::Ref Graph::stack_rows(std::span<const Ref> rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no inputs");
    const int cols = node_value(rows[0]).cols();
    Node n;
    n.op = Op::StackRows;
    n.list.assign(rows.begin(), rows.end());
    n.val = Tensor(static_cast<int>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Tensor& t = node_value(rows[i]);
        if (t.rows() != 1 || t.cols() != cols)
            throw DimensionError("stack_rows: expected 1x" +
                                 std::to_string(cols) + ", got " + t.shape_str());
        for (int j = 0; j < cols; ++j) n.val.at(static_cast<int>(i), j) = t[static_cast<std::size_t>(j)];
    }
    return push(std::move(n));
}

Graph::Ref Graph::row(Ref m, int r) {
    const Tensor& mv = node_value(m);
    if (r < 0 || r >= mv.rows())
        throw DimensionError("row: index " + std::to_string(r) + " out of " +
                             mv.shape_str());
    Node n;
    n.op = Op::RowSel;
    n.a = m;
    n.i0 = r;
    n.val = Tensor(1, mv.cols());
    for (int j = 0; j < mv.cols(); ++j) n.val[static_cast<std::size_t>(j)] = mv.at(r, j);
    return push(std::move(n));
}

Graph::Ref Graph::slice_cols(Ref m, int c0, int c1) {
    const Tensor& mv = node_value(m);
    if (c0 < 0 || c1 > mv.cols() || c0 >= c1)
        throw DimensionError("slice_cols: [" + std::to_string(c0) + "," +
                             std::to_string(c1) + ") out of " + mv.shape_str());
    Node n;
    n.op = Op::SliceCols;
    n.a = m;
    n.i0 = c0;
    n.i1 = c1;
    n.val = Tensor(mv.rows(), c1 - c0);
    for (int i = 0; i < mv.rows(); ++i)
        for (int j = c0; j < c1; ++j) n.val.at(i, j - c0) = mv.at(i, j);
    return push(std::move(n));
}

Graph::Ref Graph::transpose(Ref m) {
    const Tensor& mv = node_value(m);
    Node n;
    n.op = Op::Transpose;
    n.a = m;
    n.val = Tensor(mv.cols(), mv.rows());
    for (int i = 0; i < mv.rows(); ++i)
        for (int j = 0; j < mv.cols(); ++j) n.val.at(j, i) = mv.at(i, j);
    return push(std::move(n));
}

Graph::Ref Graph::gather_rows(Ref table, std::vector<int> ids) {
    const Tensor& tv = node_value(table);
    if (ids.empty()) throw DimensionError("gather_rows: no indices");
    for (int id : ids)
        if (id < 0 || id >= tv.rows())
            throw DimensionError("gather_rows: index " + std::to_string(id) +
                                 " out of " + tv.shape_str());
    Node n;
    n.op = Op::GatherRows;
    n.a = table;
    n.ids = std::move(ids);
    n.val = Tensor(static_cast<int>(n.ids.size()), tv.cols());
    for (std::size_t i = 0; i < n.ids.size(); ++i)
        for (int j = 0; j < tv.cols(); ++j)
            n.val.at(static_cast<int>(i), j) = tv.at(n.ids[i], j);
    return push(std::move(n));
}

Graph::Ref Graph::affine(Ref x, Ref w, Ref b) {
    return add_row_broadcast(matmul(x, w), b);
}

Graph::Ref Graph::sdpa(Ref q, Ref k, Ref v, double att_scale) {
    if (!(att_scale > 0))
        throw ConfigError("sdpa: scale must be positive");
    const Tensor& qv = node_value(q);
    const Tensor& kv = node_value(k);
    const Tensor& vv = node_value(v);
    if (!qv.same_shape(kv) || kv.rows() != vv.rows())
        throw DimensionError("sdpa: shape mismatch Q " + qv.shape_str() +
                             " K " + kv.shape_str() + " V " + vv.shape_str());
    Ref logits = scale(matmul_nt(q, k), 1.0 / att_scale);
    return matmul(softmax_rows(logits), v);
}

double Graph::scalar(Ref r) const {
    const Tensor& t = node_value(r);
    if (t.rows() != 1 || t.cols() != 1)
        throw DimensionError("scalar: node is " + t.shape_str());
    return t[0];
}

Tensor& Graph::ensure_grad(Ref r) {
    Node& n = nodes_[static_cast<std::size_t>(r)];
    if (n.grad.empty()) {
        const Tensor& v = n.bound ? *n.bound : n.val;
        n.grad = Tensor(v.rows(), v.cols());
    }
    return n.grad;
}

const Tensor& Graph::grad(Ref r) const {
    const Node& n = nodes_[static_cast<std::size_t>(r)];
    return n.grad.empty() ? kEmpty : n.grad;
}

bool Graph::has_grad(Ref r) const {
    return !nodes_[static_cast<std::size_t>(r)].grad.empty();
}

void Graph::backward(Ref out, double seed) {
    if (!recording_)
        throw ConsistencyError("backward on a non-recording graph");
    const Tensor& ov = node_value(out);
    if (ov.rows() != 1 || ov.cols() != 1)
        throw DimensionError("backward: output must be 1x1, is " + ov.shape_str());
    ensure_grad(out)[0] += seed;
    for (Ref r = out; r >= 0; --r) backward_node(r);
}

void Graph::backward_node(Ref r) {
    Node& n = nodes_[static_cast<std::size_t>(r)];
    if (n.grad.empty()) return;
    const Tensor& g = n.grad;
    const auto& k = kern::active();
    switch (n.op) {
        case Op::Input:
        case Op::Param:
            break;
        case Op::MatMul: {
            const Tensor& av = node_value(n.a);
            const Tensor& bv = node_value(n.b);
            Tensor& ga = ensure_grad(n.a);
            Tensor& gb = ensure_grad(n.b);
            // dA = g * B^T, dB = A^T * g
            for (int i = 0; i < av.rows(); ++i)
                for (int p = 0; p < av.cols(); ++p)
                    ga.at(i, p) += k.dot(g.row(i), bv.row(p),
                                         static_cast<std::size_t>(bv.cols()));
            for (int i = 0; i < av.rows(); ++i) {
                const double* arow = av.row(i);
                for (int p = 0; p < av.cols(); ++p)
                    k.axpy(arow[p], g.row(i), gb.row(p),
                           static_cast<std::size_t>(bv.cols()));
            }
            break;
        }
        case Op::MatMulNT: {
            const Tensor& av = node_value(n.a);
            const Tensor& bv = node_value(n.b);
            Tensor& ga = ensure_grad(n.a);
            Tensor& gb = ensure_grad(n.b);
            // out = A * B^T; dA = g * B, dB = g^T * A
            for (int i = 0; i < av.rows(); ++i)
                for (int j = 0; j < bv.rows(); ++j) {
                    const double gij = g.at(i, j);
                    if (gij != 0.0) {
                        k.axpy(gij, bv.row(j), ga.row(i),
                               static_cast<std::size_t>(av.cols()));
                        k.axpy(gij, av.row(i), gb.row(j),
                               static_cast<std::size_t>(av.cols()));
                    }
                }
            break;
        }
        case Op::Add:
            k.axpy(1.0, g.data(), ensure_grad(n.a).data(), g.size());
            k.axpy(1.0, g.data(), ensure_grad(n.b).data(), g.size());
            break;
        case Op::Sub:
            k.axpy(1.0, g.data(), ensure_grad(n.a).data(), g.size());
            k.axpy(-1.0, g.data(), ensure_grad(n.b).data(), g.size());
            break;
        case Op::Mul: {
            const Tensor& av = node_value(n.a);
            const Tensor& bv = node_value(n.b);
            Tensor& ga = ensure_grad(n.a);
            Tensor& gb = ensure_grad(n.b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * bv[i];
                gb[i] += g[i] * av[i];
            }
            break;
        }
        case Op::Scale:
            k.axpy(n.x0, g.data(), ensure_grad(n.a).data(), g.size());
            break;
        case Op::AddRB: {
            Tensor& gm = ensure_grad(n.a);
            Tensor& gb = ensure_grad(n.b);
            k.axpy(1.0, g.data(), gm.data(), g.size());
            for (int i = 0; i < g.rows(); ++i)
                k.axpy(1.0, g.row(i), gb.data(), static_cast<std::size_t>(g.cols()));
            break;
        }
        case Op::Relu: {
            const Tensor& av = node_value(n.a);
            k.relu_grad(av.data(), g.data(), ensure_grad(n.a).data(), g.size());
            break;
        }
        case Op::SoftmaxRows: {
            Tensor& ga = ensure_grad(n.a);
            for (int i = 0; i < g.rows(); ++i) {
                const double* y = n.val.row(i);
                const double* gy = g.row(i);
                const double dotv =
                    k.dot(gy, y, static_cast<std::size_t>(g.cols()));
                double* gx = ga.row(i);
                for (int j = 0; j < g.cols(); ++j)
                    gx[j] += (gy[j] - dotv) * y[j];
            }
            break;
        }
        case Op::ConvPage: {
            const Tensor& ev = node_value(n.a);
            const Tensor& kv = node_value(n.b);
            Tensor& ge = ensure_grad(n.a);
            Tensor& gk = ensure_grad(n.b);
            Tensor& gb = ensure_grad(n.c);
            const std::size_t win = static_cast<std::size_t>(n.i0) * ev.cols();
            for (int i = 0; i < g.rows(); ++i) {
                const double* window = ev.row(i);
                double* gwin = ge.row(i);
                for (int j = 0; j < g.cols(); ++j) {
                    const double gij = g.at(i, j);
                    if (gij != 0.0) {
                        k.axpy(gij, kv.row(j), gwin, win);
                        k.axpy(gij, window, gk.row(j), win);
                    }
                    gb[static_cast<std::size_t>(j)] += gij;
                }
            }
            break;
        }
        case Op::AvgPoolRows: {
            const Tensor& av = node_value(n.a);
            Tensor& ga = ensure_grad(n.a);
            const double inv = 1.0 / av.rows();
            for (int i = 0; i < av.rows(); ++i)
                k.axpy(inv, g.data(), ga.row(i), static_cast<std::size_t>(g.cols()));
            break;
        }
        case Op::ConcatCols: {
            int off = 0;
            for (Ref part : n.list) {
                const Tensor& pv = node_value(part);
                Tensor& gp = ensure_grad(part);
                for (int i = 0; i < pv.rows(); ++i)
                    for (int j = 0; j < pv.cols(); ++j)
                        gp.at(i, j) += g.at(i, off + j);
                off += pv.cols();
            }
            break;
        }
        case Op::StackRows: {
            for (std::size_t i = 0; i < n.list.size(); ++i)
                k.axpy(1.0, g.row(static_cast<int>(i)),
                       ensure_grad(n.list[i]).data(),
                       static_cast<std::size_t>(g.cols()));
            break;
        }
        case Op::RowSel:
            k.axpy(1.0, g.data(), ensure_grad(n.a).row(n.i0),
                   static_cast<std::size_t>(g.cols()));
            break;
        case Op::SliceCols: {
            Tensor& ga = ensure_grad(n.a);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j)
                    ga.at(i, n.i0 + j) += g.at(i, j);
            break;
        }
        case Op::Transpose: {
            Tensor& ga = ensure_grad(n.a);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
            break;
        }
        case Op::GatherRows: {
            Tensor& gt = ensure_grad(n.a);
            for (std::size_t i = 0; i < n.ids.size(); ++i)
                k.axpy(1.0, g.row(static_cast<int>(i)), gt.row(n.ids[i]),
                       static_cast<std::size_t>(g.cols()));
            break;
        }
    }
}

void Graph::grads_into(ParamSet& grads) const {
    for (const auto& [name, ref] : param_refs_) {
        const Node& n = nodes_[static_cast<std::size_t>(ref)];
        if (n.grad.empty()) continue;
        Tensor& dst = grads.at(name);
        check_same_shape(dst, n.grad, "grads_into");
        kern::active().axpy(1.0, n.grad.data(), dst.data(), dst.size());
    }
}

void Graph::rollback(std::size_t m) {
    if (m > nodes_.size())
        throw ConsistencyError("rollback past the end of the tape");
    nodes_.resize(m);
    while (!param_refs_.empty() &&
           static_cast<std::size_t>(param_refs_.back().second) >= m) {
        param_cache_.erase(param_refs_.back().first);
        param_refs_.pop_back();
    }
}

void Graph::reset() {
    nodes_.clear();
    param_refs_.clear();
    param_cache_.clear();
}

// --- standalone spec-level forwards ---

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    Graph g(false);
    return g.value(g.affine(g.input(x), g.input(w), g.input(b)));
}

Tensor softmax_rows(const Tensor& m) {
    Graph g(false);
    return g.value(g.softmax_rows(g.input(m)));
}

Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v, double att_scale) {
    Graph g(false);
    return g.value(g.sdpa(g.input(q), g.input(k), g.input(v), att_scale));
}

Tensor conv_page(const Tensor& e, const Tensor& kernels, int m, const Tensor& bias) {
    Graph g(false);
    return g.value(g.conv_page(g.input(e), g.input(kernels), m, g.input(bias)));
}

Tensor avg_pool_rows(const Tensor& m) {
    Graph g(false);
    return g.value(g.avg_pool_rows(g.input(m)));
}

Graph::Ref mlp(Graph& g, Graph::Ref x, const ParamSet& params,
               const std::string& prefix, const std::vector<int>& widths) {
    if (widths.empty())
        throw ConfigError("mlp '" + prefix + "': empty layer width list");
    Graph::Ref h = x;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        h = g.affine(h, g.param(params, base + ".w"), g.param(params, base + ".b"));
        if (l + 1 < widths.size()) h = g.relu(h);
    }
    return h;
}

void mlp_init(ParamSet& params, const std::string& prefix, int in_dim,
              const std::vector<int>& widths, Rng& rng) {
    if (widths.empty())
        throw ConfigError("mlp '" + prefix + "': empty layer width list");
    int d = in_dim;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        Tensor w(d, widths[l]);
        glorot_init(w, d, widths[l], rng);
        params.insert(base + ".w", std::move(w));
        params.insert(base + ".b", Tensor(1, widths[l]));
        d = widths[l];
    }
}

Tensor mlp_forward(const Tensor& x, const ParamSet& params,
                   const std::string& prefix, const std::vector<int>& widths) {
    Graph g(false);
    return g.value(mlp(g, g.input(x), params, prefix, widths));
}

void glorot_init(Tensor& w, int fan_in, int fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-s, s);
}

}  // namespace dpin::nn
