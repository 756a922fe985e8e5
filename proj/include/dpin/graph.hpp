#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dpin/rng.hpp"
#include "dpin/tensor.hpp"

namespace dpin::nn {

// Reverse-mode tape. Forward ops append nodes; backward() walks the tape in
// reverse creation order (which is a reverse topological order) and applies
// each op's explicit gradient rule. With recording=false the same code path
// runs as a plain forward evaluator; no backward is possible but values are
// identical bit for bit.
//
// mark()/rollback() truncate the tape back to a checkpoint, which lets
// action-enumeration loops reuse the shared part of a forward pass.
class Graph {
public:
    using Ref = std::int32_t;

    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    // --- leaves ---
    Ref input(Tensor v);
    // Leaf bound to params.at(name); cached, so repeated requests for the
    // same name share one node and one gradient buffer.
    Ref param(const ParamSet& params, const std::string& name);

    // --- ops ---
    Ref matmul(Ref a, Ref b);     // A(r x k) * B(k x c)
    Ref matmul_nt(Ref a, Ref b);  // A(r x k) * B(c x k)^T
    Ref add(Ref a, Ref b);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);  // elementwise
    Ref scale(Ref a, double s);
    Ref add_row_broadcast(Ref m, Ref b);  // M(r x c) + b(1 x c) per row
    Ref relu(Ref a);
    Ref softmax_rows(Ref a);
    Ref conv_page(Ref e, Ref kernels, int m, Ref bias);
    Ref avg_pool_rows(Ref a);
    Ref concat_cols(std::span<const Ref> parts);
    Ref stack_rows(std::span<const Ref> rows);
    Ref row(Ref m, int r);
    Ref slice_cols(Ref m, int c0, int c1);
    Ref transpose(Ref m);
    Ref gather_rows(Ref table, std::vector<int> ids);

    // --- compositions ---
    Ref affine(Ref x, Ref w, Ref b);  // x*W + b
    Ref sdpa(Ref q, Ref k, Ref v, double att_scale);

    // --- evaluation ---
    const Tensor& value(Ref r) const { return node_value(r); }
    double scalar(Ref r) const;
    void backward(Ref out, double seed = 1.0);
    const Tensor& grad(Ref r) const;
    bool has_grad(Ref r) const;
    // Accumulates parameter-leaf gradients into `grads` by name (+=).
    void grads_into(ParamSet& grads) const;

    std::size_t mark() const { return nodes_.size(); }
    void rollback(std::size_t m);
    void reset();
    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Input, Param, MatMul, MatMulNT, Add, Sub, Mul, Scale, AddRB, Relu,
        SoftmaxRows, ConvPage, AvgPoolRows, ConcatCols, StackRows, RowSel,
        SliceCols, Transpose, GatherRows,
    };

    struct Node {
        Tensor val;
        const Tensor* bound = nullptr;  // set for Param leaves
        Tensor grad;                    // lazily allocated in backward
        Op op = Op::Input;
        Ref a = -1, b = -1, c = -1;
        std::vector<Ref> list;
        std::vector<int> ids;
        int i0 = 0, i1 = 0;
        double x0 = 0.0;
    };

    const Tensor& node_value(Ref r) const {
        const Node& n = nodes_[static_cast<std::size_t>(r)];
        return n.bound ? *n.bound : n.val;
    }
    Tensor& ensure_grad(Ref r);
    Ref push(Node n);
    void backward_node(Ref r);

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, Ref>> param_refs_;
    std::map<std::string, Ref> param_cache_;
    bool recording_;
};

// --- spec-level operations as standalone functions (plain forward) ---

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor softmax_rows(const Tensor& m);
Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v, double att_scale);
Tensor conv_page(const Tensor& e, const Tensor& kernels, int m, const Tensor& bias);
Tensor avg_pool_rows(const Tensor& m);

// Multi-layer perceptron with ReLU hidden activations and an identity final
// layer. Parameters live under `prefix + ".l<i>.w|.b"`. widths holds every
// layer's output width; the last entry is the output dimension.
Graph::Ref mlp(Graph& g, Graph::Ref x, const ParamSet& params,
               const std::string& prefix, const std::vector<int>& widths);
void mlp_init(ParamSet& params, const std::string& prefix, int in_dim,
              const std::vector<int>& widths, Rng& rng);
Tensor mlp_forward(const Tensor& x, const ParamSet& params,
                   const std::string& prefix, const std::vector<int>& widths);

// Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
void glorot_init(Tensor& w, int fan_in, int fan_out, Rng& rng);

}  // namespace dpin::nn
