#pragma once

#include <map>
#include <string>
#include <vector>

#include "sea/tensor.hpp"

namespace sea {

using TensorMap = std::map<std::string, Tensor>;

enum class OpKind {
    Input,       // named leaf, bound at forward time
    MatMul,      // a:[N,*] (viewed as [N,D]) x b:[D,K] -> [N,K]
    Conv2d,      // a:[N,C,H,W] * b:[OC,C,kh,kw], stride 1, zero pad -> [N,OC,H',W']
    AddBias,     // a:[N,K]+b:[K] or a:[N,C,H,W]+b:[C]
    Relu,        // elementwise max(0,x); relu'(0)=0
    MaxPool2,    // 2x2 stride-2 max pool; first-in-scan-order tie break
    Mean,        // mean over all elements -> [1]
    SoftmaxXent, // a:logits [N,K], b:labels [N] -> per-sample loss [N]
};

const char* op_name(OpKind kind);

struct GraphNode {
    OpKind kind;
    std::string name; // Input only
    int a = -1;
    int b = -1;
    int pad = 0; // Conv2d only
};

// Static feed-forward op graph. Nodes are stored in topological order by
// construction: parents always precede children.
class Graph {
public:
    int input(std::string name);
    int matmul(int x, int w);
    int conv2d(int x, int w, int pad);
    int add_bias(int x, int b);
    int relu(int x);
    int maxpool2(int x);
    int mean(int x);
    int softmax_xent(int logits, int labels);

    const std::vector<GraphNode>& nodes() const { return nodes_; }
    int output() const { return static_cast<int>(nodes_.size()) - 1; }
    std::vector<std::string> input_names() const;

private:
    int add(GraphNode node);
    std::vector<GraphNode> nodes_;
};

// Per-evaluation state for one graph. A Graph is immutable and shareable;
// each thread evaluates through its own Session.
class Session {
public:
    explicit Session(const Graph& graph) : graph_(&graph) {}

    // Binds every Input leaf from `inputs`, runs the graph, returns the
    // output tensor. Intermediates are cached for backward.
    const Tensor& forward(const TensorMap& inputs);

    // Reverse-mode sweep from `seed` (same shape as the output). Returns
    // the gradient for every Input leaf; label inputs of SoftmaxXent get a
    // zero gradient. Requires a prior forward on this session.
    TensorMap backward(const Tensor& seed);

    const Tensor& value(int node) const { return values_[static_cast<std::size_t>(node)]; }

private:
    const Graph* graph_;
    std::vector<Tensor> values_;
    std::vector<std::vector<std::size_t>> pool_argmax_; // per MaxPool2 node
    std::vector<Tensor> softmax_cache_;                 // per SoftmaxXent node
    bool forward_done_ = false;
};

} // namespace sea
