#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "anynet/tensor.hpp"

namespace anynet {

// One named rectangular block of parameters inside a flat store.
struct Slot {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
};

// Flat parameter storage shared by all stage graphs of a network.
struct ParamStore {
    std::vector<Slot> slots;
    std::vector<double> values;

    int add_slot(std::string name, std::size_t rows, std::size_t cols);
    std::size_t total() const { return values.size(); }
    std::span<double> slot_span(int slot);
    std::span<const double> slot_span(int slot) const;
};

enum class OpKind {
    Input,
    Affine,       // sum of branch matmuls plus bias; branches realize block-sparse layers
    Relu,
    Add,          // elementwise sum of equal-width activations (skip aggregation)
    ReduceSum,    // sum of all elements -> scalar
    SquaredLoss,  // 0.5 * sum(x^2) -> scalar
    SoftmaxXent,  // mean cross-entropy -> scalar
    WeightedLoss, // (sum_i k_i * L_i) / sum_i k_i over loss nodes -> scalar
};

struct Node {
    OpKind kind = OpKind::Input;
    std::vector<int> inputs;        // node ids
    std::vector<int> weight_slots;  // Affine: one per input branch
    int bias_slot = -1;
    std::size_t out_dim = 0;        // feature width (1 for scalar nodes)
    // Structural annotations used by the architecture audits.
    int depth = -1;        // 0 = stem/input embedding, 1.. = trunk layer position
    int stripe = -1;       // width stripe index (1-based) when striped
    int intro_stage = -1;  // first stage whose forward computes this node's unit
};

// Result of one forward pass. Owned by the caller; a Graph itself is
// immutable after construction and can be shared across threads.
struct Trace {
    std::vector<Tensor> values;
    std::vector<Tensor> xent_probs;    // parallel to nodes; filled for SoftmaxXent
    std::vector<int> labels;
    std::vector<double> loss_weights;  // WeightedLoss coefficients used
    bool has_loss = false;
    double loss = 0.0;
    std::size_t node_count = 0;
};

// A topologically ordered computation over a ParamStore. Built once by the
// architecture layer, then used for forwards/backwards.
class Graph {
public:
    int add_input(std::size_t dim);
    int add_affine(std::vector<int> inputs, std::vector<int> weight_slots, int bias_slot,
                   std::size_t out_dim, const ParamStore& store);
    int add_relu(int input);
    int add_sum(std::vector<int> inputs);
    int add_reduce_sum(int input);
    int add_squared_loss(int input);
    int add_softmax_xent(int logits);
    int add_weighted_loss(std::vector<int> xent_nodes);

    void set_logits_node(int node) { logits_node_ = node; }
    void set_loss_node(int node) { loss_node_ = node; }
    void annotate(int node, int depth, int stripe, int intro_stage);

    int input_node() const { return input_node_; }
    int logits_node() const { return logits_node_; }
    int loss_node() const { return loss_node_; }
    std::size_t input_dim() const;
    const std::vector<Node>& nodes() const { return nodes_; }

    // Forward pass. Loss nodes are evaluated only when labels are provided
    // (or when the graph's loss does not need labels).
    Trace forward(const ParamStore& store, const Tensor& x, std::span<const int> labels = {},
                  std::span<const double> loss_weights = {}) const;

    // Exact reverse-mode gradient over the full store; slots the loss never
    // touches stay exactly zero. Requires a trace whose loss was evaluated.
    std::vector<double> backward(const ParamStore& store, const Trace& trace) const;

    // Max over coordinates of |g_fd - g_bp| / max(1e-12, |g_fd| + |g_bp|)
    // with central differences of width eps on every parameter.
    double finite_diff_check(const ParamStore& store, const Tensor& x, std::span<const int> labels,
                             double eps) const;

    // Slot ids referenced by this graph, ascending.
    std::vector<int> used_slots() const;

    // Analytic multiply-accumulate count of one forward pass per example
    // (affine edges only; parameter-free aggregation is not counted).
    std::size_t flops() const;

    // Every slot referenced at most once and all node references well formed.
    void validate(const ParamStore& store) const;

private:
    int append(Node n);
    std::vector<Node> nodes_;
    int input_node_ = -1;
    int logits_node_ = -1;
    int loss_node_ = -1;
};

}  // namespace anynet
