#include "anynet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "anynet/error.hpp"
#include "anynet/kernels.hpp"

namespace anynet {

int ParamStore::add_slot(std::string name, std::size_t rows, std::size_t cols) {
    require(rows > 0 && cols > 0, ErrorKind::Config, "slot '" + name + "' needs positive extents");
    Slot s;
    s.name = std::move(name);
    s.offset = values.size();
    s.rows = rows;
    s.cols = cols;
    slots.push_back(s);
    values.resize(values.size() + rows * cols, 0.0);
    return static_cast<int>(slots.size()) - 1;
}

std::span<double> ParamStore::slot_span(int slot) {
    const Slot& s = slots.at(static_cast<std::size_t>(slot));
    return {values.data() + s.offset, s.size()};
}

std::span<const double> ParamStore::slot_span(int slot) const {
    const Slot& s = slots.at(static_cast<std::size_t>(slot));
    return {values.data() + s.offset, s.size()};
}

int Graph::append(Node n) {
    for (int in : n.inputs) {
        require(in >= 0 && in < static_cast<int>(nodes_.size()), ErrorKind::State,
                "node input out of order");
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::add_input(std::size_t dim) {
    require(input_node_ < 0, ErrorKind::State, "graph already has an input node");
    Node n;
    n.kind = OpKind::Input;
    n.out_dim = dim;
    input_node_ = append(std::move(n));
    return input_node_;
}

int Graph::add_affine(std::vector<int> inputs, std::vector<int> weight_slots, int bias_slot,
                      std::size_t out_dim, const ParamStore& store) {
    require(!inputs.empty() && inputs.size() == weight_slots.size(), ErrorKind::Config,
            "affine needs one weight slot per input branch");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Slot& w = store.slots.at(static_cast<std::size_t>(weight_slots[i]));
        require(w.rows == nodes_.at(static_cast<std::size_t>(inputs[i])).out_dim,
                ErrorKind::Dimension, "affine branch width mismatch for slot " + w.name);
        require(w.cols == out_dim, ErrorKind::Dimension, "affine output width mismatch");
    }
    if (bias_slot >= 0) {
        const Slot& b = store.slots.at(static_cast<std::size_t>(bias_slot));
        require(b.size() == out_dim, ErrorKind::Dimension, "bias width mismatch");
    }
    Node n;
    n.kind = OpKind::Affine;
    n.inputs = std::move(inputs);
    n.weight_slots = std::move(weight_slots);
    n.bias_slot = bias_slot;
    n.out_dim = out_dim;
    return append(std::move(n));
}

int Graph::add_relu(int input) {
    Node n;
    n.kind = OpKind::Relu;
    n.inputs = {input};
    n.out_dim = nodes_.at(static_cast<std::size_t>(input)).out_dim;
    return append(std::move(n));
}

int Graph::add_sum(std::vector<int> inputs) {
    require(!inputs.empty(), ErrorKind::Config, "sum aggregation needs at least one input");
    const std::size_t dim = nodes_.at(static_cast<std::size_t>(inputs[0])).out_dim;
    for (int in : inputs) {
        require(nodes_.at(static_cast<std::size_t>(in)).out_dim == dim, ErrorKind::Dimension,
                "sum aggregation over mismatched widths");
    }
    Node n;
    n.kind = OpKind::Add;
    n.inputs = std::move(inputs);
    n.out_dim = dim;
    return append(std::move(n));
}

int Graph::add_reduce_sum(int input) {
    Node n;
    n.kind = OpKind::ReduceSum;
    n.inputs = {input};
    n.out_dim = 1;
    return append(std::move(n));
}

int Graph::add_squared_loss(int input) {
    Node n;
    n.kind = OpKind::SquaredLoss;
    n.inputs = {input};
    n.out_dim = 1;
    return append(std::move(n));
}

int Graph::add_softmax_xent(int logits) {
    Node n;
    n.kind = OpKind::SoftmaxXent;
    n.inputs = {logits};
    n.out_dim = 1;
    return append(std::move(n));
}

int Graph::add_weighted_loss(std::vector<int> xent_nodes) {
    for (int id : xent_nodes) {
        require(nodes_.at(static_cast<std::size_t>(id)).kind == OpKind::SoftmaxXent ||
                    nodes_.at(static_cast<std::size_t>(id)).kind == OpKind::SquaredLoss,
                ErrorKind::Config, "weighted loss combines loss nodes only");
    }
    Node n;
    n.kind = OpKind::WeightedLoss;
    n.inputs = std::move(xent_nodes);
    n.out_dim = 1;
    return append(std::move(n));
}

void Graph::annotate(int node, int depth, int stripe, int intro_stage) {
    Node& n = nodes_.at(static_cast<std::size_t>(node));
    n.depth = depth;
    n.stripe = stripe;
    n.intro_stage = intro_stage;
}

std::size_t Graph::input_dim() const {
    require(input_node_ >= 0, ErrorKind::State, "graph has no input node");
    return nodes_[static_cast<std::size_t>(input_node_)].out_dim;
}

namespace {

// Loss nodes that cannot evaluate without labels; skipped on plain
// evaluation passes so the same graph serves both uses.
bool needs_labels(OpKind k) { return k == OpKind::SoftmaxXent || k == OpKind::WeightedLoss; }

}  // namespace

Trace Graph::forward(const ParamStore& store, const Tensor& x, std::span<const int> labels,
                     std::span<const double> loss_weights) const {
    require(input_node_ >= 0, ErrorKind::State, "graph has no input node");
    require(x.rank() == 2, ErrorKind::Dimension, "graph input must be batch x dim");
    require(x.cols() == input_dim(), ErrorKind::Dimension,
            "graph input width " + std::to_string(x.cols()) + " != expected " +
                std::to_string(input_dim()));

    const std::size_t batch = x.rows();
    Trace trace;
    trace.node_count = nodes_.size();
    trace.values.resize(nodes_.size());
    trace.xent_probs.resize(nodes_.size());
    trace.labels.assign(labels.begin(), labels.end());

    const bool with_labels = !labels.empty();
    if (with_labels) {
        require(labels.size() == batch, ErrorKind::Dimension, "label count != batch size");
    }

    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (needs_labels(n.kind) && !with_labels) continue;  // evaluation-only pass
        switch (n.kind) {
            case OpKind::Input:
                trace.values[id] = x;
                break;
            case OpKind::Affine: {
                Tensor out(batch, n.out_dim);
                for (std::size_t b = 0; b < n.inputs.size(); ++b) {
                    const Tensor& in = trace.values[static_cast<std::size_t>(n.inputs[b])];
                    const Slot& w = store.slots[static_cast<std::size_t>(n.weight_slots[b])];
                    kernels::matmul_nn(in.data.data(), store.values.data() + w.offset,
                                       out.data.data(), batch, w.rows, w.cols);
                }
                if (n.bias_slot >= 0) {
                    const Slot& bslot = store.slots[static_cast<std::size_t>(n.bias_slot)];
                    for (std::size_t r = 0; r < batch; ++r) {
                        kernels::add_inplace(out.data.data() + r * n.out_dim,
                                             store.values.data() + bslot.offset, n.out_dim);
                    }
                }
                trace.values[id] = std::move(out);
                break;
            }
            case OpKind::Relu:
                trace.values[id] = relu(trace.values[static_cast<std::size_t>(n.inputs[0])]);
                break;
            case OpKind::Add: {
                Tensor out = trace.values[static_cast<std::size_t>(n.inputs[0])];
                for (std::size_t b = 1; b < n.inputs.size(); ++b) {
                    const Tensor& in = trace.values[static_cast<std::size_t>(n.inputs[b])];
                    kernels::add_inplace(out.data.data(), in.data.data(), out.data.size());
                }
                trace.values[id] = std::move(out);
                break;
            }
            case OpKind::ReduceSum: {
                const Tensor& in = trace.values[static_cast<std::size_t>(n.inputs[0])];
                double total = 0.0;
                for (double v : in.data) total += v;
                trace.values[id] = Tensor::scalar(total);
                break;
            }
            case OpKind::SquaredLoss: {
                const Tensor& in = trace.values[static_cast<std::size_t>(n.inputs[0])];
                double total = 0.0;
                for (double v : in.data) total += v * v;
                trace.values[id] = Tensor::scalar(0.5 * total);
                break;
            }
            case OpKind::SoftmaxXent: {
                const Tensor& logits = trace.values[static_cast<std::size_t>(n.inputs[0])];
                SoftmaxXentResult r = softmax_xent(logits, labels);
                trace.values[id] = Tensor::scalar(r.loss);
                trace.xent_probs[id] = std::move(r.probs);
                break;
            }
            case OpKind::WeightedLoss: {
                std::vector<double> k(n.inputs.size(), 1.0);
                if (!loss_weights.empty()) {
                    require(loss_weights.size() == n.inputs.size(), ErrorKind::Config,
                            "loss weight count != loss count");
                    k.assign(loss_weights.begin(), loss_weights.end());
                }
                double ksum = 0.0;
                for (double v : k) ksum += v;
                require(ksum > 0.0, ErrorKind::Config, "loss weights sum to zero");
                double acc = 0.0;
                for (std::size_t b = 0; b < n.inputs.size(); ++b) {
                    const Tensor& li = trace.values[static_cast<std::size_t>(n.inputs[b])];
                    if (li.data.empty()) {
                        raise(ErrorKind::State, "weighted loss over unevaluated loss node");
                    }
                    acc += k[b] * li.item();
                }
                trace.values[id] = Tensor::scalar(acc / ksum);
                trace.loss_weights = std::move(k);
                break;
            }
        }
    }

    if (loss_node_ >= 0 && !trace.values[static_cast<std::size_t>(loss_node_)].data.empty()) {
        trace.has_loss = true;
        trace.loss = trace.values[static_cast<std::size_t>(loss_node_)].item();
    }
    return trace;
}

std::vector<double> Graph::backward(const ParamStore& store, const Trace& trace) const {
    require(trace.node_count == nodes_.size(), ErrorKind::State, "trace from a different graph");
    require(loss_node_ >= 0, ErrorKind::State, "graph has no loss node");
    require(trace.has_loss, ErrorKind::State, "backward before forward");

    std::vector<double> grad(store.total(), 0.0);
    std::vector<Tensor> cot(nodes_.size());
    cot[static_cast<std::size_t>(loss_node_)] = Tensor::scalar(1.0);

    auto ensure_cot = [&](int id, std::size_t rows, std::size_t dim) -> Tensor& {
        Tensor& t = cot[static_cast<std::size_t>(id)];
        if (t.data.empty()) t = Tensor(rows, dim);
        return t;
    };

    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const Tensor& my_cot = cot[static_cast<std::size_t>(id)];
        if (my_cot.data.empty()) continue;  // not on a path to the loss

        switch (n.kind) {
            case OpKind::Input:
                break;
            case OpKind::Affine: {
                const std::size_t batch = my_cot.rows();
                for (std::size_t b = 0; b < n.inputs.size(); ++b) {
                    const int in_id = n.inputs[b];
                    const Tensor& in = trace.values[static_cast<std::size_t>(in_id)];
                    const Slot& w = store.slots[static_cast<std::size_t>(n.weight_slots[b])];
                    // d in += cot * W^T
                    Tensor& in_cot = ensure_cot(in_id, batch, w.rows);
                    kernels::matmul_nt(my_cot.data.data(), store.values.data() + w.offset,
                                       in_cot.data.data(), batch, w.cols, w.rows);
                    // d W += in^T * cot
                    kernels::matmul_tn(in.data.data(), my_cot.data.data(), grad.data() + w.offset,
                                       w.rows, batch, w.cols);
                }
                if (n.bias_slot >= 0) {
                    const Slot& bslot = store.slots[static_cast<std::size_t>(n.bias_slot)];
                    for (std::size_t r = 0; r < batch; ++r) {
                        kernels::add_inplace(grad.data() + bslot.offset,
                                             my_cot.data.data() + r * n.out_dim, n.out_dim);
                    }
                }
                break;
            }
            case OpKind::Relu: {
                const int in_id = n.inputs[0];
                const Tensor& in = trace.values[static_cast<std::size_t>(in_id)];
                Tensor& in_cot = ensure_cot(in_id, my_cot.rows(), my_cot.cols());
                kernels::relu_backward(in.data.data(), my_cot.data.data(), in_cot.data.data(),
                                       in.data.size());
                break;
            }
            case OpKind::Add:
                for (int in_id : n.inputs) {
                    Tensor& in_cot = ensure_cot(in_id, my_cot.rows(), my_cot.cols());
                    kernels::add_inplace(in_cot.data.data(), my_cot.data.data(),
                                         my_cot.data.size());
                }
                break;
            case OpKind::ReduceSum: {
                const int in_id = n.inputs[0];
                const Tensor& in = trace.values[static_cast<std::size_t>(in_id)];
                Tensor& in_cot = ensure_cot(in_id, in.rows(), in.cols());
                const double seed = my_cot.item();
                for (double& v : in_cot.data) v += seed;
                break;
            }
            case OpKind::SquaredLoss: {
                const int in_id = n.inputs[0];
                const Tensor& in = trace.values[static_cast<std::size_t>(in_id)];
                Tensor& in_cot = ensure_cot(in_id, in.rows(), in.cols());
                kernels::axpy(my_cot.item(), in.data.data(), in_cot.data.data(), in.data.size());
                break;
            }
            case OpKind::SoftmaxXent: {
                const int in_id = n.inputs[0];
                const Tensor& probs = trace.xent_probs[static_cast<std::size_t>(id)];
                require(!probs.data.empty(), ErrorKind::State, "backward before forward");
                Tensor dlogits = softmax_xent_backward(probs, trace.labels, my_cot.item());
                Tensor& in_cot = ensure_cot(in_id, dlogits.rows(), dlogits.cols());
                kernels::add_inplace(in_cot.data.data(), dlogits.data.data(),
                                     dlogits.data.size());
                break;
            }
            case OpKind::WeightedLoss: {
                double ksum = 0.0;
                for (double v : trace.loss_weights) ksum += v;
                for (std::size_t b = 0; b < n.inputs.size(); ++b) {
                    Tensor& in_cot = ensure_cot(n.inputs[b], 1, 1);
                    in_cot.data[0] += my_cot.item() * trace.loss_weights[b] / ksum;
                }
                break;
            }
        }
    }
    return grad;
}

double Graph::finite_diff_check(const ParamStore& store, const Tensor& x,
                                std::span<const int> labels, double eps) const {
    require(eps > 0.0, ErrorKind::Config, "finite difference eps must be positive");
    Trace trace = forward(store, x, labels);
    const std::vector<double> bp = backward(store, trace);

    ParamStore probe = store;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
        const double saved = probe.values[i];
        probe.values[i] = saved + eps;
        const double up = forward(probe, x, labels).loss;
        probe.values[i] = saved - eps;
        const double down = forward(probe, x, labels).loss;
        probe.values[i] = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double denom = std::max(1e-12, std::abs(fd) + std::abs(bp[i]));
        worst = std::max(worst, std::abs(fd - bp[i]) / denom);
    }
    return worst;
}

std::vector<int> Graph::used_slots() const {
    std::set<int> seen;
    for (const Node& n : nodes_) {
        for (int w : n.weight_slots) seen.insert(w);
        if (n.bias_slot >= 0) seen.insert(n.bias_slot);
    }
    return {seen.begin(), seen.end()};
}

std::size_t Graph::flops() const {
    std::size_t macs = 0;
    for (const Node& n : nodes_) {
        if (n.kind != OpKind::Affine) continue;
        for (std::size_t b = 0; b < n.inputs.size(); ++b) {
            macs += nodes_[static_cast<std::size_t>(n.inputs[b])].out_dim * n.out_dim;
        }
    }
    return macs;
}

void Graph::validate(const ParamStore& store) const {
    std::set<int> seen;
    for (const Node& n : nodes_) {
        for (int w : n.weight_slots) {
            require(w >= 0 && w < static_cast<int>(store.slots.size()), ErrorKind::Config,
                    "weight slot out of range");
            require(seen.insert(w).second, ErrorKind::Config,
                    "slot " + store.slots[static_cast<std::size_t>(w)].name +
                        " owned by more than one node");
        }
        if (n.bias_slot >= 0) {
            require(seen.insert(n.bias_slot).second, ErrorKind::Config,
                    "bias slot owned by more than one node");
        }
    }
}

}  // namespace anynet
