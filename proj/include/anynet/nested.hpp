#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "anynet/graph.hpp"
#include "anynet/rng.hpp"
#include "anynet/tensor.hpp"

namespace anynet {

enum class NestMode {
    Width,                   // power-of-2 stripe widths, fixed depth
    Depth,                   // interlaced layers over a power-of-2 skip trunk
    WidthDepthAlternating,   // stage transitions double width, then depth, ...
    WidthDepthSimultaneous,  // stage transitions double width and depth together
    EvenWidth,               // equal-width stripes (prior-work baseline)
    EannCascade,             // branch heads off a single trunk prefix (prior-work baseline)
};

const char* nest_mode_name(NestMode m);
NestMode nest_mode_from_name(const std::string& name);

struct StagePlan {
    NestMode mode = NestMode::Width;
    int num_stages = 1;   // n
    int base_width = 8;   // neurons per layer in stage 1
    int base_depth = 1;   // trunk layers in stage 1
    int num_classes = 2;  // K
    int input_dim = 2;

    void validate() const;
};

// A stage materialized as a free-standing network with its own parameter
// copy; doubles as the substrate for independently trained baselines.
struct StandaloneNet {
    Graph graph;
    ParamStore store;
    int stage = 0;
    std::size_t macs = 0;
};

// One trunk parameter store, one immutable graph per stage, and the
// membership masks realizing w_1 c w_2 c ... c w_n.
class NestedNetwork {
public:
    static NestedNetwork build(const StagePlan& plan, Rng& init_rng);

    const StagePlan& plan() const { return plan_; }
    int num_stages() const { return plan_.num_stages; }

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    // Stages are 1-based throughout, matching the nesting order.
    const Graph& stage_graph(int stage) const;
    const Graph& combined_graph() const { return combined_; }
    const std::vector<int>& combined_loss_nodes() const { return combined_loss_nodes_; }

    // Logits of subnetwork `stage`; touches only that stage's parameters.
    Tensor forward_stage(int stage, const Tensor& x) const;

    // Analytic multiply-accumulate count of forward_stage per example.
    std::size_t flops(int stage) const;

    // Parameter count of the stage: trunk mask plus its head.
    std::size_t stage_dim(int stage) const;

    bool trunk_slot_in_stage(int slot, int stage) const;
    bool slot_in_stage(int slot, int stage) const;  // trunk mask or head
    const std::vector<int>& head_slots(int stage) const;
    bool is_trunk_slot(int slot) const { return trunk_slot_[static_cast<std::size_t>(slot)]; }

    // Per flat coordinate: number of stages whose parameter set covers it.
    std::vector<int> coverage_counts() const;

    StandaloneNet extract_standalone(int stage) const;

private:
    void check_stage(int stage) const;

    StagePlan plan_;
    ParamStore store_;
    std::vector<Graph> stage_graphs_;
    Graph combined_;
    std::vector<int> combined_loss_nodes_;
    std::vector<std::vector<std::uint8_t>> trunk_mask_;  // [stage][slot]
    std::vector<std::vector<int>> head_slots_;           // [stage] -> slot ids
    std::vector<std::uint8_t> trunk_slot_;               // [slot]
    std::vector<std::size_t> stage_flops_;
    std::vector<std::size_t> stage_dims_;
};

// Mode-specific constructors; each checks the plan carries the matching mode.
NestedNetwork build_width_nested(const StagePlan& plan, Rng& rng);
NestedNetwork build_depth_nested(const StagePlan& plan, Rng& rng);
NestedNetwork build_width_depth_nested(const StagePlan& plan, Rng& rng);
NestedNetwork build_even_width(const StagePlan& plan, Rng& rng);
NestedNetwork build_eann_cascade(const StagePlan& plan, Rng& rng);

}  // namespace anynet
