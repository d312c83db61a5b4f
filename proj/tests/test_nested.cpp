#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <string>

#include "anynet/error.hpp"
#include "anynet/nested.hpp"
#include "anynet/rng.hpp"

using namespace anynet;

namespace {

StagePlan make_plan(NestMode mode, int n, int w, int k, int classes = 3, int input_dim = 2) {
    StagePlan p;
    p.mode = mode;
    p.num_stages = n;
    p.base_width = w;
    p.base_depth = k;
    p.num_classes = classes;
    p.input_dim = input_dim;
    return p;
}

Tensor random_input(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor x(rows, cols);
    for (double& v : x.data) v = rng.normal();
    return x;
}

// Visible width of a stage = summed output widths of its final-layer stripes,
// read off the head's input branches.
std::size_t visible_width_of(const NestedNetwork& net, int stage) {
    const Graph& g = net.stage_graph(stage);
    const Node& head = g.nodes()[static_cast<std::size_t>(g.logits_node())];
    std::size_t total = 0;
    for (int in : head.inputs) total += g.nodes()[static_cast<std::size_t>(in)].out_dim;
    return total;
}

// Absolute trunk layer ids used by a stage, parsed from its weight slot names.
std::set<int> selected_layers_of(const NestedNetwork& net, int stage) {
    std::set<int> layers;
    for (int slot : net.stage_graph(stage).used_slots()) {
        const std::string& name = net.params().slots[static_cast<std::size_t>(slot)].name;
        if (name.rfind("w.l", 0) == 0) {
            layers.insert(std::stoi(name.substr(3, name.find('.', 3) - 3)));
        }
    }
    return layers;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// Structural audit: edges go forward in depth, and inside one layer
// transition a stripe never feeds a lower stripe.
void check_feed_forward_alignment(const Graph& g) {
    const auto& nodes = g.nodes();
    for (std::size_t id = 0; id < nodes.size(); ++id) {
        const Node& v = nodes[id];
        for (int in : v.inputs) {
            REQUIRE(in < static_cast<int>(id));  // acyclic, topological
            const Node& u = nodes[static_cast<std::size_t>(in)];
            if (v.depth < 0 || u.depth < 0) continue;
            const bool forward_in_depth = u.depth < v.depth;
            const bool same_depth_ok =
                u.depth == v.depth &&
                (v.stripe < 0 || u.stripe < 0 || u.stripe <= v.stripe);
            CHECK((forward_in_depth || same_depth_ok));
        }
    }
}

// Power-of-2 rule in stage-relative indexing: aggregation sources sit at
// relative offsets 2^p from their consumer.
void check_power_of_two_offsets(const Graph& g) {
    const auto& nodes = g.nodes();
    for (const Node& v : nodes) {
        if (v.kind != OpKind::Add) continue;
        for (int in : v.inputs) {
            const Node& u = nodes[static_cast<std::size_t>(in)];
            CHECK(is_power_of_two(v.depth - u.depth));
        }
    }
    for (const Node& v : nodes) {
        if (v.kind != OpKind::Affine || v.depth < 1 || v.stripe < 0) continue;
        for (int in : v.inputs) {
            const Node& u = nodes[static_cast<std::size_t>(in)];
            if (u.depth == v.depth) continue;  // aggregation node, checked above
            CHECK(is_power_of_two(v.depth - u.depth));
        }
    }
}

std::uint64_t bits_hash(const std::vector<double>& v) {
    std::uint64_t h = 1469598103934665603ull;
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

TEST_CASE("width nesting: degenerate single stage is a plain MLP") {
    Rng rng(1);
    NestedNetwork net = build_width_nested(make_plan(NestMode::Width, 1, 6, 2), rng);
    CHECK(visible_width_of(net, 1) == 6);
    // No pruned blocks: every hidden affine has exactly one input branch.
    for (const Node& n : net.stage_graph(1).nodes()) {
        if (n.kind == OpKind::Affine && n.stripe >= 0) CHECK(n.inputs.size() == 1);
    }
}

TEST_CASE("width nesting: visible widths double per stage") {
    Rng rng(2);
    NestedNetwork net = build_width_nested(make_plan(NestMode::Width, 3, 4, 2), rng);
    CHECK(visible_width_of(net, 1) == 4);
    CHECK(visible_width_of(net, 2) == 8);
    CHECK(visible_width_of(net, 3) == 16);
}

TEST_CASE("width nesting: no block from a later stripe into an earlier one") {
    Rng rng(3);
    NestedNetwork net = build_width_nested(make_plan(NestMode::Width, 2, 4, 2), rng);
    for (const Slot& s : net.params().slots) {
        CHECK(s.name.find("s1<-s2") == std::string::npos);
    }
    // Stage-2 graph: stripe-1 units read only stripe 1.
    const Graph& g2 = net.stage_graph(2);
    for (const Node& n : g2.nodes()) {
        if (n.kind == OpKind::Affine && n.stripe == 1 && n.depth >= 2) {
            CHECK(n.inputs.size() == 1);
        }
    }
}

TEST_CASE("depth nesting: interlaced layer selections") {
    Rng rng(4);
    NestedNetwork net = build_depth_nested(make_plan(NestMode::Depth, 2, 4, 2), rng);
    CHECK(selected_layers_of(net, 1) == std::set<int>{1, 3});
    CHECK(selected_layers_of(net, 2) == std::set<int>{1, 2, 3, 4});
}

TEST_CASE("depth nesting: single stage keeps every layer and the skip pattern") {
    Rng rng(5);
    NestedNetwork net = build_depth_nested(make_plan(NestMode::Depth, 1, 4, 4), rng);
    CHECK(selected_layers_of(net, 1) == std::set<int>{1, 2, 3, 4});
    check_power_of_two_offsets(net.stage_graph(1));
}

TEST_CASE("depth nesting: three stages, gaps are powers of two") {
    Rng rng(6);
    NestedNetwork net = build_depth_nested(make_plan(NestMode::Depth, 3, 3, 1), rng);
    CHECK(selected_layers_of(net, 1) == std::set<int>{1});
    CHECK(selected_layers_of(net, 2) == std::set<int>{1, 3});
    CHECK(selected_layers_of(net, 3) == std::set<int>{1, 2, 3, 4});
    for (int stage = 1; stage <= 3; ++stage) {
        const auto layers = selected_layers_of(net, stage);
        std::vector<int> sorted(layers.begin(), layers.end());
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            CHECK(is_power_of_two(sorted[i] - sorted[i - 1]));
        }
        check_power_of_two_offsets(net.stage_graph(stage));
    }
}

TEST_CASE("width-depth alternating: stage size schedule") {
    Rng rng(7);
    NestedNetwork net = build_width_depth_nested(
        make_plan(NestMode::WidthDepthAlternating, 5, 2, 1), rng);
    const std::size_t widths[] = {2, 4, 4, 8, 8};
    const std::size_t depths[] = {1, 1, 2, 2, 4};
    for (int i = 1; i <= 5; ++i) {
        CHECK(visible_width_of(net, i) == widths[i - 1]);
        CHECK(selected_layers_of(net, i).size() == depths[i - 1]);
    }
}

TEST_CASE("width-depth simultaneous: both double per stage") {
    Rng rng(8);
    NestedNetwork net = build_width_depth_nested(
        make_plan(NestMode::WidthDepthSimultaneous, 3, 3, 2), rng);
    const std::size_t widths[] = {3, 6, 12};
    const std::size_t depths[] = {2, 4, 8};
    for (int i = 1; i <= 3; ++i) {
        CHECK(visible_width_of(net, i) == widths[i - 1]);
        CHECK(selected_layers_of(net, i).size() == depths[i - 1]);
    }
}

TEST_CASE("width-depth: single stage degenerates to the plain substrate") {
    Rng rng(9);
    NestedNetwork net = build_width_depth_nested(
        make_plan(NestMode::WidthDepthAlternating, 1, 4, 2), rng);
    CHECK(visible_width_of(net, 1) == 4);
    CHECK(selected_layers_of(net, 1).size() == 2);
}

TEST_CASE("even width: visible widths grow linearly") {
    Rng rng(10);
    NestedNetwork net = build_even_width(make_plan(NestMode::EvenWidth, 4, 4, 2), rng);
    CHECK(visible_width_of(net, 1) == 4);
    CHECK(visible_width_of(net, 2) == 8);
    CHECK(visible_width_of(net, 3) == 12);
    CHECK(visible_width_of(net, 4) == 16);
}

TEST_CASE("even width prunes strictly more edges than power-of-2 nesting") {
    // Equal final width 16, depth 2: even 4x4 stripes vs power-of-2 from w=2.
    Rng rng(11);
    NestedNetwork even = build_even_width(make_plan(NestMode::EvenWidth, 4, 4, 2), rng);
    NestedNetwork pow2 = build_width_nested(make_plan(NestMode::Width, 4, 2, 2), rng);

    auto pruned_hidden_edges = [](const NestedNetwork& net, std::size_t full_width) {
        std::size_t present = 0;
        std::size_t transitions = 0;
        std::set<int> layers;
        for (const Slot& s : net.params().slots) {
            if (s.name.rfind("w.l", 0) == 0 && s.name.rfind("w.l1.", 0) != 0) {
                present += s.size();
                layers.insert(std::stoi(s.name.substr(3, s.name.find('.', 3) - 3)));
            }
        }
        transitions = layers.size();
        return transitions * full_width * full_width - present;
    };

    const std::size_t even_pruned = pruned_hidden_edges(even, 16);
    const std::size_t pow2_pruned = pruned_hidden_edges(pow2, 16);
    CHECK(even_pruned == 96);
    CHECK(pow2_pruned == 84);
    CHECK(even_pruned > pow2_pruned);
}

TEST_CASE("eann cascade: branch points at exponentially spaced depths") {
    Rng rng(12);
    NestedNetwork net = build_eann_cascade(make_plan(NestMode::EannCascade, 4, 3, 2), rng);
    CHECK(selected_layers_of(net, 1).size() == 2);
    CHECK(selected_layers_of(net, 2).size() == 4);
    CHECK(selected_layers_of(net, 3).size() == 8);
    CHECK(selected_layers_of(net, 4).size() == 16);
    // Prefix masks: stage i uses layers 1..branch(i).
    for (int stage = 1; stage <= 4; ++stage) {
        const auto layers = selected_layers_of(net, stage);
        const int branch = 2 << (stage - 1);
        for (int d = 1; d <= branch; ++d) CHECK(layers.count(d) == 1);
        CHECK(static_cast<int>(layers.size()) == branch);
    }
}

TEST_CASE("eann cascade: single stage is a plain trunk with one head") {
    Rng rng(13);
    NestedNetwork net = build_eann_cascade(make_plan(NestMode::EannCascade, 1, 4, 3), rng);
    CHECK(net.num_stages() == 1);
    CHECK(selected_layers_of(net, 1).size() == 3);
}

TEST_CASE("builders reject mismatched modes") {
    Rng rng(14);
    CHECK_THROWS_AS(build_width_nested(make_plan(NestMode::Depth, 2, 4, 1), rng), Error);
    CHECK_THROWS_AS(build_depth_nested(make_plan(NestMode::Width, 2, 4, 1), rng), Error);
    CHECK_THROWS_AS(build_eann_cascade(make_plan(NestMode::EvenWidth, 2, 4, 1), rng), Error);
    StagePlan bad = make_plan(NestMode::Width, 0, 4, 1);
    CHECK_THROWS_AS(NestedNetwork::build(bad, rng), Error);
}

namespace {

const NestMode kAllModes[] = {NestMode::Width,
                              NestMode::Depth,
                              NestMode::WidthDepthAlternating,
                              NestMode::WidthDepthSimultaneous,
                              NestMode::EvenWidth,
                              NestMode::EannCascade};

}  // namespace

TEST_CASE("mask monotonicity and full coverage for every mode") {
    Rng rng(15);
    for (NestMode mode : kAllModes) {
        for (int trial = 0; trial < 2; ++trial) {
            const int n = 1 + static_cast<int>(rng.uniform_int(5));
            const StagePlan plan = make_plan(mode, n, 1 + static_cast<int>(rng.uniform_int(3)),
                                             1 + static_cast<int>(rng.uniform_int(2)));
            NestedNetwork net = NestedNetwork::build(plan, rng);
            for (std::size_t slot = 0; slot < net.params().slots.size(); ++slot) {
                const int id = static_cast<int>(slot);
                for (int stage = 1; stage < n; ++stage) {
                    if (net.trunk_slot_in_stage(id, stage)) {
                        CHECK(net.trunk_slot_in_stage(id, stage + 1));
                    }
                }
                if (net.is_trunk_slot(id)) CHECK(net.trunk_slot_in_stage(id, n));
            }
        }
    }
}

TEST_CASE("stage isolation: parameters outside the stage never affect it") {
    Rng rng(16);
    for (NestMode mode : kAllModes) {
        const StagePlan plan = make_plan(mode, 3, 2, 1);
        NestedNetwork net = NestedNetwork::build(plan, rng);
        const Tensor x = random_input(rng, 4, 2);
        for (int stage = 1; stage <= 2; ++stage) {
            const Tensor before = net.forward_stage(stage, x);
            ParamStore& store = net.params();
            bool perturbed = false;
            for (std::size_t slot = 0; slot < store.slots.size(); ++slot) {
                if (net.slot_in_stage(static_cast<int>(slot), stage)) continue;
                for (double& v : store.slot_span(static_cast<int>(slot))) v = rng.normal() * 10.0;
                perturbed = true;
            }
            REQUIRE(perturbed);
            const Tensor after = net.forward_stage(stage, x);
            REQUIRE(before.data.size() == after.data.size());
            CHECK(std::memcmp(before.data.data(), after.data.data(),
                              before.data.size() * sizeof(double)) == 0);
        }
    }
}

TEST_CASE("forward_stage matches the standalone extraction") {
    Rng rng(17);
    for (NestMode mode : kAllModes) {
        const StagePlan plan = make_plan(mode, 3, 2, 2);
        NestedNetwork net = NestedNetwork::build(plan, rng);
        for (int stage = 1; stage <= 3; ++stage) {
            const StandaloneNet alone = net.extract_standalone(stage);
            for (int rep = 0; rep < 10; ++rep) {
                const Tensor x = random_input(rng, 3, 2);
                const Tensor nested = net.forward_stage(stage, x);
                Trace t = alone.graph.forward(alone.store, x);
                const Tensor& free =
                    t.values[static_cast<std::size_t>(alone.graph.logits_node())];
                REQUIRE(nested.data.size() == free.data.size());
                for (std::size_t i = 0; i < nested.data.size(); ++i) {
                    CHECK(std::abs(nested.data[i] - free.data[i]) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("standalone parameter count equals mask plus head size") {
    Rng rng(18);
    for (NestMode mode : kAllModes) {
        const StagePlan plan = make_plan(mode, 3, 3, 2);
        NestedNetwork net = NestedNetwork::build(plan, rng);
        for (int stage = 1; stage <= 3; ++stage) {
            const StandaloneNet alone = net.extract_standalone(stage);
            CHECK(alone.store.total() == net.stage_dim(stage));
        }
        // Final stage: the whole trunk plus its head.
        std::size_t trunk_total = 0;
        for (std::size_t slot = 0; slot < net.params().slots.size(); ++slot) {
            if (net.is_trunk_slot(static_cast<int>(slot))) {
                trunk_total += net.params().slots[slot].size();
            }
        }
        std::size_t head_total = 0;
        for (int slot : net.head_slots(3)) {
            head_total += net.params().slots[static_cast<std::size_t>(slot)].size();
        }
        CHECK(net.extract_standalone(3).store.total() == trunk_total + head_total);
    }
}

TEST_CASE("width n=2 standalone stage 1 is a plain MLP of width w") {
    Rng rng(19);
    NestedNetwork net = build_width_nested(make_plan(NestMode::Width, 2, 5, 2), rng);
    const StandaloneNet alone = net.extract_standalone(1);
    for (const Node& n : alone.graph.nodes()) {
        if (n.kind == OpKind::Affine) {
            CHECK(n.inputs.size() == 1);
            if (n.stripe >= 0) CHECK(n.out_dim == 5);
        }
        CHECK(n.kind != OpKind::Add);
    }
}

TEST_CASE("flops: plain affine layers count m*n multiply-accumulates") {
    Rng rng(20);
    NestedNetwork net = build_width_nested(make_plan(NestMode::Width, 1, 7, 1, 4, 3), rng);
    // input(3) -> layer(7) -> head(4)
    CHECK(net.flops(1) == 3 * 7 + 7 * 4);
}

TEST_CASE("flops strictly increase per stage in every mode") {
    Rng rng(21);
    for (NestMode mode : kAllModes) {
        const StagePlan plan = make_plan(mode, 4, 2, 2);
        NestedNetwork net = NestedNetwork::build(plan, rng);
        for (int stage = 1; stage < 4; ++stage) {
            CHECK(net.flops(stage) < net.flops(stage + 1));
        }
    }
}

TEST_CASE("flops match an independent edge count from the slot table") {
    Rng rng(22);
    for (NestMode mode : kAllModes) {
        const StagePlan plan = make_plan(mode, 3, 2, 2);
        NestedNetwork net = NestedNetwork::build(plan, rng);
        for (int stage = 1; stage <= 3; ++stage) {
            std::size_t macs = 0;
            for (int slot : net.stage_graph(stage).used_slots()) {
                const Slot& s = net.params().slots[static_cast<std::size_t>(slot)];
                if (s.name.rfind("b.", 0) == 0 || s.name.rfind("stem.b", 0) == 0 ||
                    s.name.find(".b") == s.name.size() - 2) {
                    continue;  // biases are adds, not MACs
                }
                macs += s.size();
            }
            CHECK(net.flops(stage) == macs);
        }
    }
}

TEST_CASE("width nesting: dense square-layer MACs grow about 4x per stage") {
    Rng rng(23);
    NestedNetwork net = build_width_nested(make_plan(NestMode::Width, 3, 8, 3), rng);
    // Count only hidden square transitions (layers 2..k) per stage.
    auto hidden_macs = [&](int stage) {
        std::size_t macs = 0;
        for (int slot : net.stage_graph(stage).used_slots()) {
            const Slot& s = net.params().slots[static_cast<std::size_t>(slot)];
            if (s.name.rfind("w.l", 0) == 0 && s.name.rfind("w.l1.", 0) != 0) macs += s.size();
        }
        return macs;
    };
    const double r12 = static_cast<double>(hidden_macs(2)) / static_cast<double>(hidden_macs(1));
    const double r23 = static_cast<double>(hidden_macs(3)) / static_cast<double>(hidden_macs(2));
    // Pruning keeps the ratio at or below 4 but well above 2.
    CHECK(r12 > 2.5);
    CHECK(r12 <= 4.0);
    CHECK(r23 > 2.5);
    CHECK(r23 <= 4.0);
}

TEST_CASE("feed-forward alignment holds for every mode and random plans") {
    Rng rng(24);
    for (NestMode mode : kAllModes) {
        for (int trial = 0; trial < 2; ++trial) {
            const int n = 1 + static_cast<int>(rng.uniform_int(5));
            const StagePlan plan = make_plan(mode, n, 1 + static_cast<int>(rng.uniform_int(3)),
                                             1 + static_cast<int>(rng.uniform_int(2)));
            NestedNetwork net = NestedNetwork::build(plan, rng);
            for (int stage = 1; stage <= n; ++stage) {
                check_feed_forward_alignment(net.stage_graph(stage));
                check_power_of_two_offsets(net.stage_graph(stage));
            }
        }
    }
}

TEST_CASE("full-stage forward uses the whole network") {
    Rng rng(25);
    NestedNetwork net = build_width_nested(make_plan(NestMode::Width, 3, 3, 2), rng);
    const Tensor x = random_input(rng, 2, 2);
    const Tensor full = net.forward_stage(3, x);
    const StandaloneNet alone = net.extract_standalone(3);
    Trace t = alone.graph.forward(alone.store, x);
    const Tensor& free = t.values[static_cast<std::size_t>(alone.graph.logits_node())];
    CHECK(std::memcmp(full.data.data(), free.data.data(),
                      full.data.size() * sizeof(double)) == 0);
    CHECK_THROWS_AS(net.forward_stage(4, x), Error);
    CHECK_THROWS_AS(net.forward_stage(0, x), Error);
}

TEST_CASE("rebuilding with the same seed gives identical parameters") {
    const StagePlan plan = make_plan(NestMode::WidthDepthAlternating, 4, 2, 1);
    Rng a(42), b(42);
    NestedNetwork na = NestedNetwork::build(plan, a);
    NestedNetwork nb = NestedNetwork::build(plan, b);
    CHECK(bits_hash(na.params().values) == bits_hash(nb.params().values));
}
