#include "anynet/nested.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "anynet/error.hpp"

namespace anynet {

const char* nest_mode_name(NestMode m) {
    switch (m) {
        case NestMode::Width: return "width";
        case NestMode::Depth: return "depth";
        case NestMode::WidthDepthAlternating: return "width-depth-alternating";
        case NestMode::WidthDepthSimultaneous: return "width-depth-simultaneous";
        case NestMode::EvenWidth: return "even-width";
        case NestMode::EannCascade: return "eann-cascade";
    }
    return "?";
}

NestMode nest_mode_from_name(const std::string& name) {
    if (name == "width") return NestMode::Width;
    if (name == "depth") return NestMode::Depth;
    if (name == "width-depth-alternating" || name == "alternating")
        return NestMode::WidthDepthAlternating;
    if (name == "width-depth-simultaneous" || name == "simultaneous")
        return NestMode::WidthDepthSimultaneous;
    if (name == "even-width") return NestMode::EvenWidth;
    if (name == "eann-cascade" || name == "eann") return NestMode::EannCascade;
    raise(ErrorKind::Config, "unknown nesting mode '" + name + "'");
}

void StagePlan::validate() const {
    require(num_stages >= 1, ErrorKind::Config, "plan: need num_stages >= 1");
    require(base_width >= 1, ErrorKind::Config, "plan: need base_width >= 1");
    require(base_depth >= 1, ErrorKind::Config, "plan: need base_depth >= 1");
    require(num_classes >= 2, ErrorKind::Config, "plan: need num_classes >= 2");
    require(input_dim >= 1, ErrorKind::Config, "plan: need input_dim >= 1");
    require(num_stages <= 16, ErrorKind::Config, "plan: num_stages too large for 2^n scaling");
}

namespace {

bool striped_mlp_family(NestMode m) { return m == NestMode::Width || m == NestMode::EvenWidth; }

// Visible stripe count and depth-doubling level per stage (both 1-based).
struct Levels {
    std::vector<int> width;
    std::vector<int> depth;
    int vmax = 1;
    int dmax = 1;
};

Levels levels_for(const StagePlan& plan) {
    Levels lv;
    lv.width.resize(static_cast<std::size_t>(plan.num_stages));
    lv.depth.resize(static_cast<std::size_t>(plan.num_stages));
    for (int i = 1; i <= plan.num_stages; ++i) {
        int v = 1, d = 1;
        switch (plan.mode) {
            case NestMode::Width:
            case NestMode::EvenWidth:
                v = i;
                break;
            case NestMode::Depth:
            case NestMode::EannCascade:
                d = i;
                break;
            case NestMode::WidthDepthAlternating:
                v = i / 2 + 1;        // width doubles on even transitions: w1,w2,w2,w4,w4,...
                d = (i + 1) / 2;      // depth doubles on odd transitions:  d1,d1,d2,d2,d4,...
                break;
            case NestMode::WidthDepthSimultaneous:
                v = i;
                d = i;
                break;
        }
        lv.width[static_cast<std::size_t>(i - 1)] = v;
        lv.depth[static_cast<std::size_t>(i - 1)] = d;
    }
    lv.vmax = lv.width.back();
    lv.dmax = lv.depth.back();
    return lv;
}

// Stripe widths, 0-based. Power-of-2 modes: w, w, 2w, 4w, ... so that the
// visible width at level v is w * 2^(v-1); even mode: all stripes w.
std::vector<std::size_t> stripe_widths(const StagePlan& plan, int vmax) {
    std::vector<std::size_t> s(static_cast<std::size_t>(vmax));
    for (int j = 0; j < vmax; ++j) {
        if (plan.mode == NestMode::EvenWidth) {
            s[static_cast<std::size_t>(j)] = static_cast<std::size_t>(plan.base_width);
        } else {
            s[static_cast<std::size_t>(j)] = static_cast<std::size_t>(
                j == 0 ? plan.base_width : plan.base_width * (1 << (j - 1)));
        }
    }
    return s;
}

std::size_t visible_width(const std::vector<std::size_t>& s, int levels) {
    std::size_t total = 0;
    for (int j = 0; j < levels; ++j) total += s[static_cast<std::size_t>(j)];
    return total;
}

// Layers (1-based trunk ids) a stage executes, ascending. Interlaced modes
// take every 2^(dmax-d)-th layer starting at 1; the cascade takes a prefix.
std::vector<int> selected_layers(const StagePlan& plan, int depth_level, int dmax) {
    const int total = plan.base_depth * (1 << (dmax - 1));
    std::vector<int> sel;
    if (plan.mode == NestMode::EannCascade) {
        const int branch = plan.base_depth * (1 << (depth_level - 1));
        for (int d = 1; d <= branch; ++d) sel.push_back(d);
    } else {
        const int stride = 1 << (dmax - depth_level);
        for (int d = 1; d <= total; d += stride) sel.push_back(d);
    }
    return sel;
}

int log2_floor(int x) {
    int p = 0;
    while ((2 << p) <= x) ++p;
    return p;
}

// Slot ids for one trunk, indexed so every mode shares the emit logic.
struct SlotTable {
    // striped MLP family: weights[layer][out stripe][in stripe], layer 0 maps
    // the raw input (single branch per stripe).
    // skip-trunk family: stem at layer 0, trunk layers 1..L.
    std::vector<std::vector<std::vector<int>>> weights;
    std::vector<std::vector<int>> biases;  // [layer][out stripe]
    std::vector<std::vector<int>> head_w;  // [stage][in stripe]
    std::vector<int> head_b;               // [stage]
    std::vector<int> slot_intro;           // per slot: first stage using it (1-based)
    std::vector<double> slot_init_std;     // 0 for biases
};

}  // namespace

const Graph& NestedNetwork::stage_graph(int stage) const {
    check_stage(stage);
    return stage_graphs_[static_cast<std::size_t>(stage - 1)];
}

void NestedNetwork::check_stage(int stage) const {
    require(stage >= 1 && stage <= plan_.num_stages, ErrorKind::Input,
            "stage " + std::to_string(stage) + " out of range [1, " +
                std::to_string(plan_.num_stages) + "]");
}

Tensor NestedNetwork::forward_stage(int stage, const Tensor& x) const {
    const Graph& g = stage_graph(stage);
    Trace t = g.forward(store_, x);
    return t.values[static_cast<std::size_t>(g.logits_node())];
}

std::size_t NestedNetwork::flops(int stage) const {
    check_stage(stage);
    return stage_flops_[static_cast<std::size_t>(stage - 1)];
}

std::size_t NestedNetwork::stage_dim(int stage) const {
    check_stage(stage);
    return stage_dims_[static_cast<std::size_t>(stage - 1)];
}

bool NestedNetwork::trunk_slot_in_stage(int slot, int stage) const {
    check_stage(stage);
    return trunk_mask_[static_cast<std::size_t>(stage - 1)][static_cast<std::size_t>(slot)] != 0;
}

bool NestedNetwork::slot_in_stage(int slot, int stage) const {
    if (trunk_slot_in_stage(slot, stage)) return true;
    const auto& heads = head_slots_[static_cast<std::size_t>(stage - 1)];
    return std::find(heads.begin(), heads.end(), slot) != heads.end();
}

const std::vector<int>& NestedNetwork::head_slots(int stage) const {
    check_stage(stage);
    return head_slots_[static_cast<std::size_t>(stage - 1)];
}

std::vector<int> NestedNetwork::coverage_counts() const {
    std::vector<int> counts(store_.total(), 0);
    for (int stage = 1; stage <= plan_.num_stages; ++stage) {
        for (std::size_t slot = 0; slot < store_.slots.size(); ++slot) {
            if (!slot_in_stage(static_cast<int>(slot), stage)) continue;
            const Slot& s = store_.slots[slot];
            for (std::size_t i = 0; i < s.size(); ++i) counts[s.offset + i] += 1;
        }
    }
    return counts;
}

StandaloneNet NestedNetwork::extract_standalone(int stage) const {
    const Graph& src = stage_graph(stage);
    StandaloneNet out;
    out.stage = stage;

    std::map<int, int> remap;
    for (int slot : src.used_slots()) {
        const Slot& s = store_.slots[static_cast<std::size_t>(slot)];
        const int fresh = out.store.add_slot(s.name, s.rows, s.cols);
        std::copy(store_.values.begin() + static_cast<std::ptrdiff_t>(s.offset),
                  store_.values.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size()),
                  out.store.values.begin() +
                      static_cast<std::ptrdiff_t>(out.store.slots.back().offset));
        remap[slot] = fresh;
    }

    for (const Node& n : src.nodes()) {
        int id = -1;
        switch (n.kind) {
            case OpKind::Input:
                id = out.graph.add_input(n.out_dim);
                break;
            case OpKind::Affine: {
                std::vector<int> ws;
                for (int w : n.weight_slots) ws.push_back(remap.at(w));
                const int bias = n.bias_slot >= 0 ? remap.at(n.bias_slot) : -1;
                id = out.graph.add_affine(n.inputs, std::move(ws), bias, n.out_dim, out.store);
                break;
            }
            case OpKind::Relu:
                id = out.graph.add_relu(n.inputs[0]);
                break;
            case OpKind::Add:
                id = out.graph.add_sum(n.inputs);
                break;
            case OpKind::ReduceSum:
                id = out.graph.add_reduce_sum(n.inputs[0]);
                break;
            case OpKind::SquaredLoss:
                id = out.graph.add_squared_loss(n.inputs[0]);
                break;
            case OpKind::SoftmaxXent:
                id = out.graph.add_softmax_xent(n.inputs[0]);
                break;
            case OpKind::WeightedLoss:
                id = out.graph.add_weighted_loss(n.inputs);
                break;
        }
        out.graph.annotate(id, n.depth, n.stripe, n.intro_stage);
    }
    out.graph.set_logits_node(src.logits_node());
    out.graph.set_loss_node(src.loss_node());
    out.macs = out.graph.flops();
    return out;
}

namespace {

// Emits the forward computation of one stage into `g`. Both the per-stage
// graphs and the joint training graph go through here so they are the same
// computation node for node.
struct StageEmitter {
    const StagePlan& plan;
    const Levels& levels;
    const std::vector<std::size_t>& stripes;
    const SlotTable& slots;
    const ParamStore& store;

    struct Emitted {
        int logits = -1;
        int loss = -1;
    };

    Emitted emit(Graph& g, int input_node, int stage) const {
        const int visible = levels.width[static_cast<std::size_t>(stage - 1)];
        std::vector<std::vector<int>> outs;  // [relative layer][stripe] -> relu node

        if (striped_mlp_family(plan.mode)) {
            // Plain chain: layer 1 reads the raw input, later layers read
            // stripes <= their own from the previous layer.
            std::vector<int> prev;
            for (int layer = 1; layer <= plan.base_depth; ++layer) {
                std::vector<int> cur;
                for (int b = 0; b < visible; ++b) {
                    std::vector<int> ins;
                    std::vector<int> ws;
                    if (layer == 1) {
                        ins = {input_node};
                        ws = {slots.weights[0][static_cast<std::size_t>(b)][0]};
                    } else {
                        for (int a = 0; a <= b; ++a) {
                            ins.push_back(prev[static_cast<std::size_t>(a)]);
                            ws.push_back(slots.weights[static_cast<std::size_t>(layer - 1)]
                                                      [static_cast<std::size_t>(b)]
                                                      [static_cast<std::size_t>(a)]);
                        }
                    }
                    const int pre = g.add_affine(
                        std::move(ins), std::move(ws),
                        slots.biases[static_cast<std::size_t>(layer - 1)]
                                    [static_cast<std::size_t>(b)],
                        stripes[static_cast<std::size_t>(b)], store);
                    g.annotate(pre, layer, b + 1, b + 1);
                    const int act = g.add_relu(pre);
                    g.annotate(act, layer, b + 1, b + 1);
                    cur.push_back(act);
                }
                prev = std::move(cur);
            }
            outs.push_back(prev);  // only the final layer is needed for the head
        } else {
            // Skip trunk: stem embeds the input as layer 0, each later layer
            // aggregates stage-relative offsets 2^p additively.
            const std::vector<int> sel =
                selected_layers(plan, levels.depth[static_cast<std::size_t>(stage - 1)],
                                levels.dmax);
            std::vector<int> stem;
            for (int b = 0; b < visible; ++b) {
                const int pre = g.add_affine({input_node},
                                             {slots.weights[0][static_cast<std::size_t>(b)][0]},
                                             slots.biases[0][static_cast<std::size_t>(b)],
                                             stripes[static_cast<std::size_t>(b)], store);
                g.annotate(pre, 0, b + 1, slots.slot_intro[static_cast<std::size_t>(
                                              slots.weights[0][static_cast<std::size_t>(b)][0])]);
                const int act = g.add_relu(pre);
                g.annotate(act, 0, b + 1, slots.slot_intro[static_cast<std::size_t>(
                                              slots.weights[0][static_cast<std::size_t>(b)][0])]);
                stem.push_back(act);
            }
            outs.push_back(stem);

            for (std::size_t r = 1; r <= sel.size(); ++r) {
                const int layer_id = sel[r - 1];
                std::vector<int> sources;  // relative indices, nearest first
                for (int hop = 1; static_cast<int>(r) - hop >= 0; hop *= 2) {
                    sources.push_back(static_cast<int>(r) - hop);
                }
                std::vector<int> aggregated(static_cast<std::size_t>(visible));
                for (int b = 0; b < visible; ++b) {
                    if (sources.size() == 1) {
                        aggregated[static_cast<std::size_t>(b)] =
                            outs[static_cast<std::size_t>(sources[0])]
                                [static_cast<std::size_t>(b)];
                    } else {
                        std::vector<int> terms;
                        for (int srel : sources) {
                            terms.push_back(outs[static_cast<std::size_t>(srel)]
                                                [static_cast<std::size_t>(b)]);
                        }
                        const int agg = g.add_sum(std::move(terms));
                        g.annotate(agg, static_cast<int>(r), b + 1, -1);
                        aggregated[static_cast<std::size_t>(b)] = agg;
                    }
                }
                std::vector<int> cur;
                for (int b = 0; b < visible; ++b) {
                    std::vector<int> ins;
                    std::vector<int> ws;
                    for (int a = 0; a <= b; ++a) {
                        ins.push_back(aggregated[static_cast<std::size_t>(a)]);
                        ws.push_back(slots.weights[static_cast<std::size_t>(layer_id)]
                                                  [static_cast<std::size_t>(b)]
                                                  [static_cast<std::size_t>(a)]);
                    }
                    const int wslot0 = slots.weights[static_cast<std::size_t>(layer_id)]
                                                    [static_cast<std::size_t>(b)][0];
                    const int intro = slots.slot_intro[static_cast<std::size_t>(wslot0)];
                    const int pre = g.add_affine(std::move(ins), std::move(ws),
                                                 slots.biases[static_cast<std::size_t>(layer_id)]
                                                             [static_cast<std::size_t>(b)],
                                                 stripes[static_cast<std::size_t>(b)], store);
                    g.annotate(pre, static_cast<int>(r), b + 1, intro);
                    const int act = g.add_relu(pre);
                    g.annotate(act, static_cast<int>(r), b + 1, intro);
                    cur.push_back(act);
                }
                outs.push_back(std::move(cur));
            }
        }

        const std::vector<int>& last = outs.back();
        std::vector<int> head_ins;
        std::vector<int> head_ws;
        for (int a = 0; a < visible; ++a) {
            head_ins.push_back(last[static_cast<std::size_t>(a)]);
            head_ws.push_back(
                slots.head_w[static_cast<std::size_t>(stage - 1)][static_cast<std::size_t>(a)]);
        }
        const int head_depth =
            striped_mlp_family(plan.mode) ? plan.base_depth + 1 : static_cast<int>(outs.size());
        Emitted e;
        e.logits = g.add_affine(std::move(head_ins), std::move(head_ws),
                                slots.head_b[static_cast<std::size_t>(stage - 1)],
                                static_cast<std::size_t>(plan.num_classes), store);
        g.annotate(e.logits, head_depth, -1, stage);
        e.loss = g.add_softmax_xent(e.logits);
        return e;
    }
};

SlotTable make_slots(const StagePlan& plan, const Levels& levels,
                     const std::vector<std::size_t>& stripes, ParamStore& store) {
    SlotTable t;
    const int vmax = levels.vmax;
    auto stripe_intro = [&](int b) {  // first stage whose width level covers stripe b
        for (int i = 1; i <= plan.num_stages; ++i) {
            if (levels.width[static_cast<std::size_t>(i - 1)] >= b + 1) return i;
        }
        return plan.num_stages;
    };

    auto record = [&](int slot, int intro, double init_std) {
        if (static_cast<std::size_t>(slot) >= t.slot_intro.size()) {
            t.slot_intro.resize(static_cast<std::size_t>(slot) + 1, plan.num_stages);
            t.slot_init_std.resize(static_cast<std::size_t>(slot) + 1, 0.0);
        }
        t.slot_intro[static_cast<std::size_t>(slot)] = intro;
        t.slot_init_std[static_cast<std::size_t>(slot)] = init_std;
    };

    if (striped_mlp_family(plan.mode)) {
        t.weights.resize(static_cast<std::size_t>(plan.base_depth));
        t.biases.resize(static_cast<std::size_t>(plan.base_depth));
        for (int layer = 1; layer <= plan.base_depth; ++layer) {
            auto& wl = t.weights[static_cast<std::size_t>(layer - 1)];
            auto& bl = t.biases[static_cast<std::size_t>(layer - 1)];
            wl.resize(static_cast<std::size_t>(vmax));
            bl.resize(static_cast<std::size_t>(vmax));
            for (int b = 0; b < vmax; ++b) {
                const int intro = stripe_intro(b);
                const std::size_t out_w = stripes[static_cast<std::size_t>(b)];
                if (layer == 1) {
                    const int slot =
                        store.add_slot("w.l1.s" + std::to_string(b + 1) + "<-x",
                                       static_cast<std::size_t>(plan.input_dim), out_w);
                    record(slot, intro, std::sqrt(2.0 / plan.input_dim));
                    wl[static_cast<std::size_t>(b)] = {slot};
                } else {
                    const double fan_in =
                        static_cast<double>(visible_width(stripes, b + 1));
                    for (int a = 0; a <= b; ++a) {
                        const int slot = store.add_slot(
                            "w.l" + std::to_string(layer) + ".s" + std::to_string(b + 1) +
                                "<-s" + std::to_string(a + 1),
                            stripes[static_cast<std::size_t>(a)], out_w);
                        record(slot, intro, std::sqrt(2.0 / fan_in));
                        wl[static_cast<std::size_t>(b)].push_back(slot);
                    }
                }
                const int bias = store.add_slot(
                    "b.l" + std::to_string(layer) + ".s" + std::to_string(b + 1), 1, out_w);
                record(bias, intro, 0.0);
                bl[static_cast<std::size_t>(b)] = bias;
            }
        }
    } else {
        const int total_layers = plan.base_depth * (1 << (levels.dmax - 1));
        t.weights.resize(static_cast<std::size_t>(total_layers) + 1);
        t.biases.resize(static_cast<std::size_t>(total_layers) + 1);

        // First stage executing each trunk layer.
        std::vector<int> layer_intro(static_cast<std::size_t>(total_layers) + 1,
                                     plan.num_stages);
        for (int i = plan.num_stages; i >= 1; --i) {
            for (int d : selected_layers(plan, levels.depth[static_cast<std::size_t>(i - 1)],
                                         levels.dmax)) {
                layer_intro[static_cast<std::size_t>(d)] = i;
            }
        }

        t.weights[0].resize(static_cast<std::size_t>(vmax));
        t.biases[0].resize(static_cast<std::size_t>(vmax));
        for (int b = 0; b < vmax; ++b) {
            const int slot = store.add_slot("stem.w.s" + std::to_string(b + 1),
                                            static_cast<std::size_t>(plan.input_dim),
                                            stripes[static_cast<std::size_t>(b)]);
            record(slot, stripe_intro(b), std::sqrt(2.0 / plan.input_dim));
            t.weights[0][static_cast<std::size_t>(b)] = {slot};
            const int bias = store.add_slot("stem.b.s" + std::to_string(b + 1), 1,
                                            stripes[static_cast<std::size_t>(b)]);
            record(bias, stripe_intro(b), 0.0);
            t.biases[0][static_cast<std::size_t>(b)] = bias;
        }

        for (int d = 1; d <= total_layers; ++d) {
            auto& wl = t.weights[static_cast<std::size_t>(d)];
            auto& bl = t.biases[static_cast<std::size_t>(d)];
            wl.resize(static_cast<std::size_t>(vmax));
            bl.resize(static_cast<std::size_t>(vmax));
            // Aggregation fans in one source per power-of-2 hop in the full
            // trunk; fold that into the init scale since there is no
            // normalization layer to absorb it.
            const double n_sources = static_cast<double>(log2_floor(d) + 1);
            for (int b = 0; b < vmax; ++b) {
                const int intro =
                    std::max(stripe_intro(b), layer_intro[static_cast<std::size_t>(d)]);
                const double fan_in =
                    static_cast<double>(visible_width(stripes, b + 1)) * n_sources;
                for (int a = 0; a <= b; ++a) {
                    const int slot = store.add_slot(
                        "w.l" + std::to_string(d) + ".s" + std::to_string(b + 1) + "<-s" +
                            std::to_string(a + 1),
                        stripes[static_cast<std::size_t>(a)],
                        stripes[static_cast<std::size_t>(b)]);
                    record(slot, intro, std::sqrt(2.0 / fan_in));
                    wl[static_cast<std::size_t>(b)].push_back(slot);
                }
                const int bias =
                    store.add_slot("b.l" + std::to_string(d) + ".s" + std::to_string(b + 1), 1,
                                   stripes[static_cast<std::size_t>(b)]);
                record(bias, intro, 0.0);
                bl[static_cast<std::size_t>(b)] = bias;
            }
        }
    }

    t.head_w.resize(static_cast<std::size_t>(plan.num_stages));
    t.head_b.resize(static_cast<std::size_t>(plan.num_stages));
    for (int i = 1; i <= plan.num_stages; ++i) {
        const int visible = levels.width[static_cast<std::size_t>(i - 1)];
        const double fan_in = static_cast<double>(visible_width(stripes, visible));
        for (int a = 0; a < visible; ++a) {
            const int slot = store.add_slot(
                "head" + std::to_string(i) + ".w<-s" + std::to_string(a + 1),
                stripes[static_cast<std::size_t>(a)], static_cast<std::size_t>(plan.num_classes));
            record(slot, i, std::sqrt(1.0 / fan_in));
            t.head_w[static_cast<std::size_t>(i - 1)].push_back(slot);
        }
        const int bias = store.add_slot("head" + std::to_string(i) + ".b", 1,
                                        static_cast<std::size_t>(plan.num_classes));
        record(bias, i, 0.0);
        t.head_b[static_cast<std::size_t>(i - 1)] = bias;
    }
    return t;
}

}  // namespace

NestedNetwork NestedNetwork::build(const StagePlan& plan, Rng& init_rng) {
    plan.validate();

    NestedNetwork net;
    net.plan_ = plan;

    const Levels levels = levels_for(plan);
    const std::vector<std::size_t> stripes = stripe_widths(plan, levels.vmax);
    const SlotTable slots = make_slots(plan, levels, stripes, net.store_);

    // Deterministic init: slots in creation order, row-major within a slot.
    for (std::size_t slot = 0; slot < net.store_.slots.size(); ++slot) {
        const double std_dev = slots.slot_init_std[slot];
        if (std_dev == 0.0) continue;  // biases start at zero
        for (double& v : net.store_.slot_span(static_cast<int>(slot))) {
            v = init_rng.normal(0.0, std_dev);
        }
    }

    const StageEmitter emitter{plan, levels, stripes, slots, net.store_};

    for (int i = 1; i <= plan.num_stages; ++i) {
        Graph g;
        const int input = g.add_input(static_cast<std::size_t>(plan.input_dim));
        const StageEmitter::Emitted e = emitter.emit(g, input, i);
        g.set_logits_node(e.logits);
        g.set_loss_node(e.loss);
        g.validate(net.store_);
        net.stage_flops_.push_back(g.flops());
        net.stage_graphs_.push_back(std::move(g));
    }

    // Joint training graph: all stage computations plus the weighted loss.
    {
        const int input = net.combined_.add_input(static_cast<std::size_t>(plan.input_dim));
        std::vector<int> losses;
        for (int i = 1; i <= plan.num_stages; ++i) {
            losses.push_back(emitter.emit(net.combined_, input, i).loss);
        }
        net.combined_loss_nodes_ = losses;
        const int loss = net.combined_.add_weighted_loss(losses);
        net.combined_.set_loss_node(loss);
    }

    // Masks and head ownership.
    net.trunk_slot_.assign(net.store_.slots.size(), 1);
    net.head_slots_.resize(static_cast<std::size_t>(plan.num_stages));
    for (int i = 1; i <= plan.num_stages; ++i) {
        for (int w : slots.head_w[static_cast<std::size_t>(i - 1)]) {
            net.head_slots_[static_cast<std::size_t>(i - 1)].push_back(w);
            net.trunk_slot_[static_cast<std::size_t>(w)] = 0;
        }
        const int hb = slots.head_b[static_cast<std::size_t>(i - 1)];
        net.head_slots_[static_cast<std::size_t>(i - 1)].push_back(hb);
        net.trunk_slot_[static_cast<std::size_t>(hb)] = 0;
    }

    net.trunk_mask_.assign(static_cast<std::size_t>(plan.num_stages),
                           std::vector<std::uint8_t>(net.store_.slots.size(), 0));
    for (std::size_t slot = 0; slot < net.store_.slots.size(); ++slot) {
        if (!net.trunk_slot_[slot]) continue;
        for (int i = slots.slot_intro[slot]; i <= plan.num_stages; ++i) {
            net.trunk_mask_[static_cast<std::size_t>(i - 1)][slot] = 1;
        }
    }

    for (int i = 1; i <= plan.num_stages; ++i) {
        std::size_t dim = 0;
        for (std::size_t slot = 0; slot < net.store_.slots.size(); ++slot) {
            if (net.trunk_mask_[static_cast<std::size_t>(i - 1)][slot]) {
                dim += net.store_.slots[slot].size();
            }
        }
        for (int slot : net.head_slots_[static_cast<std::size_t>(i - 1)]) {
            dim += net.store_.slots[static_cast<std::size_t>(slot)].size();
        }
        net.stage_dims_.push_back(dim);
    }

    return net;
}

namespace {

NestedNetwork build_checked(const StagePlan& plan, Rng& rng, NestMode expected,
                            const char* what) {
    require(plan.mode == expected, ErrorKind::Config,
            std::string(what) + " requires mode '" + nest_mode_name(expected) + "', got '" +
                nest_mode_name(plan.mode) + "'");
    return NestedNetwork::build(plan, rng);
}

}  // namespace

NestedNetwork build_width_nested(const StagePlan& plan, Rng& rng) {
    return build_checked(plan, rng, NestMode::Width, "build_width_nested");
}

NestedNetwork build_depth_nested(const StagePlan& plan, Rng& rng) {
    return build_checked(plan, rng, NestMode::Depth, "build_depth_nested");
}

NestedNetwork build_width_depth_nested(const StagePlan& plan, Rng& rng) {
    require(plan.mode == NestMode::WidthDepthAlternating ||
                plan.mode == NestMode::WidthDepthSimultaneous,
            ErrorKind::Config, "build_width_depth_nested requires a width-depth mode");
    return NestedNetwork::build(plan, rng);
}

NestedNetwork build_even_width(const StagePlan& plan, Rng& rng) {
    return build_checked(plan, rng, NestMode::EvenWidth, "build_even_width");
}

NestedNetwork build_eann_cascade(const StagePlan& plan, Rng& rng) {
    return build_checked(plan, rng, NestMode::EannCascade, "build_eann_cascade");
}

}  // namespace anynet
