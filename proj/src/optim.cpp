#include "anynet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "anynet/error.hpp"
#include "anynet/kernels.hpp"

namespace anynet {

double TaskGradient::norm() const {
    return std::sqrt(kernels::dot(values.data(), values.data(), values.size()));
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Greedy: return "greedy";
        case Strategy::Sgd: return "sgd";
        case Strategy::NormSgd: return "normsgd";
        case Strategy::Osgd: return "osgd";
        case Strategy::OsgdNorm: return "osgd-norm";
    }
    return "?";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "greedy") return Strategy::Greedy;
    if (name == "sgd") return Strategy::Sgd;
    if (name == "normsgd") return Strategy::NormSgd;
    if (name == "osgd") return Strategy::Osgd;
    if (name == "osgd-norm" || name == "osgdnorm") return Strategy::OsgdNorm;
    raise(ErrorKind::Config, "unknown strategy '" + name + "'");
}

const char* combine_mode_name(CombineMode m) {
    return m == CombineMode::Sum ? "sum" : "participation-average";
}

CombineMode combine_mode_from_name(const std::string& name) {
    if (name == "sum") return CombineMode::Sum;
    if (name == "participation-average" || name == "avg") return CombineMode::ParticipationAverage;
    raise(ErrorKind::Config, "unknown combine mode '" + name + "'");
}

OptimizerConfig OptimizerConfig::defaults(Strategy s, int num_stages, std::size_t total_dim) {
    OptimizerConfig c;
    c.strategy = s;
    c.resolve(num_stages, total_dim);
    return c;
}

void OptimizerConfig::resolve(int num_stages, std::size_t total_dim) {
    if (loss_weights.empty()) loss_weights.assign(static_cast<std::size_t>(num_stages), 1.0);
    if (priority.empty()) {
        for (int i = 1; i <= num_stages; ++i) priority.push_back(i);
    }
    if (!combine) {
        combine = strategy == Strategy::NormSgd ? CombineMode::ParticipationAverage
                                                : CombineMode::Sum;
    }
    if (zero_norm_tol <= 0.0) {
        zero_norm_tol = 1e-12 * std::sqrt(static_cast<double>(total_dim));
    }
    validate(num_stages);
}

void OptimizerConfig::validate(int num_stages) const {
    require(loss_weights.size() == static_cast<std::size_t>(num_stages), ErrorKind::Config,
            "loss weight count != stage count");
    double ksum = 0.0;
    for (double k : loss_weights) {
        require(k >= 0.0, ErrorKind::Config, "loss weights must be non-negative");
        ksum += k;
    }
    require(ksum > 0.0, ErrorKind::Config, "loss weights must not all be zero");
    require(norm_constant > 0.0, ErrorKind::Config, "normalization constant must be positive");
    require(zero_norm_tol > 0.0, ErrorKind::Config, "zero-norm tolerance must be positive");

    require(priority.size() == static_cast<std::size_t>(num_stages), ErrorKind::Config,
            "priority order length != stage count");
    std::vector<bool> seen(static_cast<std::size_t>(num_stages), false);
    for (int p : priority) {
        require(p >= 1 && p <= num_stages, ErrorKind::Config, "priority entry out of range");
        require(!seen[static_cast<std::size_t>(p - 1)], ErrorKind::Config,
                "priority order repeats a stage");
        seen[static_cast<std::size_t>(p - 1)] = true;
    }
}

CombineMode OptimizerConfig::combine_mode() const {
    require(combine.has_value(), ErrorKind::State, "optimizer config not resolved");
    return *combine;
}

namespace {

struct TaskPass {
    std::vector<TaskGradient> grads;
    std::vector<double> losses;
};

TaskPass run_task_passes(const NestedNetwork& net, const Tensor& x, std::span<const int> labels) {
    TaskPass out;
    for (int i = 1; i <= net.num_stages(); ++i) {
        const Graph& g = net.stage_graph(i);
        Trace trace = g.forward(net.params(), x, labels);
        TaskGradient tg;
        tg.stage = i;
        tg.values = g.backward(net.params(), trace);
        tg.effective_dim = net.stage_dim(i);
        for (double v : tg.values) {
            if (!std::isfinite(v)) {
                raise(ErrorKind::Numeric,
                      "non-finite gradient for stage " + std::to_string(i) + "; aborting step");
            }
        }
        out.losses.push_back(trace.loss);
        out.grads.push_back(std::move(tg));
    }
    return out;
}

}  // namespace

std::vector<TaskGradient> per_task_gradients(const NestedNetwork& net, const Tensor& x,
                                             std::span<const int> labels) {
    return run_task_passes(net, x, labels).grads;
}

double weighted_loss(std::span<const double> losses, std::span<const double> k) {
    require(losses.size() == k.size(), ErrorKind::Dimension,
            "weighted_loss: loss/weight length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        num += k[i] * losses[i];
        den += k[i];
    }
    require(den > 0.0, ErrorKind::Config, "weighted_loss: weights sum to zero");
    return num / den;
}

bool normalize_gradient(TaskGradient& g, double c, double tau) {
    require(c > 0.0, ErrorKind::Config, "normalization constant must be positive");
    const double n = g.norm();
    if (n <= tau) return true;  // too small to rescale meaningfully
    const double target = std::sqrt(static_cast<double>(g.effective_dim)) * c;
    kernels::scale(target / n, g.values.data(), g.values.size());
    return false;
}

void orthogonalize(std::vector<TaskGradient>& grads, std::span<const int> order, double tau) {
    require(order.size() == grads.size(), ErrorKind::Input,
            "priority order length != gradient count");
    if (grads.empty()) return;
    const std::size_t dim = grads[0].values.size();
    for (const TaskGradient& g : grads) {
        require(g.values.size() == dim, ErrorKind::Input, "gradient dimension mismatch");
    }

    // grads are indexed by stage id; order lists stages highest priority first.
    auto by_stage = [&](int stage) -> TaskGradient& {
        for (TaskGradient& g : grads) {
            if (g.stage == stage) return g;
        }
        raise(ErrorKind::Input, "priority names stage " + std::to_string(stage) +
                                    " with no gradient");
    };

    for (std::size_t j = 1; j < order.size(); ++j) {
        TaskGradient& g = by_stage(order[j]);
        for (std::size_t e = 0; e < j; ++e) {
            const TaskGradient& basis = by_stage(order[e]);  // already projected
            const double denom =
                kernels::dot(basis.values.data(), basis.values.data(), dim);
            if (std::sqrt(denom) <= tau) continue;
            const double coef = kernels::dot(g.values.data(), basis.values.data(), dim) / denom;
            kernels::axpy(-coef, basis.values.data(), g.values.data(), dim);
        }
    }
}

std::vector<double> combine(const std::vector<TaskGradient>& grads, CombineMode mode,
                            std::span<const int> coverage_counts) {
    require(!grads.empty(), ErrorKind::Input, "combine: no gradients");
    const std::size_t dim = grads[0].values.size();
    std::vector<double> out(dim, 0.0);
    for (const TaskGradient& g : grads) {
        require(g.values.size() == dim, ErrorKind::Input, "combine: dimension mismatch");
        kernels::add_inplace(out.data(), g.values.data(), dim);
    }
    if (mode == CombineMode::ParticipationAverage) {
        require(coverage_counts.size() == dim, ErrorKind::Input,
                "combine: coverage count length mismatch");
        for (std::size_t i = 0; i < dim; ++i) {
            if (coverage_counts[i] > 1) out[i] /= static_cast<double>(coverage_counts[i]);
        }
    }
    return out;
}

void step(ParamStore& store, std::span<const double> update, double lr) {
    require(update.size() == store.total(), ErrorKind::Dimension,
            "update length != parameter count");
    for (double v : update) {
        if (!std::isfinite(v)) {
            raise(ErrorKind::Numeric, "non-finite update entry; aborting step");
        }
    }
    kernels::axpy(-lr, update.data(), store.values.data(), update.size());
}

namespace {

void audit_projection(const std::vector<TaskGradient>& grads, std::span<const int> order,
                      const std::vector<double>& first_before, double tau, StepAudit* audit) {
    if (!audit) return;
    std::vector<const TaskGradient*> live;
    for (int stage : order) {
        for (const TaskGradient& g : grads) {
            if (g.stage == stage && g.norm() > tau) live.push_back(&g);
        }
    }
    for (std::size_t i = 0; i < live.size(); ++i) {
        for (std::size_t j = i + 1; j < live.size(); ++j) {
            const double d = kernels::dot(live[i]->values.data(), live[j]->values.data(),
                                          live[i]->values.size());
            const double cos = std::abs(d) / (live[i]->norm() * live[j]->norm());
            audit->max_abs_cosine = std::max(audit->max_abs_cosine, cos);
            audit->pairs += 1;
        }
    }
    for (const TaskGradient& g : grads) {
        if (g.stage != order[0]) continue;
        audit->first_priority_bit_identical =
            g.values.size() == first_before.size() &&
            std::memcmp(g.values.data(), first_before.data(),
                        g.values.size() * sizeof(double)) == 0;
    }
}

}  // namespace

std::vector<double> train_step(NestedNetwork& net, const Tensor& x, std::span<const int> labels,
                               const OptimizerConfig& config, double lr, StepAudit* audit) {
    const int n = net.num_stages();
    config.validate(n);
    require(config.strategy != Strategy::Greedy, ErrorKind::Config,
            "greedy training is stage-wise; drive it through greedy_step");

    if (config.strategy == Strategy::Sgd) {
        const Graph& g = net.combined_graph();
        Trace trace = g.forward(net.params(), x, labels, config.loss_weights);
        std::vector<double> losses;
        for (int node : net.combined_loss_nodes()) {
            losses.push_back(trace.values[static_cast<std::size_t>(node)].item());
        }
        std::vector<double> grad = g.backward(net.params(), trace);
        step(net.params(), grad, lr);
        return losses;
    }

    TaskPass pass = run_task_passes(net, x, labels);

    if (config.strategy == Strategy::NormSgd || config.strategy == Strategy::OsgdNorm) {
        for (TaskGradient& g : pass.grads) {
            normalize_gradient(g, config.norm_constant, config.zero_norm_tol);
        }
    }

    std::vector<int> coverage;
    if (config.combine_mode() == CombineMode::ParticipationAverage) {
        coverage = net.coverage_counts();
    }

    if (config.strategy == Strategy::NormSgd) {
        std::vector<double> update = combine(pass.grads, config.combine_mode(), coverage);
        step(net.params(), update, lr);
        return pass.losses;
    }

    // OSGD / OSGD-Norm: project, then accumulate in priority order.
    std::vector<double> first_before;
    if (audit) {
        for (const TaskGradient& g : pass.grads) {
            if (g.stage == config.priority.front()) first_before = g.values;
        }
    }
    orthogonalize(pass.grads, config.priority, config.zero_norm_tol);
    audit_projection(pass.grads, config.priority, first_before, config.zero_norm_tol, audit);

    std::vector<TaskGradient> ordered;
    ordered.reserve(pass.grads.size());
    for (int stage : config.priority) {
        for (TaskGradient& g : pass.grads) {
            if (g.stage == stage) ordered.push_back(std::move(g));
        }
    }
    std::vector<double> update = combine(ordered, config.combine_mode(), coverage);
    step(net.params(), update, lr);
    return pass.losses;
}

double greedy_step(NestedNetwork& net, int stage, const Tensor& x, std::span<const int> labels,
                   double lr) {
    const Graph& g = net.stage_graph(stage);
    Trace trace = g.forward(net.params(), x, labels);
    std::vector<double> grad = g.backward(net.params(), trace);

    // Restrict the update to parameters this stage introduced: its head plus
    // mask(stage) \ mask(stage - 1). Everything trained earlier stays frozen.
    const ParamStore& store = net.params();
    for (std::size_t slot = 0; slot < store.slots.size(); ++slot) {
        const int id = static_cast<int>(slot);
        bool trainable = false;
        if (net.is_trunk_slot(id)) {
            trainable = net.trunk_slot_in_stage(id, stage) &&
                        (stage == 1 || !net.trunk_slot_in_stage(id, stage - 1));
        } else {
            const auto& heads = net.head_slots(stage);
            trainable = std::find(heads.begin(), heads.end(), id) != heads.end();
        }
        if (!trainable) {
            const Slot& s = store.slots[slot];
            std::fill(grad.begin() + static_cast<std::ptrdiff_t>(s.offset),
                      grad.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size()), 0.0);
        }
    }
    step(net.params(), grad, lr);
    return trace.loss;
}

}  // namespace anynet
