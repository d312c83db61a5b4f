#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anynet/nested.hpp"
#include "anynet/tensor.hpp"

namespace anynet {

// Full-length gradient of one stage's loss over the whole parameter store,
// exactly zero outside that stage's mask and head.
struct TaskGradient {
    int stage = 0;
    std::vector<double> values;
    std::size_t effective_dim = 0;  // d_i: trunk mask plus head size

    double norm() const;
};

enum class Strategy {
    Greedy,
    Sgd,
    NormSgd,
    Osgd,
    OsgdNorm,
};

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

enum class CombineMode {
    Sum,
    ParticipationAverage,
};

const char* combine_mode_name(CombineMode m);
CombineMode combine_mode_from_name(const std::string& name);

struct OptimizerConfig {
    Strategy strategy = Strategy::Sgd;
    std::vector<double> loss_weights;   // k_i; empty = all ones
    double norm_constant = 0.5;         // C
    std::vector<int> priority;          // stage ids, highest priority first; empty = 1..n
    std::optional<CombineMode> combine; // empty = per-strategy default
    double zero_norm_tol = 0.0;         // tau; 0 = resolve to 1e-12 * sqrt(dim)

    // Fills empty fields with per-strategy defaults and validates.
    static OptimizerConfig defaults(Strategy s, int num_stages, std::size_t total_dim);
    void resolve(int num_stages, std::size_t total_dim);
    void validate(int num_stages) const;
    CombineMode combine_mode() const;  // resolved value
};

// One backward pass per stage over the stage's own graph. Raises a numeric
// error if any gradient entry is not finite.
std::vector<TaskGradient> per_task_gradients(const NestedNetwork& net, const Tensor& x,
                                             std::span<const int> labels);

// (sum_i k_i * losses_i) / sum_i k_i
double weighted_loss(std::span<const double> losses, std::span<const double> k);

// Rescales g to norm sqrt(d_i) * C, preserving its zero pattern. Returns true
// when the gradient was too small to rescale and was left unchanged.
bool normalize_gradient(TaskGradient& g, double c, double tau);

// Sequential projection in priority order: each gradient loses its components
// along the already-projected higher-priority gradients (modified
// Gram-Schmidt without normalization). Bases with norm <= tau are skipped;
// the first gradient in priority order is returned untouched.
void orthogonalize(std::vector<TaskGradient>& grads, std::span<const int> order, double tau);

// Sum mode adds the gradients in the given order; participation-average
// divides each coordinate by the number of stages covering it.
std::vector<double> combine(const std::vector<TaskGradient>& grads, CombineMode mode,
                            std::span<const int> coverage_counts);

// W <- W - lr * update. Raises on non-finite update entries.
void step(ParamStore& store, std::span<const double> update, double lr);

// Optional per-step instrumentation for the orthogonality audits.
struct StepAudit {
    double max_abs_cosine = 0.0;            // over post-projection nonzero pairs
    int pairs = 0;
    bool first_priority_bit_identical = true;
};

// One iteration of the configured strategy (all except Greedy, which owns its
// own stage-wise loop in the train harness). Returns per-stage losses.
std::vector<double> train_step(NestedNetwork& net, const Tensor& x, std::span<const int> labels,
                               const OptimizerConfig& config, double lr,
                               StepAudit* audit = nullptr);

// One greedy update at `stage`: gradient of that stage's loss restricted to
// the parameters the stage introduced. Returns the stage loss.
double greedy_step(NestedNetwork& net, int stage, const Tensor& x, std::span<const int> labels,
                   double lr);

}  // namespace anynet
