#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "anynet/data.hpp"
#include "anynet/nested.hpp"
#include "anynet/rng.hpp"

namespace anynet {

// Cumulative per-stage inference cost in multiply-accumulates. A constant
// latency per MAC maps these budgets onto wall-clock deadlines.
struct CostModel {
    std::vector<double> stage_cost;
    void validate() const;  // strictly increasing
};

CostModel cost_model_for(const NestedNetwork& net);

struct DeadlineSweep {
    // Ascending budgets; +inf encodes the "no deadline" entry and comes last.
    std::vector<double> budgets;

    // Seven evenly spaced budgets from 0.5x to 1x the full-network cost,
    // then unbounded.
    static DeadlineSweep default_for(double full_cost);
    void validate() const;
};

constexpr double kNoDeadline = std::numeric_limits<double>::infinity();

// One independently trained single-stage network, reduced to what the
// oracle schemes need.
struct Independent {
    int stage = 0;
    double cost = 0.0;
    double val_error = 0.0;
    std::vector<int> predictions;  // over the evaluation dataset
};

// Largest stage whose cost fits the deadline (inclusive); 0 when none does.
int feasible_stage(const CostModel& cost, double deadline);

// Error of the nested anytime execution: the largest affordable stage
// predicts every input; with no affordable stage each input gets a seeded
// uniform random guess.
double simulate_nested(const NestedNetwork& net, const Dataset& data, double deadline, Rng& rng);

// Picks the single feasible independent network with the lowest validation
// error for all inputs; random guesses when none is feasible.
double simulate_oracle_all(std::span<const Independent> nets, const Dataset& data,
                           double deadline, Rng& rng);

// Per-input best case: an input counts as correct when any feasible
// independent network classifies it correctly.
double simulate_oracle_each(std::span<const Independent> nets, const Dataset& data,
                            double deadline, Rng& rng);

struct SimRow {
    std::string scheme;      // nested | baseline-anytime | oracle-all | oracle-each
    double deadline = 0.0;   // MAC budget; +inf = unbounded
    double error = 0.0;
};

struct SimReport {
    std::vector<SimRow> rows;
};

// Evaluates every scheme whose inputs are present at every budget. All
// fallback randomness flows from one generator seeded here.
SimReport sweep(const NestedNetwork& net, const NestedNetwork* baseline,
                std::span<const Independent> independents, const Dataset& data,
                const DeadlineSweep& deadlines, std::uint64_t seed);

// One (cumulative MACs, validation error) point per stage.
std::vector<std::pair<double, double>> tradeoff_curve(const NestedNetwork& net,
                                                      const Dataset& data);

}  // namespace anynet
