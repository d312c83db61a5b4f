#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anynet/data.hpp"
#include "anynet/nested.hpp"
#include "anynet/optim.hpp"
#include "anynet/rng.hpp"

namespace anynet {

struct LrSchedule {
    double lr_start = 0.1;
    double lr_end = 0.0008;
    void validate() const;
};

// Geometric interpolation from lr_start at step 0 to lr_end at the final
// step of the budget.
double lr_at(const LrSchedule& schedule, std::size_t step, std::size_t total_steps);

struct TrainConfig {
    StagePlan plan;
    OptimizerConfig optim;
    int epochs = 200;
    int batch_size = 64;
    LrSchedule lr;
    std::vector<std::uint64_t> seeds = {1};
    bool parallel_seeds = false;

    void validate() const;
};

struct EpochRecord {
    std::uint64_t seed = 0;
    int epoch = 0;                 // 1-based
    int stage = 0;                 // 1-based
    double train_loss = 0.0;       // NaN when the strategy did not touch the stage
    double val_error = 0.0;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<double> final_params;
    std::vector<double> final_stage_errors;
    Rng::State batch_rng_state{};
    std::size_t steps_taken = 0;
};

struct TrainResult {
    std::vector<EpochRecord> records;
    std::vector<SeedResult> seeds;
    std::vector<double> mean_final_error;    // per stage
    std::vector<double> stddev_final_error;  // per stage; empty when < 2 seeds
};

// Runs the configured strategy for every seed (serially or in parallel
// threads; results are identical either way) and aggregates final errors.
// When `partial_sink` is given, epoch records land there as they complete so
// an aborted run still leaves a usable history.
TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& val_data,
                  std::vector<EpochRecord>* partial_sink = nullptr);

// Fraction misclassified per stage, argmax over logits (ties -> lowest id).
std::vector<double> evaluate(const NestedNetwork& net, const Dataset& data);

// Predicted labels of one stage over the whole dataset.
std::vector<int> predict_stage(const NestedNetwork& net, int stage, const Dataset& data);
std::vector<int> predict_standalone(const StandaloneNet& net, const Dataset& data);

// Plain single-task SGD training of one standalone stage network (the
// substrate for the independently trained baselines).
void train_standalone(StandaloneNet& net, const Dataset& train_data, const TrainConfig& config,
                      std::uint64_t seed);

}  // namespace anynet
