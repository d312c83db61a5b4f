#include "anynet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <thread>

#include "anynet/error.hpp"

namespace anynet {

void LrSchedule::validate() const {
    require(lr_start >= lr_end && lr_end > 0.0, ErrorKind::Config,
            "learning rate schedule needs lr_start >= lr_end > 0");
}

double lr_at(const LrSchedule& schedule, std::size_t step, std::size_t total_steps) {
    schedule.validate();
    if (total_steps <= 1) return schedule.lr_start;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return schedule.lr_start * std::pow(schedule.lr_end / schedule.lr_start, t);
}

void TrainConfig::validate() const {
    plan.validate();
    lr.validate();
    require(epochs >= 1, ErrorKind::Config, "need epochs >= 1");
    require(batch_size >= 1, ErrorKind::Config, "need batch_size >= 1");
    require(!seeds.empty(), ErrorKind::Config, "need at least one seed");
}

namespace {

std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& data,
                                                 const std::vector<std::size_t>& order,
                                                 std::size_t begin, std::size_t end) {
    Tensor x(end - begin, data.input_dim());
    std::vector<int> labels(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
        const std::size_t src = order[r];
        for (std::size_t c = 0; c < data.input_dim(); ++c) {
            x.at(r - begin, c) = data.inputs.at(src, c);
        }
        labels[r - begin] = data.labels[src];
    }
    return {std::move(x), std::move(labels)};
}

std::uint64_t hash_region(const NestedNetwork& net, int stage) {
    // FNV-1a over the bytes of mask(stage) + head(stage) parameters.
    std::uint64_t h = 1469598103934665603ull;
    const ParamStore& store = net.params();
    for (std::size_t slot = 0; slot < store.slots.size(); ++slot) {
        if (!net.slot_in_stage(static_cast<int>(slot), stage)) continue;
        const Slot& s = store.slots[slot];
        const unsigned char* bytes =
            reinterpret_cast<const unsigned char*>(store.values.data() + s.offset);
        for (std::size_t i = 0; i < s.size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

struct SeedRun {
    std::vector<EpochRecord> records;
    SeedResult result;
};

struct RecordSink {
    std::vector<EpochRecord>* records = nullptr;
    std::mutex mutex;
    void push(std::span<const EpochRecord> batch) {
        if (!records) return;
        const std::lock_guard<std::mutex> lock(mutex);
        records->insert(records->end(), batch.begin(), batch.end());
    }
};

SeedRun run_one_seed(const TrainConfig& config, const Dataset& train_data,
                     const Dataset& val_data, std::uint64_t seed, RecordSink& sink) {
    const int n = config.plan.num_stages;
    Rng init_rng = Rng::stream(seed, "init");
    NestedNetwork net = NestedNetwork::build(config.plan, init_rng);

    OptimizerConfig optim = config.optim;
    optim.resolve(n, net.params().total());

    Rng batch_rng = Rng::stream(seed, "batch");
    const std::size_t n_train = train_data.size();
    const std::size_t steps_per_epoch =
        (n_train + static_cast<std::size_t>(config.batch_size) - 1) /
        static_cast<std::size_t>(config.batch_size);

    SeedRun run;
    run.result.seed = seed;

    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    const bool greedy = optim.strategy == Strategy::Greedy;
    std::size_t global_step = 0;

    auto record_epoch = [&](int epoch, const std::vector<double>& loss_sums,
                            const std::vector<std::size_t>& loss_counts) {
        const std::vector<double> val_errors = evaluate(net, val_data);
        std::vector<EpochRecord> fresh;
        for (int i = 0; i < n; ++i) {
            EpochRecord rec;
            rec.seed = seed;
            rec.epoch = epoch;
            rec.stage = i + 1;
            rec.train_loss =
                loss_counts[static_cast<std::size_t>(i)] > 0
                    ? loss_sums[static_cast<std::size_t>(i)] /
                          static_cast<double>(loss_counts[static_cast<std::size_t>(i)])
                    : std::numeric_limits<double>::quiet_NaN();
            rec.val_error = val_errors[static_cast<std::size_t>(i)];
            fresh.push_back(rec);
        }
        sink.push(fresh);
        run.records.insert(run.records.end(), fresh.begin(), fresh.end());
    };

    if (greedy) {
        // Each stage trains only the parameters it introduces, so a greedy
        // epoch costs roughly flops(stage) against the joint strategies'
        // sum over all stages. Budgets are compute-equalized: stage i gets
        // epochs * sum_j flops(j) / (n * flops(i)) epochs, which keeps the
        // total backward work level with a joint run of `epochs` epochs.
        // The schedule restarts inside each stage's budget.
        double total_cost = 0.0;
        for (int i = 1; i <= n; ++i) total_cost += static_cast<double>(net.flops(i));
        std::vector<int> stage_epochs;
        for (int i = 1; i <= n; ++i) {
            const double share = total_cost * config.epochs /
                                 (static_cast<double>(n) * static_cast<double>(net.flops(i)));
            stage_epochs.push_back(std::max(1, static_cast<int>(std::llround(share))));
        }

        std::vector<std::uint64_t> freeze_hashes;
        int global_epoch = 0;
        for (int stage = 1; stage <= n; ++stage) {
            const std::size_t stage_steps =
                static_cast<std::size_t>(stage_epochs[static_cast<std::size_t>(stage - 1)]) *
                steps_per_epoch;
            std::size_t step_in_stage = 0;
            for (int e = 0; e < stage_epochs[static_cast<std::size_t>(stage - 1)]; ++e) {
                batch_rng.shuffle(order);
                std::vector<double> loss_sums(static_cast<std::size_t>(n), 0.0);
                std::vector<std::size_t> loss_counts(static_cast<std::size_t>(n), 0);
                for (std::size_t s = 0; s < steps_per_epoch; ++s) {
                    const std::size_t begin = s * static_cast<std::size_t>(config.batch_size);
                    const std::size_t end =
                        std::min(n_train, begin + static_cast<std::size_t>(config.batch_size));
                    auto [x, labels] = gather_batch(train_data, order, begin, end);
                    const double lr = lr_at(config.lr, step_in_stage++, stage_steps);
                    const double loss = greedy_step(net, stage, x, labels, lr);
                    loss_sums[static_cast<std::size_t>(stage - 1)] += loss;
                    loss_counts[static_cast<std::size_t>(stage - 1)] += 1;
                    ++global_step;
                }
                record_epoch(++global_epoch, loss_sums, loss_counts);
            }
            freeze_hashes.push_back(hash_region(net, stage));
        }
        // Frozen stages must be byte-identical to their state at freeze time.
        for (int stage = 1; stage <= n; ++stage) {
            require(hash_region(net, stage) ==
                        freeze_hashes[static_cast<std::size_t>(stage - 1)],
                    ErrorKind::Verification,
                    "greedy freeze violated for stage " + std::to_string(stage));
        }
    } else {
        const std::size_t total_steps =
            static_cast<std::size_t>(config.epochs) * steps_per_epoch;
        for (int epoch = 1; epoch <= config.epochs; ++epoch) {
            batch_rng.shuffle(order);
            std::vector<double> loss_sums(static_cast<std::size_t>(n), 0.0);
            std::vector<std::size_t> loss_counts(static_cast<std::size_t>(n), 0);
            for (std::size_t s = 0; s < steps_per_epoch; ++s) {
                const std::size_t begin = s * static_cast<std::size_t>(config.batch_size);
                const std::size_t end =
                    std::min(n_train, begin + static_cast<std::size_t>(config.batch_size));
                auto [x, labels] = gather_batch(train_data, order, begin, end);
                const double lr = lr_at(config.lr, global_step, total_steps);
                const std::vector<double> losses = train_step(net, x, labels, optim, lr);
                for (int i = 0; i < n; ++i) {
                    loss_sums[static_cast<std::size_t>(i)] +=
                        losses[static_cast<std::size_t>(i)];
                    loss_counts[static_cast<std::size_t>(i)] += 1;
                }
                ++global_step;
            }
            record_epoch(epoch, loss_sums, loss_counts);
        }
    }

    run.result.final_params = net.params().values;
    run.result.final_stage_errors = evaluate(net, val_data);
    run.result.batch_rng_state = batch_rng.save();
    run.result.steps_taken = global_step;
    return run;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& val_data,
                  std::vector<EpochRecord>* partial_sink) {
    config.validate();
    train_data.check_invariants();
    val_data.check_invariants();
    require(train_data.num_classes == config.plan.num_classes, ErrorKind::Config,
            "dataset class count != plan class count");
    require(train_data.input_dim() == static_cast<std::size_t>(config.plan.input_dim),
            ErrorKind::Config, "dataset input width != plan input width");

    RecordSink sink;
    sink.records = partial_sink;

    std::vector<SeedRun> runs(config.seeds.size());
    if (config.parallel_seeds && config.seeds.size() > 1) {
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> failures(config.seeds.size());
        for (std::size_t i = 0; i < config.seeds.size(); ++i) {
            workers.emplace_back([&, i] {
                try {
                    runs[i] = run_one_seed(config, train_data, val_data, config.seeds[i], sink);
                } catch (...) {
                    failures[i] = std::current_exception();
                }
            });
        }
        for (std::thread& w : workers) w.join();
        for (const std::exception_ptr& failure : failures) {
            if (failure) std::rethrow_exception(failure);
        }
    } else {
        for (std::size_t i = 0; i < config.seeds.size(); ++i) {
            runs[i] = run_one_seed(config, train_data, val_data, config.seeds[i], sink);
        }
    }

    TrainResult out;
    for (SeedRun& r : runs) {
        out.records.insert(out.records.end(), r.records.begin(), r.records.end());
        out.seeds.push_back(std::move(r.result));
    }

    const int n = config.plan.num_stages;
    out.mean_final_error.assign(static_cast<std::size_t>(n), 0.0);
    for (const SeedResult& s : out.seeds) {
        for (int i = 0; i < n; ++i) {
            out.mean_final_error[static_cast<std::size_t>(i)] +=
                s.final_stage_errors[static_cast<std::size_t>(i)];
        }
    }
    for (double& v : out.mean_final_error) v /= static_cast<double>(out.seeds.size());

    if (out.seeds.size() >= 2) {
        out.stddev_final_error.assign(static_cast<std::size_t>(n), 0.0);
        for (const SeedResult& s : out.seeds) {
            for (int i = 0; i < n; ++i) {
                const double d = s.final_stage_errors[static_cast<std::size_t>(i)] -
                                 out.mean_final_error[static_cast<std::size_t>(i)];
                out.stddev_final_error[static_cast<std::size_t>(i)] += d * d;
            }
        }
        for (double& v : out.stddev_final_error) {
            v = std::sqrt(v / static_cast<double>(out.seeds.size() - 1));
        }
    }
    return out;
}

std::vector<int> predict_stage(const NestedNetwork& net, int stage, const Dataset& data) {
    const Tensor logits = net.forward_stage(stage, data.inputs);
    std::vector<int> pred(data.size());
    for (std::size_t r = 0; r < data.size(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c) {
            if (logits.at(r, c) > logits.at(r, best)) best = c;
        }
        pred[r] = static_cast<int>(best);
    }
    return pred;
}

std::vector<int> predict_standalone(const StandaloneNet& net, const Dataset& data) {
    Trace t = net.graph.forward(net.store, data.inputs);
    const Tensor& logits = t.values[static_cast<std::size_t>(net.graph.logits_node())];
    std::vector<int> pred(data.size());
    for (std::size_t r = 0; r < data.size(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c) {
            if (logits.at(r, c) > logits.at(r, best)) best = c;
        }
        pred[r] = static_cast<int>(best);
    }
    return pred;
}

std::vector<double> evaluate(const NestedNetwork& net, const Dataset& data) {
    data.check_invariants();
    std::vector<double> errors;
    for (int stage = 1; stage <= net.num_stages(); ++stage) {
        const std::vector<int> pred = predict_stage(net, stage, data);
        std::size_t wrong = 0;
        for (std::size_t r = 0; r < data.size(); ++r) {
            if (pred[r] != data.labels[r]) ++wrong;
        }
        errors.push_back(static_cast<double>(wrong) / static_cast<double>(data.size()));
    }
    return errors;
}

void train_standalone(StandaloneNet& net, const Dataset& train_data, const TrainConfig& config,
                      std::uint64_t seed) {
    Rng batch_rng = Rng::stream(seed, "batch-standalone");
    const std::size_t n_train = train_data.size();
    const std::size_t steps_per_epoch =
        (n_train + static_cast<std::size_t>(config.batch_size) - 1) /
        static_cast<std::size_t>(config.batch_size);
    const std::size_t total_steps = static_cast<std::size_t>(config.epochs) * steps_per_epoch;

    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    std::size_t global_step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        batch_rng.shuffle(order);
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const std::size_t begin = s * static_cast<std::size_t>(config.batch_size);
            const std::size_t end =
                std::min(n_train, begin + static_cast<std::size_t>(config.batch_size));
            auto [x, labels] = gather_batch(train_data, order, begin, end);
            Trace trace = net.graph.forward(net.store, x, labels);
            std::vector<double> grad = net.graph.backward(net.store, trace);
            step(net.store, grad, lr_at(config.lr, global_step, total_steps));
            ++global_step;
        }
    }
}

}  // namespace anynet
