#include "anynet/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "anynet/error.hpp"
#include "anynet/train.hpp"

namespace anynet {

void CostModel::validate() const {
    require(!stage_cost.empty(), ErrorKind::Config, "cost model has no stages");
    for (std::size_t i = 1; i < stage_cost.size(); ++i) {
        require(stage_cost[i] > stage_cost[i - 1], ErrorKind::Config,
                "cumulative stage cost must be strictly increasing");
    }
}

CostModel cost_model_for(const NestedNetwork& net) {
    CostModel cm;
    for (int i = 1; i <= net.num_stages(); ++i) {
        cm.stage_cost.push_back(static_cast<double>(net.flops(i)));
    }
    cm.validate();
    return cm;
}

DeadlineSweep DeadlineSweep::default_for(double full_cost) {
    DeadlineSweep s;
    for (int j = 0; j < 7; ++j) {
        s.budgets.push_back(0.5 * full_cost + static_cast<double>(j) * (0.5 * full_cost / 6.0));
    }
    s.budgets.push_back(kNoDeadline);
    return s;
}

void DeadlineSweep::validate() const {
    require(!budgets.empty(), ErrorKind::Config, "deadline sweep is empty");
    for (std::size_t i = 1; i < budgets.size(); ++i) {
        require(budgets[i] >= budgets[i - 1], ErrorKind::Config,
                "deadline sweep must be ascending");
    }
    for (std::size_t i = 0; i + 1 < budgets.size(); ++i) {
        require(std::isfinite(budgets[i]), ErrorKind::Config,
                "only the final sweep entry may be unbounded");
    }
}

int feasible_stage(const CostModel& cost, double deadline) {
    int best = 0;
    for (std::size_t i = 0; i < cost.stage_cost.size(); ++i) {
        if (cost.stage_cost[i] <= deadline) best = static_cast<int>(i) + 1;
    }
    return best;
}

namespace {

double chance_error(const Dataset& data, Rng& rng) {
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const int guess = static_cast<int>(rng.uniform_int(
            static_cast<std::uint64_t>(data.num_classes)));
        if (guess != data.labels[r]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(data.size());
}

double error_of(const std::vector<int>& pred, const Dataset& data) {
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (pred[r] != data.labels[r]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(data.size());
}

}  // namespace

double simulate_nested(const NestedNetwork& net, const Dataset& data, double deadline, Rng& rng) {
    require(deadline >= 0.0, ErrorKind::Input, "deadline must be non-negative");
    const CostModel cost = cost_model_for(net);
    const int stage = feasible_stage(cost, deadline);
    if (stage == 0) return chance_error(data, rng);
    return error_of(predict_stage(net, stage, data), data);
}

double simulate_oracle_all(std::span<const Independent> nets, const Dataset& data,
                           double deadline, Rng& rng) {
    const Independent* best = nullptr;
    for (const Independent& n : nets) {
        if (n.cost > deadline) continue;
        if (!best || n.val_error < best->val_error) best = &n;
    }
    if (!best) return chance_error(data, rng);
    return error_of(best->predictions, data);
}

double simulate_oracle_each(std::span<const Independent> nets, const Dataset& data,
                            double deadline, Rng& rng) {
    std::vector<const Independent*> feasible;
    for (const Independent& n : nets) {
        if (n.cost <= deadline) feasible.push_back(&n);
    }
    if (feasible.empty()) return chance_error(data, rng);
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        bool correct = false;
        for (const Independent* n : feasible) {
            if (n->predictions[r] == data.labels[r]) {
                correct = true;
                break;
            }
        }
        if (!correct) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(data.size());
}

SimReport sweep(const NestedNetwork& net, const NestedNetwork* baseline,
                std::span<const Independent> independents, const Dataset& data,
                const DeadlineSweep& deadlines, std::uint64_t seed) {
    deadlines.validate();
    data.check_invariants();
    Rng rng = Rng::stream(seed, "sweep");

    // Stage predictions are deadline-independent; compute them once.
    const CostModel cost = cost_model_for(net);
    std::vector<double> stage_error;
    for (int i = 1; i <= net.num_stages(); ++i) {
        stage_error.push_back(error_of(predict_stage(net, i, data), data));
    }
    CostModel base_cost;
    std::vector<double> base_error;
    if (baseline) {
        base_cost = cost_model_for(*baseline);
        for (int i = 1; i <= baseline->num_stages(); ++i) {
            base_error.push_back(error_of(predict_stage(*baseline, i, data), data));
        }
    }

    SimReport report;
    for (double deadline : deadlines.budgets) {
        {
            const int stage = feasible_stage(cost, deadline);
            const double err = stage == 0 ? chance_error(data, rng)
                                          : stage_error[static_cast<std::size_t>(stage - 1)];
            report.rows.push_back({"nested", deadline, err});
        }
        if (baseline) {
            const int stage = feasible_stage(base_cost, deadline);
            const double err = stage == 0 ? chance_error(data, rng)
                                          : base_error[static_cast<std::size_t>(stage - 1)];
            report.rows.push_back({"baseline-anytime", deadline, err});
        }
        if (!independents.empty()) {
            report.rows.push_back(
                {"oracle-all", deadline, simulate_oracle_all(independents, data, deadline, rng)});
            report.rows.push_back({"oracle-each", deadline,
                                   simulate_oracle_each(independents, data, deadline, rng)});
        }
    }
    return report;
}

std::vector<std::pair<double, double>> tradeoff_curve(const NestedNetwork& net,
                                                      const Dataset& data) {
    const CostModel cost = cost_model_for(net);
    const std::vector<double> errors = evaluate(net, data);
    std::vector<std::pair<double, double>> curve;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        curve.emplace_back(cost.stage_cost[i], errors[i]);
    }
    return curve;
}

}  // namespace anynet
