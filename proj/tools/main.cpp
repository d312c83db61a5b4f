// anynet: train, evaluate, and simulate anytime nested networks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "anynet/checkpoint.hpp"
#include "anynet/data.hpp"
#include "anynet/error.hpp"
#include "anynet/io.hpp"
#include "anynet/kernels.hpp"
#include "anynet/nested.hpp"
#include "anynet/optim.hpp"
#include "anynet/simulate.hpp"
#include "anynet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace anynet;

namespace {

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Numeric:
            return 3;
        case ErrorKind::Verification:
            return 4;
        default:
            return 2;
    }
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    for (const std::string& s : split_list(csv)) out.push_back(std::stoi(s));
    return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    for (const std::string& s : split_list(csv)) out.push_back(std::stoull(s));
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    for (const std::string& s : split_list(csv)) out.push_back(std::stod(s));
    return out;
}

json default_config() {
    return json{
        {"plan",
         {{"mode", "width"},
          {"stages", 4},
          {"width", 8},
          {"depth", 2},
          {"classes", 3},
          {"input_dim", 2}}},
        {"optimizer",
         {{"strategy", "sgd"},
          {"loss_weights", json::array()},
          {"norm_constant", 0.5},
          {"priority", json::array()},
          {"combine", "auto"},
          {"zero_norm_tol", 0.0}}},
        {"train",
         {{"epochs", 200},
          {"batch_size", 64},
          {"lr_start", 0.1},
          {"lr_end", 0.0008},
          {"seeds", json::array({1})},
          {"parallel", false}}},
        {"data",
         {{"kind", "spiral"},
          {"train_points", 3000},
          {"val_points", 1000},
          {"noise", 0.12},
          {"data_seed", 77},
          {"csv_train", ""},
          {"csv_val", ""},
          {"idx_train_images", ""},
          {"idx_train_labels", ""},
          {"idx_val_images", ""},
          {"idx_val_labels", ""}}},
    };
}

void merge_into(json& base, const json& overlay) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
            merge_into(base[it.key()], *it);
        } else {
            base[it.key()] = *it;
        }
    }
}

StagePlan plan_from(const json& cfg) {
    const json& p = cfg.at("plan");
    StagePlan plan;
    plan.mode = nest_mode_from_name(p.at("mode").get<std::string>());
    plan.num_stages = p.at("stages").get<int>();
    plan.base_width = p.at("width").get<int>();
    plan.base_depth = p.at("depth").get<int>();
    plan.num_classes = p.at("classes").get<int>();
    plan.input_dim = p.at("input_dim").get<int>();
    plan.validate();
    return plan;
}

OptimizerConfig optimizer_from(const json& cfg) {
    const json& o = cfg.at("optimizer");
    OptimizerConfig c;
    c.strategy = strategy_from_name(o.at("strategy").get<std::string>());
    c.loss_weights = o.at("loss_weights").get<std::vector<double>>();
    c.norm_constant = o.at("norm_constant").get<double>();
    c.priority = o.at("priority").get<std::vector<int>>();
    const std::string combine = o.at("combine").get<std::string>();
    if (combine != "auto") c.combine = combine_mode_from_name(combine);
    c.zero_norm_tol = o.at("zero_norm_tol").get<double>();
    return c;
}

TrainConfig train_config_from(const json& cfg) {
    const json& t = cfg.at("train");
    TrainConfig tc;
    tc.plan = plan_from(cfg);
    tc.optim = optimizer_from(cfg);
    tc.epochs = t.at("epochs").get<int>();
    tc.batch_size = t.at("batch_size").get<int>();
    tc.lr.lr_start = t.at("lr_start").get<double>();
    tc.lr.lr_end = t.at("lr_end").get<double>();
    tc.seeds = t.at("seeds").get<std::vector<std::uint64_t>>();
    tc.parallel_seeds = t.at("parallel").get<bool>();
    tc.validate();
    return tc;
}

struct DataPair {
    Dataset train;
    Dataset val;
};

DataPair datasets_from(const json& cfg) {
    const json& d = cfg.at("data");
    const std::string kind = d.at("kind").get<std::string>();
    DataPair out;
    if (kind == "spiral") {
        const std::size_t n_train = d.at("train_points").get<std::size_t>();
        const std::size_t n_val = d.at("val_points").get<std::size_t>();
        const int classes = cfg.at("plan").at("classes").get<int>();
        const double noise = d.at("noise").get<double>();
        const std::uint64_t seed = d.at("data_seed").get<std::uint64_t>();
        Dataset all = gen_spiral(seed, n_train + n_val, classes, noise);
        std::vector<std::size_t> index(all.size());
        for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
        Rng split_rng = Rng::stream(seed, "split");
        split_rng.shuffle(index);
        out.train = subset(all, {index.begin(), index.begin() + static_cast<std::ptrdiff_t>(n_train)},
                           "train");
        out.val = subset(all, {index.begin() + static_cast<std::ptrdiff_t>(n_train), index.end()},
                         "val");
    } else if (kind == "csv") {
        CsvSchema schema;
        schema.num_classes = cfg.at("plan").at("classes").get<int>();
        out.train = load_csv(d.at("csv_train").get<std::string>(), schema);
        out.val = load_csv(d.at("csv_val").get<std::string>(), schema);
        out.train.split = "train";
        out.val.split = "val";
    } else if (kind == "idx") {
        out.train = load_idx(d.at("idx_train_images").get<std::string>(),
                             d.at("idx_train_labels").get<std::string>());
        out.val = load_idx(d.at("idx_val_images").get<std::string>(),
                           d.at("idx_val_labels").get<std::string>());
        out.train.split = "train";
        out.val.split = "val";
    } else {
        raise(ErrorKind::Config, "unknown data kind '" + kind + "'");
    }
    return out;
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm_utc);
    return buf;
}

std::string resolve_run_dir(const std::string& out_flag, const std::string& run_name) {
    if (!out_flag.empty()) return out_flag;
    const char* root_env = std::getenv("ANYNET_OUT_ROOT");
    const std::string root = root_env ? root_env : "runs";
    const std::string name = run_name.empty() ? ("run-" + timestamp()) : run_name;
    return (fs::path(root) / name).string();
}

json load_config_flag(const std::string& config_path) {
    json cfg = default_config();
    if (!config_path.empty()) {
        json file;
        try {
            file = json::parse(read_file(config_path));
        } catch (const json::exception& e) {
            raise(ErrorKind::Format, config_path + ": not valid JSON: " + e.what());
        }
        merge_into(cfg, file);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainFlags {
    std::string config, out_dir, run_name;
    std::string mode, strategy, priority, seeds, loss_weights, combine;
    std::string data_kind;
    int stages = -1, width = -1, depth = -1, classes = -1, input_dim = -1;
    int epochs = -1, batch = -1;
    double lr_start = -1.0, lr_end = -1.0, noise = -1.0, norm_c = -1.0;
    long long data_seed = -1, train_points = -1, val_points = -1;
    std::string csv_train, csv_val, idx_train_images, idx_train_labels, idx_val_images,
        idx_val_labels;
    bool parallel = false;
    bool independents = false;
};

void apply_train_flags(json& cfg, const TrainFlags& f, const CLI::App& cmd) {
    auto set_if = [&](const char* flag, auto&& apply) {
        const CLI::Option* opt = cmd.get_option_no_throw(flag);
        if (opt && opt->count() > 0) apply();
    };
    set_if("--plan", [&] { cfg["plan"]["mode"] = f.mode; });
    set_if("--stages", [&] { cfg["plan"]["stages"] = f.stages; });
    set_if("--width", [&] { cfg["plan"]["width"] = f.width; });
    set_if("--depth", [&] { cfg["plan"]["depth"] = f.depth; });
    set_if("--classes", [&] { cfg["plan"]["classes"] = f.classes; });
    set_if("--input-dim", [&] { cfg["plan"]["input_dim"] = f.input_dim; });
    set_if("--optimizer", [&] { cfg["optimizer"]["strategy"] = f.strategy; });
    set_if("--priority", [&] { cfg["optimizer"]["priority"] = parse_int_list(f.priority); });
    set_if("--loss-weights",
           [&] { cfg["optimizer"]["loss_weights"] = parse_double_list(f.loss_weights); });
    set_if("--combine", [&] { cfg["optimizer"]["combine"] = f.combine; });
    set_if("--norm-constant", [&] { cfg["optimizer"]["norm_constant"] = f.norm_c; });
    set_if("--epochs", [&] { cfg["train"]["epochs"] = f.epochs; });
    set_if("--batch", [&] { cfg["train"]["batch_size"] = f.batch; });
    set_if("--lr-start", [&] { cfg["train"]["lr_start"] = f.lr_start; });
    set_if("--lr-end", [&] { cfg["train"]["lr_end"] = f.lr_end; });
    set_if("--seeds", [&] { cfg["train"]["seeds"] = parse_u64_list(f.seeds); });
    set_if("--parallel", [&] { cfg["train"]["parallel"] = true; });
    set_if("--data", [&] { cfg["data"]["kind"] = f.data_kind; });
    set_if("--train-points", [&] { cfg["data"]["train_points"] = f.train_points; });
    set_if("--val-points", [&] { cfg["data"]["val_points"] = f.val_points; });
    set_if("--noise", [&] { cfg["data"]["noise"] = f.noise; });
    set_if("--data-seed", [&] { cfg["data"]["data_seed"] = f.data_seed; });
    set_if("--csv-train", [&] { cfg["data"]["csv_train"] = f.csv_train; });
    set_if("--csv-val", [&] { cfg["data"]["csv_val"] = f.csv_val; });
    set_if("--idx-train-images", [&] { cfg["data"]["idx_train_images"] = f.idx_train_images; });
    set_if("--idx-train-labels", [&] { cfg["data"]["idx_train_labels"] = f.idx_train_labels; });
    set_if("--idx-val-images", [&] { cfg["data"]["idx_val_images"] = f.idx_val_images; });
    set_if("--idx-val-labels", [&] { cfg["data"]["idx_val_labels"] = f.idx_val_labels; });
}

int cmd_train(const TrainFlags& flags, const CLI::App& cmd) {
    json cfg = load_config_flag(flags.config);
    apply_train_flags(cfg, flags, cmd);

    TrainConfig tc = train_config_from(cfg);
    DataPair data = datasets_from(cfg);

    const std::string run_dir = resolve_run_dir(flags.out_dir, flags.run_name);
    std::cout << "run directory: " << run_dir << "\n";
    std::cout << "kernel backend: " << kernels::backend_name(kernels::active_backend()) << "\n";

    // The resolved config goes in first so any run directory is reproducible.
    {
        OptimizerConfig resolved = tc.optim;
        Rng probe_rng(0);
        NestedNetwork probe = NestedNetwork::build(tc.plan, probe_rng);
        resolved.resolve(tc.plan.num_stages, probe.params().total());
        cfg["optimizer"]["loss_weights"] = resolved.loss_weights;
        cfg["optimizer"]["priority"] = resolved.priority;
        cfg["optimizer"]["combine"] = combine_mode_name(resolved.combine_mode());
        cfg["optimizer"]["zero_norm_tol"] = resolved.zero_norm_tol;
    }
    write_file_atomic((fs::path(run_dir) / "resolved_config.json").string(), cfg.dump(2) + "\n");

    TrainResult result;
    std::vector<EpochRecord> partial;
    try {
        result = train(tc, data.train, data.val, &partial);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Numeric && !partial.empty()) {
            // Abort mid-run: flush whatever history completed.
            for (std::uint64_t seed : tc.seeds) {
                const std::string csv = history_csv(partial, seed);
                if (std::count(csv.begin(), csv.end(), '\n') > 1) {
                    write_file_atomic(
                        (fs::path(run_dir) / ("history_seed" + std::to_string(seed) + ".csv"))
                            .string(),
                        csv);
                }
            }
            std::cerr << "numeric abort: partial histories flushed to " << run_dir << "\n";
        }
        throw;
    }

    for (const SeedResult& s : result.seeds) {
        write_file_atomic(
            (fs::path(run_dir) / ("history_seed" + std::to_string(s.seed) + ".csv")).string(),
            history_csv(result.records, s.seed));
        Checkpoint ckpt;
        ckpt.plan = tc.plan;
        ckpt.seed = s.seed;
        ckpt.steps = s.steps_taken;
        ckpt.params = s.final_params;
        ckpt.rng_state = s.batch_rng_state;
        save_checkpoint(
            (fs::path(run_dir) / ("checkpoint_seed" + std::to_string(s.seed) + ".json")).string(),
            ckpt);
    }

    json summary;
    summary["config"] = cfg;
    summary["priority"] = cfg["optimizer"]["priority"];
    summary["stages"] = json::array();
    for (int i = 0; i < tc.plan.num_stages; ++i) {
        json stage;
        stage["stage"] = i + 1;
        stage["mean_error"] = result.mean_final_error[static_cast<std::size_t>(i)];
        if (!result.stddev_final_error.empty()) {
            stage["stddev_error"] = result.stddev_final_error[static_cast<std::size_t>(i)];
        } else {
            stage["stddev_error"] = nullptr;
        }
        summary["stages"].push_back(stage);
    }
    summary["per_seed"] = json::array();
    for (const SeedResult& s : result.seeds) {
        summary["per_seed"].push_back(
            {{"seed", s.seed}, {"final_errors", s.final_stage_errors}, {"steps", s.steps_taken}});
    }
    write_file_atomic((fs::path(run_dir) / "summary.json").string(), summary.dump(2) + "\n");

    if (flags.independents) {
        Rng build_rng = Rng::stream(tc.seeds[0], "init");
        NestedNetwork net = NestedNetwork::build(tc.plan, build_rng);
        for (int stage = 1; stage <= tc.plan.num_stages; ++stage) {
            Rng fresh = Rng::stream(tc.seeds[0] + static_cast<std::uint64_t>(stage),
                                    "init-standalone");
            NestedNetwork fresh_net = NestedNetwork::build(tc.plan, fresh);
            StandaloneNet alone = fresh_net.extract_standalone(stage);
            train_standalone(alone, data.train, tc, tc.seeds[0]);
            Checkpoint ckpt;
            ckpt.plan = tc.plan;
            ckpt.standalone_stage = stage;
            ckpt.seed = tc.seeds[0];
            ckpt.params = alone.store.values;
            save_checkpoint(
                (fs::path(run_dir) / ("independent_stage" + std::to_string(stage) + ".json"))
                    .string(),
                ckpt);
        }
        std::cout << "independent stage networks written\n";
    }

    for (int i = 0; i < tc.plan.num_stages; ++i) {
        std::cout << "stage " << (i + 1)
                  << " mean error: " << result.mean_final_error[static_cast<std::size_t>(i)];
        if (!result.stddev_final_error.empty()) {
            std::cout << " (" << result.stddev_final_error[static_cast<std::size_t>(i)] << ")";
        }
        std::cout << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval / sweep / curves
// ---------------------------------------------------------------------------

std::vector<Independent> load_independents(const std::string& dir, const Dataset& data) {
    std::vector<Independent> out;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& p : files) {
        Checkpoint ckpt;
        try {
            ckpt = load_checkpoint(p.string());
        } catch (const Error&) {
            continue;  // unrelated json in the directory
        }
        if (ckpt.standalone_stage < 1) continue;
        StandaloneNet alone = rebuild_standalone(ckpt);
        Independent ind;
        ind.stage = ckpt.standalone_stage;
        ind.cost = static_cast<double>(alone.macs);
        ind.predictions = predict_standalone(alone, data);
        std::size_t wrong = 0;
        for (std::size_t r = 0; r < data.size(); ++r) {
            if (ind.predictions[r] != data.labels[r]) ++wrong;
        }
        ind.val_error = static_cast<double>(wrong) / static_cast<double>(data.size());
        out.push_back(std::move(ind));
    }
    std::sort(out.begin(), out.end(),
              [](const Independent& a, const Independent& b) { return a.cost < b.cost; });
    return out;
}

Dataset eval_dataset(const json& cfg) { return datasets_from(cfg).val; }

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const std::string& out_path, const CLI::App& cmd, const TrainFlags& flags) {
    json cfg = load_config_flag(config_path);
    apply_train_flags(cfg, flags, cmd);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    NestedNetwork net = rebuild_network(ckpt);
    cfg["plan"]["classes"] = net.plan().num_classes;  // topology wins over config
    Dataset val = eval_dataset(cfg);
    const std::vector<double> errors = evaluate(net, val);

    json j;
    j["checkpoint"] = checkpoint_path;
    j["errors"] = errors;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        std::cout << "stage " << (i + 1) << " error: " << errors[i] << "\n";
    }
    if (!out_path.empty()) write_file_atomic(out_path, j.dump(2) + "\n");
    return 0;
}

int cmd_sweep(const std::string& checkpoint_path, const std::string& baseline_path,
              const std::string& independents_dir, const std::string& config_path,
              const std::string& deadlines_csv, std::uint64_t seed, const std::string& out_dir,
              const CLI::App& cmd, const TrainFlags& flags) {
    json cfg = load_config_flag(config_path);
    apply_train_flags(cfg, flags, cmd);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    NestedNetwork net = rebuild_network(ckpt);
    cfg["plan"]["classes"] = net.plan().num_classes;
    Dataset val = eval_dataset(cfg);

    std::optional<NestedNetwork> baseline;
    if (!baseline_path.empty()) baseline = rebuild_network(load_checkpoint(baseline_path));

    std::vector<Independent> independents;
    if (!independents_dir.empty()) independents = load_independents(independents_dir, val);

    DeadlineSweep deadlines;
    if (deadlines_csv.empty()) {
        const CostModel cm = cost_model_for(net);
        deadlines = DeadlineSweep::default_for(cm.stage_cost.back());
    } else {
        deadlines.budgets = parse_double_list(deadlines_csv);
        std::sort(deadlines.budgets.begin(), deadlines.budgets.end());
        deadlines.budgets.push_back(kNoDeadline);
    }

    if (!out_dir.empty()) std::cout << "output directory: " << out_dir << "\n";
    const SimReport report =
        sweep(net, baseline ? &*baseline : nullptr, independents, val, deadlines, seed);

    const std::string csv = report_csv(report);
    std::cout << csv;
    if (!out_dir.empty()) {
        write_file_atomic((fs::path(out_dir) / "report.csv").string(), csv);
        json j = json::array();
        for (const SimRow& r : report.rows) {
            j.push_back({{"scheme", r.scheme},
                         {"deadline_macs",
                          std::isinf(r.deadline) ? json(nullptr) : json(r.deadline)},
                         {"error", r.error}});
        }
        write_file_atomic((fs::path(out_dir) / "report.json").string(), j.dump(2) + "\n");
    }
    return 0;
}

int cmd_curves(const std::string& checkpoint_path, const std::string& independents_dir,
               const std::string& config_path, const std::string& out_dir, const CLI::App& cmd,
               const TrainFlags& flags) {
    json cfg = load_config_flag(config_path);
    apply_train_flags(cfg, flags, cmd);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    NestedNetwork net = rebuild_network(ckpt);
    cfg["plan"]["classes"] = net.plan().num_classes;
    Dataset val = eval_dataset(cfg);

    if (!out_dir.empty()) std::cout << "output directory: " << out_dir << "\n";
    std::string csv = curve_csv("nested", tradeoff_curve(net, val));
    if (!independents_dir.empty()) {
        std::vector<std::pair<double, double>> oracle;
        for (const Independent& ind : load_independents(independents_dir, val)) {
            oracle.emplace_back(ind.cost, ind.val_error);
        }
        std::string oracle_csv = curve_csv("oracle", oracle);
        // Merge, dropping the duplicate header.
        csv += oracle_csv.substr(oracle_csv.find('\n') + 1);
    }
    std::cout << csv;
    if (!out_dir.empty()) write_file_atomic((fs::path(out_dir) / "curves.csv").string(), csv);
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

// Small random plan for each mode; dims stay tiny so central differences over
// every parameter finish quickly.
StagePlan gradcheck_plan(NestMode mode, int variant, Rng& rng) {
    StagePlan plan;
    plan.mode = mode;
    plan.num_stages = 2 + static_cast<int>(rng.uniform_int(2));  // 2..3
    plan.base_width = 2 + static_cast<int>(rng.uniform_int(2));  // 2..3
    plan.base_depth = 1 + static_cast<int>(rng.uniform_int(2));  // 1..2
    plan.num_classes = 2 + static_cast<int>(rng.uniform_int(2));
    plan.input_dim = 2 + variant % 2;
    return plan;
}

// Max |pre-activation| margin must clear the probe width so the central
// difference never crosses a relu kink.
bool inputs_clear_of_kinks(const NestedNetwork& net, const Tensor& x, double margin) {
    for (int stage = 1; stage <= net.num_stages(); ++stage) {
        const Graph& g = net.stage_graph(stage);
        Trace t = g.forward(net.params(), x);
        const auto& nodes = g.nodes();
        for (std::size_t id = 0; id < nodes.size(); ++id) {
            if (nodes[id].kind != OpKind::Relu) continue;
            const Tensor& pre = t.values[static_cast<std::size_t>(nodes[id].inputs[0])];
            for (double v : pre.data) {
                if (std::abs(v) < margin) return false;
            }
        }
    }
    return true;
}

int cmd_gradcheck(double eps, double fd_threshold, double ortho_threshold, int audit_steps,
                  std::uint64_t seed, bool inject_fault, int stages_for_audit) {
    Rng rng = Rng::stream(seed, "gradcheck");
    const NestMode modes[] = {NestMode::Width,
                              NestMode::Depth,
                              NestMode::WidthDepthAlternating,
                              NestMode::WidthDepthSimultaneous,
                              NestMode::EvenWidth,
                              NestMode::EannCascade};

    double worst_fd = 0.0;
    int checked = 0;
    for (NestMode mode : modes) {
        for (int variant = 0; variant < 2; ++variant) {
            const StagePlan plan = gradcheck_plan(mode, variant, rng);
            Rng init(rng.next_u64());
            NestedNetwork net = NestedNetwork::build(plan, init);

            Tensor x(4, static_cast<std::size_t>(plan.input_dim));
            std::vector<int> labels(4);
            bool clear = false;
            for (int attempt = 0; attempt < 64 && !clear; ++attempt) {
                for (double& v : x.data) v = rng.normal();
                for (int& l : labels) {
                    l = static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(plan.num_classes)));
                }
                clear = inputs_clear_of_kinks(net, x, 1e-3);
            }
            if (!clear) continue;  // extraordinarily unlucky draw; skip this net

            double err = net.combined_graph().finite_diff_check(net.params(), x, labels, eps);
            if (inject_fault && checked == 0) {
                // Self-test hook: corrupt one analytic gradient entry and
                // re-measure, which must push the report over the threshold.
                Trace trace = net.combined_graph().forward(net.params(), x, labels);
                std::vector<double> bp = net.combined_graph().backward(net.params(), trace);
                std::size_t worst_coord = 0;
                for (std::size_t i = 0; i < bp.size(); ++i) {
                    if (std::abs(bp[i]) > std::abs(bp[worst_coord])) worst_coord = i;
                }
                bp[worst_coord] = -bp[worst_coord];
                ParamStore probe = net.params();
                const double saved = probe.values[worst_coord];
                probe.values[worst_coord] = saved + eps;
                const double up = net.combined_graph().forward(probe, x, labels).loss;
                probe.values[worst_coord] = saved - eps;
                const double down = net.combined_graph().forward(probe, x, labels).loss;
                const double fd = (up - down) / (2.0 * eps);
                const double denom = std::max(1e-12, std::abs(fd) + std::abs(bp[worst_coord]));
                err = std::max(err, std::abs(fd - bp[worst_coord]) / denom);
            }
            worst_fd = std::max(worst_fd, err);
            ++checked;
            std::cout << "gradcheck " << nest_mode_name(mode) << " n=" << plan.num_stages
                      << " w=" << plan.base_width << " k=" << plan.base_depth << ": max rel err "
                      << err << "\n";
        }
    }
    std::cout << "finite-difference max relative error: " << worst_fd << " over " << checked
              << " architectures\n";

    // Orthogonality audit over OSGD steps on a small training problem.
    StagePlan plan;
    plan.mode = NestMode::Width;
    plan.num_stages = stages_for_audit;
    plan.base_width = 4;
    plan.base_depth = 2;
    plan.num_classes = 3;
    plan.input_dim = 2;
    Rng init = Rng::stream(seed, "audit-init");
    NestedNetwork net = NestedNetwork::build(plan, init);
    OptimizerConfig optim = OptimizerConfig::defaults(Strategy::Osgd, plan.num_stages,
                                                      net.params().total());
    Dataset data = gen_spiral(seed, 256, plan.num_classes, 0.1);

    double worst_cos = 0.0;
    bool first_ok = true;
    int total_pairs = 0;
    Rng batch_rng = Rng::stream(seed, "audit-batch");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int s = 0; s < audit_steps; ++s) {
        batch_rng.shuffle(order);
        Tensor x(32, 2);
        std::vector<int> labels(32);
        for (std::size_t r = 0; r < 32; ++r) {
            x.at(r, 0) = data.inputs.at(order[r], 0);
            x.at(r, 1) = data.inputs.at(order[r], 1);
            labels[r] = data.labels[order[r]];
        }
        StepAudit audit;
        train_step(net, x, labels, optim, 0.05, &audit);
        worst_cos = std::max(worst_cos, audit.max_abs_cosine);
        first_ok = first_ok && audit.first_priority_bit_identical;
        total_pairs += audit.pairs;
    }
    if (total_pairs == 0) {
        std::cout << "orthogonality: no pairs\n";
    } else {
        std::cout << "orthogonality: max |cosine| " << worst_cos << " over " << total_pairs
                  << " pairs; highest-priority gradient "
                  << (first_ok ? "bit-identical" : "MODIFIED") << "\n";
    }

    const bool fd_ok = worst_fd <= fd_threshold;
    const bool ortho_ok = (total_pairs == 0) || (worst_cos <= ortho_threshold && first_ok);
    if (!fd_ok || !ortho_ok) {
        raise(ErrorKind::Verification, std::string("gradcheck failed: ") +
                                           (!fd_ok ? "finite-difference threshold exceeded"
                                                   : "orthogonality threshold exceeded"));
    }
    std::cout << "gradcheck passed\n";
    return 0;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& checkpoint_path) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    std::cout << "checkpoint: " << checkpoint_path << "\n";
    std::cout << "mode: " << nest_mode_name(ckpt.plan.mode) << "\n";
    std::cout << "stages: " << ckpt.plan.num_stages << ", base width: " << ckpt.plan.base_width
              << ", base depth: " << ckpt.plan.base_depth
              << ", classes: " << ckpt.plan.num_classes
              << ", input dim: " << ckpt.plan.input_dim << "\n";
    std::cout << "trained seed: " << ckpt.seed << ", steps: " << ckpt.steps << "\n";
    if (ckpt.standalone_stage > 0) {
        std::cout << "standalone stage: " << ckpt.standalone_stage << "\n";
        StandaloneNet alone = rebuild_standalone(ckpt);
        std::cout << "parameters: " << alone.store.total() << ", macs: " << alone.macs << "\n";
        return 0;
    }
    NestedNetwork net = rebuild_network(ckpt);
    std::cout << "parameters: " << net.params().total() << "\n";
    for (int i = 1; i <= net.num_stages(); ++i) {
        std::cout << "stage " << i << ": d_i = " << net.stage_dim(i)
                  << ", macs = " << net.flops(i) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anytime nested networks: training, evaluation, and deadline simulation"};
    app.require_subcommand(1);

    TrainFlags tf;
    std::string checkpoint_path, baseline_path, independents_dir, out_dir, out_path;
    std::string deadlines_csv;
    std::uint64_t sim_seed = 1;
    double eps = 1e-5, fd_threshold = 1e-4, ortho_threshold = 1e-8;
    int audit_steps = 20, audit_stages = 4;
    bool inject_fault = false;
    std::string backend;

    app.add_option("--backend", backend, "kernel backend: scalar or avx2");

    auto add_shared_flags = [&](CLI::App* cmd, bool with_train) {
        cmd->add_option("--config", tf.config, "JSON config file");
        cmd->add_option("--plan", tf.mode,
                        "nesting mode: width|depth|width-depth-alternating|"
                        "width-depth-simultaneous|even-width|eann-cascade");
        cmd->add_option("--stages", tf.stages, "number of stages");
        cmd->add_option("--width", tf.width, "stage-1 layer width");
        cmd->add_option("--depth", tf.depth, "stage-1 layer count");
        cmd->add_option("--classes", tf.classes, "number of classes");
        cmd->add_option("--input-dim", tf.input_dim, "input feature width");
        cmd->add_option("--data", tf.data_kind, "dataset kind: spiral|csv|idx");
        cmd->add_option("--train-points", tf.train_points, "spiral: training points");
        cmd->add_option("--val-points", tf.val_points, "spiral: validation points");
        cmd->add_option("--noise", tf.noise, "spiral: gaussian noise level");
        cmd->add_option("--data-seed", tf.data_seed, "dataset generation seed");
        cmd->add_option("--csv-train", tf.csv_train, "CSV training file");
        cmd->add_option("--csv-val", tf.csv_val, "CSV validation file");
        cmd->add_option("--idx-train-images", tf.idx_train_images, "IDX training images");
        cmd->add_option("--idx-train-labels", tf.idx_train_labels, "IDX training labels");
        cmd->add_option("--idx-val-images", tf.idx_val_images, "IDX validation images");
        cmd->add_option("--idx-val-labels", tf.idx_val_labels, "IDX validation labels");
        if (with_train) {
            cmd->add_option("--optimizer", tf.strategy,
                            "strategy: greedy|sgd|normsgd|osgd|osgd-norm");
            cmd->add_option("--priority", tf.priority, "priority order, e.g. 2,1,3");
            cmd->add_option("--loss-weights", tf.loss_weights, "loss weights, e.g. 1,1,2");
            cmd->add_option("--combine", tf.combine, "combine mode: sum|participation-average");
            cmd->add_option("--norm-constant", tf.norm_c, "normalization constant C");
            cmd->add_option("--epochs", tf.epochs, "training epochs");
            cmd->add_option("--batch", tf.batch, "mini-batch size");
            cmd->add_option("--lr-start", tf.lr_start, "initial learning rate");
            cmd->add_option("--lr-end", tf.lr_end, "final learning rate");
            cmd->add_option("--seeds", tf.seeds, "training seeds, e.g. 1,2,3");
            cmd->add_flag("--parallel", tf.parallel, "run seeds in parallel threads");
        }
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train an anytime network");
    add_shared_flags(train_cmd, true);
    train_cmd->add_option("--out", tf.out_dir, "run directory (default: timestamped)");
    train_cmd->add_option("--run-name", tf.run_name, "run directory name under the output root");
    train_cmd->add_flag("--independents", tf.independents,
                        "also train one standalone network per stage");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint per stage");
    add_shared_flags(eval_cmd, false);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--out", out_path, "write JSON results here");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "deadline sweep over schemes");
    add_shared_flags(sweep_cmd, false);
    sweep_cmd->add_option("--checkpoint", checkpoint_path, "anytime checkpoint")->required();
    sweep_cmd->add_option("--baseline", baseline_path, "baseline anytime checkpoint");
    sweep_cmd->add_option("--independents", independents_dir,
                          "directory of standalone stage checkpoints");
    sweep_cmd->add_option("--deadlines", deadlines_csv, "explicit MAC budgets, e.g. 100,200");
    sweep_cmd->add_option("--seed", sim_seed, "fallback-guess seed");
    sweep_cmd->add_option("--out", out_dir, "write report.csv/report.json here");

    CLI::App* curves_cmd = app.add_subcommand("curves", "accuracy-cost trade-off points");
    add_shared_flags(curves_cmd, false);
    curves_cmd->add_option("--checkpoint", checkpoint_path, "anytime checkpoint")->required();
    curves_cmd->add_option("--independents", independents_dir,
                           "directory of standalone stage checkpoints");
    curves_cmd->add_option("--out", out_dir, "write curves.csv here");

    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference and projection audit");
    grad_cmd->add_option("--eps", eps, "central difference width");
    grad_cmd->add_option("--fd-threshold", fd_threshold, "max allowed relative error");
    grad_cmd->add_option("--ortho-threshold", ortho_threshold, "max allowed |cosine|");
    grad_cmd->add_option("--steps", audit_steps, "training steps to audit");
    grad_cmd->add_option("--stages", audit_stages, "stage count for the audit net");
    grad_cmd->add_option("--seed", sim_seed, "seed");
    grad_cmd->add_flag("--inject-fault", inject_fault, "corrupt one gradient (checker self-test)");

    CLI::App* inspect_cmd = app.add_subcommand("inspect", "describe a checkpoint");
    inspect_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (!backend.empty()) {
            const kernels::Backend b = backend == "avx2" ? kernels::Backend::Avx2
                                                         : kernels::Backend::Scalar;
            require(backend == "avx2" || backend == "scalar", ErrorKind::Config,
                    "unknown backend '" + backend + "'");
            require(kernels::set_backend(b), ErrorKind::Config,
                    "backend '" + backend + "' not supported on this CPU");
        }
        if (train_cmd->parsed()) return cmd_train(tf, *train_cmd);
        if (eval_cmd->parsed()) {
            return cmd_eval(checkpoint_path, tf.config, out_path, *eval_cmd, tf);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(checkpoint_path, baseline_path, independents_dir, tf.config,
                             deadlines_csv, sim_seed, out_dir, *sweep_cmd, tf);
        }
        if (curves_cmd->parsed()) {
            return cmd_curves(checkpoint_path, independents_dir, tf.config, out_dir, *curves_cmd,
                              tf);
        }
        if (grad_cmd->parsed()) {
            return cmd_gradcheck(eps, fd_threshold, ortho_threshold, audit_steps, sim_seed,
                                 inject_fault, audit_stages);
        }
        if (inspect_cmd->parsed()) return cmd_inspect(checkpoint_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
