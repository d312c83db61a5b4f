#include "anynet/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "anynet/error.hpp"
#include "anynet/io.hpp"

namespace anynet {

namespace {

constexpr int kVersion = 1;

std::string hex_u64(std::uint64_t v) {
    std::ostringstream ss;
    ss << "0x" << std::hex << v;
    return ss.str();
}

std::uint64_t parse_hex_u64(const std::string& s) {
    require(s.rfind("0x", 0) == 0, ErrorKind::Format, "expected 0x-prefixed hex value");
    return std::stoull(s.substr(2), nullptr, 16);
}

}  // namespace

std::uint64_t hash_doubles(const std::vector<double>& values) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(values.data());
    for (std::size_t i = 0; i < values.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    for (double v : ckpt.params) {
        require(std::isfinite(v), ErrorKind::Numeric,
                "refusing to checkpoint non-finite parameters");
    }
    nlohmann::json j;
    j["format"] = "anynet-checkpoint";
    j["version"] = kVersion;
    j["plan"] = {
        {"mode", nest_mode_name(ckpt.plan.mode)},   {"stages", ckpt.plan.num_stages},
        {"width", ckpt.plan.base_width},            {"depth", ckpt.plan.base_depth},
        {"classes", ckpt.plan.num_classes},         {"input_dim", ckpt.plan.input_dim},
    };
    j["standalone_stage"] = ckpt.standalone_stage;
    j["seed"] = ckpt.seed;
    j["steps"] = ckpt.steps;
    j["params"] = ckpt.params;
    j["param_hash"] = hex_u64(hash_doubles(ckpt.params));
    j["rng"] = {
        {"words",
         {hex_u64(ckpt.rng_state.words[0]), hex_u64(ckpt.rng_state.words[1]),
          hex_u64(ckpt.rng_state.words[2]), hex_u64(ckpt.rng_state.words[3])}},
        {"has_spare", ckpt.rng_state.has_spare},
        {"spare", ckpt.rng_state.spare},
    };
    write_file_atomic(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Format, path + ": not valid JSON: " + e.what());
    }
    try {
        require(j.at("format") == "anynet-checkpoint", ErrorKind::Format,
                path + ": not a checkpoint file");
        require(j.at("version") == kVersion, ErrorKind::Format,
                path + ": unsupported checkpoint version");
        Checkpoint c;
        const auto& plan = j.at("plan");
        c.plan.mode = nest_mode_from_name(plan.at("mode").get<std::string>());
        c.plan.num_stages = plan.at("stages").get<int>();
        c.plan.base_width = plan.at("width").get<int>();
        c.plan.base_depth = plan.at("depth").get<int>();
        c.plan.num_classes = plan.at("classes").get<int>();
        c.plan.input_dim = plan.at("input_dim").get<int>();
        c.standalone_stage = j.at("standalone_stage").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.steps = j.at("steps").get<std::uint64_t>();
        c.params = j.at("params").get<std::vector<double>>();
        require(parse_hex_u64(j.at("param_hash").get<std::string>()) == hash_doubles(c.params),
                ErrorKind::Format, path + ": parameter hash mismatch");
        const auto& rng = j.at("rng");
        for (int i = 0; i < 4; ++i) {
            c.rng_state.words[i] = parse_hex_u64(rng.at("words").at(i).get<std::string>());
        }
        c.rng_state.has_spare = rng.at("has_spare").get<bool>();
        c.rng_state.spare = rng.at("spare").get<double>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Format, path + ": malformed checkpoint: " + e.what());
    }
}

NestedNetwork rebuild_network(const Checkpoint& ckpt) {
    require(ckpt.standalone_stage == 0, ErrorKind::Config,
            "checkpoint holds a standalone stage, not a full anytime network");
    Rng scratch(0);  // parameters are overwritten below
    NestedNetwork net = NestedNetwork::build(ckpt.plan, scratch);
    require(net.params().total() == ckpt.params.size(), ErrorKind::Format,
            "checkpoint parameter count does not match the plan topology");
    net.params().values = ckpt.params;
    return net;
}

StandaloneNet rebuild_standalone(const Checkpoint& ckpt) {
    require(ckpt.standalone_stage >= 1, ErrorKind::Config,
            "checkpoint holds a full network, not a standalone stage");
    Rng scratch(0);
    NestedNetwork net = NestedNetwork::build(ckpt.plan, scratch);
    StandaloneNet alone = net.extract_standalone(ckpt.standalone_stage);
    require(alone.store.total() == ckpt.params.size(), ErrorKind::Format,
            "checkpoint parameter count does not match the standalone topology");
    alone.store.values = ckpt.params;
    return alone;
}

}  // namespace anynet
