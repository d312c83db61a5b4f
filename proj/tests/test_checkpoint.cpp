#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "anynet/checkpoint.hpp"
#include "anynet/error.hpp"
#include "anynet/io.hpp"
#include "anynet/rng.hpp"

using namespace anynet;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "anynet_ckpt_tests";
    fs::create_directories(dir);
    return dir / name;
}

StagePlan small_plan(NestMode mode = NestMode::Width) {
    StagePlan p;
    p.mode = mode;
    p.num_stages = 3;
    p.base_width = 3;
    p.base_depth = 2;
    p.num_classes = 3;
    p.input_dim = 2;
    return p;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    Rng rng(71);
    NestedNetwork net = NestedNetwork::build(small_plan(), rng);
    // Awkward values that would expose sloppy serialization.
    net.params().values[0] = -0.0;
    net.params().values[1] = 1e-308;
    net.params().values[2] = 0.1 + 0.2;
    net.params().values[3] = -1.7976931348623157e308;

    Checkpoint ckpt;
    ckpt.plan = net.plan();
    ckpt.seed = 9;
    ckpt.steps = 1234;
    ckpt.params = net.params().values;
    Rng state_rng(17);
    state_rng.normal();  // populate the gaussian spare
    ckpt.rng_state = state_rng.save();

    const fs::path path = temp_path("roundtrip.json");
    save_checkpoint(path.string(), ckpt);
    const Checkpoint loaded = load_checkpoint(path.string());

    REQUIRE(loaded.params.size() == ckpt.params.size());
    CHECK(std::memcmp(loaded.params.data(), ckpt.params.data(),
                      ckpt.params.size() * sizeof(double)) == 0);
    CHECK(loaded.seed == 9);
    CHECK(loaded.steps == 1234);
    CHECK(loaded.plan.mode == NestMode::Width);
    for (int i = 0; i < 4; ++i) CHECK(loaded.rng_state.words[i] == ckpt.rng_state.words[i]);
    CHECK(loaded.rng_state.has_spare == ckpt.rng_state.has_spare);
    CHECK(std::memcmp(&loaded.rng_state.spare, &ckpt.rng_state.spare, sizeof(double)) == 0);

    // The restored generator continues the exact stream.
    Rng resumed(0);
    resumed.restore(loaded.rng_state);
    Rng original(17);
    original.normal();
    for (int i = 0; i < 8; ++i) CHECK(resumed.next_u64() == original.next_u64());
}

TEST_CASE("rebuild_network reproduces the exact forward behavior") {
    Rng rng(73);
    NestedNetwork net = NestedNetwork::build(small_plan(NestMode::Depth), rng);

    Checkpoint ckpt;
    ckpt.plan = net.plan();
    ckpt.params = net.params().values;
    const fs::path path = temp_path("rebuild.json");
    save_checkpoint(path.string(), ckpt);

    NestedNetwork again = rebuild_network(load_checkpoint(path.string()));
    Rng data_rng(74);
    Tensor x(5, 2);
    for (double& v : x.data) v = data_rng.normal();
    for (int stage = 1; stage <= 3; ++stage) {
        const Tensor a = net.forward_stage(stage, x);
        const Tensor b = again.forward_stage(stage, x);
        CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("standalone checkpoints rebuild the extracted stage") {
    Rng rng(75);
    NestedNetwork net = NestedNetwork::build(small_plan(NestMode::EannCascade), rng);
    const StandaloneNet alone = net.extract_standalone(2);

    Checkpoint ckpt;
    ckpt.plan = net.plan();
    ckpt.standalone_stage = 2;
    ckpt.params = alone.store.values;
    const fs::path path = temp_path("standalone.json");
    save_checkpoint(path.string(), ckpt);

    const StandaloneNet again = rebuild_standalone(load_checkpoint(path.string()));
    CHECK(again.store.total() == alone.store.total());
    CHECK(again.macs == alone.macs);
    CHECK(std::memcmp(again.store.values.data(), alone.store.values.data(),
                      alone.store.total() * sizeof(double)) == 0);

    CHECK_THROWS_AS(rebuild_network(load_checkpoint(path.string())), Error);
}

TEST_CASE("checkpoint serialization is idempotent") {
    Rng rng(76);
    NestedNetwork net = NestedNetwork::build(small_plan(), rng);
    Checkpoint ckpt;
    ckpt.plan = net.plan();
    ckpt.params = net.params().values;
    const fs::path a = temp_path("idem-a.json");
    const fs::path b = temp_path("idem-b.json");
    save_checkpoint(a.string(), ckpt);
    save_checkpoint(b.string(), load_checkpoint(a.string()));
    CHECK(read_file(a.string()) == read_file(b.string()));
}

TEST_CASE("corrupted checkpoints are rejected") {
    Rng rng(77);
    NestedNetwork net = NestedNetwork::build(small_plan(), rng);
    Checkpoint ckpt;
    ckpt.plan = net.plan();
    ckpt.params = net.params().values;
    const fs::path path = temp_path("tamper.json");
    save_checkpoint(path.string(), ckpt);

    std::string text = read_file(path.string());
    const auto pos = text.find("\"params\": [");
    REQUIRE(pos != std::string::npos);
    text.replace(pos + 11, 1, text[pos + 11] == '1' ? "2" : "1");
    write_file_atomic(path.string(), text);
    CHECK_THROWS_AS(load_checkpoint(path.string()), Error);

    write_file_atomic(path.string(), "{not json");
    CHECK_THROWS_AS(load_checkpoint(path.string()), Error);

    CHECK_THROWS_AS(load_checkpoint(temp_path("missing.json").string()), Error);
}

TEST_CASE("non-finite parameters cannot be checkpointed") {
    Checkpoint ckpt;
    ckpt.plan = small_plan();
    ckpt.params = {1.0, std::nan(""), 2.0};
    CHECK_THROWS_AS(save_checkpoint(temp_path("nan.json").string(), ckpt), Error);
}
