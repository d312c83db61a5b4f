#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anynet/nested.hpp"
#include "anynet/rng.hpp"

namespace anynet {

// Versioned JSON snapshot of a trained model: enough to rebuild the exact
// topology and continue or evaluate bit-exactly. Doubles are emitted in
// shortest round-trip form and guarded by a byte hash, so save/load is
// bit-exact for finite values.
struct Checkpoint {
    StagePlan plan;
    int standalone_stage = 0;  // 0 = full anytime network, else an extracted stage
    std::uint64_t seed = 0;
    std::uint64_t steps = 0;
    std::vector<double> params;
    Rng::State rng_state{};
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the full anytime network from a checkpoint (standalone_stage 0).
NestedNetwork rebuild_network(const Checkpoint& ckpt);

// Rebuilds an extracted stage network (standalone_stage > 0).
StandaloneNet rebuild_standalone(const Checkpoint& ckpt);

std::uint64_t hash_doubles(const std::vector<double>& values);

}  // namespace anynet
