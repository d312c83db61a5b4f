#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anynet/simulate.hpp"
#include "anynet/train.hpp"

namespace anynet {

// Writes via a temp file in the same directory, then renames into place.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Shortest round-trip decimal form of a double ("inf" for unbounded budgets).
std::string format_double(double v);

// One seed's history as CSV with columns: epoch,stage,split,metric,value.
// Metrics: (train, loss) when the strategy touched the stage that epoch, and
// (val, error) always.
std::string history_csv(const std::vector<EpochRecord>& records, std::uint64_t seed);

// CSV with columns: scheme,deadline_macs,error ("inf" = unbounded).
std::string report_csv(const SimReport& report);

// CSV with columns: scheme,stage,macs,error.
std::string curve_csv(const std::string& scheme,
                      const std::vector<std::pair<double, double>>& curve);

}  // namespace anynet
