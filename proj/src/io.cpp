#include "anynet/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "anynet/error.hpp"

namespace anynet {

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorKind::Io, "cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        require(out.good(), ErrorKind::Io, "short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    require(!ec, ErrorKind::Io, "cannot rename '" + tmp.string() + "' to '" + path + "'");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string history_csv(const std::vector<EpochRecord>& records, std::uint64_t seed) {
    std::string out = "epoch,stage,split,metric,value\n";
    for (const EpochRecord& r : records) {
        if (r.seed != seed) continue;
        if (!std::isnan(r.train_loss)) {
            out += std::to_string(r.epoch) + "," + std::to_string(r.stage) + ",train,loss," +
                   format_double(r.train_loss) + "\n";
        }
        out += std::to_string(r.epoch) + "," + std::to_string(r.stage) + ",val,error," +
               format_double(r.val_error) + "\n";
    }
    return out;
}

std::string report_csv(const SimReport& report) {
    std::string out = "scheme,deadline_macs,error\n";
    for (const SimRow& r : report.rows) {
        out += r.scheme + "," + format_double(r.deadline) + "," + format_double(r.error) + "\n";
    }
    return out;
}

std::string curve_csv(const std::string& scheme,
                      const std::vector<std::pair<double, double>>& curve) {
    std::string out = "scheme,stage,macs,error\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out += scheme + "," + std::to_string(i + 1) + "," + format_double(curve[i].first) + "," +
               format_double(curve[i].second) + "\n";
    }
    return out;
}

}  // namespace anynet
