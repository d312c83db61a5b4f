#include "anynet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "anynet/error.hpp"
#include "anynet/rng.hpp"

namespace anynet {

void Dataset::check_invariants() const {
    require(inputs.rows() == labels.size(), ErrorKind::Dimension,
            "dataset rows != label count");
    for (int l : labels) {
        require(l >= 0 && l < num_classes, ErrorKind::Input, "dataset label out of range");
    }
}

Dataset gen_spiral(std::uint64_t seed, std::size_t n_points, int num_classes, double noise) {
    require(num_classes >= 2, ErrorKind::Config, "spiral needs at least 2 classes");
    require(n_points >= static_cast<std::size_t>(num_classes), ErrorKind::Config,
            "spiral needs at least one point per arm");

    Rng rng = Rng::stream(seed, "spiral");
    const std::size_t k = static_cast<std::size_t>(num_classes);
    const std::size_t base = n_points / k;
    const std::size_t extra = n_points % k;

    Dataset d;
    d.num_classes = num_classes;
    d.inputs = Tensor(n_points, 2);
    d.labels.resize(n_points);

    std::size_t row = 0;
    for (std::size_t arm = 0; arm < k; ++arm) {
        const std::size_t count = base + (arm < extra ? 1 : 0);
        for (std::size_t j = 0; j < count; ++j) {
            // t in (0, 1]: keep the innermost point off the shared origin.
            // Sweep of 1.25 pi per arm: hard enough that width separates the
            // stages, easy enough to train in a few thousand SGD steps.
            const double t = static_cast<double>(j + 1) / static_cast<double>(count);
            const double radius = t;
            const double angle = 2.0 * 3.14159265358979323846 *
                                     (static_cast<double>(arm) / static_cast<double>(k)) +
                                 t * 1.25 * 3.14159265358979323846;
            d.inputs.at(row, 0) = radius * std::cos(angle) + noise * rng.normal();
            d.inputs.at(row, 1) = radius * std::sin(angle) + noise * rng.normal();
            d.labels[row] = static_cast<int>(arm);
            ++row;
        }
    }
    d.check_invariants();
    return d;
}

namespace {

double parse_number(const std::string& field, const std::string& path, std::size_t line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        require(used == field.size(), ErrorKind::Format,
                path + ":" + std::to_string(line_no) + ": malformed number '" + field + "'");
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        raise(ErrorKind::Format,
              path + ":" + std::to_string(line_no) + ": malformed number '" + field + "'");
    }
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open '" + path + "'");

    std::vector<std::vector<double>> features;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        require(fields.size() >= 2, ErrorKind::Format,
                path + ":" + std::to_string(line_no) + ": need at least one feature and a label");

        const std::size_t label_col =
            schema.label_column == static_cast<std::size_t>(-1) ? fields.size() - 1
                                                                : schema.label_column;
        require(label_col < fields.size(), ErrorKind::Format,
                path + ":" + std::to_string(line_no) + ": label column out of range");

        std::vector<double> row;
        int label = 0;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const double v = parse_number(fields[c], path, line_no);
            if (c == label_col) {
                label = static_cast<int>(v);
                require(static_cast<double>(label) == v && label >= 0, ErrorKind::Format,
                        path + ":" + std::to_string(line_no) + ": label must be a non-negative integer");
            } else {
                row.push_back(v);
            }
        }
        if (width == 0) width = row.size();
        require(row.size() == width, ErrorKind::Format,
                path + ":" + std::to_string(line_no) + ": inconsistent column count");
        features.push_back(std::move(row));
        labels.push_back(label);
    }
    require(!features.empty(), ErrorKind::Format, path + ": empty dataset");

    Dataset d;
    d.inputs = Tensor(features.size(), width);
    for (std::size_t r = 0; r < features.size(); ++r) {
        for (std::size_t c = 0; c < width; ++c) d.inputs.at(r, c) = features[r][c];
    }
    d.labels = std::move(labels);

    int max_label = 0;
    for (int l : d.labels) max_label = std::max(max_label, l);
    d.num_classes = schema.num_classes > 0 ? schema.num_classes : max_label + 1;

    if (schema.normalize) {
        double lo = d.inputs.data[0], hi = d.inputs.data[0];
        for (double v : d.inputs.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double span = hi - lo;
        for (double& v : d.inputs.data) v = span > 0.0 ? (v - lo) / span : 0.0;
    }
    d.check_invariants();
    return d;
}

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    require(in.good(), ErrorKind::Format, path + ": truncated idx header");
    return (static_cast<std::uint32_t>(bytes[0]) << 24) |
           (static_cast<std::uint32_t>(bytes[1]) << 16) |
           (static_cast<std::uint32_t>(bytes[2]) << 8) | static_cast<std::uint32_t>(bytes[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    require(imgs.good(), ErrorKind::Io, "cannot open '" + images_path + "'");
    const std::uint32_t img_magic = read_be32(imgs, images_path);
    require(img_magic == 0x00000803u, ErrorKind::Format,
            images_path + ": bad idx magic (expected ubyte rank-3 images)");
    const std::uint32_t count = read_be32(imgs, images_path);
    const std::uint32_t rows = read_be32(imgs, images_path);
    const std::uint32_t cols = read_be32(imgs, images_path);

    std::ifstream labs(labels_path, std::ios::binary);
    require(labs.good(), ErrorKind::Io, "cannot open '" + labels_path + "'");
    const std::uint32_t lab_magic = read_be32(labs, labels_path);
    require(lab_magic == 0x00000801u, ErrorKind::Format,
            labels_path + ": bad idx magic (expected ubyte rank-1 labels)");
    const std::uint32_t lab_count = read_be32(labs, labels_path);
    require(lab_count == count, ErrorKind::Format, "idx image/label counts differ");

    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    Dataset d;
    d.inputs = Tensor(count, dim);
    d.labels.resize(count);

    std::vector<unsigned char> buf(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
        require(imgs.good(), ErrorKind::Format, images_path + ": truncated image data");
        for (std::size_t j = 0; j < dim; ++j) {
            d.inputs.at(i, j) = static_cast<double>(buf[j]) / 255.0;
        }
        unsigned char label = 0;
        labs.read(reinterpret_cast<char*>(&label), 1);
        require(labs.good(), ErrorKind::Format, labels_path + ": truncated label data");
        d.labels[i] = static_cast<int>(label);
    }
    int max_label = 0;
    for (int l : d.labels) max_label = std::max(max_label, l);
    d.num_classes = max_label + 1;
    d.check_invariants();
    return d;
}

Dataset subset(const Dataset& from, const std::vector<std::size_t>& index, std::string split) {
    Dataset d;
    d.num_classes = from.num_classes;
    d.split = std::move(split);
    d.inputs = Tensor(index.size(), from.input_dim());
    d.labels.resize(index.size());
    for (std::size_t r = 0; r < index.size(); ++r) {
        require(index[r] < from.size(), ErrorKind::Input, "subset index out of range");
        for (std::size_t c = 0; c < from.input_dim(); ++c) {
            d.inputs.at(r, c) = from.inputs.at(index[r], c);
        }
        d.labels[r] = from.labels[index[r]];
    }
    return d;
}

}  // namespace anynet
