#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anynet/tensor.hpp"

namespace anynet {

struct Dataset {
    Tensor inputs;            // N x input_dim
    std::vector<int> labels;  // N entries in [0, num_classes)
    int num_classes = 0;
    std::string split;        // "train" / "val" / free-form tag

    std::size_t size() const { return labels.size(); }
    std::size_t input_dim() const { return inputs.cols(); }
    void check_invariants() const;
};

// K interleaved 2-D spiral arms, one label per arm; the standard synthetic
// multiclass task. Radius starts strictly above zero so noiseless arms are
// disjoint. Deterministic per seed.
Dataset gen_spiral(std::uint64_t seed, std::size_t n_points, int num_classes, double noise);

struct CsvSchema {
    int num_classes = 0;            // 0 = infer as max label + 1
    std::size_t label_column = static_cast<std::size_t>(-1);  // default: last column
    bool normalize = true;          // min/max-scale features into [0, 1]
};

// Numeric CSV, one example per row, integer label in the schema's column.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

// IDX ubyte files as used for small digit-image datasets; features are
// scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Rows of `from` selected by `index`, in order.
Dataset subset(const Dataset& from, const std::vector<std::size_t>& index, std::string split);

}  // namespace anynet
