#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace anynet {

// Dense row-major tensor of doubles. Everything in the library (activations,
// weights, gradients) lives in one of these or in a flat parameter vector.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols)
        : shape{rows, cols}, data(rows * cols, 0.0) {}

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);
    static Tensor scalar(double v);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    double item() const;  // value of a 1-element tensor

    bool all_finite() const;
    void check_invariants() const;  // product(shape) == data.size()
};

// C = A * B with a fixed summation order; dimension mismatch raises.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise max(x, 0).
Tensor relu(const Tensor& x);

struct SoftmaxXentResult {
    double loss = 0.0;   // mean over the batch of -log softmax(logits)[label]
    Tensor probs;        // batch x K softmax, cached for the backward pass
};

// Mean cross-entropy of row-wise softmax against integer labels in [0, K).
SoftmaxXentResult softmax_xent(const Tensor& logits, std::span<const int> labels);

// d(loss)/d(logits) = (probs - onehot(labels)) / batch, scaled by `seed`.
Tensor softmax_xent_backward(const Tensor& probs, std::span<const int> labels, double seed);

}  // namespace anynet
