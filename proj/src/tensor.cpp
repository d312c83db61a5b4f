#include "anynet/tensor.hpp"

#include <cmath>
#include <numeric>

#include "anynet/error.hpp"
#include "anynet/kernels.hpp"

namespace anynet {

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(total, 0.0);
    return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    require(!rows.empty(), ErrorKind::Input, "from_rows: empty row list");
    Tensor t(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r].size() == rows[0].size(), ErrorKind::Dimension, "from_rows: ragged rows");
        for (std::size_t c = 0; c < rows[r].size(); ++c) t.at(r, c) = rows[r][c];
    }
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
}

double Tensor::item() const {
    require(data.size() == 1, ErrorKind::Dimension, "item() on non-scalar tensor");
    return data[0];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::check_invariants() const {
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    require(total == data.size(), ErrorKind::Dimension, "tensor shape/data length mismatch");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, ErrorKind::Dimension, "matmul expects rank-2 tensors");
    require(a.cols() == b.rows(), ErrorKind::Dimension,
            "matmul inner dimensions mismatch: " + std::to_string(a.cols()) + " vs " +
                std::to_string(b.rows()));
    Tensor c(a.rows(), b.cols());
    kernels::matmul_nn(a.data.data(), b.data.data(), c.data.data(), a.rows(), a.cols(), b.cols());
    return c;
}

Tensor relu(const Tensor& x) {
    Tensor y;
    y.shape = x.shape;
    y.data.resize(x.data.size());
    kernels::relu_forward(x.data.data(), y.data.data(), x.data.size());
    return y;
}

SoftmaxXentResult softmax_xent(const Tensor& logits, std::span<const int> labels) {
    require(logits.rank() == 2, ErrorKind::Dimension, "softmax_xent expects batch x K logits");
    const std::size_t batch = logits.rows();
    const std::size_t k = logits.cols();
    require(labels.size() == batch, ErrorKind::Dimension, "label count != batch size");

    SoftmaxXentResult out;
    out.probs = Tensor(batch, k);
    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        const int label = labels[r];
        require(label >= 0 && static_cast<std::size_t>(label) < k, ErrorKind::Input,
                "label " + std::to_string(label) + " out of range [0, " + std::to_string(k) + ")");
        double max_logit = logits.at(r, 0);
        for (std::size_t c = 1; c < k; ++c) max_logit = std::max(max_logit, logits.at(r, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const double e = std::exp(logits.at(r, c) - max_logit);
            out.probs.at(r, c) = e;
            denom += e;
        }
        for (std::size_t c = 0; c < k; ++c) out.probs.at(r, c) /= denom;
        total += -(logits.at(r, static_cast<std::size_t>(label)) - max_logit - std::log(denom));
    }
    out.loss = total / static_cast<double>(batch);
    return out;
}

Tensor softmax_xent_backward(const Tensor& probs, std::span<const int> labels, double seed) {
    const std::size_t batch = probs.rows();
    Tensor grad = probs;
    for (std::size_t r = 0; r < batch; ++r) {
        grad.at(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    }
    kernels::scale(seed / static_cast<double>(batch), grad.data.data(), grad.data.size());
    return grad;
}

}  // namespace anynet
