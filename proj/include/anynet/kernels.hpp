#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops behind all tensor arithmetic. Two variants exist
// for each kernel: a scalar reference and an AVX2 one, selected at runtime.
//
// Both variants commit to the same summation contract: reductions accumulate
// in four independent lanes over 4-element blocks, reduce the lanes pairwise,
// then fold in the scalar tail, and no FMA contraction is used anywhere.
// The scalar reference follows this blocked order too, so scalar and AVX2
// results are bit-identical and switching backends never changes a result.
namespace anynet::kernels {

enum class Backend {
    Scalar,
    Avx2,
};

const char* backend_name(Backend b);

// True if this CPU can execute the given backend.
bool cpu_supports(Backend b);

// Backend in use. Resolved once on first use: ANYNET_BACKEND=scalar|avx2 if
// set and supported, otherwise the widest supported backend.
Backend active_backend();

// Force a backend. Returns false (and leaves the selection alone) if the CPU
// does not support it.
bool set_backend(Backend b);

// sum_i x[i] * y[i]
double dot(const double* x, const double* y, std::size_t n);

// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);

// x[i] *= a
void scale(double a, double* x, std::size_t n);

// y[i] += x[i]
void add_inplace(double* y, const double* x, std::size_t n);

// y[i] = max(x[i], 0)
void relu_forward(const double* x, double* y, std::size_t n);

// dx[i] += (x[i] > 0) ? dy[i] : 0
void relu_backward(const double* x, const double* dy, double* dx, std::size_t n);

// C += A * B        A: m x k, B: k x n, C: m x n, all row-major.
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);

// C += A * B^T      A: m x k, B: n x k, C: m x n.
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);

// C += A^T * B      A: k x m, B: k x n, C: m x n.
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);

// Per-element kernel table, in case a caller needs to pin one variant
// independently of the global selection (equivalence tests do).
struct KernelTable {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
    void (*add_inplace)(double*, const double*, std::size_t);
    void (*relu_forward)(const double*, double*, std::size_t);
    void (*relu_backward)(const double*, const double*, double*, std::size_t);
};

const KernelTable& table_for(Backend b);

}  // namespace anynet::kernels
