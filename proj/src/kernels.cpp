#include "anynet/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "anynet/error.hpp"

namespace anynet::kernels {

namespace detail {

double dot_scalar(const double*, const double*, std::size_t);
void axpy_scalar(double, const double*, double*, std::size_t);
void scale_scalar(double, double*, std::size_t);
void add_inplace_scalar(double*, const double*, std::size_t);
void relu_forward_scalar(const double*, double*, std::size_t);
void relu_backward_scalar(const double*, const double*, double*, std::size_t);

#if defined(ANYNET_HAVE_AVX2)
double dot_avx2(const double*, const double*, std::size_t);
void axpy_avx2(double, const double*, double*, std::size_t);
void scale_avx2(double, double*, std::size_t);
void add_inplace_avx2(double*, const double*, std::size_t);
void relu_forward_avx2(const double*, double*, std::size_t);
void relu_backward_avx2(const double*, const double*, double*, std::size_t);
#endif

}  // namespace detail

namespace {

const KernelTable kScalarTable = {
    detail::dot_scalar,          detail::axpy_scalar,         detail::scale_scalar,
    detail::add_inplace_scalar,  detail::relu_forward_scalar, detail::relu_backward_scalar,
};

#if defined(ANYNET_HAVE_AVX2)
const KernelTable kAvx2Table = {
    detail::dot_avx2,          detail::axpy_avx2,         detail::scale_avx2,
    detail::add_inplace_avx2,  detail::relu_forward_avx2, detail::relu_backward_avx2,
};
#endif

bool avx2_on_this_cpu() {
#if defined(ANYNET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

Backend resolve_initial() {
    if (const char* env = std::getenv("ANYNET_BACKEND")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_on_this_cpu()) return Backend::Avx2;
    }
    return avx2_on_this_cpu() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& selection() {
    static std::atomic<Backend> current{resolve_initial()};
    return current;
}

const KernelTable& active_table() { return table_for(selection().load(std::memory_order_relaxed)); }

}  // namespace

const char* backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

bool cpu_supports(Backend b) { return b == Backend::Scalar || avx2_on_this_cpu(); }

Backend active_backend() { return selection().load(std::memory_order_relaxed); }

bool set_backend(Backend b) {
    if (!cpu_supports(b)) return false;
    selection().store(b, std::memory_order_relaxed);
    return true;
}

const KernelTable& table_for(Backend b) {
#if defined(ANYNET_HAVE_AVX2)
    if (b == Backend::Avx2) {
        require(avx2_on_this_cpu(), ErrorKind::Config, "avx2 kernels not supported on this CPU");
        return kAvx2Table;
    }
#else
    require(b == Backend::Scalar, ErrorKind::Config, "built without avx2 kernels");
#endif
    return kScalarTable;
}

double dot(const double* x, const double* y, std::size_t n) { return active_table().dot(x, y, n); }

void axpy(double a, const double* x, double* y, std::size_t n) { active_table().axpy(a, x, y, n); }

void scale(double a, double* x, std::size_t n) { active_table().scale(a, x, n); }

void add_inplace(double* y, const double* x, std::size_t n) { active_table().add_inplace(y, x, n); }

void relu_forward(const double* x, double* y, std::size_t n) { active_table().relu_forward(x, y, n); }

void relu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
    active_table().relu_backward(x, dy, dx, n);
}

// The matmul variants are thin deterministic loops over dot/axpy so they
// inherit the backend selection and the bitwise summation contract.

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    const KernelTable& t = active_table();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            t.axpy(a[i * k + p], b + p * n, c + i * n, n);
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    const KernelTable& t = active_table();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] += t.dot(a + i * k, b + j * k, k);
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    const KernelTable& t = active_table();
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t i = 0; i < m; ++i) {
            t.axpy(a[p * m + i], b + p * n, c + i * n, n);
        }
    }
}

}  // namespace anynet::kernels
