#pragma once

#include <cstddef>
#include <string_view>

namespace dpin::kern {

// Hot inner loops of the numeric core. Every entry has a scalar reference
// implementation and may have SIMD variants; the active backend is chosen at
// runtime from CPU capabilities and can be forced for testing. Elementwise
// kernels (relu, vadd, vsub, vmul) are bitwise-identical across backends;
// reductions (dot, matvec) and fused updates may differ in the last ulps
// because SIMD changes the summation order.
struct Backend {
    const char* name;

    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y[i] = alpha * x[i] + beta * y[i]
    void (*axpby)(double alpha, const double* x, double beta, double* y,
                  std::size_t n);
    void (*scal)(double alpha, double* x, std::size_t n);
    void (*vadd)(const double* a, const double* b, double* out, std::size_t n);
    void (*vsub)(const double* a, const double* b, double* out, std::size_t n);
    void (*vmul)(const double* a, const double* b, double* out, std::size_t n);
    void (*relu)(const double* x, double* y, std::size_t n);
    // gx[i] += gy[i] * (x[i] > 0)
    void (*relu_grad)(const double* x, const double* gy, double* gx,
                      std::size_t n);
    // Adam update for one parameter block; lr_t is the bias-corrected rate
    // premultiplied by sqrt(1-beta2^t)/(1-beta1^t).
    void (*adam)(double* w, double* m, double* v, const double* g,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bc1, double bc2);
};

const Backend& scalar_backend();
bool avx2_supported();
#if defined(__x86_64__) || defined(_M_X64)
const Backend& avx2_backend();
#endif

// Active backend. Defaults to the best supported one; honors the
// DPIN_KERNELS environment variable ("scalar", "avx2", "auto") on first use.
const Backend& active();
std::string_view active_name();

// Force a backend by name ("scalar", "avx2", "auto"). Throws ConfigError if
// the name is unknown or the backend is unsupported on this CPU.
void select(std::string_view name);

}  // namespace dpin::kern
