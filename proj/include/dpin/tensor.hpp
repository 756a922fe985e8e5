#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "dpin/error.hpp"

namespace dpin::nn {

// Dense row-major matrix of 64-bit reals. Vectors are 1xN tensors.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols);

    static Tensor vec(int n) { return Tensor(1, n); }
    static Tensor vec(std::initializer_list<double> xs);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }
    bool is_vec() const { return rows_ == 1; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    double* row(int r) { return v_.data() + static_cast<std::size_t>(r) * cols_; }
    const double* row(int r) const { return v_.data() + static_cast<std::size_t>(r) * cols_; }

    double& at(int r, int c) { return v_[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return v_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;
    void fill(double x);
    void zero() { fill(0.0); }
    std::string shape_str() const;

    bool operator==(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_; }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

// Raises DimensionError naming both shapes when a binary op disagrees.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

// Adam moment buffers for one parameter tensor.
struct AdamState {
    Tensor m, v;
};

// Named learnable tensors plus per-parameter optimizer state. Iteration over
// names is in sorted (map) order, so reductions over the set are
// deterministic.
struct ParamSet {
    std::map<std::string, Tensor> values;
    std::map<std::string, AdamState> opt;
    std::int64_t step = 0;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    Tensor& insert(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return values.count(name) != 0; }
    std::size_t coord_count() const;

    // Zero tensors with the same names and shapes (no optimizer state).
    ParamSet zeros_like() const;
    void zero_values();
};

struct TrainingHyper {
    double learning_rate = 1e-3;
    int batch_size = 256;
    double gamma = 0.95;
    double tau = 0.9;
    std::uint64_t seed = 7;

    void validate() const;
};

// --- dense linear algebra on tensors (built on the kernel backend) ---

Tensor matmul(const Tensor& a, const Tensor& b);     // a(r x k) * b(k x c)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a(r x k) * b(c x k)^T
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& dst, const Tensor& src);
void axpy_inplace(double alpha, const Tensor& x, Tensor& y);

}  // namespace dpin::nn
