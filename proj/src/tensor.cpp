#include "dpin/tensor.hpp"

#include <cmath>

#include "dpin/kernels.hpp"

namespace dpin::nn {

Tensor::Tensor(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0)
        throw DimensionError("tensor dims must be positive, got " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    v_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Tensor Tensor::vec(std::initializer_list<double> xs) {
    Tensor t(1, static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) t[i++] = x;
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = static_cast<int>(rows.begin()->size());
    Tensor t(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c)
            throw DimensionError("ragged initializer rows");
        for (double x : row) t[i++] = x;
    }
    return t;
}

Tensor Tensor::identity(int n) {
    Tensor t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

bool Tensor::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

void Tensor::fill(double x) {
    for (double& e : v_) e = x;
}

std::string Tensor::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " +
                             a.shape_str() + " vs " + b.shape_str());
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end())
        throw ConsistencyError("missing parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end())
        throw ConsistencyError("missing parameter '" + name + "'");
    return it->second;
}

Tensor& ParamSet::insert(const std::string& name, Tensor t) {
    auto [it, fresh] = values.emplace(name, std::move(t));
    if (!fresh) throw ConsistencyError("duplicate parameter '" + name + "'");
    return it->second;
}

std::size_t ParamSet::coord_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : values) n += t.size();
    return n;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const auto& [name, t] : values)
        out.values.emplace(name, Tensor(t.rows(), t.cols()));
    return out;
}

void ParamSet::zero_values() {
    for (auto& [name, t] : values) t.zero();
}

void TrainingHyper::validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (gamma < 0 || gamma > 1) throw ConfigError("gamma must be in [0,1]");
    if (tau < 0 || tau > 1) throw ConfigError("tau must be in [0,1]");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: shape mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
    const auto& k = kern::active();
    Tensor out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        double* dst = out.row(i);
        const double* arow = a.row(i);
        for (int p = 0; p < a.cols(); ++p)
            k.axpy(arow[p], b.row(p), dst, static_cast<std::size_t>(b.cols()));
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: shape mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
    const auto& k = kern::active();
    Tensor out(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.rows(); ++j)
            out.at(i, j) = k.dot(a.row(i), b.row(j), static_cast<std::size_t>(a.cols()));
    return out;
}

Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.rows(), a.cols());
    kern::active().vadd(a.data(), b.data(), out.data(), a.size());
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.rows(), a.cols());
    kern::active().vsub(a.data(), b.data(), out.data(), a.size());
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.rows(), a.cols());
    kern::active().vmul(a.data(), b.data(), out.data(), a.size());
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    kern::active().scal(s, out.data(), out.size());
    return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
    check_same_shape(dst, src, "add_inplace");
    kern::active().axpy(1.0, src.data(), dst.data(), dst.size());
}

void axpy_inplace(double alpha, const Tensor& x, Tensor& y) {
    check_same_shape(x, y, "axpy_inplace");
    kern::active().axpy(alpha, x.data(), y.data(), y.size());
}

}  // namespace dpin::nn
