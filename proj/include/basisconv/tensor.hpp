#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace basisconv {

// Dense rank-2 array, row-major.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const double& operator()(int r, int c) const {
        return data[static_cast<std::size_t>(r) * cols + c];
    }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix identity(int n);
double frobenius_norm(const Matrix& a);

// Dense rank-3 array: rows x cols x channels, channel index fastest.
struct Tensor3 {
    int rows = 0;
    int cols = 0;
    int channels = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int m, int n, int l, double fill = 0.0)
        : rows(m), cols(n), channels(l), data(static_cast<std::size_t>(m) * n * l, fill) {}

    double& at(int m, int n, int l) {
        return data[(static_cast<std::size_t>(m) * cols + n) * channels + l];
    }
    const double& at(int m, int n, int l) const {
        return data[(static_cast<std::size_t>(m) * cols + n) * channels + l];
    }
    std::size_t size() const { return data.size(); }
};

// Square D x D x L filter. Element (i, j, l) is stored at l*D*D + i*D + j,
// which is also the vectorized layout used for subspace math and model files.
struct Filter3 {
    int size = 0;      // D
    int channels = 0;  // L
    std::vector<double> data;

    Filter3() = default;
    Filter3(int d, int l, double fill = 0.0)
        : size(d), channels(l), data(static_cast<std::size_t>(d) * d * l, fill) {}

    double& at(int i, int j, int l) {
        return data[static_cast<std::size_t>(l) * size * size + static_cast<std::size_t>(i) * size + j];
    }
    const double& at(int i, int j, int l) const {
        return data[static_cast<std::size_t>(l) * size * size + static_cast<std::size_t>(i) * size + j];
    }
};

// P filters of identical shape plus one bias per filter.
struct FilterBank {
    std::vector<Filter3> filters;
    std::vector<double> biases;

    int count() const { return static_cast<int>(filters.size()); }
    int filter_size() const { return filters.empty() ? 0 : filters.front().size; }
    int channels() const { return filters.empty() ? 0 : filters.front().channels; }
    void validate() const;  // throws std::invalid_argument on shape violations
};

// Counts scalar multiplications actually performed by the convolution kernels.
// Pass one to the ops below to take the instrumented (slow) path.
struct MultCounter {
    std::uint64_t mults = 0;
};

/// Valid-mode cross-correlation: out(m,n) = sum_{i,j,l} x(m+i, n+j, l) * h(i,j,l).
/// Output is (M-D+1) x (N-D+1).
Matrix conv_valid(const Tensor3& x, const Filter3& h, MultCounter* mc = nullptr);

/// One output channel per filter: channel k = conv_valid(x, filters[k]) + biases[k].
Tensor3 conv_bank(const Tensor3& x, const FilterBank& bank, MultCounter* mc = nullptr);

/// Pointwise channel mixing: out(m,n,k) = sum_q w(k,q) * z(m,n,q) + biases[k].
Tensor3 conv_1x1(const Tensor3& z, const Matrix& w, const std::vector<double>& biases,
                 MultCounter* mc = nullptr);

/// Copy of the filter payload in the fixed vectorization order l*D^2 + i*D + j.
std::vector<double> vectorize(const Filter3& h);
Filter3 devectorize(const std::vector<double>& v, int d, int l);

/// Zero-pad the spatial border by `pad` cells on every side. pad = 0 returns x unchanged.
Tensor3 zero_pad(const Tensor3& x, int pad);

}  // namespace basisconv
