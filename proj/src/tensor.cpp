#include "basisconv/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace basisconv {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                    std::to_string(a.cols) + " vs " + std::to_string(b.rows) + ")");
    Matrix out(a.rows, b.cols);
    for (int r = 0; r < a.rows; ++r) {
        for (int k = 0; k < a.cols; ++k) {
            const double v = a(r, k);
            if (v == 0.0) continue;
            const double* brow = &b.data[static_cast<std::size_t>(k) * b.cols];
            double* orow = &out.data[static_cast<std::size_t>(r) * out.cols];
            for (int c = 0; c < b.cols; ++c) orow[c] += v * brow[c];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) out(c, r) = a(r, c);
    return out;
}

Matrix identity(int n) {
    Matrix out(n, n);
    for (int i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

void FilterBank::validate() const {
    if (filters.empty()) throw std::invalid_argument("filter bank is empty");
    const int d = filters.front().size;
    const int l = filters.front().channels;
    if (d < 1 || l < 1) throw std::invalid_argument("filter bank has degenerate shape");
    for (const Filter3& f : filters)
        if (f.size != d || f.channels != l)
            throw std::invalid_argument("filter bank mixes filter shapes");
    if (biases.size() != filters.size())
        throw std::invalid_argument("filter bank bias count does not match filter count");
}

namespace {

void check_conv_shapes(const Tensor3& x, int d, int l) {
    if (x.channels != l)
        throw std::invalid_argument("convolution channel mismatch: input has " +
                                    std::to_string(x.channels) + ", filter has " + std::to_string(l));
    if (d > x.rows || d > x.cols)
        throw std::invalid_argument("filter (" + std::to_string(d) + "x" + std::to_string(d) +
                                    ") larger than input (" + std::to_string(x.rows) + "x" +
                                    std::to_string(x.cols) + ")");
}

// Shared kernel for conv_valid / conv_bank. Accumulates every output channel at
// once: for each tap (i,j,l) the contribution x(m+i,n+j,l) * h_k(i,j,l) is added
// across the contiguous k axis. Per output element the accumulation order is
// (i,j,l) ascending, identical to a plain per-filter loop, so results match a
// naive implementation bit for bit. Biases are added after the sum.
template <bool kCount>
void conv_bank_core(const Tensor3& x, const FilterBank& bank, Tensor3& out, std::uint64_t& mults) {
    const int d = bank.filter_size();
    const int l = bank.channels();
    const int p = bank.count();
    const int oh = x.rows - d + 1;
    const int ow = x.cols - d + 1;

    // weights rearranged to (i, j, l, k) so the k axis is contiguous
    std::vector<double> wt(static_cast<std::size_t>(d) * d * l * p);
    for (int k = 0; k < p; ++k) {
        const Filter3& f = bank.filters[k];
        for (int li = 0; li < l; ++li)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    wt[((static_cast<std::size_t>(i) * d + j) * l + li) * p + k] = f.at(i, j, li);
    }

    for (int m = 0; m < oh; ++m) {
        for (int n = 0; n < ow; ++n) {
            double* o = &out.at(m, n, 0);
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    const double* xr = &x.at(m + i, n + j, 0);
                    const double* w = &wt[(static_cast<std::size_t>(i) * d + j) * l * p];
                    for (int li = 0; li < l; ++li) {
                        const double xv = xr[li];
                        const double* wk = w + static_cast<std::size_t>(li) * p;
                        for (int k = 0; k < p; ++k) {
                            o[k] += xv * wk[k];
                            if constexpr (kCount) ++mults;
                        }
                    }
                }
            }
            for (int k = 0; k < p; ++k) o[k] += bank.biases[k];
        }
    }
}

template <bool kCount>
void conv_1x1_core(const Tensor3& z, const Matrix& w, const std::vector<double>& biases,
                   Tensor3& out, std::uint64_t& mults) {
    const int q = w.cols;
    const int p = w.rows;
    const Matrix wt = transpose(w);  // q x p, contiguous k axis per q
    for (int m = 0; m < z.rows; ++m) {
        for (int n = 0; n < z.cols; ++n) {
            const double* zr = &z.at(m, n, 0);
            double* o = &out.at(m, n, 0);
            for (int qi = 0; qi < q; ++qi) {
                const double zv = zr[qi];
                const double* wk = &wt.data[static_cast<std::size_t>(qi) * p];
                for (int k = 0; k < p; ++k) {
                    o[k] += zv * wk[k];
                    if constexpr (kCount) ++mults;
                }
            }
            for (int k = 0; k < p; ++k) o[k] += biases[k];
        }
    }
}

}  // namespace

Matrix conv_valid(const Tensor3& x, const Filter3& h, MultCounter* mc) {
    check_conv_shapes(x, h.size, h.channels);
    FilterBank one;
    one.filters.push_back(h);
    one.biases.push_back(0.0);
    Tensor3 out(x.rows - h.size + 1, x.cols - h.size + 1, 1);
    std::uint64_t mults = 0;
    if (mc)
        conv_bank_core<true>(x, one, out, mults);
    else
        conv_bank_core<false>(x, one, out, mults);
    if (mc) mc->mults += mults;
    Matrix m(out.rows, out.cols);
    m.data = std::move(out.data);
    return m;
}

Tensor3 conv_bank(const Tensor3& x, const FilterBank& bank, MultCounter* mc) {
    bank.validate();
    check_conv_shapes(x, bank.filter_size(), bank.channels());
    Tensor3 out(x.rows - bank.filter_size() + 1, x.cols - bank.filter_size() + 1, bank.count());
    std::uint64_t mults = 0;
    if (mc)
        conv_bank_core<true>(x, bank, out, mults);
    else
        conv_bank_core<false>(x, bank, out, mults);
    if (mc) mc->mults += mults;
    return out;
}

Tensor3 conv_1x1(const Tensor3& z, const Matrix& w, const std::vector<double>& biases,
                 MultCounter* mc) {
    if (w.cols != z.channels)
        throw std::invalid_argument("conv_1x1: weight columns (" + std::to_string(w.cols) +
                                    ") do not match input channels (" + std::to_string(z.channels) + ")");
    if (static_cast<int>(biases.size()) != w.rows)
        throw std::invalid_argument("conv_1x1: bias count does not match weight rows");
    Tensor3 out(z.rows, z.cols, w.rows);
    std::uint64_t mults = 0;
    if (mc)
        conv_1x1_core<true>(z, w, biases, out, mults);
    else
        conv_1x1_core<false>(z, w, biases, out, mults);
    if (mc) mc->mults += mults;
    return out;
}

std::vector<double> vectorize(const Filter3& h) { return h.data; }

Filter3 devectorize(const std::vector<double>& v, int d, int l) {
    if (d < 1 || l < 1) throw std::invalid_argument("devectorize: non-positive dimensions");
    if (v.size() != static_cast<std::size_t>(d) * d * l)
        throw std::invalid_argument("devectorize: length " + std::to_string(v.size()) +
                                    " does not match " + std::to_string(d) + "x" + std::to_string(d) +
                                    "x" + std::to_string(l));
    Filter3 f(d, l);
    f.data = v;
    return f;
}

Tensor3 zero_pad(const Tensor3& x, int pad) {
    if (pad < 0) throw std::invalid_argument("zero_pad: negative pad");
    if (pad == 0) return x;
    Tensor3 out(x.rows + 2 * pad, x.cols + 2 * pad, x.channels);
    for (int m = 0; m < x.rows; ++m) {
        const double* src = &x.at(m, 0, 0);
        double* dst = &out.at(m + pad, pad, 0);
        std::copy(src, src + static_cast<std::size_t>(x.cols) * x.channels, dst);
    }
    return out;
}

}  // namespace basisconv
