#include "basisconv/layer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace basisconv {

void BasisConvLayer::validate() const {
    if (coeffs.rows < 1 || coeffs.cols < 1)
        throw std::invalid_argument("basis layer: empty coefficient matrix");
    if (coeffs.cols != basis.q())
        throw std::invalid_argument("basis layer: coefficient columns do not match basis size");
    if (static_cast<int>(biases.size()) != coeffs.rows)
        throw std::invalid_argument("basis layer: bias count does not match filter count");
    if (static_cast<int>(basis_biases.size()) != basis.q())
        throw std::invalid_argument("basis layer: fixed-stage bias count does not match basis size");
    if (pad < 0) throw std::invalid_argument("basis layer: negative pad");

    // F^T F = I within 1e-8
    const Matrix gram = matmul(transpose(basis.f), basis.f);
    for (int r = 0; r < gram.rows; ++r)
        for (int c = 0; c < gram.cols; ++c) {
            const double want = r == c ? 1.0 : 0.0;
            if (std::abs(gram(r, c) - want) > 1e-8)
                throw std::invalid_argument("basis layer: basis columns are not orthonormal");
        }
}

namespace {

std::pair<BasisConvLayer, LayerReport> convert(const ConvLayer& conv, double t, int forced_q) {
    const FilterMatrix fm = build_filter_matrix(conv.bank);
    const Spectrum spectrum = eigen_decompose(fm);
    const int q = forced_q > 0 ? forced_q : select_q(spectrum, t);

    BasisConvLayer layer;
    layer.basis = truncate(spectrum, q);
    layer.coeffs = project_weights(layer.basis, conv.bank);
    layer.basis_biases.assign(static_cast<std::size_t>(q), 0.0);
    layer.biases = conv.bank.biases;
    layer.pad = conv.pad;

    LayerReport report;
    report.p = conv.bank.count();
    report.q = q;
    report.filter_size = conv.bank.filter_size();
    report.channels = conv.bank.channels();

    double kept = 0.0;
    for (int i = 0; i < q; ++i) kept += spectrum.eigenvalues[i];
    report.retained_fraction = kept / spectrum.total_mass;

    // ||A - F F^T A||_F: the projection residual the truncation leaves behind.
    const Matrix& f = layer.basis.f;
    const Matrix proj = matmul(f, matmul(transpose(f), fm.a));
    double err = 0.0;
    for (std::size_t i = 0; i < fm.a.data.size(); ++i) {
        const double e = fm.a.data[i] - proj.data[i];
        err += e * e;
    }
    const double norm = frobenius_norm(fm.a);
    report.reconstruction_error = norm > 0.0 ? std::sqrt(err) / norm : 0.0;
    return {std::move(layer), report};
}

}  // namespace

std::pair<BasisConvLayer, LayerReport> to_basis_layer(const ConvLayer& conv, double t) {
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("to_basis_layer: t must be in (0, 1]");
    return convert(conv, t, 0);
}

std::pair<BasisConvLayer, LayerReport> to_basis_layer_q(const ConvLayer& conv, int q) {
    if (q < 1) throw std::invalid_argument("to_basis_layer_q: Q must be positive");
    return convert(conv, 1.0, q);
}

Tensor3 forward_direct(const ConvLayer& layer, const Tensor3& x, MultCounter* mc) {
    if (layer.pad == 0) return conv_bank(x, layer.bank, mc);
    return conv_bank(zero_pad(x, layer.pad), layer.bank, mc);
}

FilterBank basis_bank(const BasisConvLayer& layer) {
    FilterBank bank;
    bank.filters.reserve(layer.q());
    for (int i = 0; i < layer.q(); ++i) bank.filters.push_back(layer.basis.basis_filter(i));
    bank.biases = layer.basis_biases;
    return bank;
}

Tensor3 forward_basis(const BasisConvLayer& layer, const Tensor3& x, MultCounter* mc) {
    const Tensor3 z = layer.pad == 0 ? conv_bank(x, basis_bank(layer), mc)
                                     : conv_bank(zero_pad(x, layer.pad), basis_bank(layer), mc);
    return conv_1x1(z, layer.coeffs, layer.biases, mc);
}

FilterBank effective_filters(const BasisConvLayer& layer) {
    // Fold any trained fixed-stage bias into the combination biases so the
    // returned bank's forward pass matches forward_basis for every state.
    std::vector<double> folded = layer.biases;
    for (int k = 0; k < layer.p(); ++k) {
        double shift = 0.0;
        for (int c = 0; c < layer.q(); ++c) shift += layer.coeffs(k, c) * layer.basis_biases[c];
        folded[k] += shift;
    }
    return reconstruct(layer.basis, layer.coeffs, folded);
}

}  // namespace basisconv
